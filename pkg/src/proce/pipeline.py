"""Bundle persistence and the train / explain / evaluate orchestration."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, nn
from .causal import CausalGraph, StructuralModel, fit_structural_model
from .data import (Dataset, FeatureSchema, Normalizer, load_csv, normalize_dataset, split,
                   write_csv)
from .engine import ExplainRequest, ExplanationReport, ModelBundle, run_proce
from .errors import DataError, UsageError
from .metrics import MetricsReport, compute_metrics, schema_constraints
from .models import (Autoencoder, Classifier, load_json, save_json, train_class_autoencoders,
                     train_classifier)
from .moo import GaConfig
from .objectives import DEFAULT_K

BUNDLE_VERSION = 1


def dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


@dataclass
class TrainedBundle:
    """Everything ``train`` writes: models, schema, normaliser and the split."""

    schema: FeatureSchema
    normalizer: Normalizer
    classifier: Classifier
    autoencoder: Autoencoder
    class_autoencoders: dict
    train: Dataset
    test: Dataset
    manifest: dict

    def model_bundle(self, scm: StructuralModel) -> ModelBundle:
        return ModelBundle(self.classifier, self.autoencoder, scm, self.train, self.class_autoencoders)


def train_bundle(raw: Dataset, preset="net3", E=256, seed=0, ratio=0.8, epochs=50,
                 ae_epochs=30, learning_rate=1e-3) -> TrainedBundle:
    data = normalize_dataset(raw)
    train, test = split(data, ratio, seed)
    if len(set(train.y.tolist())) < 2:
        raise DataError("training split must contain both classes")
    clf, _ = train_classifier(train, preset, nn.TrainConfig(learning_rate, epochs, 32, seed))
    triple = train_class_autoencoders(train, 0, 1, E,
                                      nn.TrainConfig(learning_rate, ae_epochs, 64, seed, loss="mse"))
    ae = triple.ae_full
    class_aes = {0: triple.ae_org, 1: triple.ae_cf, "full": ae}
    manifest = {
        "version": BUNDLE_VERSION,
        "tool_version": __version__,
        "config": {"preset": preset, "embedding_dim": E, "seed": seed, "split": ratio,
                   "epochs": epochs, "ae_epochs": ae_epochs, "learning_rate": learning_rate},
        "train_accuracy": float(np.mean(clf.predict(train.X) == train.y)),
        "test_accuracy": float(np.mean(clf.predict(test.X) == test.y)) if len(test) else None,
        "n_train": len(train),
        "n_test": len(test),
    }
    return TrainedBundle(data.schema, data.normalizer, clf, ae, class_aes, train, test, manifest)


def save_bundle(b: TrainedBundle, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    b.schema.save(out / "schema.json")
    dump_json(b.normalizer.to_dict(), out / "normalizer.json")
    save_json(b.classifier, out / "classifier.json")
    save_json(b.autoencoder, out / "autoencoder.json")
    for cls in (0, 1):
        save_json(b.class_autoencoders[cls], out / f"ae_class{cls}.json")
    write_csv(b.train, out / "train.csv")
    write_csv(b.test, out / "test.csv")
    dump_json(b.manifest, out / "bundle.json")


def _reload_split(path, schema, normalizer):
    raw = load_csv(path, schema)
    return normalize_dataset(raw, normalizer)


def load_bundle(path) -> TrainedBundle:
    path = Path(path)
    if not (path / "bundle.json").exists():
        raise UsageError(f"{path} is not a model bundle (bundle.json missing)")
    manifest = json.loads((path / "bundle.json").read_text())
    schema = FeatureSchema.load(path / "schema.json")
    normalizer = Normalizer.from_dict(json.loads((path / "normalizer.json").read_text()))
    ae = load_json(Autoencoder, path / "autoencoder.json")
    class_aes = {cls: load_json(Autoencoder, path / f"ae_class{cls}.json") for cls in (0, 1)}
    class_aes["full"] = ae
    return TrainedBundle(
        schema, normalizer, load_json(Classifier, path / "classifier.json"), ae, class_aes,
        _reload_split(path / "train.csv", schema, normalizer),
        _reload_split(path / "test.csv", schema, normalizer),
        manifest,
    )


def fit_scm(data: Dataset, graph: CausalGraph, force_exogenous=()) -> StructuralModel:
    if not data.normalized:
        data = normalize_dataset(data)
    return fit_structural_model(data, graph, force_exogenous)


def instance_seed(seed, instance_id) -> int:
    key = [int(seed)] + ([int(instance_id)] if isinstance(instance_id, (int, np.integer))
                         else [ord(c) for c in str(instance_id)])
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def explain_many(bundle: ModelBundle, instances, ga: GaConfig, K=DEFAULT_K, target_class=None,
                 jobs=1, config_echo=None):
    """Run one search per ``(instance_id, x)``; returns reports and wall times."""
    import time

    def one(item):
        iid, x = item
        y_org = int(bundle.classifier.predict(x))
        y_cf = 1 - y_org if target_class is None else int(target_class)
        if y_cf == y_org:
            raise UsageError(f"instance {iid} is already predicted as class {y_cf}")
        cfg = GaConfig(**{**ga.to_dict(), "seed": instance_seed(ga.seed, iid)})
        t0 = time.perf_counter()
        rep = run_proce(ExplainRequest(x, y_org, y_cf, cfg, K, iid), bundle, config_echo)
        return rep, time.perf_counter() - t0

    bundle.latents  # encode the reference set once before any threads start
    items = list(instances)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, items))
    else:
        results = [one(it) for it in items]
    return [r for r, _ in results], [t for _, t in results]


def report_filename(instance_id) -> str:
    return f"report_{instance_id}.json"


def write_reports(reports, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for rep in reports:
        dump_json(rep.to_dict(), out_dir / report_filename(rep.instance_id))


def read_reports(report_dir, schema, normalizer=None):
    files = sorted(Path(report_dir).glob("report_*.json"))
    if not files:
        raise DataError(f"no report_*.json files in {report_dir}")
    reps = [ExplanationReport.from_dict(json.loads(f.read_text()), schema, normalizer) for f in files]

    def key(r):
        return (0, int(r.instance_id), "") if str(r.instance_id).isdigit() else (1, 0, str(r.instance_id))

    return sorted(reps, key=key)


def evaluate_reports(reports, bundle: TrainedBundle, constraints=(), runtime_seconds=None,
                     method="proce", dataset="") -> MetricsReport:
    constraints = list(constraints) + schema_constraints(bundle.schema)
    X_org = np.array([r.x_org for r in reports])
    X_cf = np.array([r.x_cf for r in reports])
    return compute_metrics(
        X_org, X_cf, [r.y_org for r in reports], [r.y_cf for r in reports], bundle.classifier,
        bundle.class_autoencoders, bundle.autoencoder, bundle.schema, constraints,
        runtime_seconds=runtime_seconds, method=method, dataset=dataset,
    )
