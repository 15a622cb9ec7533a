"""Prototype-guided NSGA-II search for a single counterfactual."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .causal import StructuralModel, validate_dag
from .data import Dataset, FeatureSchema, Normalizer, format_row
from .errors import ConfigError, DataError
from .moo import GaConfig, environmental_selection, crossover, mutate, non_dominated_sort
from .objectives import DEFAULT_K, EvaluationContext, ObjectiveVector, build_prototype

EARLY_STOP_PATIENCE = 10
ENDOGENOUS_MODES = ("free", "derived", "abduct")


@dataclass
class ExplainRequest:
    x_org: np.ndarray
    y_org: int
    y_cf: int
    ga: GaConfig = field(default_factory=GaConfig)
    K: int = DEFAULT_K
    instance_id: str | int | None = None

    def __post_init__(self):
        self.x_org = np.asarray(self.x_org, dtype=float)
        if self.y_cf == self.y_org:
            raise ConfigError("target class must differ from the original class")


@dataclass
class ModelBundle:
    classifier: object
    ae: object
    scm: StructuralModel
    dataset: Dataset
    class_autoencoders: dict = field(default_factory=dict)
    _latents: np.ndarray | None = field(default=None, repr=False)

    @property
    def schema(self) -> FeatureSchema:
        return self.dataset.schema

    @property
    def normalizer(self) -> Normalizer | None:
        return self.dataset.normalizer

    @property
    def latents(self):
        if self._latents is None:
            self._latents = self.ae.encode(self.dataset.X)
        return self._latents


@dataclass
class ExplanationReport:
    instance_id: object
    x_org: np.ndarray
    x_cf: np.ndarray
    y_org: int
    y_cf: int
    p_cf: float
    objectives: ObjectiveVector
    valid: bool
    generations_run: int
    seed: int
    schema: FeatureSchema
    normalizer: Normalizer | None = None
    config_echo: dict = field(default_factory=dict)
    trace: list = field(default_factory=list, repr=False)

    def _raw(self, x):
        return self.normalizer.denormalize(x) if self.normalizer is not None else np.asarray(x)

    def deltas(self):
        rows = []
        org, cf = self._raw(self.x_org), self._raw(self.x_cf)
        for j, f in enumerate(self.schema.features):
            if f.is_categorical:
                a, b = f.categories[int(org[j])], f.categories[int(cf[j])]
                rows.append({"feature": f.name, "org": a, "cf": b, "changed": a != b})
            else:
                rows.append({"feature": f.name, "org": float(org[j]), "cf": float(cf[j]),
                             "delta": float(cf[j] - org[j]), "changed": bool(cf[j] != org[j])})
        return rows

    def to_dict(self):
        names = self.schema.names
        return {
            "version": __version__,
            "instance_id": self.instance_id,
            "x_org": dict(zip(names, self.x_org.tolist())),
            "x_cf": dict(zip(names, self.x_cf.tolist())),
            "x_org_raw": dict(zip(names, format_row(self.schema, self._raw(self.x_org)))),
            "x_cf_raw": dict(zip(names, format_row(self.schema, self._raw(self.x_cf)))),
            "deltas": self.deltas(),
            "y_org": self.y_org,
            "y_cf": self.y_cf,
            "p_cf": self.p_cf,
            "objectives": {"pred": self.objectives.f_pred, "proto": self.objectives.f_proto,
                           "dist": self.objectives.f_dist_final},
            "valid": self.valid,
            "generations_run": self.generations_run,
            "seed": self.seed,
            "config_echo": self.config_echo,
        }

    @classmethod
    def from_dict(cls, doc, schema: FeatureSchema, normalizer=None):
        try:
            obj = doc["objectives"]
            return cls(
                instance_id=doc.get("instance_id"),
                x_org=np.array([doc["x_org"][n] for n in schema.names], dtype=float),
                x_cf=np.array([doc["x_cf"][n] for n in schema.names], dtype=float),
                y_org=int(doc["y_org"]),
                y_cf=int(doc["y_cf"]),
                p_cf=float(doc["p_cf"]),
                objectives=ObjectiveVector(obj["pred"], obj["proto"], obj["dist"]),
                valid=bool(doc["valid"]),
                generations_run=int(doc["generations_run"]),
                seed=int(doc["seed"]),
                schema=schema,
                normalizer=normalizer,
                config_echo=doc.get("config_echo", {}),
            )
        except KeyError as exc:
            raise DataError(f"report is missing field {exc}") from None


def init_population(x_org, schema: FeatureSchema, ga: GaConfig, rng):
    """Gaussian cloud around ``x_org``; member 0 is ``x_org`` itself."""
    x_org = np.asarray(x_org, dtype=float)
    n, d = ga.population_size, len(x_org)
    P = np.tile(x_org, (n, 1))
    mutable = schema.mutable_mask
    for j, f in enumerate(schema.features):
        if not mutable[j]:
            continue
        if f.is_categorical:
            k = len(f.categories)
            switch = rng.random(n) >= ga.cat_keep_prob
            other = rng.integers(k - 1, size=n)
            other = other + (other >= x_org[j])
            P[:, j] = np.where(switch, other, x_org[j])
        else:
            P[:, j] = np.clip(rng.normal(x_org[j], ga.init_sigma, n), 0.0, 1.0)
    P[0] = x_org
    return P


def _clamp(G, schema, cols=None):
    for j in range(G.shape[1]) if cols is None else cols:
        f = schema.features[j]
        if f.is_categorical:
            G[:, j] = np.clip(np.rint(G[:, j]), 0, len(f.categories) - 1)
        else:
            G[:, j] = np.clip(G[:, j], 0.0, 1.0)


def decode(genes, schema: FeatureSchema, x_org, scm: StructuralModel | None = None,
           endogenous="free"):
    """Map gene rows to valid instances: clamp, round categories, pin immutables.

    With an ``scm`` and ``endogenous`` set to ``"derived"`` each mutable
    endogenous feature is replaced by its structural-equation prediction from
    the decoded parents; ``"abduct"`` adds the original's residual on top so
    that unchanged parents leave the feature unchanged. ``"free"`` leaves
    endogenous genes to the search.
    """
    G = np.array(genes, dtype=float)
    single = G.ndim == 1
    G = np.atleast_2d(G)
    x_org = np.asarray(x_org, dtype=float)
    _clamp(G, schema)
    frozen = ~schema.mutable_mask
    G[:, frozen] = x_org[frozen]
    if scm is not None and endogenous != "free":
        if endogenous not in ENDOGENOUS_MODES:
            raise ConfigError(f"unknown endogenous mode {endogenous!r}")
        for v in validate_dag(scm.graph):
            eq = scm.equations.get(v)
            j = schema.index(v)
            if eq is None or frozen[j]:
                continue
            pa = [schema.index(p) for p in eq.parents]
            G[:, j] = eq.predict(G[:, pa])
            if endogenous == "abduct":
                G[:, j] += x_org[j] - eq.predict(x_org[pa])
            _clamp(G, schema, [j])
    return G[0] if single else G


def select_final(P, objectives, classifier, y_cf):
    """Index into P of the emitted counterfactual and whether it is valid.

    Among the first front, valid candidates win, ordered by combined
    distance, then prediction loss, then index. With no valid candidate the
    front-ordered first member is returned.
    """
    objectives = np.asarray(objectives, dtype=float)
    first = np.asarray(non_dominated_sort(objectives)[0])
    valid = np.atleast_1d(classifier.predict(P[first])) == y_cf
    if not valid.any():
        return int(first[0]), False
    cand = first[valid]
    order = np.lexsort((cand, objectives[cand, 0], objectives[cand, 2]))
    return int(cand[order[0]]), True


def _offspring(P, schema, ga, rng):
    n_cat = schema.n_categories
    mutable = schema.mutable_mask
    pairs = rng.permutation(len(P)).reshape(-1, 2)
    Q = np.empty_like(P)
    for k, (i, j) in enumerate(pairs):
        a, b = crossover(P[i], P[j], rng, ga.crossover_prob, mutable)
        Q[2 * k] = mutate(a, n_cat, mutable, ga, rng)
        Q[2 * k + 1] = mutate(b, n_cat, mutable, ga, rng)
    return Q


def run_proce(request: ExplainRequest, bundle: ModelBundle, config_echo=None) -> ExplanationReport:
    """Search for a counterfactual of ``request.x_org`` with class ``request.y_cf``."""
    ga = request.ga.validate()
    schema = bundle.schema
    x_org = schema.validate_instance(request.x_org)
    if bundle.classifier.schema_fingerprint and bundle.classifier.schema_fingerprint != schema.fingerprint():
        raise DataError("classifier was trained against a different schema")
    rng = np.random.default_rng(ga.seed)

    proto = build_prototype(bundle.dataset, bundle.ae, x_org, request.y_org, request.y_cf,
                            request.K, bundle.latents)
    ctx = EvaluationContext(bundle.classifier, bundle.ae, bundle.scm, schema, proto.proto,
                            x_org, request.y_cf)

    P = decode(init_population(x_org, schema, ga, rng), schema, x_org, bundle.scm, ga.endogenous)
    P_obj = ctx.evaluate(P)
    Q = np.empty((0, P.shape[1]))
    trace = []
    generations_run = 0
    last_pick, streak = None, 0
    for g in range(ga.generations):
        merged = np.vstack([P, Q])
        objs = np.vstack([P_obj, ctx.evaluate(Q)]) if len(Q) else P_obj
        keep = environmental_selection(objs, ga.population_size, ga.crowding)
        P, P_obj = merged[keep], objs[keep]
        Q = decode(_offspring(P, schema, ga, rng), schema, x_org, bundle.scm, ga.endogenous)
        generations_run = g + 1
        trace.append({"generation": generations_run, "min_pred": float(P_obj[:, 0].min()),
                      "min_dist": float(P_obj[:, 2].min())})
        if ga.early_stop:
            pick, ok = select_final(P, P_obj, bundle.classifier, request.y_cf)
            if ok and last_pick is not None and np.array_equal(P[pick], last_pick):
                streak += 1
            else:
                streak = 0
            last_pick = P[pick].copy() if ok else None
            if streak >= EARLY_STOP_PATIENCE:
                break

    best, valid = select_final(P, P_obj, bundle.classifier, request.y_cf)
    x_cf = P[best]
    return ExplanationReport(
        instance_id=request.instance_id,
        x_org=x_org,
        x_cf=x_cf,
        y_org=int(request.y_org),
        y_cf=int(request.y_cf),
        p_cf=float(bundle.classifier.predict_proba(x_cf)),
        objectives=ObjectiveVector(*map(float, P_obj[best])),
        valid=bool(valid),
        generations_run=generations_run,
        seed=ga.seed,
        schema=schema,
        normalizer=bundle.normalizer,
        config_echo=config_echo if config_echo is not None else {"ga": ga.to_dict(), "K": request.K},
        trace=trace,
    )
