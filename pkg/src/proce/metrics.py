"""Counterfactual quality metrics and the constraint predicates they use."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import FeatureSchema
from .errors import ParseError, SchemaError, UsageError

EPSILON = 1e-8
PROPORTIONAL_TOL = 1e-9


@dataclass(frozen=True)
class ConstraintSpec:
    kind: str
    target: str
    sources: tuple = ()

    def validate(self, schema: FeatureSchema):
        if self.kind not in ("nondecreasing", "proportional"):
            raise SchemaError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "proportional" and not self.sources:
            raise SchemaError("proportional constraint needs at least one source feature")
        for name in (self.target, *self.sources):
            schema.index(name)
        return self

    def satisfied(self, schema, x_org, x_cf, tol=PROPORTIONAL_TOL) -> bool:
        t = schema.index(self.target)
        if self.kind == "nondecreasing":
            return bool(x_cf[t] - x_org[t] >= -tol)
        src = [schema.index(s) for s in self.sources]
        return check_proportional(x_org, x_cf, src, t, tol)

    def to_dict(self):
        if self.kind == "nondecreasing":
            return {"kind": self.kind, "feature": self.target}
        return {"kind": self.kind, "sources": list(self.sources), "target": self.target}


def nondecreasing(feature) -> ConstraintSpec:
    return ConstraintSpec("nondecreasing", feature)


def proportional(sources, target) -> ConstraintSpec:
    return ConstraintSpec("proportional", target, tuple(sources))


def parse_constraints(doc, schema: FeatureSchema):
    items = doc.get("constraints", doc) if isinstance(doc, dict) else doc
    out = []
    try:
        for c in items:
            if c["kind"] == "nondecreasing":
                out.append(nondecreasing(c["feature"]))
            else:
                out.append(ConstraintSpec(c["kind"], c["target"], tuple(c.get("sources", ()))))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed constraints document: {exc}") from exc
    return [c.validate(schema) for c in out]


def load_constraints(path, schema):
    return parse_constraints(json.loads(Path(path).read_text()), schema)


def schema_constraints(schema: FeatureSchema):
    return [nondecreasing(f.name) for f in schema.features if f.constraint == "nondecreasing"]


def check_proportional(x_org, x_cf, sources, target, tol=PROPORTIONAL_TOL) -> bool:
    """Sources moving one way must move the target the same way.

    ``s`` is the summed source change, ``t`` the target change; a pair with
    no source change (``|s| <= tol``) always passes.
    """
    x_org, x_cf = np.asarray(x_org, dtype=float), np.asarray(x_cf, dtype=float)
    s = float(np.sum(x_cf[sources] - x_org[sources]))
    t = float(x_cf[target] - x_org[target])
    if abs(s) <= tol:
        return True
    return bool(abs(t) > tol and np.sign(t) == np.sign(s))


def _pairs(X_org, X_cf):
    X_org, X_cf = np.atleast_2d(np.asarray(X_org, float)), np.atleast_2d(np.asarray(X_cf, float))
    if X_org.shape != X_cf.shape:
        raise UsageError(f"pair batches differ in shape: {X_org.shape} vs {X_cf.shape}")
    if len(X_org) == 0:
        raise UsageError("metric needs a non-empty batch")
    return X_org, X_cf


def target_class_validity(X_cf, y_cf, classifier) -> float:
    X_cf = np.atleast_2d(np.asarray(X_cf, dtype=float))
    if X_cf.shape[0] == 0 or X_cf.size == 0:
        raise UsageError("target-class validity of an empty batch is undefined")
    y_cf = np.broadcast_to(np.asarray(y_cf, dtype=int), (len(X_cf),))
    return float(np.mean(np.atleast_1d(classifier.predict(X_cf)) == y_cf))


def constraint_flags(X_org, X_cf, constraints, schema, tol=PROPORTIONAL_TOL):
    X_org, X_cf = _pairs(X_org, X_cf)
    return np.array([all(c.satisfied(schema, o, f, tol) for c in constraints)
                     for o, f in zip(X_org, X_cf)])


def causal_constraint_validity(X_org, X_cf, constraints, schema, tol=PROPORTIONAL_TOL) -> float:
    return float(np.mean(constraint_flags(X_org, X_cf, constraints, schema, tol)))


def categorical_matches(X_org, X_cf, schema):
    X_org, X_cf = _pairs(X_org, X_cf)
    cat = schema.categorical_idx
    return np.sum(X_org[:, cat] == X_cf[:, cat], axis=1).astype(float)


def categorical_proximity(X_org, X_cf, schema) -> float:
    """Mean number of categorical features left unchanged per sample."""
    return float(np.mean(categorical_matches(X_org, X_cf, schema)))


def continuous_sq_gaps(X_org, X_cf, schema):
    X_org, X_cf = _pairs(X_org, X_cf)
    con = schema.continuous_idx
    return np.sum((X_cf[:, con] - X_org[:, con]) ** 2, axis=1)


def continuous_proximity(X_org, X_cf, schema) -> float:
    """Negated mean squared L2 gap over continuous features."""
    return -float(np.mean(continuous_sq_gaps(X_org, X_cf, schema)))


def im1_samples(ae_cf, ae_org, X_cf, eps=EPSILON):
    X_cf = np.atleast_2d(X_cf)
    T = ae_cf.target(X_cf)
    num = np.sum((T - ae_cf.reconstruct(X_cf)) ** 2, axis=1)
    den = np.sum((T - ae_org.reconstruct(X_cf)) ** 2, axis=1)
    return num / (den + eps)


def im2_samples(ae_cf, ae_full, X_cf, eps=EPSILON):
    X_cf = np.atleast_2d(X_cf)
    T = ae_cf.target(X_cf)
    num = np.sum((ae_cf.reconstruct(X_cf) - ae_full.reconstruct(X_cf)) ** 2, axis=1)
    return num / (np.sum(T * T, axis=1) + eps)


def im1(ae_cf, ae_org, X_cf, eps=EPSILON) -> float:
    return float(np.mean(im1_samples(ae_cf, ae_org, X_cf, eps)))


def im2(ae_cf, ae_full, X_cf, eps=EPSILON) -> float:
    return float(np.mean(im2_samples(ae_cf, ae_full, X_cf, eps)))


METRIC_FIELDS = ("tcv", "ccv", "cat_prox", "con_prox", "im1", "im2", "im2_x10",
                 "runtime_seconds", "epsilon", "n")


@dataclass
class MetricsReport:
    tcv: float
    ccv: float
    cat_prox: float
    con_prox: float
    im1: float
    im2: float
    runtime_seconds: float | None = None
    epsilon: float = EPSILON
    n: int = 0
    method: str = "proce"
    dataset: str = ""
    per_sample: dict = field(default_factory=dict, repr=False)

    @property
    def im2_x10(self):
        return self.im2 * 10.0

    def row(self):
        d = {k: getattr(self, k) for k in METRIC_FIELDS}
        return {"method": self.method, "dataset": self.dataset, **d}

    def to_dict(self):
        out = self.row()
        out["per_sample"] = {k: [float(v) for v in vals] for k, vals in self.per_sample.items()}
        return out


def compute_metrics(X_org, X_cf, y_org, y_cf, classifier, class_aes, ae_full, schema,
                    constraints=(), eps=EPSILON, runtime_seconds=None, method="proce",
                    dataset="") -> MetricsReport:
    """Aggregate metrics over a batch; ``class_aes`` maps class -> autoencoder."""
    X_org, X_cf = _pairs(X_org, X_cf)
    y_org = np.asarray(y_org, dtype=int)
    y_cf = np.asarray(y_cf, dtype=int)
    valid = (np.atleast_1d(classifier.predict(X_cf)) == y_cf).astype(float)
    flags = (constraint_flags(X_org, X_cf, constraints, schema).astype(float)
             if constraints else np.ones(len(X_org)))
    i1 = np.empty(len(X_cf))
    i2 = np.empty(len(X_cf))
    for cls in np.unique(y_cf):
        rows = y_cf == cls
        org_cls = y_org[rows][0]
        if np.any(y_org[rows] != org_cls):
            raise UsageError("mixed original classes for one target class")
        i1[rows] = im1_samples(class_aes[int(cls)], class_aes[int(org_cls)], X_cf[rows], eps)
        i2[rows] = im2_samples(class_aes[int(cls)], ae_full, X_cf[rows], eps)
    per = {
        "tcv": valid,
        "ccv": flags,
        "cat_prox": categorical_matches(X_org, X_cf, schema),
        "con_prox": -continuous_sq_gaps(X_org, X_cf, schema),
        "im1": i1,
        "im2": i2,
    }
    return MetricsReport(
        tcv=float(valid.mean()), ccv=float(flags.mean()), cat_prox=float(per["cat_prox"].mean()),
        con_prox=float(per["con_prox"].mean()), im1=float(i1.mean()), im2=float(i2.mean()),
        runtime_seconds=runtime_seconds, epsilon=eps, n=len(X_org), method=method,
        dataset=dataset, per_sample=per,
    )


def metrics_csv(reports, extra=None) -> str:
    extra = extra or {}
    buf = io.StringIO()
    cols = ["method", "dataset", *METRIC_FIELDS, *extra]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in reports:
        row = {k: ("" if v is None else v) for k, v in r.row().items()}
        w.writerow({**row, **extra})
    return buf.getvalue()


def compare_metrics(a: dict, b: dict):
    """Paired t-test per metric shared by two per-sample metric documents."""
    from .stats import paired_t_test

    out = {}
    pa, pb = a.get("per_sample", {}), b.get("per_sample", {})
    for key in pa:
        if key in pb and len(pa[key]) == len(pb[key]) and len(pa[key]) >= 2:
            res = paired_t_test(pa[key], pb[key])
            out[key] = asdict(res)
    return out
