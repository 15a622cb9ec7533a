"""Feature schemas, CSV ingestion, min-max normalisation, splits, Simple-BN."""
from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, SchemaError, UsageError

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
CONSTRAINTS = (None, "none", "nondecreasing")


@dataclass
class FeatureSpec:
    name: str
    kind: str = CONTINUOUS
    categories: list = field(default_factory=list)
    mutable: bool = True
    constraint: str | None = None

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL


@dataclass
class FeatureSchema:
    features: list
    label: str = "label"

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate feature names in {names}")
        for f in self.features:
            if f.kind not in (CONTINUOUS, CATEGORICAL):
                raise SchemaError(f"feature {f.name!r}: unknown kind {f.kind!r}")
            if f.is_categorical and len(f.categories) < 2:
                raise SchemaError(f"categorical feature {f.name!r} needs at least 2 categories")
            if f.constraint not in CONSTRAINTS:
                raise SchemaError(f"feature {f.name!r}: unknown constraint {f.constraint!r}")

    def __len__(self):
        return len(self.features)

    @property
    def names(self):
        return [f.name for f in self.features]

    def index(self, name) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown feature {name!r}") from None

    def __getitem__(self, name) -> FeatureSpec:
        return self.features[self.index(name)]

    @property
    def continuous_idx(self):
        return [i for i, f in enumerate(self.features) if not f.is_categorical]

    @property
    def categorical_idx(self):
        return [i for i, f in enumerate(self.features) if f.is_categorical]

    @property
    def mutable_mask(self):
        return np.array([f.mutable for f in self.features], dtype=bool)

    @property
    def n_categories(self):
        return [len(f.categories) if f.is_categorical else 0 for f in self.features]

    def to_dict(self) -> dict:
        feats = []
        for f in self.features:
            d = {"name": f.name, "kind": f.kind, "mutable": f.mutable}
            if f.is_categorical:
                d["categories"] = list(f.categories)
            if f.constraint not in (None, "none"):
                d["constraint"] = f.constraint
            feats.append(d)
        return {"features": feats, "label": self.label}

    @classmethod
    def from_dict(cls, doc) -> "FeatureSchema":
        try:
            feats = [
                FeatureSpec(
                    name=d["name"],
                    kind=d.get("kind", CONTINUOUS),
                    categories=[str(c) for c in d.get("categories", [])],
                    mutable=bool(d.get("mutable", True)),
                    constraint=d.get("constraint"),
                )
                for d in doc["features"]
            ]
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc
        return cls(feats, doc.get("label", "label"))

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def validate_instance(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (len(self),):
            raise DataError(f"instance has shape {x.shape}, schema has {len(self)} features")
        for j in self.categorical_idx:
            k = x[j]
            if k != int(k) or not 0 <= k < len(self.features[j].categories):
                raise DataError(f"feature {self.features[j].name!r}: invalid category index {k}")
        return x


@dataclass
class Normalizer:
    """Per-continuous-feature min-max scaling to [0, 1]."""

    columns: list
    mins: np.ndarray
    maxs: np.ndarray

    @property
    def degenerate(self):
        return self.maxs <= self.mins

    def normalize(self, X):
        X = np.array(X, dtype=float)
        cols = self.columns
        span = np.where(self.degenerate, 1.0, self.maxs - self.mins)
        scaled = (X[..., cols] - self.mins) / span
        X[..., cols] = np.where(self.degenerate, 0.0, scaled)
        return X

    def denormalize(self, X):
        X = np.array(X, dtype=float)
        cols = self.columns
        span = np.where(self.degenerate, 0.0, self.maxs - self.mins)
        X[..., cols] = X[..., cols] * span + self.mins
        return X

    def to_dict(self):
        return {
            "columns": list(self.columns),
            "mins": self.mins.tolist(),
            "maxs": self.maxs.tolist(),
            "degenerate": self.degenerate.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(list(doc["columns"]), np.asarray(doc["mins"], float), np.asarray(doc["maxs"], float))


@dataclass
class Dataset:
    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray
    normalizer: Normalizer | None = None
    row_ids: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(-1, len(self.schema))
        self.y = np.asarray(self.y, dtype=int)
        if self.X.shape[0] != self.y.shape[0]:
            raise DataError(f"{self.X.shape[0]} rows but {self.y.shape[0]} labels")
        if self.row_ids is None:
            self.row_ids = np.arange(self.X.shape[0])

    def __len__(self):
        return self.X.shape[0]

    @property
    def normalized(self) -> bool:
        return self.normalizer is not None

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return replace(self, X=self.X[idx], y=self.y[idx], row_ids=self.row_ids[idx])

    def raw_X(self):
        return self.normalizer.denormalize(self.X) if self.normalized else self.X.copy()


# -- normalisation ----------------------------------------------------------

def fit_normalizer(dataset: Dataset) -> Normalizer:
    cols = dataset.schema.continuous_idx
    X = dataset.raw_X()
    if len(X) == 0:
        raise DataError("cannot fit a normalizer on an empty dataset")
    mins, maxs = X[:, cols].min(axis=0), X[:, cols].max(axis=0)
    norm = Normalizer(cols, mins, maxs)
    for j in np.flatnonzero(norm.degenerate):
        warnings.warn(f"feature {dataset.schema.names[cols[j]]!r} is constant; normalised to 0")
    return norm


def normalize_dataset(dataset: Dataset, normalizer: Normalizer | None = None) -> Dataset:
    if dataset.normalized:
        raise UsageError("dataset is already normalised")
    normalizer = normalizer or fit_normalizer(dataset)
    return replace(dataset, X=normalizer.normalize(dataset.X), normalizer=normalizer)


# -- CSV --------------------------------------------------------------------

def load_csv(path, schema: FeatureSchema, label: str | None = None) -> Dataset:
    """Parse a headed CSV into a raw (unnormalised) dataset."""
    label = label or schema.label
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        missing = [c for c in schema.names + [label] if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}; file has {header}")
        pos = [header.index(n) for n in schema.names]
        lab = header.index(label)
        lookups = [
            {c: k for k, c in enumerate(f.categories)} if f.is_categorical else None
            for f in schema.features
        ]
        rows, labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            vals = []
            for f, p, lk in zip(schema.features, pos, lookups):
                raw = rec[p].strip()
                if lk is not None:
                    if raw not in lk:
                        raise DataError(f"{path}:{lineno}: unknown category {raw!r} for {f.name!r}")
                    vals.append(float(lk[raw]))
                else:
                    try:
                        vals.append(float(raw))
                    except ValueError:
                        raise DataError(f"{path}:{lineno}: {f.name!r} is not numeric: {raw!r}") from None
            try:
                labels.append(int(float(rec[lab])))
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad label {rec[lab]!r}") from None
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    if not set(labels) <= {0, 1}:
        raise DataError(f"{path}: labels must be 0/1, found {sorted(set(labels))}")
    return Dataset(schema, np.array(rows), np.array(labels))


def format_row(schema: FeatureSchema, x):
    out = []
    for f, v in zip(schema.features, x):
        out.append(f.categories[int(v)] if f.is_categorical else repr(float(v)))
    return out


def write_csv(dataset: Dataset, path):
    """Write raw feature values (categoricals by name) plus the label."""
    X = dataset.raw_X()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(dataset.schema.names + [dataset.schema.label])
        for x, y in zip(X, dataset.y):
            w.writerow(format_row(dataset.schema, x) + [int(y)])


# -- splitting --------------------------------------------------------------

def split(dataset: Dataset, ratio=0.8, seed=0):
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must be in (0, 1), got {ratio}")
    n = len(dataset)
    order = np.random.default_rng(seed).permutation(n)
    cut = int(np.floor(ratio * n))
    return dataset.subset(order[:cut]), dataset.subset(order[cut:])


# -- Simple-BN --------------------------------------------------------------

@dataclass
class SimpleBnParams:
    # k_y/b_y chosen for a roughly balanced, learnable label (about 50/50)
    mu1: float = 1.0
    sigma1: float = 0.5
    mu2: float = 1.0
    sigma2: float = 0.5
    k3: float = 0.3
    b3: float = 0.0
    sigma3: float = 0.1
    ky: float = 4.0
    by: float = -2.5

    def __post_init__(self):
        for name in ("sigma1", "sigma2", "sigma3"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    @classmethod
    def from_dict(cls, doc):
        unknown = set(doc) - set(asdict(cls()))
        if unknown:
            raise ConfigError(f"unknown Simple-BN parameters: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in doc.items()})


def simple_bn_schema() -> FeatureSchema:
    return FeatureSchema([FeatureSpec("a1"), FeatureSpec("a2"), FeatureSpec("a3")])


def simple_bn_graph() -> dict:
    return {"nodes": ["a1", "a2", "a3"], "edges": [["a1", "a3"], ["a2", "a3"]]}


def simple_bn_success_prob(params: SimpleBnParams, a1, a2, a3):
    from .nn import sigmoid

    return sigmoid(params.ky * (np.asarray(a1) * a2) + params.by - a3)


def gen_simple_bn(params: SimpleBnParams | None = None, n=10000, seed=0) -> Dataset:
    """Sample the three-node nonlinear SCM with a Bernoulli label."""
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    params = params or SimpleBnParams()
    rng = np.random.default_rng(seed)
    a1 = rng.normal(params.mu1, params.sigma1, n)
    a2 = rng.normal(params.mu2, params.sigma2, n)
    a3 = rng.normal(params.k3 * (a1 + a2) ** 2 + params.b3, params.sigma3)
    p = simple_bn_success_prob(params, a1, a2, a3)
    y = (rng.random(n) < p).astype(int)
    minority = min(y.mean(), 1 - y.mean())
    if minority < 0.10:
        warnings.warn(f"Simple-BN minority class is only {minority:.1%} of samples")
    return Dataset(simple_bn_schema(), np.column_stack([a1, a2, a3]), y)
