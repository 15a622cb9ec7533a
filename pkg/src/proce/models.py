"""Classifier presets and the latent-space autoencoder.

Categorical features enter the autoencoder through learned per-category
embedding rows; the decoder reconstructs continuous values and one-hot
category indicators.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import nn
from .data import Dataset, FeatureSchema
from .errors import ConfigError, DataError, DomainError, ParseError, UsageError, VersionError

PRESETS = {
    "net3": (64, 32, 16),
    "net5": (256, 128, 64, 32, 16),
}
CLASSIFIER_DROPOUT = 0.1
DEFAULT_EMBEDDING_DIM = 256
DEFAULT_CAT_EMBED_DIM = 8
AE_HIDDEN = 128
FORMAT_VERSION = 1


@dataclass
class Classifier:
    net: nn.Mlp
    preset: str
    schema_fingerprint: str = ""

    def predict_proba(self, X):
        """P(y=1) for a single instance (float) or a batch (1-D array)."""
        out = self.net.forward(X)
        return float(out[0]) if np.ndim(X) == 1 else out[:, 0]

    def predict(self, X):
        p = self.predict_proba(X)
        return int(p >= 0.5) if np.ndim(X) == 1 else (p >= 0.5).astype(int)

    def to_dict(self):
        return {
            "version": FORMAT_VERSION,
            "preset": self.preset,
            "schema_fingerprint": self.schema_fingerprint,
            "net": nn.to_dict(self.net),
        }

    @classmethod
    def from_dict(cls, doc):
        _check_version(doc)
        return cls(nn.from_dict(doc["net"]), doc["preset"], doc.get("schema_fingerprint", ""))


def build_classifier(preset, input_dim, seed=0, schema_fingerprint="") -> Classifier:
    if preset not in PRESETS:
        raise ConfigError(f"unknown classifier preset {preset!r}; choose from {sorted(PRESETS)}")
    sizes = [input_dim, *PRESETS[preset], 1]
    net = nn.Mlp.build(sizes, np.random.default_rng(seed), head="sigmoid", dropout=CLASSIFIER_DROPOUT)
    return Classifier(net, preset, schema_fingerprint)


def train_classifier(dataset: Dataset, preset="net3", cfg: nn.TrainConfig | None = None):
    cfg = cfg or nn.TrainConfig(epochs=50, batch_size=32)
    clf = build_classifier(preset, dataset.X.shape[1], cfg.seed, dataset.schema.fingerprint())
    net, history = nn.train(clf.net, dataset.X, dataset.y, replace(cfg, loss="bce"))
    return Classifier(net, preset, clf.schema_fingerprint), history


class Autoencoder:
    """Encoder/decoder pair over an embedded mixed-type representation."""

    def __init__(self, schema: FeatureSchema, encoder: nn.Mlp, decoder: nn.Mlp,
                 cat_embeddings: dict, trained=False):
        self.schema = schema
        self.encoder = encoder
        self.decoder = decoder
        self.cat_embeddings = {int(j): np.asarray(t, dtype=float) for j, t in cat_embeddings.items()}
        self.trained = trained
        for j in schema.categorical_idx:
            table = self.cat_embeddings.get(j)
            if table is None or table.shape[0] != len(schema.features[j].categories):
                raise ConfigError(f"feature {schema.names[j]!r} needs one embedding row per category")
        if encoder.output_dim != decoder.input_dim:
            raise ConfigError("encoder output and decoder input widths differ")

    @classmethod
    def init(cls, schema: FeatureSchema, E=DEFAULT_EMBEDDING_DIM, seed=0,
             cat_dim=DEFAULT_CAT_EMBED_DIM, hidden=AE_HIDDEN) -> "Autoencoder":
        if E <= 0:
            raise ConfigError(f"embedding dimension must be positive, got {E}")
        rng = np.random.default_rng(seed)
        tables = {j: rng.normal(0.0, 1.0 / np.sqrt(cat_dim), (len(schema.features[j].categories), cat_dim))
                  for j in schema.categorical_idx}
        in_dim = len(schema.continuous_idx) + len(tables) * cat_dim
        out_dim = len(schema.continuous_idx) + sum(schema.n_categories)
        encoder = nn.Mlp.build([in_dim, hidden, E], rng)
        decoder = nn.Mlp.build([E, hidden, out_dim], rng)
        return cls(schema, encoder, decoder, tables)

    @property
    def E(self) -> int:
        return self.encoder.output_dim

    def _codes(self, X, j):
        codes = X[:, j]
        k = len(self.schema.features[j].categories)
        idx = codes.astype(int)
        if np.any(idx != codes) or np.any(idx < 0) or np.any(idx >= k):
            raise DomainError(f"feature {self.schema.names[j]!r}: category index out of range")
        return idx

    def embed(self, X):
        """Encoder input: continuous values and categorical embedding rows."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        parts = []
        for j, f in enumerate(self.schema.features):
            if f.is_categorical:
                parts.append(self.cat_embeddings[j][self._codes(X, j)])
            else:
                parts.append(X[:, j:j + 1])
        return np.hstack(parts)

    def target(self, X):
        """Reconstruction space: continuous values and one-hot categories."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        parts = []
        for j, f in enumerate(self.schema.features):
            if f.is_categorical:
                parts.append(np.eye(len(f.categories))[self._codes(X, j)])
            else:
                parts.append(X[:, j:j + 1])
        return np.hstack(parts)

    def encode(self, X):
        single = np.ndim(X) == 1
        z = self.encoder.forward(self.embed(X))
        return z[0] if single else z

    def reconstruct(self, X):
        if not self.trained:
            raise UsageError("autoencoder has not been trained")
        single = np.ndim(X) == 1
        r = self.decoder.forward(self.encoder.forward(self.embed(X)))
        return r[0] if single else r

    def cat_embed_distance(self, j, a, b) -> float:
        if j not in self.cat_embeddings:
            raise UsageError(f"feature {j} is not categorical")
        table = self.cat_embeddings[j]
        d = table[int(a)] - table[int(b)]
        return float(d @ d)

    def reconstruction_error(self, X):
        return float(np.mean((self.reconstruct(X) - self.target(X)) ** 2))

    # -- persistence --

    def to_dict(self):
        return {
            "version": FORMAT_VERSION,
            "E": self.E,
            "schema": self.schema.to_dict(),
            "trained": self.trained,
            "encoder": nn.to_dict(self.encoder),
            "decoder": nn.to_dict(self.decoder),
            "cat_embeddings": {
                self.schema.names[j]: {str(k): row.tolist() for k, row in enumerate(t)}
                for j, t in self.cat_embeddings.items()
            },
        }

    @classmethod
    def from_dict(cls, doc):
        _check_version(doc)
        try:
            schema = FeatureSchema.from_dict(doc["schema"])
            tables = {}
            for name, rows in doc["cat_embeddings"].items():
                tables[schema.index(name)] = np.array([rows[str(k)] for k in range(len(rows))])
            ae = cls(schema, nn.from_dict(doc["encoder"]), nn.from_dict(doc["decoder"]), tables,
                     bool(doc.get("trained", True)))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed autoencoder document: {exc}") from exc
        if ae.E != doc["E"]:
            raise ParseError("E does not match encoder output width")
        return ae


def _check_version(doc):
    if not isinstance(doc, dict) or "version" not in doc:
        raise ParseError("document lacks a version header")
    if doc["version"] != FORMAT_VERSION:
        raise VersionError(f"unsupported document version {doc['version']!r}")


def save_json(obj, path):
    Path(path).write_text(json.dumps(obj.to_dict()) + "\n")


def load_json(cls, path):
    return cls.from_dict(json.loads(Path(path).read_text()))


def default_ae_config(seed=0) -> nn.TrainConfig:
    return nn.TrainConfig(learning_rate=1e-3, epochs=30, batch_size=64, seed=seed, loss="mse")


def train_autoencoder(dataset: Dataset, E=DEFAULT_EMBEDDING_DIM, cfg: nn.TrainConfig | None = None):
    """Fit an autoencoder by MSE reconstruction; returns ``(ae, history)``."""
    cfg = cfg or default_ae_config()
    cfg.validate()
    if E is None:
        E = DEFAULT_EMBEDDING_DIM
    if len(dataset) == 0:
        raise DataError("cannot train an autoencoder on an empty dataset")
    ae = Autoencoder.init(dataset.schema, E, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    cat_idx = dataset.schema.categorical_idx
    tables = [ae.cat_embeddings[j] for j in cat_idx]
    opt = nn.Optimizer(ae.encoder.params() + ae.decoder.params() + tables, cfg)
    # column slices of each categorical embedding inside the encoder input
    slots, col = {}, 0
    for j, f in enumerate(dataset.schema.features):
        width = ae.cat_embeddings[j].shape[1] if f.is_categorical else 1
        slots[j] = slice(col, col + width)
        col += width

    X = dataset.X
    T = ae.target(X)
    history = []
    for epoch in range(cfg.epochs):
        total = 0.0
        for idx in nn.batches(len(X), cfg.batch_size, rng):
            xb = X[idx]
            z, enc_cache = ae.encoder.forward_cached(ae.embed(xb))
            out, dec_cache = ae.decoder.forward_cached(z)
            diff = out - T[idx]
            loss = float(np.mean(diff**2))
            if not np.isfinite(loss):
                raise nn.TrainingError(
                    f"non-finite loss at epoch {epoch + 1} (learning_rate={cfg.learning_rate})")
            dec_grads, dz = ae.decoder.backward(dec_cache, 2.0 * diff / diff.size)
            enc_grads, dx = ae.encoder.backward(enc_cache, dz)
            table_grads = []
            for j, table in zip(cat_idx, tables):
                g = np.zeros_like(table)
                np.add.at(g, ae._codes(xb, j), dx[:, slots[j]])
                table_grads.append(g)
            opt.step(enc_grads + dec_grads + table_grads)
            total += loss * len(idx)
        history.append(total / len(X))
    ae.trained = True
    return ae, history


@dataclass
class AutoencoderTriple:
    ae_org: Autoencoder
    ae_cf: Autoencoder
    ae_full: Autoencoder


def train_class_autoencoders(dataset: Dataset, y_org, y_cf, E=DEFAULT_EMBEDDING_DIM,
                             cfg: nn.TrainConfig | None = None) -> AutoencoderTriple:
    cfg = cfg or default_ae_config()
    subsets = {}
    for cls in (y_org, y_cf):
        rows = np.flatnonzero(dataset.y == cls)
        if len(rows) == 0:
            raise DataError(f"no training rows of class {cls}")
        subsets[cls] = dataset.subset(rows)
    ae_org, _ = train_autoencoder(subsets[y_org], E, replace(cfg, seed=cfg.seed + 1 + y_org))
    ae_cf, _ = train_autoencoder(subsets[y_cf], E, replace(cfg, seed=cfg.seed + 1 + y_cf))
    ae_full, _ = train_autoencoder(dataset, E, cfg)
    return AutoencoderTriple(ae_org, ae_cf, ae_full)
