"""Latent prototypes and the three search objectives."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .causal import StructuralModel, final_distance
from .data import Dataset, FeatureSchema
from .errors import DataError, UsageError
from .nn import cross_entropy

DEFAULT_K = 25
OBJECTIVE_NAMES = ("pred", "proto", "dist")


@dataclass(frozen=True)
class ObjectiveVector:
    f_pred: float
    f_proto: float
    f_dist_final: float

    def as_tuple(self):
        return (self.f_pred, self.f_proto, self.f_dist_final)


@dataclass
class PrototypeContext:
    proto: np.ndarray
    K: int
    neighbor_indices: np.ndarray
    y_org: int
    y_cf: int


def knn_counterfactual_class(dataset: Dataset, ae, x_org, y_org, K=DEFAULT_K, latents=None):
    """Indices of the K opposite-class rows closest to ``x_org`` in latent space.

    Ties go to the lower row index. ``latents`` may pass precomputed
    encodings of ``dataset.X``.
    """
    if K < 1:
        raise UsageError(f"K must be >= 1, got {K}")
    eligible = np.flatnonzero(dataset.y != y_org)
    if len(eligible) < K:
        raise DataError(f"need {K} rows with class != {y_org}, dataset has {len(eligible)}")
    Z = latents[eligible] if latents is not None else ae.encode(dataset.X[eligible])
    diff = Z - ae.encode(np.asarray(x_org, dtype=float))
    d = np.sum(diff * diff, axis=1)
    return eligible[np.argsort(d, kind="stable")[:K]]


def compute_prototype(dataset: Dataset, ae, neighbor_indices, latents=None):
    idx = np.asarray(neighbor_indices, dtype=int)
    if idx.size == 0:
        raise UsageError("prototype needs at least one neighbour")
    Z = latents[idx] if latents is not None else ae.encode(dataset.X[idx])
    return np.mean(Z, axis=0)


def build_prototype(dataset: Dataset, ae, x_org, y_org, y_cf, K=DEFAULT_K, latents=None):
    idx = knn_counterfactual_class(dataset, ae, x_org, y_org, K, latents)
    return PrototypeContext(compute_prototype(dataset, ae, idx, latents), K, idx, y_org, y_cf)


def f_pred(classifier, x_cf, y_cf):
    return cross_entropy(classifier.predict_proba(x_cf), y_cf)


def f_proto(ae, x_cf, proto):
    diff = ae.encode(x_cf) - proto
    return float(diff @ diff) if diff.ndim == 1 else np.sum(diff * diff, axis=1)


def f_dist(ae, schema: FeatureSchema, x_cf, x_org):
    """Squared difference on continuous features, embedding distance on categorical ones."""
    total = 0.0
    for j, f in enumerate(schema.features):
        if f.is_categorical:
            total += ae.cat_embed_distance(j, x_cf[j], x_org[j])
        else:
            total += (float(x_cf[j]) - float(x_org[j])) ** 2
    return total


@dataclass
class EvaluationContext:
    classifier: object
    ae: object
    scm: StructuralModel
    schema: FeatureSchema
    proto: np.ndarray
    x_org: np.ndarray
    y_cf: int

    def evaluate(self, X):
        """Objective matrix with columns (pred, proto, dist) for rows of X."""
        X = np.atleast_2d(X)
        return np.column_stack([
            np.atleast_1d(cross_entropy(self.classifier.predict_proba(X), self.y_cf)),
            f_proto(self.ae, X, self.proto),
            final_distance(self.scm, self.ae, self.schema, X, self.x_org),
        ])


def evaluate_objectives(ctx: EvaluationContext, candidate) -> ObjectiveVector:
    return ObjectiveVector(*map(float, ctx.evaluate(candidate)[0]))
