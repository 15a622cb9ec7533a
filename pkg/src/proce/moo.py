"""Pareto dominance, front peeling, crowding and the genetic operators.

Populations are plain ``(n, d)`` gene matrices; categorical genes hold
category indices as floats. All objectives are minimised.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, UsageError


@dataclass
class GaConfig:
    population_size: int = 100
    generations: int = 100
    crossover_prob: float = 0.9
    mutation_prob: float = 0.2
    mutation_sigma: float = 0.1
    init_sigma: float = 0.1
    cat_keep_prob: float = 0.8
    crowding: str = "neighbour"
    endogenous: str = "derived"
    early_stop: bool = False
    seed: int = 0

    def validate(self):
        n = self.population_size
        if n < 4 or n % 2:
            raise ConfigError(f"population_size must be even and >= 4, got {n}")
        if self.generations < 0:
            raise ConfigError(f"generations must be >= 0, got {self.generations}")
        for name in ("crossover_prob", "mutation_prob", "cat_keep_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.mutation_sigma < 0 or self.init_sigma < 0:
            raise ConfigError("sigmas must be >= 0")
        if self.crowding not in CROWDING:
            raise ConfigError(f"unknown crowding method {self.crowding!r}")
        if self.endogenous not in ("free", "derived", "abduct"):
            raise ConfigError(f"unknown endogenous mode {self.endogenous!r}")
        return self

    def to_dict(self):
        return asdict(self)


def dominates(a, b) -> bool:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return bool(np.all(a <= b) and np.any(a < b))


def domination_matrix(F):
    """``D[i, j]`` is True when row i dominates row j."""
    F = np.asarray(F, dtype=float)
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    return le & lt


def non_dominated_sort(F):
    """Partition row indices of ``F`` into ranked fronts, each in index order."""
    F = np.asarray(F, dtype=float)
    n = len(F)
    if n == 0:
        return []
    D = domination_matrix(F)
    dominated_by = D.sum(axis=0)
    remaining = np.ones(n, dtype=bool)
    fronts = []
    while remaining.any():
        front = np.flatnonzero(remaining & (dominated_by == 0))
        fronts.append(front.tolist())
        remaining[front] = False
        dominated_by = dominated_by - D[front].sum(axis=0)
    return fronts


def ranks_from_fronts(fronts, n):
    rank = np.empty(n, dtype=int)
    for h, front in enumerate(fronts):
        rank[front] = h
    return rank


def _objective_span(F):
    span = F.min(axis=0) - F.max(axis=0)
    return span, span != 0


def crowding_neighbour(F):
    """Crowding from the gap between each member's two nearest front-mates.

    ``d(x) = sqrt(sum_i ((f_i(a) - f_i(b)) / (f_i_min - f_i_max))**2)`` with
    a, b the Euclidean nearest neighbours of x in objective space. Fronts of
    at most two members get +inf; constant objectives contribute nothing.
    """
    F = np.asarray(F, dtype=float)
    m = len(F)
    if m <= 2:
        return np.full(m, np.inf)
    diff = F[:, None, :] - F[None, :, :]
    dist = np.sum(diff * diff, axis=2)
    np.fill_diagonal(dist, np.inf)
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :2]
    span, ok = _objective_span(F)
    gap = F[nearest[:, 0]] - F[nearest[:, 1]]
    scaled = np.where(ok, gap / np.where(ok, span, 1.0), 0.0)
    return np.sqrt(np.sum(scaled * scaled, axis=1))


def crowding_standard(F):
    """Classic NSGA-II crowding over per-objective sorted neighbours."""
    F = np.asarray(F, dtype=float)
    m, p = F.shape
    if m <= 2:
        return np.full(m, np.inf)
    d = np.zeros(m)
    for i in range(p):
        order = np.argsort(F[:, i], kind="stable")
        lo, hi = F[order[0], i], F[order[-1], i]
        d[order[0]] = d[order[-1]] = np.inf
        if hi == lo:
            continue
        d[order[1:-1]] += (F[order[2:], i] - F[order[:-2], i]) / (hi - lo)
    return d


CROWDING = {"neighbour": crowding_neighbour, "standard": crowding_standard}


def crowding_distance(F, method="neighbour"):
    return CROWDING[method](F)


def environmental_selection(F, n, crowding="neighbour"):
    """Indices of the ``n`` survivors of a merged population.

    Whole fronts are admitted while they fit; the front that straddles the
    cut is truncated by descending crowding distance, ties by index.
    """
    F = np.asarray(F, dtype=float)
    if len(F) < n:
        raise UsageError(f"cannot select {n} survivors from {len(F)} candidates")
    chosen = []
    for front in non_dominated_sort(F):
        if len(chosen) + len(front) <= n:
            chosen.extend(front)
            if len(chosen) == n:
                break
            continue
        d = crowding_distance(F[front], crowding)
        order = np.lexsort((np.asarray(front), -d))
        chosen.extend(np.asarray(front)[order[: n - len(chosen)]].tolist())
        break
    return np.asarray(chosen, dtype=int)


def crossover(a, b, rng, crossover_prob=0.9, mutable=None):
    """Uniform gene swap applied to the pair with probability ``crossover_prob``."""
    a, b = np.array(a, dtype=float), np.array(b, dtype=float)
    if rng.random() >= crossover_prob:
        return a, b
    swap = rng.random(a.shape[0]) < 0.5
    if mutable is not None:
        swap &= mutable
    a[swap], b[swap] = b[swap], a[swap].copy()
    return a, b


def mutate(c, n_categories, mutable, cfg: GaConfig, rng):
    """Gaussian step on continuous genes, resample-other on categorical genes."""
    c = np.array(c, dtype=float)
    hit = (rng.random(c.shape[0]) < cfg.mutation_prob) & mutable
    for j in np.flatnonzero(hit):
        k = n_categories[j]
        if k:
            new = rng.integers(k - 1)
            c[j] = new + (new >= c[j])
        else:
            c[j] = min(1.0, max(0.0, c[j] + rng.normal(0.0, cfg.mutation_sigma)))
    return c
