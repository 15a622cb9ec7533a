"""Causal graphs, linear structural equations and the causal distances."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, FeatureSchema
from .errors import CycleError, DataError, ParseError, SchemaError, UsageError

RIDGE_LAMBDA = 1e-8
FORMAT_VERSION = 1


@dataclass
class CausalGraph:
    nodes: list
    edges: list = field(default_factory=list)

    def __post_init__(self):
        self.nodes = list(dict.fromkeys(self.nodes))
        self.edges = [tuple(e) for e in self.edges]
        for parent, child in self.edges:
            for n in (parent, child):
                if n not in self.nodes:
                    self.nodes.append(n)

    def parents(self, node):
        return [p for p, c in self.edges if c == node]

    @property
    def endogenous(self):
        return [n for n in self.nodes if self.parents(n)]

    def check_schema(self, schema: FeatureSchema):
        for n in self.nodes:
            if n not in schema.names:
                raise SchemaError(f"graph node {n!r} is not a schema feature")

    def without_parents(self, names) -> "CausalGraph":
        """Copy with incoming edges of ``names`` removed (forces them exogenous)."""
        names = set(names)
        return CausalGraph(self.nodes, [e for e in self.edges if e[1] not in names])

    def to_dict(self):
        return {"nodes": list(self.nodes), "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(list(doc.get("nodes", [])), [tuple(e) for e in doc["edges"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed graph document: {exc}") from exc

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def validate_dag(graph: CausalGraph):
    """Topological order (Kahn's algorithm, ties in node-declaration order)."""
    indeg = {n: 0 for n in graph.nodes}
    children = {n: [] for n in graph.nodes}
    for p, c in graph.edges:
        indeg[c] += 1
        children[p].append(c)
    ready = [n for n in graph.nodes if indeg[n] == 0]
    order = []
    while ready:
        n = ready.pop(0)
        order.append(n)
        for c in children[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    if len(order) < len(graph.nodes):
        raise CycleError(_find_cycle(graph, {n for n in graph.nodes if indeg[n] > 0}))
    return order


def _find_cycle(graph, remaining):
    # every remaining node has a parent inside the remaining set, so walking
    # parents must revisit a node
    node = next(n for n in graph.nodes if n in remaining)
    seen = []
    while node not in seen:
        seen.append(node)
        node = next(p for p in graph.parents(node) if p in remaining)
    cycle = seen[seen.index(node):][::-1]
    return cycle + [cycle[0]]


@dataclass
class StructuralEquation:
    child: str
    parents: list
    coefficients: np.ndarray
    intercept: float
    r2: float = float("nan")

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (len(self.parents),):
            raise ParseError(f"equation for {self.child!r}: coefficient count != parent count")

    def predict(self, parent_values):
        return self.intercept + np.asarray(parent_values, dtype=float) @ self.coefficients


@dataclass
class StructuralModel:
    graph: CausalGraph
    equations: dict
    schema: FeatureSchema | None = None

    @property
    def endogenous(self):
        return list(self.equations)

    def exogenous_idx(self, schema: FeatureSchema):
        return [j for j, n in enumerate(schema.names) if n not in self.equations]

    def equation(self, v) -> StructuralEquation:
        try:
            return self.equations[v]
        except KeyError:
            raise UsageError(f"{v!r} is exogenous; it has no structural equation") from None

    def to_dict(self):
        return {
            "version": FORMAT_VERSION,
            "graph": self.graph.to_dict(),
            "equations": [
                {
                    "child": eq.child,
                    "parents": list(eq.parents),
                    "coefficients": eq.coefficients.tolist(),
                    "intercept": eq.intercept,
                    "r2": eq.r2,
                }
                for eq in self.equations.values()
            ],
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("version") != FORMAT_VERSION:
            raise ParseError(f"unsupported structural model version {doc.get('version')!r}")
        try:
            eqs = {
                e["child"]: StructuralEquation(e["child"], list(e["parents"]), e["coefficients"],
                                               float(e["intercept"]), float(e.get("r2", "nan")))
                for e in doc["equations"]
            }
            return cls(CausalGraph.from_dict(doc["graph"]), eqs)
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed structural model: {exc}") from exc

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _ols(A, b):
    """Least squares with intercept; ridge fallback when A is rank deficient."""
    D = np.column_stack([np.ones(len(A)), A])
    if np.linalg.matrix_rank(D) < D.shape[1]:
        warnings.warn("singular design matrix; falling back to ridge (lambda=1e-8)")
        beta = np.linalg.solve(D.T @ D + RIDGE_LAMBDA * np.eye(D.shape[1]), D.T @ b)
    else:
        beta, *_ = np.linalg.lstsq(D, b, rcond=None)
    return beta[1:], float(beta[0])


def fit_structural_model(dataset: Dataset, graph: CausalGraph, force_exogenous=()) -> StructuralModel:
    """Fit one linear equation per endogenous node by ordinary least squares."""
    schema = dataset.schema
    graph.check_schema(schema)
    if force_exogenous:
        graph = graph.without_parents(force_exogenous)
    order = validate_dag(graph)
    equations = {}
    for v in order:
        parents = graph.parents(v)
        if not parents:
            continue
        if len(dataset) < len(parents) + 2:
            raise DataError(f"equation for {v!r} needs at least {len(parents) + 2} rows")
        A = dataset.X[:, [schema.index(p) for p in parents]]
        b = dataset.X[:, schema.index(v)]
        coef, icpt = _ols(A, b)
        resid = b - (A @ coef + icpt)
        ss_tot = float(np.sum((b - b.mean()) ** 2))
        r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else float("nan")
        equations[v] = StructuralEquation(v, parents, coef, icpt, r2)
    return StructuralModel(graph, equations, schema)


def predict_node(model: StructuralModel, v, parent_values):
    eq = model.equation(v)
    if isinstance(parent_values, dict):
        missing = [p for p in eq.parents if p not in parent_values]
        if missing:
            raise UsageError(f"missing parent values for {v!r}: {missing}")
        parent_values = [parent_values[p] for p in eq.parents]
    if len(parent_values) != len(eq.parents):
        raise UsageError(f"{v!r} has {len(eq.parents)} parents, got {len(parent_values)} values")
    return float(eq.predict(parent_values))


def causal_distance(model: StructuralModel, v, x_cf, x_org, schema: FeatureSchema | None = None):
    """``(g(parents of x_cf) - x_org[v])**2`` for one endogenous node."""
    schema = schema or model.schema
    eq = model.equation(v)
    pa = [x_cf[schema.index(p)] for p in eq.parents]
    return (predict_node(model, v, pa) - float(x_org[schema.index(v)])) ** 2


def causal_terms(model: StructuralModel, schema: FeatureSchema, X_cf, x_org):
    """Per-row sum of causal distances over every endogenous node (batched)."""
    X_cf = np.atleast_2d(X_cf)
    total = np.zeros(len(X_cf))
    for v, eq in model.equations.items():
        pa = X_cf[:, [schema.index(p) for p in eq.parents]]
        total += (eq.predict(pa) - x_org[schema.index(v)]) ** 2
    return total


def exogenous_terms(model: StructuralModel, ae, schema: FeatureSchema, X_cf, x_org):
    """Per-row sum of per-feature distances over the exogenous features."""
    X_cf = np.atleast_2d(X_cf)
    total = np.zeros(len(X_cf))
    for j in model.exogenous_idx(schema):
        if schema.features[j].is_categorical:
            table = ae.cat_embeddings[j]
            diff = table[X_cf[:, j].astype(int)] - table[int(x_org[j])]
            total += np.sum(diff * diff, axis=1)
        else:
            total += (X_cf[:, j] - x_org[j]) ** 2
    return total


def final_distance(model: StructuralModel, ae, schema: FeatureSchema, x_cf, x_org):
    """Per-feature distance on exogenous features plus causal distance on endogenous ones."""
    single = np.ndim(x_cf) == 1
    x_org = np.asarray(x_org, dtype=float)
    X = np.atleast_2d(np.asarray(x_cf, dtype=float))
    out = exogenous_terms(model, ae, schema, X, x_org) + causal_terms(model, schema, X, x_org)
    return float(out[0]) if single else out
