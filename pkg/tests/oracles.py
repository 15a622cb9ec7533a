"""Slow, obviously-correct reference implementations used as test oracles.

None of these share code with the library; they are written from the
definitions directly.
"""
import math

import numpy as np
from scipy import integrate, special


def brute_force_fronts(F):
    """Peel fronts by checking every pair for dominance, one front at a time."""
    F = [tuple(map(float, row)) for row in F]
    remaining = list(range(len(F)))
    fronts = []

    def dom(a, b):
        return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))

    while remaining:
        front = [i for i in remaining if not any(dom(F[j], F[i]) for j in remaining if j != i)]
        fronts.append(sorted(front))
        remaining = [i for i in remaining if i not in front]
    return fronts


def random_linear_dag(rng, max_nodes=6):
    """Random DAG over ``v0..v{k-1}`` (edges only go forward) with random weights."""
    k = int(rng.integers(2, max_nodes + 1))
    names = [f"v{i}" for i in range(k)]
    edges, weights, intercepts = [], {}, {}
    for c in range(1, k):
        for p in range(c):
            if rng.random() < 0.5:
                edges.append((names[p], names[c]))
                weights[(names[p], names[c])] = float(rng.uniform(-2, 2))
        intercepts[names[c]] = float(rng.uniform(-1, 1))
    perm = rng.permutation(k)
    nodes = [names[i] for i in perm]
    return nodes, edges, weights, intercepts


def identifiable_linear_dag(rng, n, max_nodes=6, max_cond=1e6):
    """Draw DAG + noiseless sample until every equation's design is well posed.

    Without noise, a parent that is an affine function of its co-parents
    makes the coefficients non-unique, so such draws are rejected.
    """
    while True:
        nodes, edges, w, b = random_linear_dag(rng, max_nodes)
        vals = sample_linear_dag(nodes, edges, w, b, n, rng)
        ok = True
        for v in nodes:
            parents = [p for p, c in edges if c == v]
            if parents:
                D = np.column_stack([np.ones(n)] + [vals[p] for p in parents])
                ok &= bool(np.linalg.cond(D) < max_cond)
        if ok:
            return nodes, edges, w, b, vals


def sample_linear_dag(names, edges, weights, intercepts, n, rng):
    """Noiseless data: roots are random, children are exact linear functions."""
    values = {}
    order = sorted(names, key=lambda s: int(s[1:]))
    for v in order:
        parents = [p for p, c in edges if c == v]
        if not parents:
            values[v] = rng.normal(size=n)
        else:
            values[v] = intercepts[v] + sum(weights[(p, v)] * values[p] for p in parents)
    return values


def final_distance_oracle(schema, scm, tables, x_cf, x_org):
    """Per-feature loop over exogenous features plus a causal term per equation."""
    total = 0.0
    endo = set(scm.equations)
    for j, f in enumerate(schema.features):
        if f.name in endo:
            eq = scm.equations[f.name]
            g = eq.intercept
            for p, c in zip(eq.parents, eq.coefficients):
                g += c * x_cf[schema.names.index(p)]
            total += (g - x_org[j]) ** 2
        elif f.categories:
            a, b = tables[j][int(x_cf[j])], tables[j][int(x_org[j])]
            total += sum((u - w) ** 2 for u, w in zip(a, b))
        else:
            total += (x_cf[j] - x_org[j]) ** 2
    return total


def student_t_pdf(x, df):
    c = math.exp(special.gammaln((df + 1) / 2) - special.gammaln(df / 2)) / math.sqrt(df * math.pi)
    return c * (1 + x * x / df) ** (-(df + 1) / 2)


def t_two_sided_p_by_quadrature(t, df):
    """Two-sided p-value from numerically integrating the Student-t density."""
    t = abs(t)
    if math.isinf(t):
        return 0.0
    # integrate the central part; the tails are 1 minus it
    centre, _ = integrate.quad(student_t_pdf, 0.0, t, args=(df,), epsabs=1e-13, epsrel=1e-12, limit=200)
    return max(0.0, 1.0 - 2.0 * centre)


def paired_t_oracle(a, b):
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    n = len(d)
    mean = sum(d) / n
    sd = math.sqrt(sum((x - mean) ** 2 for x in d) / (n - 1))
    t = mean / (sd / math.sqrt(n))
    return t, n - 1, t_two_sided_p_by_quadrature(t, n - 1)
