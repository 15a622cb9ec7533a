import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from proce.data import FeatureSchema, FeatureSpec
from proce.errors import ParseError, SchemaError, UsageError
from proce.metrics import (EPSILON, categorical_proximity, causal_constraint_validity, check_proportional,
                           compare_metrics, compute_metrics, continuous_proximity, im1, im1_samples, im2,
                           load_constraints, metrics_csv, nondecreasing, parse_constraints, proportional,
                           target_class_validity)


# values on a 1/64 grid so squared gaps never underflow to zero
grid = st.integers(0, 64).map(lambda k: k / 64)


class LabelClassifier:
    """Predicts the label stored in the last column."""

    def predict(self, X):
        return np.asarray(X)[:, -1].astype(int)


class FixedAE:
    """Autoencoder stand-in with a hand-set reconstruction function."""

    def __init__(self, fn):
        self.fn = fn

    def target(self, X):
        return np.atleast_2d(X)

    def reconstruct(self, X):
        return self.fn(np.atleast_2d(X))


@pytest.fixture
def cat_schema():
    return FeatureSchema([FeatureSpec(f"c{i}", "categorical", ["a", "b", "c"]) for i in range(6)]
                         + [FeatureSpec("u"), FeatureSpec("w")])


def test_tcv_three_of_four():
    X = np.array([[0, 1], [0, 1], [0, 0], [0, 1]], dtype=float)
    assert target_class_validity(X, 1, LabelClassifier()) == 0.75
    assert target_class_validity(X[[0, 1, 3]], 1, LabelClassifier()) == 1.0
    with pytest.raises(UsageError):
        target_class_validity(np.zeros((0, 2)), 1, LabelClassifier())


def test_tcv_is_permutation_invariant():
    rng = np.random.default_rng(0)
    X = np.column_stack([rng.random(20), rng.integers(0, 2, 20)])
    perm = rng.permutation(20)
    assert target_class_validity(X, 1, LabelClassifier()) == target_class_validity(X[perm], 1, LabelClassifier())


def test_nondecreasing_boundaries():
    schema = FeatureSchema([FeatureSpec("age")])
    c = nondecreasing("age")
    assert not c.satisfied(schema, np.array([30.0]), np.array([28.0]))
    assert c.satisfied(schema, np.array([30.0]), np.array([30.0]))


def test_ccv_eight_of_ten():
    schema = FeatureSchema([FeatureSpec("age")])
    org = np.full((10, 1), 0.5)
    cf = org.copy()
    cf[[3, 7], 0] = 0.4
    flags = [cf[i, 0] >= org[i, 0] for i in range(10)]  # predicate oracle
    assert causal_constraint_validity(org, cf, [nondecreasing("age")], schema) == np.mean(flags) == 0.8


@pytest.mark.parametrize("s,t,ok", [(0.4, 0.1, True), (0.4, -0.2, False), (0.0, 0.7, True), (0.0, -0.7, True),
                                    (-0.3, -0.1, True), (0.4, 0.0, False)])
def test_proportional_cases(s, t, ok):
    x_org = np.zeros(3)
    x_cf = np.array([s, 0.0, t])
    assert check_proportional(x_org, x_cf, [0, 1], 2) is ok


def test_categorical_proximity(cat_schema):
    org = np.zeros((3, 8))
    assert categorical_proximity(org, org, cat_schema) == 6.0
    assert categorical_proximity(org, org + 1, cat_schema) == 0.0
    cf = org.copy()
    cf[:, 2] = 1
    assert categorical_proximity(org, cf, cat_schema) == 5.0


def test_continuous_proximity_examples(cat_schema):
    org = np.zeros((2, 8))
    assert continuous_proximity(org, org, cat_schema) == 0.0
    cf = org.copy()
    cf[0, 6] = 0.3
    assert continuous_proximity(org[:1], cf[:1], cat_schema) == pytest.approx(-0.09)
    cf[1, 7] = 0.1
    # (-0.09 - 0.01) / 2 averages the two pairs
    assert continuous_proximity(org, cf, cat_schema) == pytest.approx(-0.05)


@settings(max_examples=60, deadline=None)
@given(arrays(float, (5, 8), elements=grid), arrays(float, (5, 8), elements=grid))
def test_continuous_proximity_sign(a, b):
    schema = FeatureSchema([FeatureSpec(f"f{i}") for i in range(8)])
    assert continuous_proximity(a, a, schema) == 0.0
    v = continuous_proximity(a, b, schema)
    assert v <= 0.0
    assert (v == 0.0) == bool(np.all(a == b))


def test_im1_perfect_reconstruction_is_zero():
    X = np.random.default_rng(1).random((4, 3))
    perfect = FixedAE(lambda X: X)
    other = FixedAE(lambda X: X + 0.5)
    assert im1(perfect, other, X) == 0.0
    assert im2(perfect, FixedAE(lambda X: X.copy()), X) == 0.0


def test_im1_hand_set_ratio():
    X = np.array([[1.0, 0.0]])
    ae_cf = FixedAE(lambda X: X + np.array([1.0, 0.0]))   # squared error 1
    ae_org = FixedAE(lambda X: X + np.array([0.0, 2.0]))  # squared error 4
    assert round(im1(ae_cf, ae_org, X, EPSILON), 8) == 0.25


def test_im_scaling():
    X = np.random.default_rng(2).random((6, 3))
    base = FixedAE(lambda X: X + 0.1)
    scaled = FixedAE(lambda X: X + 0.1 * np.sqrt(3.0))
    org = FixedAE(lambda X: X - 0.2)
    assert im1(scaled, org, X) == pytest.approx(3.0 * im1(base, org, X), rel=1e-12)
    full = FixedAE(lambda X: X)
    assert im2(scaled, full, X) == pytest.approx(3.0 * im2(base, full, X), rel=1e-12)


def test_im_requires_trained(untrained_ae, mixed_dataset):
    with pytest.raises(UsageError):
        im1_samples(untrained_ae, untrained_ae, mixed_dataset.X[:2])


def test_constraint_documents(tmp_path):
    schema = FeatureSchema([FeatureSpec("a1"), FeatureSpec("a2"), FeatureSpec("a3")])
    doc = {"constraints": [{"kind": "nondecreasing", "feature": "a1"},
                           {"kind": "proportional", "sources": ["a1", "a2"], "target": "a3"}]}
    (tmp_path / "c.json").write_text(json.dumps(doc))
    cs = load_constraints(tmp_path / "c.json", schema)
    assert cs == [nondecreasing("a1"), proportional(["a1", "a2"], "a3")]
    assert parse_constraints([c.to_dict() for c in cs], schema) == cs
    with pytest.raises(SchemaError):
        parse_constraints([{"kind": "nondecreasing", "feature": "zz"}], schema)
    with pytest.raises(SchemaError):
        parse_constraints([{"kind": "monotone", "target": "a1"}], schema)
    with pytest.raises(ParseError):
        parse_constraints([{"feature": "a1"}], schema)


class CutClassifier:
    """Class 1 when the continuous column exceeds 0.25."""

    def predict(self, X):
        return (np.asarray(X)[:, 1] > 0.25).astype(int)


def _report():
    schema = FeatureSchema([FeatureSpec("c", "categorical", ["a", "b"]), FeatureSpec("u")])
    org = np.array([[0, 0.2], [1, 0.5], [0, 0.9]])
    cf = np.array([[0, 0.3], [0, 0.5], [0, 0.2]])
    ident = FixedAE(lambda X: X)
    aes = {0: FixedAE(lambda X: X + 0.1), 1: ident}
    return compute_metrics(org, cf, [0, 0, 0], [1, 1, 1], CutClassifier(), aes, ident, schema,
                           [nondecreasing("u")], method="m", dataset="d")


def test_compute_metrics_aggregates():
    m = _report()
    assert m.tcv == pytest.approx(2 / 3)
    assert m.ccv == pytest.approx(2 / 3)
    assert m.cat_prox == pytest.approx(2 / 3)
    assert m.con_prox == pytest.approx(-(0.01 + 0.0 + 0.49) / 3)
    assert m.im1 == 0.0 and m.im2 == 0.0
    assert m.n == 3 and m.im2_x10 == 10 * m.im2


def test_metrics_csv_and_compare():
    m = _report()
    text = metrics_csv([m], {"tool_version": "x"})
    header, row = text.strip().split("\n")
    assert header.startswith("method,dataset,tcv,ccv")
    assert row.startswith("m,d,")
    assert ",," in row  # runtime left blank
    doc = m.to_dict()
    other = json.loads(json.dumps(doc))
    other["per_sample"]["con_prox"] = [v - 0.1 * (i + 1) for i, v in enumerate(other["per_sample"]["con_prox"])]
    res = compare_metrics(doc, other)
    assert "con_prox" in res and res["con_prox"]["df"] == 2
    assert res["tcv"]["degenerate"] and res["tcv"]["p"] == 1.0
