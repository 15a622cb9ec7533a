import json

import numpy as np
import pytest

from proce import nn
from proce.causal import CausalGraph, StructuralEquation, StructuralModel
from proce.data import Dataset, FeatureSchema, FeatureSpec
from proce.engine import (ExplainRequest, ExplanationReport, ModelBundle, decode, init_population,
                          run_proce, select_final)
from proce.errors import ConfigError, DataError
from proce.models import Autoencoder, Classifier
from proce.moo import GaConfig


def threshold_classifier(schema, cut=0.5, sharpness=60.0):
    """Logistic surrogate of ``x0 > cut`` as a one-layer network."""
    w = np.zeros((1, len(schema)))
    w[0, 0] = sharpness
    layer = nn.DenseLayer(w, np.array([-sharpness * cut]), "sigmoid")
    return Classifier(nn.Mlp([layer]), "threshold", schema.fingerprint())


@pytest.fixture
def toy():
    schema = FeatureSchema([FeatureSpec("x")])
    X = np.linspace(0, 1, 201)[:, None]
    ds = Dataset(schema, X, (X[:, 0] > 0.5).astype(int))
    clf = threshold_classifier(schema)
    ae = Autoencoder.init(schema, 4, seed=0)
    ae.trained = True
    scm = StructuralModel(CausalGraph(["x"]), {}, schema)
    return ModelBundle(clf, ae, scm, ds)


def test_one_dimensional_toy(toy):
    grid = np.linspace(0, 1, 1001)[:, None]
    assert np.any(toy.classifier.predict(grid) == 1)  # a valid region exists
    req = ExplainRequest(np.array([0.2]), 0, 1, GaConfig(population_size=20, generations=20, seed=3), K=5)
    rep = run_proce(req, toy)
    assert rep.valid and rep.x_cf[0] > 0.5
    assert rep.generations_run == 20
    assert rep.p_cf >= 0.5


def test_same_seed_same_report(toy):
    req = ExplainRequest(np.array([0.3]), 0, 1, GaConfig(population_size=12, generations=8, seed=9), K=4)
    a = json.dumps(run_proce(req, toy).to_dict(), sort_keys=True)
    b = json.dumps(run_proce(req, toy).to_dict(), sort_keys=True)
    assert a == b


def test_zero_generations(toy):
    req = ExplainRequest(np.array([0.45]), 0, 1,
                         GaConfig(population_size=40, generations=0, init_sigma=0.2, seed=1), K=4)
    rep = run_proce(req, toy)
    assert rep.generations_run == 0
    assert rep.trace == []


def test_request_rejects_same_class():
    with pytest.raises(ConfigError):
        ExplainRequest(np.zeros(1), 1, 1)


def test_schema_mismatch_rejected(toy):
    toy.classifier.schema_fingerprint = "0" * 16
    with pytest.raises(DataError):
        run_proce(ExplainRequest(np.array([0.2]), 0, 1, GaConfig(population_size=4, generations=1)), toy)


def test_too_few_neighbours_propagates(toy):
    req = ExplainRequest(np.array([0.2]), 0, 1, GaConfig(population_size=4, generations=1), K=500)
    with pytest.raises(DataError):
        run_proce(req, toy)


def test_init_population_copies_when_noise_off(mixed_schema):
    x = np.array([0.1, 0.4, 2.0, 0.7])
    ga = GaConfig(population_size=10, init_sigma=0.0, cat_keep_prob=1.0)
    P = init_population(x, mixed_schema, ga, np.random.default_rng(0))
    assert np.array_equal(P, np.tile(x, (10, 1)))


def test_init_population_rules(mixed_schema):
    x = np.array([0.1, 0.4, 2.0, 0.7])
    P = init_population(x, mixed_schema, GaConfig(population_size=10_000, init_sigma=0.1),
                        np.random.default_rng(1))
    assert np.array_equal(P[0], x)
    assert np.all(P[:, 0] == 0.1)  # immutable
    assert abs(P[:, 1].mean() - 0.4) <= 3 * 0.1 / 100
    switched = np.mean(P[1:, 2] != 2.0)
    assert abs(switched - 0.2) < 0.02
    assert set(np.unique(P[:, 2])) == {0.0, 1.0, 2.0}


def test_decode_clamps_and_pins(mixed_schema):
    x_org = np.array([0.1, 0.4, 2.0, 0.7])
    out = decode(np.array([0.9, 1.3, 2.4, -0.2]), mixed_schema, x_org)
    assert out.tolist() == [0.1, 1.0, 2.0, 0.0]
    ok = np.array([0.1, 0.5, 1.0, 0.3])
    assert np.array_equal(decode(ok, mixed_schema, x_org), ok)


def _chain():
    schema = FeatureSchema([FeatureSpec("a"), FeatureSpec("b"), FeatureSpec("v")])
    eq = StructuralEquation("v", ["a", "b"], [0.5, 0.25], 0.1)
    return schema, StructuralModel(CausalGraph(["a", "b", "v"], [("a", "v"), ("b", "v")]), {"v": eq})


def test_decode_derived_and_abduct():
    schema, scm = _chain()
    x_org = np.array([0.2, 0.4, 0.5])
    genes = np.array([[0.6, 0.4, 0.9], [0.2, 0.4, 0.0]])
    derived = decode(genes, schema, x_org, scm, "derived")
    assert derived[:, 2] == pytest.approx([0.1 + 0.3 + 0.1, 0.1 + 0.1 + 0.1])
    abducted = decode(genes, schema, x_org, scm, "abduct")
    # unchanged parents reproduce the original value exactly
    assert abducted[1, 2] == pytest.approx(0.5)
    assert abducted[0, 2] == pytest.approx(0.5 + 0.5 * 0.4)
    free = decode(genes, schema, x_org, scm, "free")
    assert np.array_equal(free, genes)
    with pytest.raises(ConfigError):
        decode(genes, schema, x_org, scm, "bogus")


class FixedClassifier:
    def __init__(self, labels):
        self.labels = np.asarray(labels)

    def predict(self, X):
        return self.labels[np.asarray(X, dtype=int)[:, 0]]


def test_select_final_prefers_valid_then_distance():
    P = np.arange(4, dtype=float)[:, None]
    # all mutually non-dominated
    F = np.array([[0.1, 0.9, 0.4], [0.2, 0.8, 0.2], [0.3, 0.7, 0.1], [0.9, 0.1, 0.0]])
    idx, ok = select_final(P, F, FixedClassifier([1, 1, 1, 0]), 1)
    assert ok and idx == 2
    idx, ok = select_final(P, F, FixedClassifier([0, 1, 0, 0]), 1)
    assert ok and idx == 1
    idx, ok = select_final(P, F, FixedClassifier([0, 0, 0, 0]), 1)
    assert not ok and idx == 0


def test_select_final_ignores_dominated_valid():
    P = np.arange(2, dtype=float)[:, None]
    F = np.array([[0.1, 0.1, 0.1], [0.2, 0.2, 0.2]])
    idx, ok = select_final(P, F, FixedClassifier([0, 1]), 1)
    assert (idx, ok) == (0, False)


def test_select_final_two_valid_by_distance():
    P = np.arange(2, dtype=float)[:, None]
    F = np.array([[0.5, 0.1, 0.2], [0.6, 0.0, 0.1]])
    assert select_final(P, F, FixedClassifier([1, 1]), 1) == (1, True)


def test_simple_bn_search_and_report(simple_bn_small):
    s = simple_bn_small
    scm = s.scm
    bundle = ModelBundle(s.clf, s.ae, scm, s.train)
    x = s.test.X[0]
    y_org = s.clf.predict(x)
    rep = run_proce(ExplainRequest(x, y_org, 1 - y_org, GaConfig(population_size=30, generations=15, seed=2),
                                   K=10, instance_id=0), bundle)
    doc = rep.to_dict()
    assert {"x_cf", "x_cf_raw", "deltas", "objectives", "valid", "seed", "version"} <= set(doc)
    back = ExplanationReport.from_dict(json.loads(json.dumps(doc)), rep.schema, rep.normalizer)
    assert np.array_equal(back.x_cf, rep.x_cf) and back.valid == rep.valid
    assert rep.valid == (s.clf.predict(rep.x_cf) == 1 - y_org)
    # derived decoding keeps a3 on its structural equation
    eq = scm.equation("a3")
    assert rep.x_cf[2] == pytest.approx(float(np.clip(eq.predict(rep.x_cf[:2]), 0, 1)))


def test_early_stop_shortens_run(toy):
    ga = GaConfig(population_size=20, generations=200, early_stop=True, seed=4)
    rep = run_proce(ExplainRequest(np.array([0.2]), 0, 1, ga, K=5), toy)
    assert rep.valid and rep.generations_run < 200
