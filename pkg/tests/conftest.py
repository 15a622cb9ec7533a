import numpy as np
import pytest

from proce import nn
from proce.causal import CausalGraph, fit_structural_model
from proce.data import (Dataset, FeatureSchema, FeatureSpec, gen_simple_bn, normalize_dataset,
                        simple_bn_graph, split)
from proce.models import Autoencoder, train_autoencoder, train_classifier

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def mixed_schema():
    return FeatureSchema([
        FeatureSpec("age", "continuous", mutable=False),
        FeatureSpec("hours", "continuous"),
        FeatureSpec("job", "categorical", ["clerk", "engineer", "nurse"]),
        FeatureSpec("income", "continuous"),
    ])


@pytest.fixture
def mixed_dataset(mixed_schema):
    rng = np.random.default_rng(3)
    n = 300
    age = rng.uniform(20, 60, n)
    hours = rng.uniform(10, 50, n)
    job = rng.integers(0, 3, n).astype(float)
    income = 0.5 * age + 0.8 * hours + 5 * job + rng.normal(0, 1, n)
    X = np.column_stack([age, hours, job, income])
    y = (income > np.median(income)).astype(int)
    return normalize_dataset(Dataset(mixed_schema, X, y))


@pytest.fixture
def mixed_graph():
    return CausalGraph(["age", "hours", "job", "income"],
                       [("age", "income"), ("hours", "income"), ("job", "income")])


class _Fitted:
    pass


@pytest.fixture(scope="session")
def simple_bn_small():
    """A quick Simple-BN stack for engine and CLI-free integration tests."""
    raw = gen_simple_bn(n=600, seed=11)
    data = normalize_dataset(raw)
    train, test = split(data, 0.8, 11)
    out = _Fitted()
    out.train, out.test = train, test
    out.clf, _ = train_classifier(train, "net3", nn.TrainConfig(epochs=15, seed=11))
    out.ae, _ = train_autoencoder(train, 32, nn.TrainConfig(epochs=5, batch_size=64, seed=11, loss="mse"))
    out.graph = CausalGraph.from_dict(simple_bn_graph())
    out.scm = fit_structural_model(train, out.graph)
    return out


@pytest.fixture
def untrained_ae(mixed_schema):
    return Autoencoder.init(mixed_schema, 16, seed=0)
