import numpy as np
import pytest

from specweight.factor_graph import FactorTable, basis_from_factors
from specweight.predictor import LogisticFallback, RecurrentClassifier
from specweight.synth import SynthSpec, generate


def small_gru_factory(feature_width, rng):
    return RecurrentClassifier(feature_width, hidden=8, fc=4, rng=rng)


def logistic_factory(feature_width, rng):
    return LogisticFallback(feature_width, rng)


@pytest.fixture(scope="session")
def tiny_cohort():
    """60 subjects, 6 features: group-dependent label noise, fast to train on."""
    spec = SynthSpec(n_subjects=60, feature_width=6, seed=11)
    data, factors, groups = generate(spec)
    return data, factors, groups


@pytest.fixture(scope="session")
def random_factor_table():
    rng = np.random.default_rng(42)
    return FactorTable(rng.normal(size=(40, 3)), ("a", "b", "c"))


@pytest.fixture(scope="session")
def small_basis(random_factor_table):
    basis, info = basis_from_factors(random_factor_table, k=6, m=8)
    return basis, info
