import numpy as np
import pytest

from demon_sampling.benchmarks import load_benchmark
from demon_sampling.core import MixtureModel, sample_prior
from demon_sampling.verification import _evolve_ode_segment


@pytest.fixture(scope="session")
def gmm2d():
    return load_benchmark("gmm2d")


@pytest.fixture(scope="session")
def gmm8d():
    return load_benchmark("gmm8d")


@pytest.fixture(scope="session")
def two_comp():
    return MixtureModel(
        dim=2,
        weights=np.array([0.6, 0.4]),
        means=np.array([[-1.0, 0.0], [1.2, 0.5]]),
        scales=np.array([0.4, 0.3]),
    )


def point_mass(dim=2, mean=None):
    mean = np.zeros(dim) if mean is None else np.asarray(mean, dtype=float)
    return MixtureModel(
        dim=dim, weights=np.array([1.0]), means=mean[None, :], scales=np.array([0.0])
    )


def single_gaussian(mean, scale):
    mean = np.asarray(mean, dtype=float)
    return MixtureModel(
        dim=mean.size, weights=np.array([1.0]), means=mean[None, :], scales=np.array([scale])
    )


def flowed_state(model, t, seed, prep_steps=60, t_max=14.648):
    """A typical state at noise level t: a seeded prior draw flowed down."""
    prior = sample_prior(model.dim, t_max, np.random.default_rng(seed))
    return _evolve_ode_segment(model, prior[None], t_max, t, prep_steps, 7.0)[0]
