import math

import numpy as np
import pytest

from robustwf.annular import AnnularSet, DmdsdrConfig, design_annular
from robustwf.scenario import (ArrayGeometry, PathSpec, ScenarioConfig, SignalModel,
                               reference_annular_scenario, reference_spherical_scenario)
from robustwf.spherical import DmsdrConfig, SphericalSet, design_spherical

REFERENCE_CENTER = np.array([0.8, 0.6 * np.exp(1j * math.pi / 3), 0.2 * np.exp(-1j * math.pi / 6)])


def random_hermitian(rng, n, psd=False):
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return X @ X.conj().T if psd else 0.5 * (X + X.conj().T)


def small_scenario(num_tx=2, num_rx=2, L=4, scatterers=((-20.0, 1),), sigma2=1.0, beta=0.5, **kw):
    return ScenarioConfig(
        geometry=ArrayGeometry(num_tx, num_rx),
        code_length=L,
        target_azimuth=math.radians(25.0),
        scatterers=tuple(PathSpec(math.radians(a), d) for a, d in scatterers),
        noise_power=sigma2,
        noise_correlation=beta,
        **kw,
    )


@pytest.fixture(scope="session")
def spherical_model():
    return SignalModel(reference_spherical_scenario())


@pytest.fixture(scope="session")
def annular_model():
    return SignalModel(reference_annular_scenario())


@pytest.fixture(scope="session")
def reference_sphere():
    return SphericalSet(REFERENCE_CENTER, 0.5)


@pytest.fixture(scope="session")
def spherical_design(spherical_model, reference_sphere):
    return design_spherical(spherical_model, reference_sphere, DmsdrConfig(randomization_trials=100))


@pytest.fixture(scope="session")
def annular_design(annular_model):
    return design_annular(annular_model, AnnularSet.theta(2, 1, 0.5, 2), DmdsdrConfig())


@pytest.fixture(scope="session")
def small_model():
    return SignalModel(small_scenario())
