import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robustwf.scenario import (ArrayGeometry, ConfigError, PathSpec, ScenarioConfig, SignalModel,
                               noise_covariance, reference_annular_scenario, reference_spherical_scenario,
                               path_matrix, shift_matrix, steering_vector)

from conftest import small_scenario


@given(st.floats(-math.pi / 2, math.pi / 2), st.integers(1, 12), st.floats(0.1, 2.0))
@settings(max_examples=50, deadline=None)
def test_steering_entries_are_unit_modulus(theta, n, d):
    v = steering_vector(theta, n, d)
    assert v.shape == (n,)
    np.testing.assert_allclose(np.abs(v), 1.0, atol=1e-15)
    assert v[0] == 1.0


def test_steering_phase_progression():
    v = steering_vector(math.radians(30.0), 4, 0.5)
    np.testing.assert_allclose(v, np.exp(1j * np.pi * 0.5 * np.arange(4)))


def test_full_wavelength_spacing_has_grating_lobe():
    a = steering_vector(math.radians(30.0), 4, 1.0)
    b = steering_vector(math.radians(-30.0), 4, 1.0)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_shift_matrix_structure():
    J = shift_matrix(2, 3, 6)
    assert J.shape == (3, 6)
    expected = np.zeros((3, 6))
    for i in range(3):
        expected[i, i + 2] = 1
    np.testing.assert_array_equal(J, expected)
    np.testing.assert_array_equal(shift_matrix(0, 3, 3), np.eye(3))


@pytest.mark.parametrize("args", [(-1, 3, 6), (4, 3, 6), (0, 5, 4), (0, 0, 2)])
def test_shift_matrix_rejects_bad_sizes(args):
    with pytest.raises(ValueError):
        shift_matrix(*args)


def test_path_matrix_matches_matrix_form():
    # vec(b a^T S J) computed by hand, against the Kronecker form
    cfg = small_scenario(num_tx=3, num_rx=2, L=5, scatterers=((-40.0, 2), (10.0, 1)))
    rng = np.random.default_rng(0)
    S = np.exp(2j * np.pi * rng.random((3, 5)))
    s = S.T.ravel()  # column stacking
    P = cfg.window
    th0 = cfg.target_azimuth
    a = lambda th: steering_vector(th, 3, 1.0)
    b = lambda th: steering_vector(th, 2, 0.5)
    Y0 = np.outer(b(th0), a(th0)) @ S @ shift_matrix(0, 5, P)
    np.testing.assert_allclose(path_matrix(cfg, 0) @ s, Y0.T.ravel(), atol=1e-12)
    for k, path in enumerate(cfg.scatterers, start=1):
        thk = path.azimuth
        block = np.outer(b(th0), a(thk)) + np.outer(b(thk), a(th0))
        Yk = block @ S @ shift_matrix(path.delay, 5, P)
        np.testing.assert_allclose(path_matrix(cfg, k) @ s, Yk.T.ravel(), atol=1e-12)


def test_path_matrix_index_errors():
    cfg = small_scenario()
    with pytest.raises(IndexError):
        path_matrix(cfg, 2)
    with pytest.raises(IndexError):
        path_matrix(cfg, -1)


def test_window_and_lengths():
    cfg = reference_spherical_scenario()
    assert cfg.num_paths == 3
    assert cfg.window == 16 + 7
    assert cfg.waveform_length == 64
    assert cfg.filter_length == 23 * 4
    model = SignalModel(cfg)
    assert model.A.shape == (3, 92, 64)


def test_noise_identity_case():
    cfg = small_scenario(sigma2=1.0, beta=0.0)
    np.testing.assert_array_equal(noise_covariance(cfg).data, np.eye(cfg.filter_length))


def test_noise_reference_entries():
    cfg = reference_spherical_scenario()
    R = noise_covariance(cfg).data
    NR = 4
    # time-block ordering: lag-1 neighbours are N_R apart
    assert R[0, 0] == pytest.approx(10.0)
    assert R[0, NR] == pytest.approx(8.0)
    assert R[0, 2 * NR] == pytest.approx(6.4)
    assert R[0, 1] == 0.0
    Rc = noise_covariance(reference_spherical_scenario(noise_structure="channel-block")).data
    assert Rc[0, 1] == pytest.approx(8.0) and Rc[0, 2] == pytest.approx(6.4)


@pytest.mark.parametrize("structure", ["time-block", "channel-block"])
def test_noise_is_hermitian_positive_definite(structure):
    nc = noise_covariance(reference_spherical_scenario(noise_structure=structure))
    np.testing.assert_allclose(nc.data, nc.data.conj().T)
    lam = np.linalg.eigvalsh(nc.data)
    assert lam[0] > 0
    assert nc.lambda_min == pytest.approx(lam[0], rel=1e-10)


def test_noise_orderings_are_permutation_similar():
    a = noise_covariance(reference_spherical_scenario()).eigenvalues
    b = noise_covariance(reference_spherical_scenario(noise_structure="channel-block")).eigenvalues
    np.testing.assert_allclose(np.sort(a), np.sort(b), rtol=1e-10)


def test_model_inverse_and_returns(small_model):
    np.testing.assert_allclose(small_model.Rn_inv @ small_model.Rn, np.eye(small_model.filter_length),
                               atol=1e-10)
    s = np.ones(small_model.waveform_length, complex)
    Y = small_model.returns(s)
    for k in range(small_model.num_paths):
        np.testing.assert_allclose(Y[:, k], small_model.A[k] @ s)
    with pytest.raises(ValueError):
        small_model.returns(np.ones(3))


def test_config_roundtrip_and_digest():
    cfg = reference_annular_scenario()
    again = ScenarioConfig.from_dict(cfg.to_dict())
    assert again.digest() == cfg.digest()
    assert again.window == cfg.window
    assert reference_spherical_scenario().digest() != cfg.digest()


@pytest.mark.parametrize("mutate", [
    lambda d: d["geometry"].update(num_tx=0),
    lambda d: d.update(code_length=2.5),
    lambda d: d.update(target_azimuth_deg=120.0),
    lambda d: d["noise"].update(correlation=1.0),
    lambda d: d["noise"].update(power=-1.0),
    lambda d: d["noise"].update(structure="diagonal"),
    lambda d: d["scatterers"][0].update(delay=-1),
    lambda d: d.pop("geometry"),
])
def test_invalid_documents_raise_config_error(mutate):
    doc = reference_spherical_scenario().to_dict()
    mutate(doc)
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(doc)


def test_invalid_objects_raise_config_error():
    with pytest.raises(ConfigError):
        ArrayGeometry(2, 2, tx_spacing=0.0)
    with pytest.raises(ConfigError):
        PathSpec(2.0, 1)
