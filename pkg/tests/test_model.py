import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from antikz.model import (SIGMA_X, SIGMA_Z, Annealing, FieldRamp, GapClosedError,
                          ModelParams, _lowest_eigvec, check_density_matrix, coefficients,
                          ground_state, initial_state, mode_arrays, momenta)


def test_momenta_antiperiodic():
    ks = momenta(8)
    assert np.allclose(ks, np.array([1, 3, 5, 7]) * np.pi / 8)
    assert ks.size == 4 and np.all((ks > 0) & (ks < np.pi))


@pytest.mark.parametrize("N", [3, 2, 7, 4.5, True])
def test_momenta_rejects_bad_N(N):
    with pytest.raises(ValueError):
        momenta(N)


@pytest.mark.parametrize("kw", [dict(N=5, tau=1), dict(N=8, tau=0), dict(N=8, tau=-1),
                                dict(N=8, tau=1, w2=-1e-3), dict(N=8, tau=1, lam=0),
                                dict(N=8, tau=math.inf)])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        ModelParams(**kw)


def test_field_ramp_validation():
    with pytest.raises(ValueError):
        FieldRamp(g_start=1.0, g_end=1.0)
    with pytest.raises(ValueError):
        FieldRamp(g_start=math.nan)


def test_annealing_final_gap_is_flat():
    p = ModelParams(N=64, tau=3.0, lam=1.7)
    a = mode_arrays(momenta(64), p)
    assert np.allclose(np.hypot(a["hz_end"], a["hx_end"]), 2 * 1.7, rtol=0, atol=1e-13)
    assert np.allclose(a["hz_start"], 2 * 1.7) and np.allclose(a["hx_start"], 0)


def test_annealing_coefficients_interpolate():
    p = ModelParams(N=16, tau=10.0, lam=1.0)
    k = 0.7
    co = coefficients(k, p)
    g = 0.3
    assert co.hz(g * 10.0) == pytest.approx(2 * (1 - g - g * math.cos(k)))
    assert co.hx(g * 10.0) == pytest.approx(2 * g * math.sin(k))
    assert co.vz == pytest.approx(-2 * (1 + math.cos(k)))
    assert co.vx == pytest.approx(2 * math.sin(k))


def test_annealing_noise_is_difference_of_endpoints():
    # V_k equals H_k(tau) - H_k(0) for the straight-line schedule
    p = ModelParams(N=16, tau=4.0)
    co = coefficients(1.1, p)
    assert np.allclose(co.noise_operator(), co.hamiltonian(4.0) - co.hamiltonian(0.0))


def test_field_ramp_coefficients():
    p = ModelParams(N=16, tau=10.0, protocol=FieldRamp(2.0, 0.0))
    co = coefficients(0.4, p)
    assert co.hz(0.0) == pytest.approx(2 * (2 - math.cos(0.4)))
    assert co.hz(10.0) == pytest.approx(-2 * math.cos(0.4))
    assert (co.vz, co.vx) == (2.0, 0.0)


def test_coefficients_reject_k_outside():
    p = ModelParams(N=8, tau=1.0)
    for k in (0.0, math.pi, -0.1):
        with pytest.raises(ValueError):
            coefficients(k, p)


def test_initial_state_annealing_is_vacuum_and_ground():
    p = ModelParams(N=8, tau=1.0)
    rho = initial_state(0.3, p)
    assert np.array_equal(rho, np.diag([0, 1]).astype(complex))
    g = ground_state(0.3, 0.0, p)
    assert np.allclose(np.outer(g, g.conj()), rho)


def test_initial_state_field_ramp_is_ground_projector():
    p = ModelParams(N=8, tau=1.0, protocol=FieldRamp())
    rho = initial_state(0.5, p)
    H = coefficients(0.5, p).hamiltonian(0.0)
    e0 = np.linalg.eigvalsh(H)[0]
    assert np.trace(rho @ H).real == pytest.approx(e0)


def test_gap_closed():
    with pytest.raises(GapClosedError):
        _lowest_eigvec(0.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_lowest_eigvec_property(hz, hx):
    if math.hypot(hz, hx) < 1e-6:
        return
    u = _lowest_eigvec(hz, hx)
    H = hz * SIGMA_Z + hx * SIGMA_X
    e = -math.hypot(hz, hx)
    assert np.linalg.norm(u) == pytest.approx(1.0)
    assert np.allclose(H @ u, e * u, atol=1e-10 * max(1.0, abs(e)))
    first = u[0] if u[0] != 0 else u[1]
    assert first.real > 0 and first.imag == 0


def test_check_density_matrix():
    check_density_matrix(np.eye(2) / 2)
    with pytest.raises(ValueError):
        check_density_matrix(np.diag([1.2, -0.2]))
    with pytest.raises(ValueError):
        check_density_matrix(np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(ValueError):
        check_density_matrix(np.eye(2))


def test_protocol_names():
    assert Annealing().name == "annealing"
    assert FieldRamp().name == "field-ramp"
