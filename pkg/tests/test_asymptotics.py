import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from antikz.asymptotics import (brillouin_sum, kayanuma, kayanuma_density, landau_zener,
                                mode_adiabaticity, sweep_time)
from antikz.evolve import evolve_bloch
from antikz.model import FieldRamp, ModelParams


def test_landau_zener_values():
    assert landau_zener(0.0) == 1.0
    assert landau_zener(math.log(2) / (2 * math.pi)) == pytest.approx(0.5, rel=1e-12)
    assert landau_zener(1.0) == pytest.approx(1.8674427317079888e-3, rel=1e-12)


def test_kayanuma_values():
    assert kayanuma(0.0) == 1.0
    assert kayanuma(50.0) == pytest.approx(0.5, rel=1e-12)
    assert kayanuma(1.0) == pytest.approx(0.5 * (1 + math.exp(-4 * math.pi)), rel=1e-12)
    assert kayanuma(1.0) == pytest.approx(0.5000017, abs=1e-7)


@pytest.mark.parametrize("fn", [landau_zener, kayanuma])
def test_negative_x_rejected(fn):
    with pytest.raises(ValueError):
        fn(-1e-3)


# kayanuma rounds to exactly 1/2 beyond x ~ 3, so strictness is checked below that
@given(st.floats(0, 2), st.floats(1e-2, 1))
def test_monotone_and_identity(x, dx):
    assert landau_zener(x + dx) < landau_zener(x)
    assert kayanuma(x + dx) < kayanuma(x)
    assert kayanuma(x) == pytest.approx(0.5 * (1 + landau_zener(x) ** 2), rel=1e-12)


def test_vectorised():
    x = np.array([0.0, 0.5, 1.0])
    assert landau_zener(x).shape == (3,)


def test_mode_adiabaticity():
    assert mode_adiabaticity(0.1, 100.0) == pytest.approx(1.0, rel=1e-12)
    assert mode_adiabaticity(1e-12, 1e3) < 1e-20


def test_kayanuma_density():
    assert kayanuma_density(100.0) == pytest.approx(0.5 + 1 / (40 * math.pi), rel=1e-12)
    assert kayanuma_density(1e12) == pytest.approx(0.5, abs=1e-7)
    t = np.array([10.0, 1000.0])
    d = np.array([kayanuma_density(v) - 0.5 for v in t])
    assert np.log(d[1] / d[0]) / np.log(t[1] / t[0]) == pytest.approx(-0.5, rel=1e-12)


def test_brillouin_sum_reproduces_closed_form():
    # (1/N) sum over all k of P_K(tau k^2) against 1/2 + 1/(4 pi sqrt(tau))
    n = brillouin_sum(kayanuma, 400.0, 1024)
    assert n == pytest.approx(kayanuma_density(400.0), rel=2e-2)
    ks = (2 * np.arange(1, 1025) - 1 - 1024) * np.pi / 1024
    brute = np.mean(0.5 * (1 + np.exp(-4 * np.pi * 400.0 * ks**2)))
    assert n == pytest.approx(brute, rel=1e-12)


def test_sweep_time():
    assert sweep_time(ModelParams(N=8, tau=200.0)) == 200.0
    assert sweep_time(ModelParams(N=8, tau=200.0, protocol=FieldRamp(2.0, 0.0))) == 100.0


def test_landau_zener_matches_field_ramp_profile():
    p = ModelParams(N=1024, tau=200.0, protocol=FieldRamp())
    ks, r = evolve_bloch(p)
    from antikz.model import mode_arrays

    a = mode_arrays(ks, p)
    # excitation probability from the Bloch vector and the final field direction
    gap = np.hypot(a["hz_end"], a["hx_end"])
    pk = 0.5 * (1 + (a["hz_end"] * r[:, 2] + a["hx_end"] * r[:, 0]) / gap)
    small = ks < 0.05
    lz = landau_zener(mode_adiabaticity(ks[small], sweep_time(p)))
    assert np.all(np.abs(pk[small] - lz) < 0.1 * lz)
