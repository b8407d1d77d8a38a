import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stagelab.friction import (
    FrictionParams,
    a_z,
    bristle_rate,
    da_z_dv,
    friction_force,
    h_map,
    rho_f,
    stribeck_g,
)

P = FrictionParams()
# frozen from a 40-digit evaluation; test_frozen_values_high_precision recomputes them
G_10MM = 2.762795532169354732e-6
AZ_10MM = 3619.522285873964839
SIGMA0_H_10MM = 6.078150170772580411
FF0_10MM = 6.220150170772580411
DAZ_5MM = 357232.4180795665783

velocities = st.floats(-10.0, 10.0, allow_nan=False)


def test_frozen_values_high_precision():
    mp = pytest.importorskip("mpmath")
    with mp.workdps(40):
        f_S, f_C, v_s, s0, s2 = (mp.mpf(x) for x in ("6.5", "5.1", "0.0167", "2.2e6", "14.2"))

        def g(v):
            return (f_C + (f_S - f_C) * mp.exp(-((v / v_s) ** 2))) / s0

        v = mp.mpf("0.01")
        frozen = {
            G_10MM: g(v),
            AZ_10MM: v / g(v),
            SIGMA0_H_10MM: s0 * g(v),
            FF0_10MM: s0 * g(v) + s2 * v,
            DAZ_5MM: mp.diff(lambda x: x / g(x), mp.mpf("0.005")),
        }
        for value, exact in frozen.items():
            assert value == pytest.approx(float(exact), rel=1e-15)


def test_params_validation():
    with pytest.raises(ValueError):
        FrictionParams(f_S=4.0, f_C=5.0)
    with pytest.raises(ValueError):
        FrictionParams(v_s=0.0)
    with pytest.raises(ValueError):
        FrictionParams(sigma1=-1.0)


def test_stribeck_g_values():
    assert stribeck_g(0.0, P) == pytest.approx(6.5 / 2.2e6, rel=1e-15)
    assert stribeck_g(1e3, P) == pytest.approx(5.1 / 2.2e6, rel=1e-15)
    assert stribeck_g(0.01, P) == pytest.approx(G_10MM, rel=1e-14)


def test_a_z_values():
    assert a_z(0.0, P) == 0.0
    assert a_z(0.01, P) == pytest.approx(AZ_10MM, rel=1e-13)
    assert a_z(-0.01, P) == a_z(0.01, P)


def test_h_map():
    assert h_map(0.0, P) == 0.0
    assert h_map(0.01, P) == pytest.approx(G_10MM, rel=1e-14)
    assert h_map(-0.01, P) == -h_map(0.01, P)


def test_bristle_rate_and_force():
    assert bristle_rate(0.0, 1e-6, P) == 0.0
    assert bristle_rate(0.01, 0.0, P) == 0.01
    assert friction_force(0.0, 0.0, P) == 0.0
    assert friction_force(0.01, 0.0, P) == pytest.approx(2.512, rel=1e-14)
    assert friction_force(0.01, h_map(0.01, P), P) == pytest.approx(FF0_10MM, rel=1e-13)
    assert P.sigma0 * h_map(0.01, P) == pytest.approx(SIGMA0_H_10MM, rel=1e-14)


def test_da_z_dv():
    assert da_z_dv(0.005, P) == pytest.approx(DAZ_5MM, rel=1e-13)
    h = 1e-9
    fd = (a_z(0.005 + h, P) - a_z(0.005 - h, P)) / (2 * h)
    assert da_z_dv(0.005, P) == pytest.approx(fd, rel=1e-6)
    assert da_z_dv(-0.005, P) == -da_z_dv(0.005, P)
    with pytest.raises(ValueError):
        da_z_dv(0.0, P)
    flat = FrictionParams(f_S=5.1, f_C=5.1)
    assert da_z_dv(0.02, flat) == pytest.approx(flat.sigma0 / 5.1, rel=1e-14)
    assert da_z_dv(-0.02, flat) == pytest.approx(-flat.sigma0 / 5.1, rel=1e-14)


def test_da_z_dv_log_grid_against_finite_differences():
    for v in P.v_s * np.geomspace(0.01, 100.0, 60):
        h = 1e-6 * v
        fd = (a_z(v + h, P) - a_z(v - h, P)) / (2 * h)
        assert abs(da_z_dv(v, P) - fd) < 1e-5 * abs(fd)


def test_rho_f():
    assert rho_f(0.0, P) == pytest.approx(2 * 1.4 / 6.5, rel=1e-14)
    assert rho_f(1.0, P) == pytest.approx(0.0, abs=1e-300)
    flat = FrictionParams(f_S=5.1, f_C=5.1)
    assert rho_f(0.01, flat) == 0.0


@given(velocities)
def test_stribeck_curve_bounds(v):
    s = P.sigma0 * stribeck_g(v, P)
    assert P.f_C * (1 - 1e-15) <= s <= P.f_S * (1 + 1e-15)


@given(velocities)
def test_a_z_nonnegative_zero_only_at_rest(v):
    assert a_z(v, P) >= 0.0
    assert (a_z(v, P) == 0.0) == (v == 0.0)


@given(velocities)
def test_rho_f_bounds(v):
    r = rho_f(v, P)
    peak = 2 * (P.f_S - P.f_C) / P.f_S
    assert 0.0 <= r <= peak * (1 + 1e-15)
    if abs(v) < 5 * P.v_s:
        assert r > 0.0


@given(velocities.filter(lambda v: v != 0.0))
def test_slipping_identity(v):
    z = h_map(v, P)
    assert abs(bristle_rate(v, z, P)) <= 4 * math.ulp(abs(v))
