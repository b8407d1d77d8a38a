import numpy as np
import pytest

from stagelab.equilibrium import slipping_pid
from stagelab.plant import (
    Model,
    StageParams,
    System,
    fi_force,
    interface_velocity,
    pid_force,
    rhs,
    rhs_alpha,
    rhs_beta,
)
from stagelab.sim import default_initial_condition

from conftest import random_model


def test_pid_force(alpha, beta):
    assert pid_force(np.zeros(4), alpha.gains) == 0.0
    assert pid_force([1e-4, 0.0, 0.0, 0.0], alpha.gains) == pytest.approx(-2.0)
    assert pid_force([0.0, 0.0, 1e-3, 0.0, 0.0, 0.5], beta.gains) == pytest.approx(-0.7)
    x = slipping_pid(alpha).state
    assert pid_force(x, alpha.gains) == pytest.approx(6.220150170772580, rel=1e-13)


def test_fi_force(beta):
    s = beta.stage
    assert fi_force(np.zeros(6), s) == 0.0
    assert fi_force([1e-4, 2e-4, 0.0, 0.0, 0.0, 0.0], s) == pytest.approx(4.0)
    assert fi_force([0.0, 0.0, 0.01, 0.02, 0.0, 0.0], s) == pytest.approx(0.02)
    with pytest.raises(ValueError):
        fi_force(np.zeros(4), s)


def test_initial_condition_is_at_rest(alpha, beta):
    # the interface is stationary and the bristles are relaxed, so z stays put
    v_r = alpha.reference.v_r
    for m in (alpha, beta):
        x0 = default_initial_condition(m.system, v_r)
        assert interface_velocity(x0, m) == 0.0
        r = rhs(x0, m)
        assert r[m.state_names.index("z")] == 0.0
        assert r[0] == -v_r
    xa = default_initial_condition("alpha", v_r)
    assert rhs(xa, alpha)[1] == pytest.approx(alpha.gains.k_d * v_r / alpha.stage.m_alpha)


def test_mass_scaling_halves_acceleration(alpha):
    x = np.array([1e-4, 3e-3, 1e-6, 0.5])
    heavy = alpha.replace(m_t=2 * alpha.stage.m_t, m_b=2 * alpha.stage.m_b)
    assert rhs(x, heavy)[1] == pytest.approx(0.5 * rhs(x, alpha)[1], rel=1e-14)


def test_dimension_checks(alpha):
    with pytest.raises(ValueError):
        rhs(np.zeros(6), alpha)
    with pytest.raises(ValueError):
        Model(System.BETA, stage=StageParams(k_FI=0.0))


def test_rigid_limit_matches_alpha(rng):
    for _ in range(20):
        m = random_model(rng, "beta")
        e, ed, z, ei = rng.normal(size=4) * [1e-4, 1e-2, 1e-6, 1.0]
        xb = np.array([e, e, ed, ed, z, ei])
        rb = rhs_beta(xb, m)
        ra = rhs_alpha(np.array([e, ed, z, ei]), m)
        s = m.stage
        combined = (s.m_t * rb[2] + s.m_b * rb[3]) / s.m_alpha
        assert combined == pytest.approx(ra[1], rel=1e-10, abs=1e-12)


def test_feedforward_equivalence_alpha(rng):
    for _ in range(50):
        m = random_model(rng, "alpha")
        x = rng.normal(size=4) * [1e-4, 1e-2, 1e-6, 1.0]
        r_dd = rng.uniform(-10, 10)
        ff = m.replace(r_ddot=r_dd, feedforward=True)
        assert np.allclose(rhs(x, ff), rhs(x, m), rtol=1e-12, atol=1e-12)


def test_feedforward_beta_leaves_inertial_mismatch(beta):
    # table feedforward m_alpha*r_dd over m_t overshoots by m_b/m_t*r_dd and the
    # bearing still sees -r_dd
    x = np.array([1e-5, 2e-5, 1e-3, -1e-3, 1e-6, 0.3])
    r_dd = 2.0
    diff = rhs(x, beta.replace(r_ddot=r_dd, feedforward=True)) - rhs(x, beta)
    s = beta.stage
    assert diff[2] == pytest.approx(s.m_b / s.m_t * r_dd)
    assert diff[3] == pytest.approx(-r_dd)


def test_interface_velocity(alpha, beta):
    assert interface_velocity([0.0, -0.01, 0.0, 0.0], alpha) == 0.0
    assert interface_velocity([0, 0, 0.0, 0.002, 0, 0], beta) == pytest.approx(0.012)


def test_replace_rejects_unknown(alpha):
    with pytest.raises(KeyError):
        alpha.replace(k_q=1.0)
    assert alpha.replace(sigma0=1.0).friction.sigma0 == 1.0
