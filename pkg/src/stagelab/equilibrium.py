"""Closed-form sticking and slipping equilibria of the error dynamics."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .friction import h_map
from .plant import Model, System


class PreconditionError(ValueError):
    """Inputs fall outside the region where an equilibrium family exists."""


class Family(str, Enum):
    STICKING_PD = "sticking-PD"
    STICKING_PID = "sticking-PID"
    SLIPPING_PD = "slipping-PD"
    SLIPPING_PID = "slipping-PID"


@dataclass(frozen=True)
class EquilibriumPoint:
    state: np.ndarray
    family: Family
    free_parameter: Optional[float] = None
    # False when a sticking point needs |sigma0 z| > f_S, i.e. more than
    # breakaway friction; the point is still returned.
    admissible: bool = True


def slip_force(model: Model) -> float:
    """Friction force at the slipping equilibrium, ``sigma0 h(v_r) + sigma2 v_r``."""
    fp = model.friction
    v_r = model.reference.v_r
    return fp.sigma0 * h_map(v_r, fp) + fp.sigma2 * v_r


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise PreconditionError(msg)


def _sticking(model: Model, family: Family, eps: float, eps_b_num: float,
              eps_i: float, z: float, free: float) -> EquilibriumPoint:
    fp = model.friction
    z = z + 0.0  # no signed zeros in reports
    admissible = abs(fp.sigma0 * z) <= fp.f_S
    if model.system is System.ALPHA:
        x = np.array([eps, 0.0, z, eps_i])
    else:
        x = np.array([eps, eps_b_num / model.stage.k_FI, 0.0, 0.0, z, eps_i])
    return EquilibriumPoint(x, family, free, admissible)


def sticking_pd(model: Model, eps0: float = 0.0) -> EquilibriumPoint:
    """Sticking point under PD control, parameterised by the position error."""
    _require(model.gains.k_i == 0.0, "sticking-PD needs k_i = 0")
    _require(model.reference.v_r == 0.0, "sticking equilibria need v_r = 0")
    k_p = model.gains.k_p
    k_t = k_p + model.stage.k_FI
    num = k_t * eps0 - model.stage.m_b * model.reference.r_ddot
    z = -k_p * eps0 / model.friction.sigma0
    return _sticking(model, Family.STICKING_PD, eps0, num, 0.0, z, eps0)


def sticking_pid(model: Model, eps_i0: float = 0.0) -> EquilibriumPoint:
    """Sticking point under PID control, parameterised by the integral force."""
    _require(model.gains.k_i > 0.0, "sticking-PID needs k_i > 0")
    _require(model.reference.v_r == 0.0, "sticking equilibria need v_r = 0")
    num = eps_i0 - model.stage.m_b * model.reference.r_ddot
    z = -eps_i0 / model.friction.sigma0
    return _sticking(model, Family.STICKING_PID, 0.0, num, eps_i0, z, eps_i0)


def slipping_pd(model: Model) -> EquilibriumPoint:
    _require(model.gains.k_i == 0.0, "slipping-PD needs k_i = 0")
    _require(model.reference.v_r != 0.0, "slipping equilibria need v_r != 0")
    _require(model.gains.k_p > 0.0, "slipping-PD needs k_p > 0")
    f0 = slip_force(model)
    k_p = model.gains.k_p
    z = h_map(model.reference.v_r, model.friction)
    if model.system is System.ALPHA:
        x = np.array([-f0 / k_p, 0.0, z, 0.0])
    else:
        k_fi = model.stage.k_FI
        k_t = k_p + k_fi
        eps_b = -(k_t * f0 + k_p * model.stage.m_b * model.reference.r_ddot) / (k_p * k_fi)
        x = np.array([-f0 / k_p, eps_b, 0.0, 0.0, z, 0.0])
    return EquilibriumPoint(x, Family.SLIPPING_PD)


def slipping_pid(model: Model) -> EquilibriumPoint:
    _require(model.gains.k_i > 0.0, "slipping-PID needs k_i > 0")
    _require(model.reference.v_r != 0.0, "slipping equilibria need v_r != 0")
    f0 = slip_force(model)
    z = h_map(model.reference.v_r, model.friction)
    if model.system is System.ALPHA:
        x = np.array([0.0, 0.0, z, -f0])
    else:
        eps_b = -(f0 + model.stage.m_b * model.reference.r_ddot) / model.stage.k_FI
        x = np.array([0.0, eps_b, 0.0, 0.0, z, -f0])
    return EquilibriumPoint(x, Family.SLIPPING_PID)


def slipping(model: Model) -> EquilibriumPoint:
    """Slipping equilibrium for whichever controller the gains describe."""
    return slipping_pid(model) if model.gains.k_i > 0.0 else slipping_pd(model)


def scaled_residual(state, model: Model) -> float:
    """``max |rhs(state)|`` over the largest state-rate scale of ``model``.

    Rate scales are the state scales times omega_n (times 1 when k_p = 0).
    """
    from .plant import rhs, state_scales

    wn = model.omega_n if model.gains.k_p > 0.0 else 1.0
    return float(np.max(np.abs(rhs(state, model))) / np.max(state_scales(model) * wn))
