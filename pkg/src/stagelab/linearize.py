"""Analytic state Jacobians at slipping equilibria.

PD Jacobians use the orders ``[eps, eps_dot, z]`` (alpha) and
``[eps, eps_b, eps_dot, eps_b_dot, z]`` (beta).  The PID forms put ``eps_i``
first.  :data:`PID_TO_SIM` maps a PID Jacobian index to the simulation state
index used by :mod:`stagelab.plant`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .friction import a_z, rho_f
from .plant import Model, System

PD_ORDER = {
    System.ALPHA: ("eps", "eps_dot", "z"),
    System.BETA: ("eps", "eps_b", "eps_dot", "eps_b_dot", "z"),
}
PID_ORDER = {s: ("eps_i",) + order for s, order in PD_ORDER.items()}

# Jacobian index -> simulation index; J_pid = J_sim[np.ix_(p, p)].
PID_TO_SIM = {
    System.ALPHA: np.array([3, 0, 1, 2]),
    System.BETA: np.array([5, 0, 1, 2, 3, 4]),
}


@dataclass(frozen=True)
class JacobianMatrix:
    entries: np.ndarray
    state_order: tuple[str, ...]
    evaluated_at: float


@dataclass(frozen=True)
class NondimScaling:
    omega_n: float
    left_scale: np.ndarray
    right_scale: np.ndarray


def _slip_terms(model: Model, v: Optional[float]):
    v = model.reference.v_r if v is None else float(v)
    if v == 0.0:
        raise ValueError("Jacobians are defined at slipping equilibria only (v != 0)")
    fp = model.friction
    coupling = rho_f(v, fp) * v * v / (fp.v_s * fp.v_s)
    return v, coupling, a_z(v, fp)


def jacobian_alpha(model: Model, v: Optional[float] = None) -> JacobianMatrix:
    v, c, az = _slip_terms(model, v)
    fp, g = model.friction, model.gains
    m = model.stage.m_alpha
    A = np.array(
        [
            [0.0, 1.0, 0.0],
            [-g.k_p / m, -(g.k_d + fp.sigma2 - fp.sigma1 * c) / m, -(fp.sigma0 - fp.sigma1 * az) / m],
            [0.0, -c, -az],
        ]
    )
    return JacobianMatrix(A, PD_ORDER[System.ALPHA], v)


def jacobian_beta(model: Model, v: Optional[float] = None) -> JacobianMatrix:
    v, c, az = _slip_terms(model, v)
    fp, g, s = model.friction, model.gains, model.stage
    m_t, m_b, k, cf = s.m_t, s.m_b, s.k_FI, s.c_FI
    A = np.zeros((5, 5))
    A[0, 2] = 1.0
    A[1, 3] = 1.0
    A[2] = [-(k + g.k_p) / m_t, k / m_t, -(cf + g.k_d) / m_t, cf / m_t, 0.0]
    A[3] = [
        k / m_b,
        -k / m_b,
        cf / m_b,
        -(cf + fp.sigma2 - fp.sigma1 * c) / m_b,
        -(fp.sigma0 - fp.sigma1 * az) / m_b,
    ]
    A[4, 3] = -c
    A[4, 4] = -az
    return JacobianMatrix(A, PD_ORDER[System.BETA], v)


def _bordered(pd: JacobianMatrix, k_i: float, accel_row: int, mass: float,
              order: tuple[str, ...]) -> JacobianMatrix:
    n = pd.entries.shape[0] + 1
    A = np.zeros((n, n))
    A[1:, 1:] = pd.entries
    A[0, 1] = k_i
    A[accel_row + 1, 0] = -1.0 / mass
    return JacobianMatrix(A, order, pd.evaluated_at)


def jacobian_alpha_pid(model: Model, v: Optional[float] = None) -> JacobianMatrix:
    return _bordered(jacobian_alpha(model, v), model.gains.k_i, 1,
                     model.stage.m_alpha, PID_ORDER[System.ALPHA])


def jacobian_beta_pid(model: Model, v: Optional[float] = None) -> JacobianMatrix:
    return _bordered(jacobian_beta(model, v), model.gains.k_i, 2,
                     model.stage.m_t, PID_ORDER[System.BETA])


def resolve_controller(model: Model, controller: Optional[str]) -> str:
    """``None``/"auto" picks PID when ``k_i > 0`` and PD otherwise."""
    if controller in (None, "auto"):
        return "pid" if model.gains.k_i > 0.0 else "pd"
    if controller not in ("pd", "pid"):
        raise ValueError(f"controller must be 'pd', 'pid' or 'auto', got {controller!r}")
    return controller


def jacobian(model: Model, controller: Optional[str] = None,
             v: Optional[float] = None) -> JacobianMatrix:
    """Jacobian of ``model.system`` at the slipping point for velocity ``v``."""
    pid = resolve_controller(model, controller) == "pid"
    if model.system is System.ALPHA:
        return jacobian_alpha_pid(model, v) if pid else jacobian_alpha(model, v)
    return jacobian_beta_pid(model, v) if pid else jacobian_beta(model, v)


def multibody_block(J: JacobianMatrix) -> np.ndarray:
    """Upper-left block without the bristle state (always the last one)."""
    return J.entries[:-1, :-1]


def nondim_scaling(model: Model, controller: Optional[str] = None) -> NondimScaling:
    """Scaling matrices for time measured in units of ``1/omega_n``.

    The PD matrices use the PID diagonals with the leading (``eps_i``)
    entry dropped.
    """
    w = model.omega_n
    if model.system is System.ALPHA:
        left = np.array([1.0, 1 / w, w ** -2, 1 / w])
        right = np.array([1 / w, 1.0, w, 1.0])
    else:
        left = np.array([1.0, 1 / w, 1 / w, w ** -2, w ** -2, 1 / w])
        right = np.array([1 / w, 1.0, 1.0, w, w, 1.0])
    if resolve_controller(model, controller) == "pd":
        left, right = left[1:], right[1:]
    return NondimScaling(w, np.diag(left), np.diag(right))


def nondimensionalize(J: JacobianMatrix, s: NondimScaling) -> JacobianMatrix:
    n = J.entries.shape[0]
    if s.left_scale.shape != (n, n) or s.right_scale.shape != (n, n):
        raise ValueError(
            f"scaling is {s.left_scale.shape[0]}-dimensional, Jacobian is {n}x{n}"
        )
    return JacobianMatrix(s.left_scale @ J.entries @ s.right_scale, J.state_order, J.evaluated_at)
