"""Error-dynamics plant for the rigid stage (alpha) and the stage with a
friction isolator (beta), both under PID control.

State ordering (simulation order)::

    alpha: [eps, eps_dot, z, eps_i]
    beta:  [eps, eps_b, eps_dot, eps_b_dot, z, eps_i]

``eps_i`` is the integral term in force units; its rate is ``k_i * eps``.
The relative velocity at the friction interface is ``eps_dot + v_r`` for
alpha and ``eps_b_dot + v_r`` for beta.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numba import njit

from .friction import FrictionParams, _zdot


class System(str, Enum):
    ALPHA = "alpha"
    BETA = "beta"


ALPHA_STATES = ("eps", "eps_dot", "z", "eps_i")
BETA_STATES = ("eps", "eps_b", "eps_dot", "eps_b_dot", "z", "eps_i")


@dataclass(frozen=True)
class StageParams:
    """Table/bearing masses and the isolator's stiffness and damping."""

    m_t: float = 1.0
    m_b: float = 0.5
    k_FI: float = 4.0e4
    c_FI: float = 2.0

    def __post_init__(self) -> None:
        if not (self.m_t > 0.0 and self.m_b > 0.0):
            raise ValueError("masses must be positive")
        if self.k_FI < 0.0 or self.c_FI < 0.0:
            raise ValueError("k_FI and c_FI must be non-negative")

    @property
    def m_alpha(self) -> float:
        return self.m_t + self.m_b


@dataclass(frozen=True)
class PidGains:
    k_p: float = 2.0e4
    k_i: float = 1.0e6
    k_d: float = 2.0e2

    def __post_init__(self) -> None:
        if min(self.k_p, self.k_i, self.k_d) < 0.0:
            raise ValueError(f"PID gains must be non-negative: {self}")


@dataclass(frozen=True)
class Reference:
    """Constant-velocity (optionally constant-acceleration) reference.

    ``u_s`` is a constant supplemental force added to the control input.
    """

    v_r: float = 10.0e-3
    r_ddot: float = 0.0
    feedforward: bool = False
    u_s: float = 0.0


@dataclass(frozen=True)
class Model:
    """Everything needed to evaluate one stage configuration."""

    system: System = System.ALPHA
    friction: FrictionParams = field(default_factory=FrictionParams)
    stage: StageParams = field(default_factory=StageParams)
    gains: PidGains = field(default_factory=PidGains)
    reference: Reference = field(default_factory=Reference)

    def __post_init__(self) -> None:
        object.__setattr__(self, "system", System(self.system))
        if self.system is System.BETA and not self.stage.k_FI > 0.0:
            raise ValueError("system beta needs k_FI > 0")

    @property
    def n_states(self) -> int:
        return 4 if self.system is System.ALPHA else 6

    @property
    def state_names(self) -> tuple[str, ...]:
        return ALPHA_STATES if self.system is System.ALPHA else BETA_STATES

    @property
    def omega_n(self) -> float:
        """Principal natural frequency: sqrt(k_p/m_alpha) or sqrt(k_p/m_t)."""
        m = self.stage.m_alpha if self.system is System.ALPHA else self.stage.m_t
        return math.sqrt(self.gains.k_p / m)

    def replace(self, **changes) -> "Model":
        """Copy with top-level or nested fields replaced.

        Nested fields may be given by bare name (``k_p=...``, ``sigma0=...``).
        """
        top = {k: changes.pop(k) for k in list(changes) if k in _TOP_FIELDS}
        for part in ("friction", "stage", "gains", "reference"):
            obj = top.get(part, getattr(self, part))
            names = {f.name for f in dataclasses.fields(obj)}
            sub = {k: changes.pop(k) for k in list(changes) if k in names}
            if sub:
                top[part] = dataclasses.replace(obj, **sub)
        if changes:
            raise KeyError(f"unknown model fields: {sorted(changes)}")
        return dataclasses.replace(self, **top)

    def pack(self) -> np.ndarray:
        """Flat parameter vector consumed by the compiled kernels."""
        f, s, g, r = self.friction, self.stage, self.gains, self.reference
        return np.array(
            [
                f.f_S, f.f_C, f.v_s, f.sigma0, f.sigma1, f.sigma2,
                s.m_t, s.m_b, s.k_FI, s.c_FI,
                g.k_p, g.k_i, g.k_d,
                r.v_r, r.r_ddot, 1.0 if r.feedforward else 0.0, r.u_s,
            ],
            dtype=np.float64,
        )


_TOP_FIELDS = {"system", "friction", "stage", "gains", "reference"}


@njit(cache=True)
def _rhs_kernel(variant, x, th, out):
    f_S, f_C, v_s, s0, s1, s2 = th[0], th[1], th[2], th[3], th[4], th[5]
    m_t, m_b, k_fi, c_fi = th[6], th[7], th[8], th[9]
    k_p, k_i, k_d = th[10], th[11], th[12]
    v_r, r_dd, ff, u_s = th[13], th[14], th[15], th[16]
    m_a = m_t + m_b
    u = u_s
    if ff > 0.5:
        u += m_a * r_dd
    if variant == 0:
        e, ed, z, ei = x[0], x[1], x[2], x[3]
        v = ed + v_r
        zd = _zdot(v, z, f_S, f_C, v_s, s0)
        f_f = s0 * z + s1 * zd + s2 * v
        u += -ei - k_p * e - k_d * ed
        out[0] = ed
        out[1] = (-f_f + u) / m_a - r_dd
        out[2] = zd
        out[3] = k_i * e
    else:
        e, eb, ed, ebd, z, ei = x[0], x[1], x[2], x[3], x[4], x[5]
        v = ebd + v_r
        zd = _zdot(v, z, f_S, f_C, v_s, s0)
        f_f = s0 * z + s1 * zd + s2 * v
        f_fi = k_fi * (eb - e) + c_fi * (ebd - ed)
        u += -ei - k_p * e - k_d * ed
        out[0] = ed
        out[1] = ebd
        out[2] = (f_fi + u) / m_t - r_dd
        out[3] = (-f_fi - f_f) / m_b - r_dd
        out[4] = zd
        out[5] = k_i * e


def _variant(state: np.ndarray) -> int:
    n = len(state)
    if n == 4:
        return 0
    if n == 6:
        return 1
    raise ValueError(f"state must have 4 (alpha) or 6 (beta) entries, got {n}")


def pid_force(state, gains: PidGains) -> float:
    """Feedback force ``-eps_i - k_p eps - k_d eps_dot``."""
    x = np.asarray(state, dtype=float)
    ed = x[1] if _variant(x) == 0 else x[2]
    return float(-x[-1] - gains.k_p * x[0] - gains.k_d * ed)


def fi_force(state, stage: StageParams) -> float:
    """Isolator coupling force on the table (beta states only)."""
    x = np.asarray(state, dtype=float)
    if _variant(x) != 1:
        raise ValueError("fi_force needs a beta state vector")
    return float(stage.k_FI * (x[1] - x[0]) + stage.c_FI * (x[3] - x[2]))


def rhs(state, model: Model) -> np.ndarray:
    """Time derivative of the error state for ``model.system``."""
    x = np.ascontiguousarray(state, dtype=np.float64)
    if len(x) != model.n_states:
        raise ValueError(
            f"{model.system.value} expects {model.n_states} states, got {len(x)}"
        )
    out = np.empty_like(x)
    _rhs_kernel(_variant(x), x, model.pack(), out)
    return out


def rhs_alpha(state, model: Model) -> np.ndarray:
    return rhs(state, model.replace(system=System.ALPHA))


def rhs_beta(state, model: Model) -> np.ndarray:
    return rhs(state, model.replace(system=System.BETA))


def interface_velocity(states: np.ndarray, model: Model) -> np.ndarray:
    """Relative sliding velocity for one state or an (n, k) array of states."""
    x = np.asarray(states, dtype=float)
    col = 1 if model.system is System.ALPHA else 3
    return x[..., col] + model.reference.v_r


def state_scales(model: Model) -> np.ndarray:
    """Characteristic magnitude of each state, used for tolerances and norms.

    Velocities scale with max(|v_r|, v_s), positions with that over omega_n,
    the bristle with f_S/sigma0 and the integral force with f_S.
    """
    fp = model.friction
    vel = max(abs(model.reference.v_r), fp.v_s)
    wn = model.omega_n if model.gains.k_p > 0.0 else 1.0
    pos = vel / wn
    z = fp.f_S / fp.sigma0
    if model.system is System.ALPHA:
        return np.array([pos, vel, z, fp.f_S])
    return np.array([pos, pos, vel, vel, z, fp.f_S])
