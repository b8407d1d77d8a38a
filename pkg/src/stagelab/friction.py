"""LuGre friction: Stribeck curve, bristle dynamics and friction force.

Every public function is a scalar map of a relative velocity ``v`` (and the
bristle deflection ``z`` where needed).  The numerical kernels are compiled
with numba so the plant right-hand side can call them inside the integrator
loop; the public wrappers unpack a :class:`FrictionParams`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from numba import njit


@dataclass(frozen=True)
class FrictionParams:
    """The six LuGre constants, SI units.

    Defaults are the prototype values used throughout (N, m/s, N/m, N·s/m).
    """

    f_S: float = 6.5
    f_C: float = 5.1
    v_s: float = 16.7e-3
    sigma0: float = 2.2e6
    sigma1: float = 237.0
    sigma2: float = 14.2

    def __post_init__(self) -> None:
        if not self.f_C > 0.0:
            raise ValueError(f"f_C must be positive, got {self.f_C}")
        if self.f_S < self.f_C:
            raise ValueError(f"f_S={self.f_S} must be >= f_C={self.f_C}")
        if not (self.v_s > 0.0 and self.sigma0 > 0.0):
            raise ValueError("v_s and sigma0 must be positive")
        if self.sigma1 < 0.0 or self.sigma2 < 0.0:
            raise ValueError("sigma1 and sigma2 must be non-negative")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.f_S, self.f_C, self.v_s, self.sigma0, self.sigma1, self.sigma2)

    def to_dict(self) -> dict:
        return asdict(self)


# --- compiled scalar kernels -------------------------------------------------


@njit(cache=True)
def _g(v, f_S, f_C, v_s, sigma0):
    r = v / v_s
    return (f_C + (f_S - f_C) * math.exp(-r * r)) / sigma0


@njit(cache=True)
def _a_z(v, f_S, f_C, v_s, sigma0):
    return abs(v) / _g(v, f_S, f_C, v_s, sigma0)


@njit(cache=True)
def _zdot(v, z, f_S, f_C, v_s, sigma0):
    return v - _a_z(v, f_S, f_C, v_s, sigma0) * z


@njit(cache=True)
def _force(v, z, f_S, f_C, v_s, sigma0, sigma1, sigma2):
    return sigma0 * z + sigma1 * _zdot(v, z, f_S, f_C, v_s, sigma0) + sigma2 * v


@njit(cache=True)
def _rho_f(v, f_S, f_C, v_s):
    r = v / v_s
    return 2.0 - 2.0 * f_C / (f_C + (f_S - f_C) * math.exp(-r * r))


def _sgn(v: float) -> float:
    return float(math.copysign(1.0, v)) if v != 0.0 else 0.0


# --- public API ----------------------------------------------------------------


def stribeck_g(v: float, p: FrictionParams) -> float:
    """Stribeck curve divided by sigma0; a length in [f_C/sigma0, f_S/sigma0]."""
    return _g(float(v), p.f_S, p.f_C, p.v_s, p.sigma0)


def a_z(v: float, p: FrictionParams) -> float:
    """Bristle relaxation rate ``|v| / g(v)`` in 1/s."""
    return _a_z(float(v), p.f_S, p.f_C, p.v_s, p.sigma0)


def h_map(v: float, p: FrictionParams) -> float:
    """Steady-state bristle deflection ``sgn(v) g(v)``, with ``h(0) = 0``."""
    return _sgn(v) * stribeck_g(v, p)


def bristle_rate(v: float, z: float, p: FrictionParams) -> float:
    return _zdot(float(v), float(z), p.f_S, p.f_C, p.v_s, p.sigma0)


def friction_force(v: float, z: float, p: FrictionParams) -> float:
    """LuGre force ``sigma0 z + sigma1 zdot + sigma2 v``."""
    return _force(float(v), float(z), *p.as_tuple())


def da_z_dv(v: float, p: FrictionParams) -> float:
    """Derivative of :func:`a_z` with respect to ``v``.

    The one-sided limits differ at ``v = 0``, so that point raises.
    """
    if v == 0.0:
        raise ValueError("da_z/dv is undefined at v = 0")
    g = stribeck_g(v, p)
    vs2 = p.v_s * p.v_s
    return _sgn(v) * (g * vs2 + 2.0 * v * v * (g - p.f_C / p.sigma0)) / (g * g * vs2)


def rho_f(v: float, p: FrictionParams) -> float:
    """Friction coupling ratio, bounded by ``(0, 2 (f_S - f_C) / f_S]``."""
    return _rho_f(float(v), p.f_S, p.f_C, p.v_s)
