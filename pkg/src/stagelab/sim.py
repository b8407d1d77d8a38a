"""Time-domain simulation and steady-state metrics.

Integration uses the Dormand-Prince 5(4) pair with Hairer-style PI step
control and its fourth-order continuous extension.  The stepping loop and
the plant right-hand side are compiled together with numba.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numba import njit

from .plant import ALPHA_STATES, BETA_STATES, Model, System, _rhs_kernel, state_scales

DIVERGENCE_CUTOFF = 1e12
STEP_BUDGET_PER_SECOND = 5e6

# stored accepted steps are capped separately from the step budget so that a
# fast-oscillating run cannot exhaust memory before it exhausts its budget
MAX_STORED_STEPS = 2_000_000

OK, DIVERGED, STEP_UNDERFLOW, MAX_STEPS, NONFINITE, STORAGE_LIMIT = range(6)
STATUS = {OK: "ok", DIVERGED: "diverged", STEP_UNDERFLOW: "step-underflow",
          MAX_STEPS: "max-steps", NONFINITE: "non-finite", STORAGE_LIMIT: "storage-limit"}

# Dormand-Prince tableau
C2, C3, C4, C5 = 0.2, 0.3, 0.8, 8.0 / 9.0
A21 = 0.2
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
A71, A73, A74, A75, A76 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                          -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)
D1 = -12715105075.0 / 11282082432.0
D3 = 87487479700.0 / 32700410799.0
D4 = -10690763975.0 / 1880347072.0
D5 = 701980252875.0 / 199316789632.0
D6 = -1453857185.0 / 822651844.0
D7 = 69997945.0 / 29380423.0


@njit(cache=True)
def _grow(a, size):
    shape = (size,) + a.shape[1:]
    b = np.empty(shape)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def _wrms(v, sk):
    s = 0.0
    for i in range(v.shape[0]):
        r = v[i] / sk[i]
        s += r * r
    return math.sqrt(s / v.shape[0])


@njit(cache=True)
def _f(variant, x, th, out):
    # variants 0/1 are the plant; 2 is a linear system with th = A.ravel()
    if variant == 2:
        n = x.shape[0]
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += th[i * n + j] * x[j]
            out[i] = acc
    else:
        _rhs_kernel(variant, x, th, out)


@njit(cache=True)
def _dopri5(variant, th, x0, t0, t_end, rtol, atol, scales, max_steps, max_stored, dense):
    n = x0.shape[0]
    cap = min(1024, max(max_stored, 2))
    ts = np.empty(cap)
    ys = np.empty((cap, n))
    cs = np.empty((cap if dense else 1, 5, n))
    k1 = np.empty(n); k2 = np.empty(n); k3 = np.empty(n); k4 = np.empty(n)
    k5 = np.empty(n); k6 = np.empty(n); k7 = np.empty(n)
    y = x0.copy()
    y1 = np.empty(n)
    tmp = np.empty(n)
    sk = np.empty(n)
    err_v = np.empty(n)

    t = t0
    ts[0] = t
    ys[0] = y
    m = 1
    _f(variant, y, th, k1)

    # initial step (Hairer's hinit)
    for i in range(n):
        sk[i] = atol[i] + rtol * abs(y[i])
    d0 = _wrms(y, sk)
    d1 = _wrms(k1, sk)
    h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h = min(h, t_end - t0)
    for i in range(n):
        tmp[i] = y[i] + h * k1[i]
    _f(variant, tmp, th, k2)
    for i in range(n):
        err_v[i] = k2[i] - k1[i]
    d2 = _wrms(err_v, sk) / h
    dm = max(d1, d2)
    h1 = max(1e-6, h * 1e-3) if dm <= 1e-15 else (0.01 / dm) ** 0.2
    h = min(100.0 * h, h1, t_end - t0)

    errold = 1e-4
    reject = False
    steps = 0
    nrej = 0
    status = 0
    beta = 0.04
    expo1 = 0.2 - beta * 0.75
    safe = 0.9
    while t < t_end:
        if steps >= max_steps:
            status = 3
            break
        if h <= 10.0 * 2.2e-16 * max(abs(t), 1.0):
            status = 2
            break
        last = False
        if t + 1.01 * h >= t_end:
            h = t_end - t
            last = True
        steps += 1
        for i in range(n):
            tmp[i] = y[i] + h * A21 * k1[i]
        _f(variant, tmp, th, k2)
        for i in range(n):
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        _f(variant, tmp, th, k3)
        for i in range(n):
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        _f(variant, tmp, th, k4)
        for i in range(n):
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        _f(variant, tmp, th, k5)
        for i in range(n):
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        _f(variant, tmp, th, k6)
        for i in range(n):
            y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i])
        _f(variant, y1, th, k7)
        finite = True
        for i in range(n):
            err_v[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            sk[i] = atol[i] + rtol * max(abs(y[i]), abs(y1[i]))
            if not (np.isfinite(y1[i]) and np.isfinite(k7[i])):
                finite = False
        if not finite:
            # shrink hard and retry; a genuinely non-finite state ends the run
            nrej += 1
            h *= 0.1
            reject = True
            continue
        err = _wrms(err_v, sk)
        fac11 = err ** expo1
        fac = fac11 / errold ** beta
        fac = max(0.1, min(5.0, fac / safe))
        hnew = h / fac
        if err <= 1.0:
            errold = max(err, 1e-4)
            if m >= max_stored:
                status = 5
                break
            if m >= ts.shape[0]:
                size = min(2 * m, max_stored)
                ts = _grow(ts, size)
                ys = _grow(ys, size)
                if dense:
                    cs = _grow(cs, size)
            if dense:
                for i in range(n):
                    ydiff = y1[i] - y[i]
                    bspl = h * k1[i] - ydiff
                    cs[m - 1, 0, i] = y[i]
                    cs[m - 1, 1, i] = ydiff
                    cs[m - 1, 2, i] = bspl
                    cs[m - 1, 3, i] = ydiff - h * k7[i] - bspl
                    cs[m - 1, 4, i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i]
                                           + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
            t = t_end if last else t + h
            for i in range(n):
                y[i] = y1[i]
                k1[i] = k7[i]
            ts[m] = t
            ys[m] = y
            m += 1
            diverged = False
            for i in range(n):
                if abs(y[i]) > 1e12 * scales[i]:
                    diverged = True
            if diverged:
                status = 1
                break
            if reject:
                hnew = min(hnew, h)
            reject = False
            h = hnew
        else:
            nrej += 1
            reject = True
            h = h / min(5.0, fac11 / safe)
    if dense:
        cs = cs[: m - 1]
    else:
        cs = cs[:0]
    return ts[:m], ys[:m], cs, status, steps, nrej


@dataclass
class Trajectory:
    """Accepted integrator steps; ``dense[k]`` spans ``times[k]..times[k+1]``."""

    times: np.ndarray
    states: np.ndarray
    model: Optional[Model] = None
    dense: Optional[np.ndarray] = None
    status: str = "ok"
    n_steps: int = 0
    n_rejected: int = 0
    state_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.state_names and self.model is not None:
            self.state_names = self.model.state_names

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def index(self, coordinate: Union[str, int]) -> int:
        if isinstance(coordinate, str):
            return self.state_names.index(coordinate)
        return int(coordinate)

    def resample(self, t) -> np.ndarray:
        """States at times ``t`` using the continuous extension."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.dense is None or len(self.dense) == 0:
            return np.column_stack([np.interp(t, self.times, s) for s in self.states.T])
        if t.min() < self.times[0] or t.max() > self.times[-1]:
            raise ValueError("resample times outside the integrated interval")
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.dense) - 1)
        h = self.times[k + 1] - self.times[k]
        th = ((t - self.times[k]) / h)[:, None]
        th1 = 1.0 - th
        c = self.dense[k]
        return c[:, 0] + th * (c[:, 1] + th1 * (c[:, 2] + th * (c[:, 3] + th1 * c[:, 4])))

    def interface_velocity(self) -> np.ndarray:
        col = self.index("eps_dot" if "eps_b_dot" not in self.state_names else "eps_b_dot")
        return self.states[:, col] + self.model.reference.v_r


def default_initial_condition(system: Union[System, str], v_r: float) -> np.ndarray:
    """Start on the reference with the stage at rest: ``eps_dot = -v_r``."""
    if System(system) is System.ALPHA:
        return np.array([0.0, -v_r, 0.0, 0.0])
    return np.array([0.0, 0.0, -v_r, -v_r, 0.0, 0.0])


def integrate(model: Model, x0=None, t_end: float = 1.0, rtol: float = 1e-8,
              atol: float = 1e-10, t0: float = 0.0, max_steps: Optional[int] = None,
              dense: bool = True, max_stored: int = MAX_STORED_STEPS) -> Trajectory:
    """Integrate the error dynamics of ``model`` from ``x0`` over ``[t0, t0 + t_end]``.

    ``atol`` is relative to :func:`stagelab.plant.state_scales`, so one value
    serves states of very different magnitudes.  The run stops early with
    status "diverged" if any scaled state exceeds 1e12, "step-underflow" if
    the step size collapses, "max-steps" past the step budget (5e6 steps
    per simulated second by default) and "storage-limit" once ``max_stored``
    accepted steps are held in memory.
    """
    if not t_end > 0.0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    if x0 is None:
        x0 = default_initial_condition(model.system, model.reference.v_r)
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    if x0.shape != (model.n_states,):
        raise ValueError(f"x0 must have {model.n_states} entries for {model.system.value}")
    scales = state_scales(model)
    if max_steps is None:
        max_steps = int(math.ceil(STEP_BUDGET_PER_SECOND * max(t_end, 1e-3)))
    variant = 0 if model.system is System.ALPHA else 1
    ts, ys, cs, status, steps, nrej = _dopri5(
        variant, model.pack(), x0, float(t0), float(t0 + t_end), float(rtol),
        atol * scales, scales, int(max_steps), int(max_stored), bool(dense),
    )
    return Trajectory(ts, ys, model, cs if dense else None, STATUS[status], steps, nrej)


def integrate_linear(A, x0, t_end: float, rtol: float = 1e-8, atol: float = 1e-10,
                     scales=None) -> Trajectory:
    """Integrate ``x' = A x`` with the same stepper; used for convergence checks."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    if A.shape != (x0.shape[0], x0.shape[0]):
        raise ValueError("A must be square and match x0")
    scales = np.ones(len(x0)) if scales is None else np.asarray(scales, dtype=np.float64)
    ts, ys, cs, status, steps, nrej = _dopri5(
        2, A.ravel(), x0, 0.0, float(t_end), float(rtol), atol * scales, scales,
        int(math.ceil(STEP_BUDGET_PER_SECOND * max(t_end, 1e-3))), MAX_STORED_STEPS, True,
    )
    return Trajectory(ts, ys, None, cs, STATUS[status], steps, nrej,
                      tuple(f"x{i}" for i in range(len(x0))))


# --- steady-state analysis -------------------------------------------------------------

FIXED_POINT_LENGTH = 1e-9
FIXED_POINT_VELOCITY = 1e-7
REGULARITY_TOL = 0.05
MIN_CYCLES = 5

_VELOCITY_COORDS = {"eps_dot", "eps_b_dot"}
_LENGTH_COORDS = {"eps", "eps_b", "z"}


@dataclass(frozen=True)
class CycleMetrics:
    classification: str  # fixed-point | limit-cycle | divergent | irregular | indeterminate
    amplitude_pp: float
    period: Optional[float] = None
    stick_fraction: Optional[float] = None
    n_cycles: int = 0


def _threshold(traj: Trajectory, idx: int, threshold: Optional[float]) -> float:
    if threshold is not None:
        return threshold
    name = traj.state_names[idx] if traj.state_names else ""
    if name in _VELOCITY_COORDS:
        return FIXED_POINT_VELOCITY
    if name in _LENGTH_COORDS:
        return FIXED_POINT_LENGTH
    raise ValueError(f"no default fixed-point threshold for coordinate {name!r}")


def _window(traj: Trajectory, settle_fraction: float, min_window: Optional[float]):
    if not 0.0 <= settle_fraction < 1.0:
        raise ValueError("settle_fraction must be in [0, 1)")
    t0 = traj.times[0] + settle_fraction * (traj.times[-1] - traj.times[0])
    if min_window is None and traj.model is not None and traj.model.gains.k_p > 0.0:
        min_window = 20.0 * 2.0 * math.pi / traj.model.omega_n
    if min_window is not None and traj.times[-1] - t0 < min_window * (1.0 - 1e-12):
        raise ValueError(
            f"analysis window {traj.times[-1] - t0:.4g} s is shorter than {min_window:.4g} s"
        )
    return traj.times >= t0


def steady_state_amplitude(traj: Trajectory, coordinate: Union[str, int] = "eps_dot",
                           settle_fraction: float = 0.5,
                           threshold: Optional[float] = None,
                           min_window: Optional[float] = None) -> CycleMetrics:
    """Peak-to-peak of one coordinate after discarding the transient.

    Only fixed-point vs. oscillating (or divergent) is decided here; use
    :func:`detect_limit_cycle` to tell periodic from irregular motion.
    """
    idx = traj.index(coordinate)
    thr = _threshold(traj, idx, threshold)
    if traj.diverged:
        return CycleMetrics("divergent", math.inf)
    sel = _window(traj, settle_fraction, min_window)
    y = traj.states[sel, idx]
    pp = float(y.max() - y.min())
    return CycleMetrics("fixed-point" if pp < thr else "oscillating", pp)


def _upward_crossings(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    s = np.signbit(y)
    k = np.flatnonzero(s[:-1] & ~s[1:])
    return t[k] - y[k] * (t[k + 1] - t[k]) / (y[k + 1] - y[k])


def detect_limit_cycle(traj: Trajectory, coordinate: Union[str, int] = "eps_dot",
                       settle_fraction: float = 0.5, threshold: Optional[float] = None,
                       min_window: Optional[float] = None,
                       tol: float = REGULARITY_TOL) -> CycleMetrics:
    """Classify the steady state of one coordinate.

    The period is the mean spacing of upward zero crossings of the
    mean-removed signal.  Motion is a limit cycle when successive cycle
    peaks and successive periods each agree within ``tol`` (relative);
    otherwise it is irregular.  Fewer than five cycles is indeterminate.
    """
    base = steady_state_amplitude(traj, coordinate, settle_fraction, threshold, min_window)
    if base.classification in ("fixed-point", "divergent"):
        return base
    idx = traj.index(coordinate)
    sel = _window(traj, settle_fraction, min_window)
    t = traj.times[sel]
    y = traj.states[sel, idx]
    y = y - y.mean()
    up = _upward_crossings(t, y)
    n_cycles = len(up) - 1
    if n_cycles < MIN_CYCLES:
        return CycleMetrics("indeterminate", base.amplitude_pp, n_cycles=max(n_cycles, 0))
    periods = np.diff(up)
    bins = np.searchsorted(t, up)
    peaks = np.array([y[a:b].max() for a, b in zip(bins[:-1], bins[1:])])
    period = float(periods.mean())

    def steady(v):
        return np.max(np.abs(np.diff(v))) <= tol * np.mean(np.abs(v))

    regular = steady(peaks) and steady(periods)
    return CycleMetrics("limit-cycle" if regular else "irregular", base.amplitude_pp,
                        period if regular else None, n_cycles=n_cycles)


def stick_slip_fraction(traj: Trajectory, v_threshold: Optional[float] = None,
                        settle_fraction: float = 0.5) -> float:
    """Fraction of steady-state time with interface speed below ``v_threshold``.

    Defaults to ``v_s / 100``.  Each step interval counts as sticking when
    the mean of its endpoint speeds is below the threshold.
    """
    if v_threshold is None:
        v_threshold = traj.model.friction.v_s / 100.0
    sel = _window(traj, settle_fraction, min_window=0.0)
    t = traj.times[sel]
    v = np.abs(traj.interface_velocity()[sel])
    dt = np.diff(t)
    mid = 0.5 * (v[1:] + v[:-1])
    total = dt.sum()
    return float(dt[mid < v_threshold].sum() / total) if total > 0 else 0.0


def analyze_steady_state(traj: Trajectory, coordinate: Union[str, int] = "eps_dot",
                         settle_fraction: float = 0.5) -> CycleMetrics:
    """Limit-cycle classification plus the stick fraction."""
    m = detect_limit_cycle(traj, coordinate, settle_fraction)
    if m.classification == "divergent":
        return m
    frac = stick_slip_fraction(traj, settle_fraction=settle_fraction)
    return CycleMetrics(m.classification, m.amplitude_pp, m.period, frac, m.n_cycles)
