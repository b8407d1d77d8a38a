"""Stability charts over two parameters, boundary extraction and root loci."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from skimage.measure import find_contours

from .linearize import jacobian, resolve_controller
from .plant import Model
from .stability import HURWITZ_RTOL, eigvals_batch, hurwitz_margin

# sweepable parameters -> how a value is applied to the base model
_GAINS = {"k_p", "k_i", "k_d"}
_MU = {"mu_k": "k_FI", "mu_c": "c_FI", "mu_t": "m_t", "mu_b": "m_b"}
PARAMS = tuple(sorted(_GAINS | {"v_r"} | set(_MU)))

STABLE, UNSTABLE, INDETERMINATE = 1, 0, -1


def apply_param(base: Model, name: str, value: float) -> Model:
    """Return ``base`` with one parameter set.

    ``mu_*`` factors multiply the base model's isolator stiffness/damping or
    masses; other names are passed to :meth:`Model.replace`.
    """
    if name in _MU:
        target = _MU[name]
        return base.replace(**{target: value * getattr(base.stage, target)})
    return base.replace(**{name: value})


@dataclass(frozen=True)
class Axis:
    param: str
    lo: float
    hi: float
    n: int
    scale: str = "log"

    def __post_init__(self) -> None:
        if self.param not in PARAMS:
            raise ValueError(f"unknown sweep parameter {self.param!r}; choose from {PARAMS}")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"scale must be 'linear' or 'log', got {self.scale!r}")
        if not self.lo < self.hi:
            raise ValueError(f"{self.param}: need lo < hi, got [{self.lo}, {self.hi}]")
        if self.n < 2:
            raise ValueError(f"{self.param}: need at least 2 points")
        if self.scale == "log" and self.lo <= 0.0:
            raise ValueError(f"{self.param}: log scale needs lo > 0")

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.lo, self.hi, self.n)
        return np.linspace(self.lo, self.hi, self.n)

    def at(self, index) -> np.ndarray:
        """Parameter value at a fractional grid index."""
        u = np.asarray(index, dtype=float) / (self.n - 1)
        if self.scale == "log":
            return self.lo * (self.hi / self.lo) ** u
        return self.lo + (self.hi - self.lo) * u


@dataclass(frozen=True)
class GridSpec:
    x: Axis
    y: Axis

    @classmethod
    def make(cls, x_param, x_range, y_param, y_range, nx=200, ny=200,
             x_scale="log", y_scale="log") -> "GridSpec":
        return cls(Axis(x_param, *x_range, nx, x_scale), Axis(y_param, *y_range, ny, y_scale))


@dataclass
class SweepField:
    """Values are indexed ``[ix, iy]``."""

    grid: GridSpec
    values: np.ndarray
    verdicts: np.ndarray
    margins: np.ndarray
    system: str = "alpha"
    controller: str = "pid"
    boundary: list = field(default_factory=list)

    @property
    def stable_count(self) -> int:
        return int((self.verdicts == STABLE).sum())

    @property
    def indeterminate_count(self) -> int:
        return int((self.verdicts == INDETERMINATE).sum())


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("STAGELAB_THREADS", "1")))
    except ValueError:
        return 1


def _evaluate(base: Model, names: Sequence[str], points: np.ndarray, controller: str):
    """max real part and Hurwitz tolerance for each parameter tuple."""
    mats = []
    tols = np.empty(len(points))
    for k, p in enumerate(points):
        m = base
        for name, val in zip(names, p):
            m = apply_param(m, name, float(val))
        mats.append(jacobian(m, controller).entries)
        tols[k] = hurwitz_margin(m.omega_n)
    lam, ok = eigvals_batch(np.array(mats))
    mr = np.where(ok, lam.real.max(axis=1), np.nan)
    return mr, tols


def _evaluate_chunk(args):
    return _evaluate(*args)


def evaluate_points(base: Model, names: Sequence[str], points: np.ndarray,
                    controller: Optional[str] = None, workers: Optional[int] = None):
    controller = resolve_controller(base, controller)
    points = np.asarray(points, dtype=float).reshape(len(points), len(names))
    workers = _default_workers() if workers is None else workers
    if workers <= 1 or len(points) < 2 * workers:
        return _evaluate(base, names, points, controller)
    chunks = np.array_split(np.arange(len(points)), workers)
    with ProcessPoolExecutor(workers) as ex:
        parts = list(ex.map(_evaluate_chunk,
                            [(base, names, points[c], controller) for c in chunks]))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def verdicts_from(values: np.ndarray, margins: np.ndarray) -> np.ndarray:
    v = np.where(values < -margins, STABLE, UNSTABLE).astype(np.int8)
    v[~np.isfinite(values)] = INDETERMINATE
    return v


def stability_chart(spec: GridSpec, base: Model, controller: Optional[str] = None,
                    workers: Optional[int] = None, boundary: bool = True) -> SweepField:
    """Max real eigenvalue part and Hurwitz verdict at every grid point."""
    controller = resolve_controller(base, controller)
    xs, ys = spec.x.values(), spec.y.values()
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    mr, tol = evaluate_points(base, (spec.x.param, spec.y.param), pts, controller, workers)
    shape = (spec.x.n, spec.y.n)
    values, margins = mr.reshape(shape), tol.reshape(shape)
    f = SweepField(spec, values, verdicts_from(values, margins), margins,
                   base.system.value, controller)
    if boundary:
        f.boundary = extract_boundary(f)
    return f


def extract_boundary(f: SweepField) -> list[np.ndarray]:
    """Zero contour of the stability margin as polylines in parameter coordinates.

    Each polyline is a (k, 2) array of (x, y).  Indeterminate cells are
    masked out; contours stop at the grid edge.
    """
    z = f.values + f.margins
    finite = np.isfinite(z)
    if not finite.any():
        return []
    zz = np.where(finite, z, 0.0)
    if zz[finite].min() >= 0.0 or zz[finite].max() < 0.0:
        return []
    lines = find_contours(zz, 0.0, mask=finite if not finite.all() else None)
    return [np.column_stack([f.grid.x.at(c[:, 0]), f.grid.y.at(c[:, 1])]) for c in lines]


def critical_value(base: Model, param: str, lo: float, hi: float, tol: float,
                   controller: Optional[str] = None, log: bool = False) -> Optional[float]:
    """Bisect ``param`` in ``[lo, hi]`` for the point where the Hurwitz verdict flips.

    Returns None if both ends share a verdict.
    """
    controller = resolve_controller(base, controller)

    def stable(v):
        mr, t = _evaluate(base, (param,), np.array([[v]]), controller)
        return bool(mr[0] < -t[0])

    s_lo, s_hi = stable(lo), stable(hi)
    if s_lo == s_hi:
        return None
    a, b = lo, hi
    while b - a > tol:
        mid = math.sqrt(a * b) if log else 0.5 * (a + b)
        if stable(mid) == s_lo:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


@dataclass
class ParameterStack:
    """Charts over the same grid for a list of values of a third parameter."""

    param: str
    values: np.ndarray
    fields: list
    areas: np.ndarray
    value_min_area: float

    @property
    def velocities(self) -> np.ndarray:
        return self.values

    @property
    def v_min_area(self) -> float:
        return self.value_min_area


VelocityStack = ParameterStack


def parameter_stack(spec: GridSpec, param: str, values: Sequence[float], base: Model,
                    controller: Optional[str] = None,
                    workers: Optional[int] = None) -> ParameterStack:
    """One chart per value of ``param``; areas are stable-cell counts."""
    if param not in PARAMS:
        raise ValueError(f"unknown stack parameter {param!r}")
    vals = np.asarray(values, dtype=float)
    fields = [stability_chart(spec, apply_param(base, param, float(v)), controller, workers)
              for v in vals]
    areas = np.array([f.stable_count for f in fields])
    return ParameterStack(param, vals, fields, areas, float(vals[int(np.argmin(areas))]))


def velocity_stack(spec: GridSpec, velocities: Sequence[float], base: Model,
                   controller: Optional[str] = None,
                   workers: Optional[int] = None) -> ParameterStack:
    """One chart per reference velocity; reports the smallest stable region."""
    v = np.asarray(velocities, dtype=float)
    if np.any(v == 0.0):
        raise ValueError("velocity stack needs nonzero v_r")
    return parameter_stack(spec, "v_r", v, base, controller, workers)


# --- simulation-based fields -----------------------------------------------------------


def _simulate_point(args):
    from .sim import integrate, steady_state_amplitude

    model, t_end, rtol, atol, settle, coordinate = args
    tr = integrate(model, t_end=t_end, rtol=rtol, atol=atol, dense=False)
    if tr.status not in ("ok", "diverged"):
        return math.nan, INDETERMINATE
    m = steady_state_amplitude(tr, coordinate, settle)
    return m.amplitude_pp, STABLE if m.classification == "fixed-point" else UNSTABLE


def amplitude_chart(spec: GridSpec, base: Model, t_end: float, coordinate: str = "eps",
                    rtol: float = 1e-8, atol: float = 1e-10, settle_fraction: float = 0.5,
                    workers: Optional[int] = None) -> SweepField:
    """Steady-state peak-to-peak amplitude from simulation at every grid point.

    Each point starts from rest on the reference.  The verdict is STABLE for
    a fixed point, UNSTABLE for anything else and INDETERMINATE when the
    integrator gives up.  ``margins`` holds minus the fixed-point threshold,
    so the extracted boundary encloses the fixed-point cells.
    """
    from .sim import FIXED_POINT_LENGTH, FIXED_POINT_VELOCITY

    thr = FIXED_POINT_VELOCITY if coordinate.endswith("_dot") else FIXED_POINT_LENGTH
    xs, ys = spec.x.values(), spec.y.values()
    jobs = []
    for x in xs:
        for y in ys:
            m = apply_param(apply_param(base, spec.x.param, float(x)), spec.y.param, float(y))
            jobs.append((m, t_end, rtol, atol, settle_fraction, coordinate))
    workers = _default_workers() if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            res = list(ex.map(_simulate_point, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        res = [_simulate_point(j) for j in jobs]
    shape = (spec.x.n, spec.y.n)
    values = np.array([r[0] for r in res]).reshape(shape)
    verdicts = np.array([r[1] for r in res], dtype=np.int8).reshape(shape)
    margins = np.full(shape, -thr)
    f = SweepField(spec, values, verdicts, margins, base.system.value, "pid")
    # divergent runs carry an infinite amplitude; cap it for contouring only
    capped = SweepField(spec, np.where(np.isinf(values), 1.0, values), verdicts, margins)
    f.boundary = extract_boundary(capped)
    return f


@dataclass
class RootLocus:
    """Nondimensional eigenvalue branches: ``branches[k, b]`` is branch b at point k."""

    param: str
    values: np.ndarray
    branches: np.ndarray
    stable: np.ndarray
    lambda_z_branch: Optional[int]
    splits: list

    def crossings(self, b: int) -> int:
        """Times branch ``b`` crosses the imaginary axis."""
        s = np.sign(self.branches[:, b].real)
        s = s[s != 0]
        return int(np.count_nonzero(s[1:] != s[:-1]))


def _locus_points(base: Model, param: str, vals: np.ndarray, controller: str):
    models = [apply_param(base, param, float(v)) for v in vals]
    lam, ok = eigvals_batch(np.array([jacobian(m, controller).entries for m in models]))
    if not ok.all():
        raise ArithmeticError(f"eigensolver failed at {param}={vals[~ok][0]}")
    wn = np.array([m.omega_n for m in models])
    stable = lam.real.max(axis=1) < -HURWITZ_RTOL * wn
    return lam / wn[:, None], stable


def _match(prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
    cost = np.abs(prev[:, None] - cur[None, :])
    _, col = linear_sum_assignment(cost)
    return cur[col]


def _track(lam: np.ndarray) -> np.ndarray:
    out = np.empty_like(lam)
    out[0] = lam[0]
    for k in range(1, len(lam)):
        out[k] = _match(out[k - 1], lam[k])
    return out


def root_locus(param: str, lo: float, hi: float, n_points: int, base: Model,
               controller: Optional[str] = None, scale: str = "log",
               refine: bool = True, max_points: Optional[int] = None,
               split_tol: float = 1e-12) -> RootLocus:
    """Eigenvalues along a one-parameter sweep, matched into continuous branches.

    Consecutive eigenvalue sets are paired by minimum total distance in the
    nondimensional plane (time unit ``1/omega_n`` at each point).  With
    ``refine``, midpoints are inserted wherever a branch jumps more than four
    times its median step, up to ``max_points`` (default ``20 * n_points``).
    A pairing where a branch's two nearest candidates are within
    ``split_tol`` of each other is recorded in ``splits`` as ``(point, branch)``.
    """
    if n_points < 2:
        raise ValueError("root locus needs at least 2 points")
    controller = resolve_controller(base, controller)
    if lo == hi:
        vals = np.full(n_points, float(lo))
        refine = False
    else:
        vals = Axis(param, lo, hi, n_points, scale).values()
    lam, stable = _locus_points(base, param, vals, controller)
    max_points = 20 * n_points if max_points is None else max_points

    while refine and len(vals) < max_points:
        br = _track(lam)
        gaps = np.abs(np.diff(br, axis=0))
        med = np.median(gaps, axis=0)
        # nearly stationary branches would otherwise soak up the whole budget
        med = np.maximum(med, 1e-3 * np.median(gaps))
        bad = np.flatnonzero((gaps > 4.0 * np.maximum(med, 1e-300)).any(axis=1))
        bad = bad[: max_points - len(vals)]
        if len(bad) == 0:
            break
        if scale == "log":
            mids = np.sqrt(vals[bad] * vals[bad + 1])
        else:
            mids = 0.5 * (vals[bad] + vals[bad + 1])
        new_lam, new_stable = _locus_points(base, param, mids, controller)
        vals = np.insert(vals, bad + 1, mids)
        lam = np.insert(lam, bad + 1, new_lam, axis=0)
        stable = np.insert(stable, bad + 1, new_stable)

    out = _track(lam)
    n = lam.shape[1]
    splits = []
    if n > 1:
        for k in range(1, len(vals)):
            cost = np.abs(out[k - 1][:, None] - lam[k][None, :])
            for b in range(n):
                order = np.argsort(cost[b])
                d0, d1 = cost[b, order[0]], cost[b, order[1]]
                if d1 - d0 < split_tol and abs(lam[k][order[0]] - lam[k][order[1]]) > split_tol:
                    splits.append((k, b))

    real0 = np.flatnonzero(out[0].imag == 0.0)
    lz = int(real0[np.argmax(np.abs(out[0].real[real0]))]) if len(real0) else None
    return RootLocus(param, vals, out, stable, lz, splits)
