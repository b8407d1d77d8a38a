"""Eigenvalues of small dense matrices and Hurwitz stability verdicts.

The eigensolver balances the matrix, reduces it to upper Hessenberg form by
stabilised elimination and runs Francis double-shift QR.  It is written for
n <= 6 and compiled with numba; a failed run is reported instead of being
hidden, so sweeps can mark the point indeterminate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .friction import a_z, rho_f
from .linearize import jacobian, resolve_controller
from .plant import Model, System

HURWITZ_RTOL = 1e-9


class ConvergenceError(ArithmeticError):
    """QR iteration exhausted its budget or produced an inconsistent spectrum."""


# --- compiled kernels ------------------------------------------------------------
# The QR kernels index from 1 (row/column 0 unused) to keep the classical
# EISPACK loop bounds intact.


@njit(cache=True)
def _balance(a, n):
    radix = 2.0
    sqrdx = radix * radix
    done = False
    while not done:
        done = True
        for i in range(1, n + 1):
            r = 0.0
            c = 0.0
            for j in range(1, n + 1):
                if j != i:
                    c += abs(a[j, i])
                    r += abs(a[i, j])
            if c != 0.0 and r != 0.0:
                g = r / radix
                f = 1.0
                s = c + r
                while c < g:
                    f *= radix
                    c *= sqrdx
                g = r * radix
                while c > g:
                    f /= radix
                    c /= sqrdx
                if (c + r) / f < 0.95 * s:
                    done = False
                    g = 1.0 / f
                    for j in range(1, n + 1):
                        a[i, j] *= g
                    for j in range(1, n + 1):
                        a[j, i] *= f


@njit(cache=True)
def _hessenberg(a, n):
    for m in range(2, n):
        x = 0.0
        i = m
        for j in range(m, n + 1):
            if abs(a[j, m - 1]) > abs(x):
                x = a[j, m - 1]
                i = j
        if i != m:
            for j in range(m - 1, n + 1):
                t = a[i, j]
                a[i, j] = a[m, j]
                a[m, j] = t
            for j in range(1, n + 1):
                t = a[j, i]
                a[j, i] = a[j, m]
                a[j, m] = t
        if x != 0.0:
            for i in range(m + 1, n + 1):
                y = a[i, m - 1]
                if y != 0.0:
                    y /= x
                    a[i, m - 1] = y
                    for j in range(m, n + 1):
                        a[i, j] -= y * a[m, j]
                    for j in range(1, n + 1):
                        a[j, m] += y * a[j, i]
    for i in range(3, n + 1):
        for j in range(1, i - 1):
            a[i, j] = 0.0


@njit(cache=True)
def _sign(a, b):
    return abs(a) if b >= 0.0 else -abs(a)


@njit(cache=True)
def _hqr(a, n, wr, wi, budget):
    anorm = 0.0
    for i in range(1, n + 1):
        for j in range(max(i - 1, 1), n + 1):
            anorm += abs(a[i, j])
    nn = n
    t = 0.0
    total = 0
    x = y = z = w = p = q = r = s = 0.0
    while nn >= 1:
        its = 0
        while True:
            l = 1
            for ll in range(nn, 1, -1):
                s = abs(a[ll - 1, ll - 1]) + abs(a[ll, ll])
                if s == 0.0:
                    s = anorm
                if abs(a[ll, ll - 1]) + s == s:
                    a[ll, ll - 1] = 0.0
                    l = ll
                    break
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
            else:
                y = a[nn - 1, nn - 1]
                w = a[nn, nn - 1] * a[nn - 1, nn]
                if l == nn - 1:
                    p = 0.5 * (y - x)
                    q = p * p + w
                    z = math.sqrt(abs(q))
                    x += t
                    if q >= 0.0:
                        z = p + _sign(z, p)
                        wr[nn - 1] = x + z
                        wr[nn] = x + z
                        if z != 0.0:
                            wr[nn] = x - w / z
                        wi[nn - 1] = 0.0
                        wi[nn] = 0.0
                    else:
                        wr[nn - 1] = x + p
                        wr[nn] = x + p
                        wi[nn - 1] = -z
                        wi[nn] = z
                    nn -= 2
                else:
                    if total >= budget:
                        return False
                    if its == 10 or its == 20:
                        # exceptional shift
                        t += x
                        for i in range(1, nn + 1):
                            a[i, i] -= x
                        s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                        x = 0.75 * s
                        y = x
                        w = -0.4375 * s * s
                    its += 1
                    total += 1
                    m = nn - 2
                    while m >= l:
                        z = a[m, m]
                        r = x - z
                        s = y - z
                        p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                        q = a[m + 1, m + 1] - z - r - s
                        r = a[m + 2, m + 1]
                        s = abs(p) + abs(q) + abs(r)
                        p /= s
                        q /= s
                        r /= s
                        if m == l:
                            break
                        u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                        v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                        if u + v == v:
                            break
                        m -= 1
                    for i in range(m + 2, nn + 1):
                        a[i, i - 2] = 0.0
                        if i != m + 2:
                            a[i, i - 3] = 0.0
                    for k in range(m, nn):
                        if k != m:
                            p = a[k, k - 1]
                            q = a[k + 1, k - 1]
                            r = 0.0
                            if k != nn - 1:
                                r = a[k + 2, k - 1]
                            x = abs(p) + abs(q) + abs(r)
                            if x != 0.0:
                                p /= x
                                q /= x
                                r /= x
                        s = _sign(math.sqrt(p * p + q * q + r * r), p)
                        if s != 0.0:
                            if k == m:
                                if l != m:
                                    a[k, k - 1] = -a[k, k - 1]
                            else:
                                a[k, k - 1] = -s * x
                            p += s
                            x = p / s
                            y = q / s
                            z = r / s
                            q /= p
                            r /= p
                            for j in range(k, nn + 1):
                                p = a[k, j] + q * a[k + 1, j]
                                if k != nn - 1:
                                    p += r * a[k + 2, j]
                                    a[k + 2, j] -= p * z
                                a[k + 1, j] -= p * y
                                a[k, j] -= p * x
                            mmin = nn if nn < k + 3 else k + 3
                            for i in range(l, mmin + 1):
                                p = x * a[i, k] + y * a[i, k + 1]
                                if k != nn - 1:
                                    p += z * a[i, k + 2]
                                    a[i, k + 2] -= p * r
                                a[i, k + 1] -= p * q
                                a[i, k] -= p
            if nn < 1 or l >= nn - 1:
                break
    return True


@njit(cache=True)
def _eig_kernel(m, wr, wi):
    """Eigenvalues of square ``m`` into ``wr``/``wi``; False on failure."""
    n = m.shape[0]
    a = np.zeros((n + 1, n + 1))
    trace = 0.0
    scale = 0.0
    for i in range(n):
        trace += m[i, i]
        for j in range(n):
            v = m[i, j]
            if not np.isfinite(v):
                return False
            a[i + 1, j + 1] = v
            scale += abs(v)
    _balance(a, n)
    _hessenberg(a, n)
    ur = np.zeros(n + 1)
    ui = np.zeros(n + 1)
    if not _hqr(a, n, ur, ui, 30 * n):
        return False
    total = 0.0
    for i in range(n):
        wr[i] = ur[i + 1]
        wi[i] = ui[i + 1]
        total += wr[i]
    # trace identity, cheap enough to check on every call
    if abs(total - trace) > 1e-9 * max(scale, 1e-300):
        return False
    return True


@njit(cache=True)
def _eig_batch(stack, wr, wi, ok):
    for k in range(stack.shape[0]):
        ok[k] = _eig_kernel(stack[k], wr[k], wi[k])


def _sorted(lam: np.ndarray) -> np.ndarray:
    order = np.lexsort((-lam.imag, -lam.real))
    return lam[order]


def eigvals(M) -> np.ndarray:
    """All eigenvalues of a small real square matrix, with multiplicity.

    Sorted by real part (descending), then imaginary part (descending).
    Raises :class:`ConvergenceError` if QR does not converge within 30n
    iterations or the result violates the trace identity.
    """
    a = np.ascontiguousarray(M, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"need a square matrix, got shape {a.shape}")
    n = a.shape[0]
    wr = np.empty(n)
    wi = np.empty(n)
    if not _eig_kernel(a, wr, wi):
        raise ConvergenceError("QR iteration failed to converge")
    return _sorted(wr + 1j * wi)


def eigvals_batch(stack) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of a stack of matrices, shape (k, n, n).

    Returns ``(lam, ok)``; rows where ``ok`` is False are NaN.
    """
    a = np.ascontiguousarray(stack, dtype=np.float64)
    k, n = a.shape[0], a.shape[1]
    wr = np.empty((k, n))
    wi = np.empty((k, n))
    ok = np.empty(k, dtype=np.bool_)
    _eig_batch(a, wr, wi, ok)
    lam = wr + 1j * wi
    lam[~ok] = np.nan
    return lam, ok


# --- spectra and verdicts ----------------------------------------------------------

LABELS = ("lambda_i", "lambda_z", "lambda_t", "lambda_b", "other")


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    max_real: float
    hurwitz: bool
    labels: Optional[tuple[str, ...]] = None


def hurwitz_margin(omega_n: float) -> float:
    """Stability requires ``max_real < -hurwitz_margin(omega_n)``."""
    return HURWITZ_RTOL * omega_n


def spectrum(M, omega_n: float) -> SpectrumReport:
    lam = eigvals(M)
    mr = float(lam.real.max())
    return SpectrumReport(lam, mr, mr < -hurwitz_margin(omega_n))


def analyze(model: Model, controller: Optional[str] = None,
            v: Optional[float] = None) -> SpectrumReport:
    """Spectrum of the slipping-equilibrium Jacobian of ``model``."""
    return spectrum(jacobian(model, controller, v).entries, model.omega_n)


@dataclass(frozen=True)
class CubicCoefficients:
    """``s^3 + b1 s^2 + b2 s + b3``."""

    b1: float
    b2: float
    b3: float


def coeffs_alpha_pd(model: Model, v: Optional[float] = None) -> CubicCoefficients:
    """Characteristic polynomial of the alpha Jacobian under PD control."""
    v = model.reference.v_r if v is None else float(v)
    if v == 0.0:
        raise ValueError("coefficients are defined for v != 0 only")
    fp, g = model.friction, model.gains
    m = model.stage.m_alpha
    az = a_z(v, fp)
    c = rho_f(v, fp) * v * v / (fp.v_s * fp.v_s)
    b1 = az + (g.k_d + fp.sigma2 - fp.sigma1 * c) / m
    b2 = (g.k_p + g.k_d * az + fp.sigma2 * az - fp.sigma0 * c) / m
    b3 = az * g.k_p / m
    return CubicCoefficients(b1, b2, b3)


def routh_hurwitz_cubic(c: CubicCoefficients) -> bool:
    return c.b1 > 0.0 and c.b3 > 0.0 and c.b1 * c.b2 > c.b3


def stribeck_destabilization(v: float, model: Model) -> float:
    """``|v| (f_S - f_C) exp(-(v/v_s)^2) / v_s^2``, in N·s/m."""
    fp = model.friction
    r = v / fp.v_s
    return abs(v) * (fp.f_S - fp.f_C) * math.exp(-r * r) / (fp.v_s * fp.v_s)


def sigma0_inf_margin(v: float, model: Model) -> float:
    """Damping margin ``k_d + sigma2 - |v| (f_S - f_C) e^{-(v/v_s)^2} / v_s^2``.

    This is the large-sigma0 closed form as commonly quoted.  The exact
    leading-order Routh expansion carries twice the Stribeck term, see
    :func:`sigma0_inf_margin_exact`.
    """
    return model.gains.k_d + model.friction.sigma2 - stribeck_destabilization(v, model)


def sigma0_inf_margin_exact(v: float, model: Model) -> float:
    """Leading-order ``b1 b2 - b3`` sign for sigma0 -> inf (alpha, PD).

    With ``b2 ~ a_z (k_d + sigma2 - 2 |v| (f_S-f_C) e^{-(v/v_s)^2} / v_s^2)/m``
    since ``sigma0 rho_f v^2/v_s^2 = 2 a_z |v| (f_S-f_C) e^{-(v/v_s)^2}/v_s^2``.
    """
    return model.gains.k_d + model.friction.sigma2 - 2.0 * stribeck_destabilization(v, model)


def critical_velocity(p) -> Optional[float]:
    """Velocity maximising the Stribeck destabilisation, ``v_s/sqrt(2)``.

    ``None`` when ``f_S == f_C`` (no Stribeck peak).
    """
    if p.f_S <= p.f_C:
        return None
    return p.v_s / math.sqrt(2.0)


def decoupled_pid_criterion(model: Model) -> bool:
    """``k_p (k_d + sigma2) > k_i m_alpha``: alpha stability once friction decouples."""
    g = model.gains
    return g.k_p * (g.k_d + model.friction.sigma2) > g.k_i * model.stage.m_alpha


# --- eigenvalue labelling ------------------------------------------------------------


def _nearest(lam: np.ndarray, target: complex) -> int:
    return int(np.argmin(np.abs(lam - target)))


def classify_spectrum(report: SpectrumReport, model: Model,
                      controller: Optional[str] = None,
                      v: Optional[float] = None,
                      homotopy_steps: int = 8) -> SpectrumReport:
    """Attach lambda_i / lambda_z / lambda_t / lambda_b / other labels.

    ``lambda_z`` is the real eigenvalue of largest magnitude.  ``lambda_i``
    is followed from ``k_i * 1e-6`` up to ``k_i`` along a geometric path,
    starting from the eigenvalue nearest zero.  For beta the remaining
    complex pairs are ``lambda_t`` then ``lambda_b`` by decreasing |imag|.
    Returns the report unlabelled when a choice is ambiguous (two candidates
    within 1%).
    """
    lam = report.eigenvalues
    n = len(lam)
    labels = ["other"] * n
    real = np.flatnonzero(lam.imag == 0.0)
    if len(real) == 0:
        return report
    mags = np.abs(lam.real[real])
    order = np.argsort(mags)[::-1]
    if len(real) > 1 and mags[order[1]] >= 0.99 * mags[order[0]]:
        return report
    iz = int(real[order[0]])
    labels[iz] = "lambda_z"

    if resolve_controller(model, controller) == "pid":
        k_i = model.gains.k_i
        if k_i == 0.0:
            ii = _nearest(lam, 0.0)
        else:
            path = np.geomspace(k_i * 1e-6, k_i, homotopy_steps)
            cur = eigvals(jacobian(model.replace(k_i=path[0]), "pid", v).entries)
            track = cur[_nearest(cur, 0.0)]
            for k in path[1:]:
                cur = eigvals(jacobian(model.replace(k_i=k), "pid", v).entries)
                track = cur[_nearest(cur, track)]
            d = np.sort(np.abs(lam - track))
            if d[1] <= 1.01 * d[0]:
                return report
            ii = _nearest(lam, track)
        if ii == iz:
            return report
        labels[ii] = "lambda_i"

    if model.system is System.BETA:
        rest = [k for k in range(n) if labels[k] == "other" and lam[k].imag > 0.0]
        rest.sort(key=lambda k: -abs(lam[k].imag))
        for name, k in zip(("lambda_t", "lambda_b"), rest):
            labels[k] = name
            conj = [j for j in range(n) if labels[j] == "other"
                    and abs(lam[j] - np.conj(lam[k])) <= 1e-9 * abs(lam[k])]
            if conj:
                labels[conj[0]] = name
    return replace(report, labels=tuple(labels))
