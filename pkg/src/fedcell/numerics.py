"""Scalar numerical primitives shared by all solvers.

Everything in this module is a pure function of its inputs: Lambert W
evaluation, bracketed bisection for monotone functions, the Dinkelbach loop
for the one-dimensional fractional program that appears in the accuracy
subproblem, and a brute-force grid minimizer used as a test oracle.
"""

import math
from dataclasses import dataclass

import numpy as np

# Branch point of the real Lambert W function.
_BRANCH_POINT = -math.exp(-1.0)
# Arguments this close below -1/e are treated as rounding noise and clamped.
_BRANCH_CLAMP = 1e-12


class BracketError(ValueError):
    """The supplied interval does not bracket a sign change."""


class ConvergenceError(RuntimeError):
    """An iteration hit its cap before reaching the requested accuracy."""


@dataclass(frozen=True)
class Tolerance:
    """Accuracy knobs for the scalar iterations.

    abs_tol is in the units of the root variable, rel_tol is dimensionless.
    The defaults are deliberately tight: these loops are cheap scalars and
    downstream solvers assume their error is negligible.
    """

    abs_tol: float = 1e-12
    rel_tol: float = 1e-9
    max_iter: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


def lambert_w0(x):
    """Principal branch of the Lambert W function.

    Returns w >= -1 with w * exp(w) = x for x >= -1/e.  Accepts a scalar or
    an ndarray.  Uses a piecewise initial guess (series near the branch
    point, log asymptotics for large arguments) polished by Halley's method.
    """
    scalar = np.isscalar(x)
    z = np.asarray(x, dtype=float)
    if np.any(z < _BRANCH_POINT - _BRANCH_CLAMP):
        raise ValueError("lambert_w0: argument below the branch point -1/e")
    z = np.maximum(z, _BRANCH_POINT)

    w = np.empty_like(z)
    near = z < -0.25
    mid = ~near & (z <= math.e)
    far = z > math.e

    # series in p = sqrt(2(e*x + 1)) around the branch point
    p = np.sqrt(np.maximum(2.0 * (math.e * z + 1.0), 0.0))
    w[near] = (-1.0 + p + (-p * p / 3.0 + 11.0 * p ** 3 / 72.0))[near]
    w[mid] = (z / (1.0 + z))[mid]
    with np.errstate(divide="ignore", invalid="ignore"):
        l1 = np.log(np.where(far, z, math.e))
        l2 = np.log(l1)
    w[far] = (l1 - l2 + l2 / l1)[far]

    w = _halley(w, z)
    # exactly at (or clamped onto) the branch point
    w = np.where(z == _BRANCH_POINT, -1.0, w)
    w = np.where(z == 0.0, 0.0, w)
    return float(w) if scalar else w


def lambert_wm1(x):
    """Lower real branch of the Lambert W function.

    Returns w <= -1 with w * exp(w) = x for -1/e <= x < 0.  Scalar or
    ndarray.  Near the branch point the square-root series is used with a
    Halley polish; toward 0- the iteration runs in log space, where
    exp(w) would underflow.
    """
    scalar = np.isscalar(x)
    z = np.asarray(x, dtype=float)
    if np.any(z >= 0.0):
        raise ValueError("lambert_wm1: argument must be negative")
    if np.any(z < _BRANCH_POINT - _BRANCH_CLAMP):
        raise ValueError("lambert_wm1: argument below the branch point -1/e")
    z = np.maximum(z, _BRANCH_POINT)

    w = np.empty_like(z)
    near = z < -0.3
    p = -np.sqrt(np.maximum(2.0 * (math.e * z + 1.0), 0.0))
    w[near] = (-1.0 + p + (-p * p / 3.0 + 11.0 * p ** 3 / 72.0))[near]
    if np.any(near):
        w[near] = _halley(w[near], z[near])

    deep = ~near
    if np.any(deep):
        # solve w + log(-w) = log(-x) by Newton; stable however small x is
        target = np.log(-z[deep])
        wd = np.minimum(target - np.log(np.maximum(-target, 1.0)), -1.5)
        for _ in range(80):
            g = wd + np.log(-wd) - target
            step = g * wd / (wd + 1.0)
            wd = wd - step
            if np.all(np.abs(step) <= 1e-15 * np.abs(wd)):
                break
        w[deep] = wd

    w = np.where(z == _BRANCH_POINT, -1.0, w)
    return float(w) if scalar else w


def _halley(w, z):
    """Halley refinement of w*exp(w) = z, vectorized."""
    for _ in range(60):
        ew = np.exp(w)
        f = w * ew - z
        wp1 = w + 1.0
        # keep the denominator away from the branch-point singularity
        wp1 = np.where(np.abs(wp1) < 1e-30, 1e-30, wp1)
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        dw = f / denom
        w = w - dw
        if np.all(np.abs(dw) <= 2e-16 * (1.0 + np.abs(w))):
            break
    return w


def bisect_root(fn, lo, hi, tol=None):
    """Root of a monotone function on [lo, hi] by bisection.

    fn(lo) and fn(hi) must have opposite signs (or one must be zero).
    Stops when the bracket width drops below abs_tol + rel_tol*|mid| and
    raises ConvergenceError if max_iter halvings are not enough.
    """
    tol = tol or Tolerance()
    flo = fn(lo)
    fhi = fn(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0.0) == (fhi > 0.0):
        raise BracketError(f"no sign change on [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}")
    for _ in range(tol.max_iter):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0.0:
            return mid
        if (fm > 0.0) == (fhi > 0.0):
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
        if (hi - lo) <= tol.abs_tol + tol.rel_tol * abs(mid):
            return 0.5 * (lo + hi)
    raise ConvergenceError(f"bisection did not converge in {tol.max_iter} iterations")


def dinkelbach(alpha1, alpha2, eta_lo, eta_hi, tol=None, trace=None):
    """Minimize (alpha1*log2(1/eta) + alpha2) / (1 - eta) over [eta_lo, eta_hi].

    Classic parametric (Dinkelbach) iteration: for the current ratio value
    zeta, the inner problem min alpha1*log2(1/eta) + alpha2 - zeta*(1-eta)
    has the stationary point eta = alpha1 / (ln2 * zeta), which is clamped
    onto the box (the clamped point is still the boxed inner minimizer, so
    the convergence argument is unaffected).  Terminates when the inner
    optimum value H shrinks by rel_tol relative to the previous iterate, or
    when the iterate goes stationary.

    If trace is a list, the outer objective values are appended to it
    (non-increasing by construction).

    Returns (eta_star, objective).
    """
    tol = tol or Tolerance()
    if not (0.0 < eta_lo <= eta_hi < 1.0):
        raise ValueError(f"invalid accuracy bounds [{eta_lo}, {eta_hi}]")
    if alpha1 < 0.0 or alpha2 < 0.0 or alpha1 + alpha2 <= 0.0:
        raise ValueError("alpha1, alpha2 must be nonnegative with positive sum")

    ln2 = math.log(2.0)

    def ratio(eta):
        return (alpha1 * math.log2(1.0 / eta) + alpha2) / (1.0 - eta)

    eta = 0.5 * (eta_lo + eta_hi)
    zeta = ratio(eta)
    if trace is not None:
        trace.append(zeta)
    h_prev = None
    for _ in range(tol.max_iter):
        eta_new = alpha1 / (ln2 * zeta) if alpha1 > 0.0 else eta_lo
        eta_new = min(max(eta_new, eta_lo), eta_hi)
        h = alpha1 * math.log2(1.0 / eta_new) + alpha2 - zeta * (1.0 - eta_new)
        eta = eta_new
        zeta = ratio(eta)
        if trace is not None:
            trace.append(zeta)
        if h == 0.0:
            break
        if h_prev is not None and abs(h) / abs(h_prev) < tol.rel_tol:
            break
        h_prev = h
    return eta, ratio(eta)


def grid_min(fn, lo, hi, n):
    """Minimum of fn over an n-point uniform grid on [lo, hi].

    Test oracle only.  fn may be vectorized over ndarrays; if it is not,
    the grid is evaluated point by point.  Returns (x, fn(x)).
    """
    if not lo < hi:
        raise ValueError("grid_min requires lo < hi")
    if n < 2:
        raise ValueError("grid_min requires at least two points")
    xs = np.linspace(lo, hi, n)
    try:
        vals = np.asarray(fn(xs), dtype=float)
        if vals.shape != xs.shape:
            raise TypeError
    except (TypeError, ValueError):
        vals = np.array([fn(x) for x in xs], dtype=float)
    i = int(np.argmin(vals))
    return float(xs[i]), float(vals[i])
