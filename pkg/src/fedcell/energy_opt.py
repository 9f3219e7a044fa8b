"""Alternating minimizer for the total-energy problem.

One outer iteration solves two blocks to optimality:

  step 1  (transmit times, local accuracy) with radio/CPU resources fixed:
          times drop to their rate-limited minimum and the accuracy solves a
          one-dimensional fractional program (Dinkelbach) over the window
          allowed by the latency constraint;
  step 2  (bandwidths, CPU frequencies, powers) with times/accuracy fixed:
          frequencies come from the binding latency constraint in closed
          form, bandwidths from a single dual price on the shared band via
          bisection, powers from rate equality.

The objective never increases across iterations, so the loop stops on a
relative-decrease test.
"""

import math
from dataclasses import dataclass

import numpy as np

from .model import (Allocation, InfeasibleError, SolveReport, check_feasible,
                    derive_coefficients, evaluate, rates, transmit_window)
from .numerics import Tolerance, dinkelbach, lambert_w0, lambert_wm1

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class Step1Problem:
    """Data of the (times, accuracy) subproblem at fixed radio/CPU resources.

    alpha1 scales the log2(1/eta) part of the energy (J), alpha2 the
    constant part (J); t_min are the rate-limited minimum transmit times;
    eta_lo_user/eta_hi_user the per-user accuracy windows admitted by the
    latency budget, whose intersection is [eta_lo, eta_hi].
    """

    alpha1: float
    alpha2: float
    t_min: np.ndarray
    eta_lo_user: np.ndarray
    eta_hi_user: np.ndarray
    eta_lo: float
    eta_hi: float
    completion_time: float

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("energy coefficients must be nonnegative")
        if not 0.0 < self.eta_lo <= self.eta_hi < 1.0:
            raise ValueError("accuracy window must lie inside (0, 1)")


@dataclass(frozen=True)
class KktState:
    """Solution of the bandwidth/power subproblem: the dual price of the
    shared band, the per-user bandwidth floors enforcing the power caps, and
    the resulting bandwidths and powers."""

    mu: float
    b_min: np.ndarray
    b: np.ndarray
    p: np.ndarray


def min_transmit_time(scenario, b, p):
    """Rate-limited minimum upload times s / r_k; inf where the rate is zero."""
    r = rates(scenario, b, p)
    with np.errstate(divide="ignore"):
        return np.where(r > 0.0, scenario.upload_bits / r, np.inf)


def eta_bounds(coeffs, f, completion_time, t_min):
    """Per-user accuracy windows from the latency constraint.

    For each user the transmit window is concave in eta with an interior
    peak, zero at eta = 1 and -inf at eta -> 0+, so window(eta) >= t_min has
    an interval solution found by bisection on both sides of the peak.
    Returns (eta_lo_user, eta_hi_user, eta_lo, eta_hi); raises
    InfeasibleError when the intersection is empty or some window never
    reaches t_min.
    """
    f = np.asarray(f, dtype=float)
    t_min = np.asarray(t_min, dtype=float)
    a = coeffs.global_coeff
    cyc = coeffs.cycle_coeff

    if np.any(~np.isfinite(t_min)):
        raise InfeasibleError("a user has zero rate: no finite transmit time")

    peak = a * cyc / (_LN2 * f * completion_time)
    if np.any(peak >= 1.0):
        # window is increasing on (0,1) with window(1) = 0 < t_min
        raise InfeasibleError("latency budget too small for any local accuracy")
    window_peak = _window(coeffs, f, completion_time, peak)
    # tolerate exact tangency (latency binding at the current point): the
    # root bisections then collapse both bounds onto the peak
    if np.any(window_peak < t_min * (1.0 - 1e-9)):
        raise InfeasibleError("latency budget too small at the best accuracy")

    # lower root: window increasing on (0, peak]; closed-form under-bracket
    exponent = -(completion_time / a + t_min) * f / cyc
    lo = np.minimum(peak, np.exp2(np.maximum(exponent, -1000.0)))
    lo = np.maximum(lo, 1e-300)
    lo_root = _bisect_window(coeffs, f, completion_time, t_min, lo, peak, rising=True)

    # upper root: window decreasing on [peak, 1) with window(1) = 0
    hi_root = _bisect_window(coeffs, f, completion_time, t_min,
                             peak, np.ones_like(peak), rising=False)

    eta_lo = float(np.max(lo_root))
    eta_hi = float(np.min(hi_root))
    if eta_lo > eta_hi:
        if eta_lo - eta_hi <= 1e-9 * max(eta_lo, 1e-12):
            mid = 0.5 * (eta_lo + eta_hi)
            eta_lo = eta_hi = mid
        else:
            raise InfeasibleError("per-user accuracy windows do not intersect")
    return lo_root, hi_root, eta_lo, eta_hi


def _window(coeffs, f, completion_time, eta):
    return transmit_window(coeffs, f, completion_time, eta)


def _bisect_window(coeffs, f, completion_time, t_min, lo, hi, rising, iters=64):
    """Vectorized bisection for window(eta) = t_min on a monotone stretch."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        g = _window(coeffs, f, completion_time, mid) - t_min
        if rising:
            take_lo = g < 0.0
        else:
            take_lo = g >= 0.0
        lo = np.where(take_lo, mid, lo)
        hi = np.where(take_lo, hi, mid)
    return 0.5 * (lo + hi)


def build_step1_problem(scenario, coeffs, completion_time, b, f, p):
    """Assemble the (times, accuracy) subproblem at fixed (b, f, p)."""
    f = np.asarray(f, dtype=float)
    p = np.asarray(p, dtype=float)
    t_min = min_transmit_time(scenario, b, p)
    lo_user, hi_user, eta_lo, eta_hi = eta_bounds(coeffs, f, completion_time, t_min)
    alpha1 = coeffs.global_coeff * float(
        np.sum(scenario.kappa * coeffs.cycle_coeff * f ** 2))
    alpha2 = coeffs.global_coeff * float(np.sum(t_min * p))
    return Step1Problem(alpha1, alpha2, t_min, lo_user, hi_user,
                        eta_lo, eta_hi, completion_time)


def solve_step1(scenario, coeffs, completion_time, b, f, p, tol=None):
    """Optimal (transmit times, accuracy) at fixed (b, f, p).

    Times are the rate-limited minima; the accuracy minimizes the fractional
    energy objective over the latency window via the Dinkelbach loop.
    """
    prob = build_step1_problem(scenario, coeffs, completion_time, b, f, p)
    if prob.eta_lo == prob.eta_hi:
        return prob.t_min, prob.eta_lo
    eta, _ = dinkelbach(prob.alpha1, prob.alpha2, prob.eta_lo, prob.eta_hi, tol)
    return prob.t_min, eta


def optimal_frequency(scenario, coeffs, completion_time, t, eta):
    """CPU frequencies that make the latency constraint tight.

    f_k = a * cycles_k * log2(1/eta) / (T (1-eta) - a t_k).  Raises
    InfeasibleError when the time budget leaves no room for computation or
    the required frequency exceeds the cap (the caller state was not
    feasible).
    """
    t = np.asarray(t, dtype=float)
    a = coeffs.global_coeff
    denom = completion_time * (1.0 - eta) - a * t
    if np.any(denom <= 0.0):
        raise InfeasibleError("transmit times exhaust the latency budget")
    f = a * coeffs.cycle_coeff * math.log2(1.0 / eta) / denom
    if np.any(f > scenario.f_max * (1.0 + 1e-9)):
        raise InfeasibleError("latency budget needs more CPU than available")
    return np.minimum(f, scenario.f_max)


def rate_equality_power(scenario, t, b):
    """Power meeting the rate-equality upload target at times t, bandwidths b."""
    s = scenario.upload_bits
    return scenario.noise_psd * b / scenario.gains * (np.exp2(s / (t * b)) - 1.0)


def bandwidth_floor(scenario, t):
    """Smallest bandwidth at which the rate-equality power stays within cap.

    Closed Lambert form on the lower branch (the principal branch carries
    the trivial root of the defining equation), followed by one Newton
    polish on power(b) = p_max.  Raises InfeasibleError when even infinite
    bandwidth cannot deliver the upload in time t.
    """
    t = np.asarray(t, dtype=float)
    s = scenario.upload_bits
    q = _LN2 * scenario.noise_psd * s / (scenario.gains * scenario.p_max * t)
    if np.any(q >= 1.0):
        raise InfeasibleError("upload exceeds the infinite-bandwidth capacity "
                              "at the power cap")
    w = lambert_wm1(-q * np.exp(-q))
    x = -(w + q)  # positive root of exp(x) = 1 + x/q
    b = _LN2 * s / (t * x)
    # one Newton step on power(b) - p_max removes the branch-form roundoff
    for _ in range(2):
        xb = _LN2 * s / (t * b)
        exb = np.exp(xb)
        resid = scenario.noise_psd * b / scenario.gains * (exb - 1.0) - scenario.p_max
        slope = scenario.noise_psd / scenario.gains * (exb - 1.0 - xb * exb)
        b = b - resid / slope
    return b


def bandwidth_at_price(scenario, t, mu, iters=100):
    """Bandwidths equalizing the marginal transmit energy to the price mu.

    Solves t_k (N0/g_k) (e^x - 1 - x e^x) + mu = 0 with x = ln2 * s/(t_k b)
    by bisection in x (the left side falls monotonically from 0).  The
    stationarity prefactor is t_k * N0 / g_k, the derivative of the
    per-user transmit energy with respect to bandwidth.
    """
    if mu <= 0.0:
        raise ValueError("the bandwidth price must be positive")
    t = np.asarray(t, dtype=float)
    c = mu * scenario.gains / (scenario.noise_psd * t)  # dimensionless
    # (x-1)e^x = c-1 has a unique root in (0, 1 + log1p(c)]
    lo = np.zeros_like(c)
    hi = 1.0 + np.log1p(c)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        g = (mid - 1.0) * np.exp(mid) - (c - 1.0)
        lo = np.where(g < 0.0, mid, lo)
        hi = np.where(g < 0.0, hi, mid)
    x = 0.5 * (lo + hi)
    return _LN2 * scenario.upload_bits / (t * x)


def _bandwidth_at_price_fast(scenario, t, mu):
    """Closed form of bandwidth_at_price via the principal Lambert branch."""
    c = mu * scenario.gains / (scenario.noise_psd * t)
    x = 1.0 + lambert_w0((c - 1.0) / math.e)
    return _LN2 * scenario.upload_bits / (t * x)


def bandwidth_power_kkt(scenario, t, tol=None):
    """Optimal (bandwidth, power) split of the shared band at fixed times.

    Bandwidths are max(bandwidth_at_price(mu), floor) with the price mu
    bisected until the band is exactly used; powers follow from rate
    equality, which keeps them on or below their caps by construction.
    """
    tol = tol or Tolerance()
    t = np.asarray(t, dtype=float)
    total = scenario.bandwidth
    floor = bandwidth_floor(scenario, t)
    floor_sum = float(np.sum(floor))
    if floor_sum > total * (1.0 + 1e-9):
        raise InfeasibleError("power caps demand more than the available band")

    if scenario.num_users == 1:
        b = np.array([total])
        return KktState(mu=0.0, b_min=floor, b=b, p=rate_equality_power(scenario, t, b))

    if floor_sum >= total * (1.0 - 1e-12):
        b = floor
        return KktState(mu=math.inf, b_min=floor, b=b, p=rate_equality_power(scenario, t, b))

    price_scale = scenario.gains / (scenario.noise_psd * t)
    ln2s = _LN2 * scenario.upload_bits
    state = {"x": None}

    def used(mu):
        # root of (x-1)e^x = mu*scale - 1 per user; the root moves little
        # between price queries, so warm-started Newton replaces the full
        # Lambert evaluation inside the search
        c = mu * price_scale
        if state["x"] is None:
            x = 1.0 + lambert_w0((c - 1.0) / math.e)
        else:
            x = state["x"]
            for _ in range(3):
                ex = np.exp(x)
                step = ((x - 1.0) * ex - (c - 1.0)) / (np.maximum(x, 1e-12) * ex)
                x = np.maximum(x - step, 1e-12)
        state["x"] = x
        return float(np.sum(np.maximum(ln2s / (t * x), floor)))

    def used_exact(mu):
        return float(np.sum(np.maximum(_bandwidth_at_price_fast(scenario, t, mu),
                                       floor)))

    # marginal energy at an equal split sets the price scale
    equal = np.full(scenario.num_users, total / scenario.num_users)
    x_eq = _LN2 * scenario.upload_bits / (t * equal)
    ex = np.exp(x_eq)
    mu_scale = float(np.median(t * scenario.noise_psd / scenario.gains
                               * (x_eq * ex - ex + 1.0)))
    mu_lo = mu_scale
    for _ in range(200):
        if used(mu_lo) >= total:
            break
        mu_lo *= 0.25
    mu_hi = mu_lo
    for _ in range(200):
        if used(mu_hi) <= total:
            break
        mu_hi *= 4.0
    # the warm evaluations only bracket; the bisection itself is exact
    while used_exact(mu_lo) < total:
        mu_lo *= 0.5
    while used_exact(mu_hi) > total:
        mu_hi *= 2.0

    for _ in range(200):
        mu = 0.5 * (mu_lo + mu_hi)
        u = used_exact(mu)
        if abs(u - total) <= 1e-13 * total:
            mu_lo = mu_hi = mu
            break
        if u > total:
            mu_lo = mu
        else:
            mu_hi = mu
    mu = 0.5 * (mu_lo + mu_hi)
    b = np.maximum(_bandwidth_at_price_fast(scenario, t, mu), floor)
    if float(np.sum(b)) > total:
        b = np.maximum(_bandwidth_at_price_fast(scenario, t, mu_hi), floor)
        mu = mu_hi
    return KktState(mu=mu, b_min=floor, b=b, p=rate_equality_power(scenario, t, b))


def solve_step2(scenario, coeffs, completion_time, t, eta, tol=None):
    """Optimal (bandwidths, frequencies, powers) at fixed (times, accuracy)."""
    f = optimal_frequency(scenario, coeffs, completion_time, t, eta)
    kkt = bandwidth_power_kkt(scenario, t, tol)
    return kkt.b, f, kkt.p


def energy_objective(scenario, coeffs, t, f, p, eta):
    """Total energy of the training run for the given decision variables."""
    rounds = coeffs.global_coeff / (1.0 - eta)
    per_round = (scenario.kappa * coeffs.cycle_coeff * math.log2(1.0 / eta) * np.asarray(f) ** 2
                 + np.asarray(t) * np.asarray(p))
    return rounds * float(np.sum(per_round))


def refine_times(scenario, coeffs, completion_time, b, eta, iters=64):
    """Per-user transmit times minimizing energy at fixed bandwidth/accuracy.

    With frequency latency-tight and power at rate equality, the per-user
    energy is convex in the transmit time (the compute term grows as the
    time eats the latency budget, the transmit term falls), so the interior
    optimum is pinned by bisecting the derivative between the power-cap
    minimum time and the full latency window.  Returns (t, f, p).

    The two-block alternation cannot move the times off their starting
    values (rate equality reproduces them), so without this block the fixed
    point quality is dictated by the start; with it the stationarity in t
    holds as well.
    """
    b = np.asarray(b, dtype=float)
    a = coeffs.global_coeff
    log_inv = math.log2(1.0 / eta)
    cyc = a * coeffs.cycle_coeff * log_inv     # f(t) = cyc / (c2 - a t)
    c2 = completion_time * (1.0 - eta)
    n0 = scenario.noise_psd
    g = scenario.gains
    s = scenario.upload_bits

    t_hi = (c2 - cyc / scenario.f_max) / a      # f(t_hi) = f_max
    t_lo = min_transmit_time(scenario, b, scenario.p_max)
    if np.any(t_hi <= 0.0) or np.any(t_lo > t_hi * (1.0 + 1e-9)):
        raise InfeasibleError("no transmit time fits the latency budget")
    t_lo = np.minimum(t_lo, t_hi)

    def slope(t):
        f = cyc / (c2 - a * t)
        comp = 2.0 * scenario.kappa * coeffs.cycle_coeff * log_inv * f * (a * f / cyc) * f
        x = s / (t * b)
        ex = np.exp2(x)
        tx = n0 * b / g * (ex - 1.0 - x * _LN2 * ex)
        return comp + tx

    lo = t_lo.copy()
    hi = t_hi.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        rising = slope(mid) > 0.0
        lo = np.where(rising, lo, mid)
        hi = np.where(rising, mid, hi)
    t = 0.5 * (lo + hi)
    f = np.minimum(cyc / (c2 - a * t), scenario.f_max)
    p = np.minimum(rate_equality_power(scenario, t, b), scenario.p_max)
    return t, f, p


def minimize_energy(scenario, fl, completion_time, init, tol=None, coeffs=None):
    """Alternating minimization of the total energy from a feasible start.

    Alternates solve_step1 and solve_step2 until the relative objective
    decrease falls below tol.rel_tol (default 1e-8) or the iteration cap.
    The objective trace is non-increasing; an iteration that would increase
    it (floating-point noise at the fixed point) stops the loop instead.
    Returns (Allocation, SolveReport).
    """
    tol = tol or Tolerance(rel_tol=1e-8, max_iter=100)
    if coeffs is None:
        coeffs = derive_coefficients(fl, scenario)
    violations = check_feasible(scenario, coeffs, init, completion_time)
    if violations:
        raise InfeasibleError(f"initial allocation violates {violations}")

    alloc = init
    obj = energy_objective(scenario, coeffs, alloc.t, alloc.f, alloc.p, alloc.eta)
    trace = [obj]
    converged = False
    iterations = 0
    for _ in range(tol.max_iter):
        iterations += 1
        t, eta = solve_step1(scenario, coeffs, completion_time,
                             alloc.b, alloc.f, alloc.p)
        b, f, p = solve_step2(scenario, coeffs, completion_time, t, eta)
        t, f, p = refine_times(scenario, coeffs, completion_time, b, eta)
        new_obj = energy_objective(scenario, coeffs, t, f, p, eta)
        if new_obj > obj:
            converged = True
            break
        alloc = Allocation(t=t, b=b, f=f, p=p, eta=eta)
        trace.append(new_obj)
        if obj - new_obj <= tol.rel_tol * max(obj, 1e-300):
            obj = new_obj
            converged = True
            break
        obj = new_obj

    breakdown = evaluate(scenario, coeffs, alloc)
    report = SolveReport(
        scheme="proposed",
        completion_time=completion_time,
        allocation=alloc,
        breakdown=breakdown,
        objective_trace=trace,
        iterations=iterations,
        converged=converged,
        violations=check_feasible(scenario, coeffs, alloc, completion_time),
    )
    return alloc, report
