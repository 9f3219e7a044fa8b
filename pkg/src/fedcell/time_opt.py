"""Completion-time minimization and the feasibility probe that drives it.

For a candidate completion time T the probe asks whether any allocation fits:
with every user at full CPU frequency and full transmit power, the transmit
time per round is largest when the latency constraint binds, the per-user
rate demand is the upload size over that window, and the minimal bandwidth
that delivers the demand at the power cap comes from inverting the Shannon
rate in closed Lambert form.  The summed minimal bandwidth is convex in the
accuracy, so its minimizer is pinned by a first-order bisection, and the
feasibility test is simply "does the minimal total bandwidth fit in the
band".  The optimal T is then found by bisection, since feasibility is
monotone in T.
"""

import math
from dataclasses import dataclass

import numpy as np

from .model import Allocation, InfeasibleError, transmit_window
from .numerics import Tolerance, lambert_wm1

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class FeasibilityProbe:
    """Outcome of one feasibility test at completion time T.

    eta_domain is the open accuracy interval on which every user's transmit
    window is positive; required_bandwidth the minimal total bandwidth at
    the balancing accuracy eta_star; feasible whether it fits in the band.
    """

    completion_time: float
    eta_star: float
    required_bandwidth: float
    feasible: bool
    eta_domain: tuple


def full_power_rate(scenario, b):
    """Shannon rate of each user at its power cap, as a function of bandwidth."""
    b = np.asarray(b, dtype=float)
    snr = scenario.gains * scenario.p_max / (scenario.noise_psd * b)
    return b * np.log2(1.0 + snr)


def _rate_cap(scenario):
    """Infinite-bandwidth rate limit g p_max / (N0 ln2) of each user."""
    return scenario.gains * scenario.p_max / (scenario.noise_psd * _LN2)


def bandwidth_for_rate(scenario, rate):
    """Minimal bandwidth delivering each rate at the power cap.

    Inverse of full_power_rate, evaluated on the lower Lambert branch (the
    principal branch holds the trivial root) with a Newton polish.  Entries
    at or above the infinite-bandwidth rate limit come back as inf; zero
    rates as 0.
    """
    rate, gp = np.broadcast_arrays(np.asarray(rate, dtype=float),
                                   scenario.gains * scenario.p_max)
    if np.any(rate < 0.0):
        raise ValueError("rate demands must be nonnegative")
    q = _LN2 * scenario.noise_psd * rate / gp
    out = np.full(rate.shape, np.inf)
    zero = rate == 0.0
    ok = (q < 1.0) & ~zero
    if np.any(ok):
        qk = q[ok]
        w = lambert_wm1(-qk * np.exp(-qk))
        b = -_LN2 * rate[ok] / (w + qk)
        # polish the inverse so the round trip with full_power_rate is exact
        for _ in range(2):
            snr = gp[ok] / (scenario.noise_psd * b)
            val = b * np.log2(1.0 + snr) - rate[ok]
            slope = np.log2(1.0 + snr) - snr / (_LN2 * (1.0 + snr))
            b = b - val / slope
        out[ok] = b
    out[zero] = 0.0
    return out


def required_rate(scenario, coeffs, completion_time, eta):
    """Per-user rate demand: upload bits over the transmit window at eta.

    Only defined where the window is positive; entries with a nonpositive
    window come back as inf.
    """
    window = transmit_window(coeffs, scenario.f_max, completion_time, eta)
    with np.errstate(divide="ignore"):
        return np.where(window > 0.0, scenario.upload_bits / window, np.inf)


def _window_domain(scenario, coeffs, completion_time, iters=60):
    """Accuracy interval (per user and intersected) with a positive window.

    The window is concave with an interior peak and window(1) = 0, so the
    positive set is (root, 1).  Returns (lo, 1.0) or raises InfeasibleError
    when no accuracy admits a schedule at this T.
    """
    f = scenario.f_max
    a = coeffs.global_coeff
    cyc = coeffs.cycle_coeff
    peak = a * cyc / (_LN2 * f * completion_time)
    if np.any(peak >= 1.0):
        raise InfeasibleError("completion time below the pure-computation bound")
    window_peak = transmit_window(coeffs, f, completion_time, peak)
    if np.any(window_peak <= 0.0):
        raise InfeasibleError("completion time below the pure-computation bound")
    # root of window = 0 on the rising stretch (0, peak]
    exponent = -(completion_time / a) * f / cyc
    lo = np.maximum(np.minimum(peak, np.exp2(np.maximum(exponent, -1000.0))), 1e-300)
    hi = peak.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        g = transmit_window(coeffs, f, completion_time, mid)
        lo = np.where(g < 0.0, mid, lo)
        hi = np.where(g < 0.0, hi, mid)
    roots = 0.5 * (lo + hi)
    return float(np.max(roots)), 1.0


def _accuracy_slope(scenario, coeffs, completion_time, eta):
    """d/d(eta) of the total minimal bandwidth, with +-inf where a user's
    rate demand exceeds its infinite-bandwidth limit."""
    f = scenario.f_max
    a = coeffs.global_coeff
    window = transmit_window(coeffs, f, completion_time, eta)
    window_slope = -completion_time / a + coeffs.cycle_coeff / (_LN2 * f * eta)
    demand = np.where(window > 0.0, scenario.upload_bits / np.maximum(window, 1e-300), np.inf)
    demand_slope = -scenario.upload_bits * window_slope / np.maximum(window, 1e-300) ** 2

    cap = _rate_cap(scenario)
    over = demand >= cap
    terms = np.empty_like(demand)
    if np.any(~over):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            b = bandwidth_for_rate(scenario, np.where(over, 0.0, demand))
            snr = scenario.gains * scenario.p_max / (scenario.noise_psd * np.maximum(b, 1e-300))
            rate_slope = np.log2(1.0 + snr) - snr / (_LN2 * (1.0 + snr))
            terms[~over] = (demand_slope / rate_slope)[~over]
    # beyond the rate cap the required bandwidth is infinite; the sign of the
    # contribution follows the direction the demand is moving
    terms[over] = np.where(demand_slope[over] >= 0.0, np.inf, -np.inf)
    pos_inf = np.any(np.isposinf(terms))
    neg_inf = np.any(np.isneginf(terms))
    if pos_inf and neg_inf:
        return math.inf  # disjoint per-user windows; push the search left
    if pos_inf:
        return math.inf
    if neg_inf:
        return -math.inf
    return float(np.sum(terms))


def optimal_accuracy(scenario, coeffs, completion_time, iters=48):
    """Accuracy minimizing the total minimal bandwidth at completion time T.

    Bisection on the first-order condition (the summed slope is increasing
    because each per-user term is the derivative of a convex function).
    """
    lo, hi = _window_domain(scenario, coeffs, completion_time)
    width = hi - lo
    lo = lo + 1e-9 * width
    hi = hi - 1e-9 * width
    slo = _accuracy_slope(scenario, coeffs, completion_time, lo)
    shi = _accuracy_slope(scenario, coeffs, completion_time, hi)
    if slo >= 0.0:
        return lo
    if shi <= 0.0:
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        s = _accuracy_slope(scenario, coeffs, completion_time, mid)
        if s >= 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def probe(scenario, coeffs, completion_time):
    """Feasibility test of a completion time (full CPU and power assumed)."""
    try:
        domain = _window_domain(scenario, coeffs, completion_time)
    except InfeasibleError:
        return FeasibilityProbe(completion_time, None, math.inf, False, None)
    eta = optimal_accuracy(scenario, coeffs, completion_time)
    demand = required_rate(scenario, coeffs, completion_time, eta)
    cap = _rate_cap(scenario)
    if np.any(demand >= cap):
        required = math.inf
    else:
        required = float(np.sum(bandwidth_for_rate(scenario, demand)))
    feasible = required <= scenario.bandwidth
    return FeasibilityProbe(completion_time, eta, required, feasible, domain)


def allocation_at(scenario, coeffs, completion_time, probe_result=None,
                  spread_leftover=True):
    """Feasible allocation from a successful probe: full CPU and power,
    latency-tight transmit times and minimal bandwidths.

    With spread_leftover the spare band is split uniformly; without it the
    bandwidths stay at their minima, which keeps the rates equal to the
    demands (useful as an energy-solver seed, where inflated rates would
    needlessly shorten the transmit times).
    """
    pr = probe_result or probe(scenario, coeffs, completion_time)
    if not pr.feasible:
        raise InfeasibleError(f"completion time {completion_time} s is infeasible")
    eta = pr.eta_star
    t = transmit_window(coeffs, scenario.f_max, completion_time, eta)
    b = bandwidth_for_rate(scenario, required_rate(scenario, coeffs, completion_time, eta))
    if spread_leftover:
        b = b + (scenario.bandwidth - float(np.sum(b))) / scenario.num_users
    return Allocation(t=t, b=b, f=scenario.f_max.copy(), p=scenario.p_max.copy(), eta=eta)


def min_completion_time(scenario, coeffs, tol=None, t_cap=2.0 ** 60):
    """Minimum feasible completion time and an allocation achieving it.

    Outer bisection between an infeasible lower and a feasible upper bound
    (found by doubling), stopping at relative width tol.rel_tol; the
    feasible endpoint is returned.
    """
    tol = tol or Tolerance(rel_tol=1e-6)
    t_hi = 1.0
    t_lo = 0.0
    while not probe(scenario, coeffs, t_hi).feasible:
        t_lo = t_hi
        t_hi *= 2.0
        if t_hi > t_cap:
            raise InfeasibleError("no feasible completion time below the cap; "
                                  "the scenario is inconsistent")
    while (t_hi - t_lo) / t_hi > tol.rel_tol:
        mid = 0.5 * (t_lo + t_hi)
        if probe(scenario, coeffs, mid).feasible:
            t_hi = mid
        else:
            t_lo = mid
    return t_hi, allocation_at(scenario, coeffs, t_hi)
