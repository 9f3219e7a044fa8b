"""Allocation schemes: the proposed joint optimizer and the four baselines.

All schemes share one interface: solve at a given completion time and return
a SolveReport, or find the smallest completion time they can meet.  The
baselines reuse the proposed solver's blocks with one degree of freedom
removed: eb_fdma pins the bandwidth split, fe_fdma pins the local accuracy,
tdma serializes the uplink on the full band, and rs lets only a random user
subset participate in each round.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import time_opt
from .energy_opt import (bandwidth_power_kkt, build_step1_problem,
                         energy_objective, eta_bounds, min_transmit_time,
                         minimize_energy, rate_equality_power,
                         refine_times, solve_step1, solve_step2)
from .model import (Allocation, EnergyTimeBreakdown, InfeasibleError,
                    IterationCoefficients, SolveReport, check_feasible,
                    derive_coefficients, evaluate, rates, transmit_window)
from .numerics import Tolerance, dinkelbach, lambert_w0, lambert_wm1


@dataclass(frozen=True)
class SchemeKind:
    """Scheme selector; selected_count and seed only matter for rs."""

    kind: str
    selected_count: int = None
    seed: int = 0

    _KNOWN = ("proposed", "eb_fdma", "fe_fdma", "tdma", "rs")

    def __post_init__(self):
        if self.kind not in self._KNOWN:
            raise ValueError(f"unknown scheme {self.kind!r}")
        if self.selected_count is not None and self.selected_count < 1:
            raise ValueError("selected_count must be positive")

    @classmethod
    def parse(cls, text, seed=0):
        """Parse 'proposed', 'tdma', 'rs' or 'rs:<count>'."""
        if ":" in text:
            kind, count = text.split(":", 1)
            return cls(kind.strip(), int(count), seed)
        return cls(text.strip(), None, seed)


def _infeasible_below(completion_time, t_star, scheme):
    err = InfeasibleError(
        f"{scheme}: completion time {completion_time:.6g} s is below the "
        f"scheme minimum {t_star:.6g} s")
    err.t_star = t_star
    return err


_TIME_LADDER = (1.0, 4.0, 16.0, 64.0, 256.0, 1024.0)


def _ladder_starts(scenario, coeffs, completion_time, b_init):
    """Feasible starting points over a geometric ladder of transmit times.

    The alternation freezes the transmit times at the first rate-limited
    minimum, so the fixed point is determined by the starting time scale;
    sweeping a geometric ladder (full-power minimal times up to near the
    latency window) and keeping the best fixed point stands in for the
    multi-start search the exhaustive baseline uses.  Powers follow from
    rate equality at each scale, the accuracy starts mid-window.
    """
    t0 = min_transmit_time(scenario, b_init, scenario.p_max)
    pr = time_opt.probe(scenario, coeffs, completion_time)
    cap = None
    if pr.feasible:
        window = transmit_window(coeffs, scenario.f_max, completion_time,
                                 pr.eta_star)
        cap = np.maximum(0.98 * window, t0)
    starts = []
    for sigma in _TIME_LADDER:
        t = sigma * t0 if cap is None else np.minimum(sigma * t0, cap)
        try:
            _, _, eta_lo, eta_hi = eta_bounds(coeffs, scenario.f_max,
                                              completion_time, t)
        except InfeasibleError:
            break
        p = rate_equality_power(scenario, t, b_init)
        if np.any(p > scenario.p_max * (1.0 + 1e-9)):
            continue
        starts.append(Allocation(t=t, b=b_init, f=scenario.f_max.copy(),
                                 p=np.minimum(p, scenario.p_max),
                                 eta=math.sqrt(eta_lo * eta_hi)))
        if cap is not None and np.all(sigma * t0 >= cap):
            break
    if pr.feasible:
        # the window itself, the sigma -> inf end of the ladder
        t = np.maximum(window, t0)
        p = rate_equality_power(scenario, t, b_init)
        if not np.any(p > scenario.p_max * (1.0 + 1e-9)):
            try:
                _, _, eta_lo, eta_hi = eta_bounds(coeffs, scenario.f_max,
                                                  completion_time, t)
                starts.append(Allocation(
                    t=t, b=b_init, f=scenario.f_max.copy(),
                    p=np.minimum(p, scenario.p_max),
                    eta=math.sqrt(eta_lo * eta_hi)))
            except InfeasibleError:
                pass
    return starts


def _candidate_inits(scenario, coeffs, completion_time, seed_alloc=None):
    """Start set for the joint optimizer: the time-scale ladder at an equal
    split, the probe at the deadline (maximal times, minimal bandwidths) and
    the completion-time solution (tight schedule)."""
    k = scenario.num_users
    b_eq = np.full(k, scenario.bandwidth / k)
    inits = _ladder_starts(scenario, coeffs, completion_time, b_eq)
    pr = time_opt.probe(scenario, coeffs, completion_time)
    if pr.feasible:
        inits.append(time_opt.allocation_at(scenario, coeffs, completion_time,
                                            pr, spread_leftover=False))
    if seed_alloc is not None:
        inits.append(seed_alloc)
    return inits


def _best_fixed_point(scenario, coeffs, completion_time, starts, tol):
    best = None
    for i, init in enumerate(starts):
        _, report = minimize_energy(scenario, coeffs, completion_time, init,
                                    tol=tol, coeffs=coeffs)
        if best is None or report.total_energy < best.total_energy:
            best = report
            best.notes["start"] = i
    best.notes["starts"] = len(starts)
    return best


def solve_proposed(scenario, fl, completion_time, tol=None, coeffs=None):
    """Joint optimizer: alternating minimization from every candidate start,
    keeping the best fixed point."""
    coeffs = coeffs or derive_coefficients(fl, scenario)
    t_star, seed_alloc = time_opt.min_completion_time(scenario, coeffs)
    if completion_time < t_star:
        raise _infeasible_below(completion_time, t_star, "proposed")
    starts = _candidate_inits(scenario, coeffs, completion_time, seed_alloc)
    best = _best_fixed_point(scenario, coeffs, completion_time, starts, tol)
    best.t_star = t_star
    return best


def _eb_iterate(scenario, coeffs, completion_time, init, tol):
    """Alternation with the bandwidth split pinned at the init's."""
    b = init.b
    f = init.f
    p = init.p
    alloc = None
    obj = math.inf
    trace = []
    converged = False
    iterations = 0
    for _ in range(tol.max_iter):
        iterations += 1
        t, eta = solve_step1(scenario, coeffs, completion_time, b, f, p)
        t, f_new, p_new = refine_times(scenario, coeffs, completion_time, b, eta)
        new_obj = energy_objective(scenario, coeffs, t, f_new, p_new, eta)
        if new_obj > obj:
            converged = True
            break
        f, p = f_new, p_new
        alloc = Allocation(t=t, b=b, f=f, p=p, eta=eta)
        trace.append(new_obj)
        if obj - new_obj <= tol.rel_tol * max(obj if math.isfinite(obj) else new_obj, 1e-300):
            converged = True
            obj = new_obj
            break
        obj = new_obj
    return alloc, trace, iterations, converged


def solve_eb_fdma(scenario, fl, completion_time, tol=None, coeffs=None):
    """Equal-bandwidth baseline: b_k = B/K, every other block optimized."""
    tol = tol or Tolerance(rel_tol=1e-8, max_iter=100)
    coeffs = coeffs or derive_coefficients(fl, scenario)
    k = scenario.num_users
    b_eq = np.full(k, scenario.bandwidth / k)
    starts = _ladder_starts(scenario, coeffs, completion_time, b_eq)
    if not starts:
        raise InfeasibleError(
            f"eb_fdma: equal split cannot deliver the upload in "
            f"{completion_time:.6g} s")
    best = None
    for init in starts:
        got = _eb_iterate(scenario, coeffs, completion_time, init, tol)
        if best is None or got[1][-1] < best[1][-1]:
            best = got
    alloc, trace, iterations, converged = best

    return SolveReport(
        scheme="eb_fdma",
        completion_time=completion_time,
        allocation=alloc,
        breakdown=evaluate(scenario, coeffs, alloc),
        objective_trace=trace,
        iterations=iterations,
        converged=converged,
        violations=check_feasible(scenario, coeffs, alloc, completion_time),
    )


def _fe_iterate(scenario, coeffs, completion_time, init, fixed_accuracy, tol):
    """Alternation with the accuracy pinned (clamped into the window)."""
    alloc = init
    obj = math.inf
    trace = []
    converged = False
    iterations = 0
    clamp_events = 0
    for _ in range(tol.max_iter):
        iterations += 1
        prob = build_step1_problem(scenario, coeffs, completion_time,
                                   alloc.b, alloc.f, alloc.p)
        eta = min(max(fixed_accuracy, prob.eta_lo), prob.eta_hi)
        if eta != fixed_accuracy:
            clamp_events += 1
        t = prob.t_min
        b, f, p = solve_step2(scenario, coeffs, completion_time, t, eta)
        t, f, p = refine_times(scenario, coeffs, completion_time, b, eta)
        new_obj = energy_objective(scenario, coeffs, t, f, p, eta)
        if new_obj > obj:
            converged = True
            break
        alloc = Allocation(t=t, b=b, f=f, p=p, eta=eta)
        trace.append(new_obj)
        if obj - new_obj <= tol.rel_tol * max(obj if math.isfinite(obj) else new_obj, 1e-300):
            converged = True
            obj = new_obj
            break
        obj = new_obj
    return alloc, trace, iterations, converged, clamp_events


def solve_fe_fdma(scenario, fl, completion_time, fixed_accuracy=0.5,
                  tol=None, coeffs=None):
    """Fixed-accuracy baseline: eta pinned (clamped into the feasible window
    when needed and flagged), bandwidth/power/frequency fully optimized."""
    tol = tol or Tolerance(rel_tol=1e-8, max_iter=100)
    coeffs = coeffs or derive_coefficients(fl, scenario)
    t_star, seed_alloc = time_opt.min_completion_time(scenario, coeffs)
    if completion_time < t_star:
        raise _infeasible_below(completion_time, t_star, "fe_fdma")

    best = None
    for init in _candidate_inits(scenario, coeffs, completion_time, seed_alloc):
        alloc, trace, iterations, converged, clamps = _fe_iterate(
            scenario, coeffs, completion_time, init, fixed_accuracy, tol)
        if best is None or trace[-1] < best[1][-1]:
            best = (alloc, trace, iterations, converged, clamps)
    alloc, trace, iterations, converged, clamps = best

    return SolveReport(
        scheme="fe_fdma",
        completion_time=completion_time,
        allocation=alloc,
        breakdown=evaluate(scenario, coeffs, alloc),
        objective_trace=trace,
        iterations=iterations,
        converged=converged,
        violations=check_feasible(scenario, coeffs, alloc, completion_time),
        t_star=t_star,
        notes={"clamp_events": clamps},
    )


def _tdma_coeffs(scenario, coeffs, f):
    """Single pseudo-user coefficients for the serialized uplink: the
    slowest per-round computation bounds everyone, and the transmit window
    must cover the summed transmit times."""
    worst = float(np.max(coeffs.cycle_coeff / f))
    return IterationCoefficients(coeffs.local_coeff, coeffs.global_coeff,
                                 np.array([worst]))


def _tdma_iterate(scenario, coeffs, completion_time, t, tol):
    """Alternation for the serialized uplink at frozen transmit times:
    the accuracy sees the summed times through a single pseudo user, the
    frequencies share the per-round compute budget left by them."""
    full_band = np.full(scenario.num_users, scenario.bandwidth)
    total_t = float(np.sum(t))
    p = rate_equality_power(scenario, t, full_band)
    if np.any(p > scenario.p_max * (1.0 + 1e-9)):
        raise InfeasibleError("tdma: rate equality exceeds the power cap")
    p = np.minimum(p, scenario.p_max)
    f = scenario.f_max.copy()

    alloc = None
    obj = math.inf
    trace = []
    converged = False
    iterations = 0
    for _ in range(tol.max_iter):
        iterations += 1
        pseudo = _tdma_coeffs(scenario, coeffs, f)
        _, _, eta_lo, eta_hi = eta_bounds(pseudo, np.array([1.0]),
                                          completion_time,
                                          np.array([total_t]))
        alpha1 = coeffs.global_coeff * float(
            np.sum(scenario.kappa * coeffs.cycle_coeff * f ** 2))
        alpha2 = coeffs.global_coeff * float(np.sum(t * p))
        if eta_lo == eta_hi:
            eta = eta_lo
        else:
            eta, _ = dinkelbach(alpha1, alpha2, eta_lo, eta_hi)
        budget = (completion_time * (1.0 - eta) / coeffs.global_coeff - total_t)
        f_new = coeffs.cycle_coeff * math.log2(1.0 / eta) / budget
        if np.any(f_new > scenario.f_max * (1.0 + 1e-9)):
            raise InfeasibleError("tdma: latency budget needs more CPU than available")
        f_new = np.minimum(f_new, scenario.f_max)
        new_obj = energy_objective(scenario, coeffs, t, f_new, p, eta)
        if new_obj > obj:
            converged = True
            break
        f = f_new
        alloc = Allocation(t=t, b=full_band, f=f, p=p, eta=eta)
        trace.append(new_obj)
        if obj - new_obj <= tol.rel_tol * max(obj if math.isfinite(obj) else new_obj, 1e-300):
            converged = True
            obj = new_obj
            break
        obj = new_obj
    return alloc, trace, iterations, converged


def solve_tdma(scenario, fl, completion_time, tol=None, coeffs=None):
    """Serialized-uplink baseline: everyone computes in parallel, then
    transmits in turn on the full band (noise floor N0 * B)."""
    tol = tol or Tolerance(rel_tol=1e-8, max_iter=100)
    coeffs = coeffs or derive_coefficients(fl, scenario)
    full_band = np.full(scenario.num_users, scenario.bandwidth)
    t0 = min_transmit_time(scenario, full_band, scenario.p_max)
    pseudo = _tdma_coeffs(scenario, coeffs, scenario.f_max)

    best = None
    for sigma in _TIME_LADDER:
        t = sigma * t0
        try:
            eta_bounds(pseudo, np.array([1.0]), completion_time,
                       np.array([float(np.sum(t))]))
        except InfeasibleError:
            break
        got = _tdma_iterate(scenario, coeffs, completion_time, t, tol)
        if best is None or got[1][-1] < best[1][-1]:
            best = got
    if best is None:
        raise InfeasibleError(
            f"tdma: serialized uplink cannot fit in {completion_time:.6g} s")
    alloc, trace, iterations, converged = best

    return SolveReport(
        scheme="tdma",
        completion_time=completion_time,
        allocation=alloc,
        breakdown=evaluate(scenario, coeffs, alloc),
        objective_trace=trace,
        iterations=iterations,
        converged=converged,
        violations=_check_tdma(scenario, coeffs, alloc, completion_time),
    )


def _check_tdma(scenario, coeffs, alloc, completion_time, slack=1e-9):
    """Constraint check under the serialized-uplink timing model."""
    violated = []
    rounds = coeffs.global_coeff / (1.0 - alloc.eta)
    compute = coeffs.cycle_coeff * math.log2(1.0 / alloc.eta) / alloc.f
    wall = rounds * (float(np.max(compute)) + float(np.sum(alloc.t)))
    if wall > completion_time * (1.0 + slack):
        violated.append("latency")
    bits = rates(scenario, alloc.b, alloc.p) * alloc.t
    if np.any(bits < scenario.upload_bits * (1.0 - slack)):
        violated.append("data")
    if np.any(alloc.b > scenario.bandwidth * (1.0 + slack)):
        violated.append("bandwidth")
    if np.any(alloc.f > scenario.f_max * (1.0 + slack)):
        violated.append("frequency")
    if np.any(alloc.p > scenario.p_max * (1.0 + slack)):
        violated.append("power")
    return violated


def solve_rs(scenario, fl, completion_time, selected_count=None, seed=0,
             mc_reps=1, tol=None, coeffs=None):
    """Random-selection baseline: selected_count users participate per round.

    Because every user must still contribute its full share of rounds, the
    schedule stretches by K/selected_count, squeezing each round's window.
    The shared plan (times, accuracy, frequencies) comes from a mean-field
    solve with the band scaled by K/selected_count; each realized round then
    re-splits the true band among the selected users.  Per-round energies
    are accumulated over the realized schedule, rescaled to the continuous
    round count, and averaged over mc_reps subset draws.
    """
    tol = tol or Tolerance(rel_tol=1e-8, max_iter=100)
    coeffs = coeffs or derive_coefficients(fl, scenario)
    k = scenario.num_users
    m = selected_count if selected_count is not None else (k + 1) // 2
    if not 1 <= m <= k:
        raise ValueError(f"selected_count must lie in [1, {k}]")
    scale = k / m
    coeffs_rs = coeffs.with_global_coeff(coeffs.global_coeff * scale)
    mean_field = scenario.with_bandwidth(scenario.bandwidth * scale)

    t_star, seed_alloc = time_opt.min_completion_time(mean_field, coeffs_rs)
    if completion_time < t_star:
        raise _infeasible_below(completion_time, t_star, "rs")
    starts = _candidate_inits(mean_field, coeffs_rs, completion_time, seed_alloc)
    base = _best_fixed_point(mean_field, coeffs_rs, completion_time, starts, tol)
    alloc = base.allocation

    rounds_real = coeffs_rs.global_coeff / (1.0 - alloc.eta)
    rounds = int(math.ceil(rounds_real))
    log_inv = math.log2(1.0 / alloc.eta)
    comp_round = scenario.kappa * coeffs_rs.cycle_coeff * log_inv * alloc.f ** 2

    comp_user = np.zeros(k)
    tx_user = np.zeros(k)
    violations = set()
    for rep in range(mc_reps):
        rng = np.random.default_rng(np.random.SeedSequence([seed, rep]))
        sel = np.sort(np.stack([rng.choice(k, size=m, replace=False)
                                for _ in range(rounds)]), axis=1)
        t_sel = np.broadcast_to(alloc.t[sel], sel.shape).copy()
        b_sel, p_sel, bad = _rounds_kkt(scenario, sel, t_sel)
        if np.any(bad):
            # stretch the selected users to their full transmit windows,
            # which minimizes their bandwidth floors at this accuracy
            window = transmit_window(coeffs_rs, scenario.f_max,
                                     completion_time, alloc.eta)
            t_sel[bad] = window[sel[bad]]
            b_fix, p_fix, still_bad = _rounds_kkt(scenario, sel[bad], t_sel[bad])
            if np.any(still_bad):
                raise InfeasibleError(
                    "rs: a selected subset cannot fit the band even at "
                    "full transmit windows")
            b_sel[bad], p_sel[bad] = b_fix, p_fix
        np.add.at(comp_user, sel, np.broadcast_to(comp_round[sel], sel.shape))
        np.add.at(tx_user, sel, t_sel * p_sel)
        if np.any(np.sum(b_sel, axis=1) > scenario.bandwidth * (1.0 + 1e-9)):
            violations.add("bandwidth")
        if np.any(p_sel > scenario.p_max[sel] * (1.0 + 1e-9)):
            violations.add("power")

    norm = (rounds_real / rounds) / mc_reps
    comp_user *= norm
    tx_user *= norm
    total = float(np.sum(comp_user) + np.sum(tx_user))

    compute_time = coeffs_rs.cycle_coeff * log_inv / alloc.f
    breakdown = EnergyTimeBreakdown(
        comp_energy=comp_user,
        tx_energy=tx_user,
        total_energy=total,
        per_user_completion=rounds_real * (compute_time + alloc.t),
        global_iters=rounds_real,
        local_iters=np.full(k, coeffs_rs.local_coeff * log_inv),
    )
    return SolveReport(
        scheme="rs",
        completion_time=completion_time,
        allocation=alloc,
        breakdown=breakdown,
        objective_trace=base.objective_trace,
        iterations=base.iterations,
        converged=base.converged,
        violations=sorted(violations),
        t_star=t_star,
        notes={"selected_count": m, "mc_reps": mc_reps,
               "realized_rounds": rounds},
    )


def _rounds_kkt(scenario, sel, t_sel, iters=60):
    """Bandwidth/power KKT of many independent rounds at once.

    sel and t_sel are (rounds, m) index/time arrays; every row gets its own
    dual price on the shared band.  Returns (b, p, bad) where bad marks rows
    whose bandwidth floors do not fit (left for the caller to repair).
    """
    ln2 = math.log(2.0)
    g = scenario.gains[sel]
    p_cap = scenario.p_max[sel]
    n0 = scenario.noise_psd
    s = scenario.upload_bits
    band = scenario.bandwidth

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        q = ln2 * n0 * s / (g * p_cap * t_sel)
        w = _lambert_wm1_clipped(-q * np.exp(-q))
        x = -(w + q)
        floor = np.where(q < 1.0, ln2 * s / (t_sel * x), np.inf)
        for _ in range(2):
            xb = ln2 * s / (t_sel * floor)
            exb = np.exp(xb)
            resid = n0 * floor / g * (exb - 1.0) - p_cap
            slope = n0 / g * (exb - 1.0 - xb * exb)
            floor = np.where(q < 1.0, floor - resid / slope, floor)
    bad = ~np.isfinite(floor).all(axis=1)
    bad |= np.nansum(np.where(np.isfinite(floor), floor, 0.0), axis=1) > band * (1.0 + 1e-9)
    safe_floor = np.where(np.isfinite(floor), floor, band)

    price_scale = g / (n0 * t_sel)
    state = {"x": None}

    def used(mu):
        # warm-started Newton on (x-1)e^x = mu*scale - 1 (see the 1-D kkt)
        c = mu[:, None] * price_scale
        if state["x"] is None:
            x = 1.0 + lambert_w0((c - 1.0) / math.e)
        else:
            x = state["x"]
        for _ in range(3):
            ex = np.exp(x)
            step = ((x - 1.0) * ex - (c - 1.0)) / (np.maximum(x, 1e-12) * ex)
            x = np.maximum(x - step, 1e-12)
        state["x"] = x
        b = ln2 * s / (t_sel * x)
        return np.sum(np.maximum(b, safe_floor), axis=1)

    x_eq = ln2 * s / (t_sel * (band / sel.shape[1]))
    ex = np.exp(x_eq)
    mu = np.median(t_sel * n0 / g * (x_eq * ex - ex + 1.0), axis=1)
    for _ in range(80):
        short = used(mu) < band
        if not np.any(short):
            break
        mu = np.where(short, 0.125 * mu, mu)
    mu_lo = mu
    mu_hi = mu.copy()
    for _ in range(80):
        over = used(mu_hi) > band
        if not np.any(over):
            break
        mu_hi = np.where(over, 8.0 * mu_hi, mu_hi)
    x_hi = state["x"]
    for _ in range(iters):
        mid = 0.5 * (mu_lo + mu_hi)
        too_much = used(mid) > band
        mu_lo = np.where(too_much, mid, mu_lo)
        keep = too_much[:, None]
        x_hi = np.where(keep, x_hi, state["x"])
        mu_hi = np.where(too_much, mu_hi, mid)
    # return the high end of the price bracket, evaluated by the same
    # iteration that judged it to under-fill the band, so the realized
    # split never exceeds it
    b = np.maximum(ln2 * s / (t_sel * x_hi), safe_floor)
    p = n0 * b / g * (np.exp2(s / (t_sel * b)) - 1.0)
    return b, p, bad


def _lambert_wm1_clipped(z):
    """Lower Lambert branch with arguments clipped into its domain; rows
    carrying out-of-domain entries are repaired by the caller."""
    z = np.minimum(np.asarray(z, dtype=float), -1e-300)
    return lambert_wm1(z)


def _bisect_time(feasible, tol=None, t_cap=2.0 ** 60):
    tol = tol or Tolerance(rel_tol=1e-6)
    t_hi = 1.0
    t_lo = 0.0
    while not feasible(t_hi):
        t_lo = t_hi
        t_hi *= 2.0
        if t_hi > t_cap:
            raise InfeasibleError("no feasible completion time below the cap")
    while (t_hi - t_lo) / t_hi > tol.rel_tol:
        mid = 0.5 * (t_lo + t_hi)
        if feasible(mid):
            t_hi = mid
        else:
            t_lo = mid
    return t_hi


def min_time_eb_fdma(scenario, coeffs, tol=None):
    """Smallest completion time the equal-bandwidth baseline can meet."""
    b = np.full(scenario.num_users, scenario.bandwidth / scenario.num_users)
    t_min = min_transmit_time(scenario, b, scenario.p_max)

    def feasible(completion_time):
        try:
            eta_bounds(coeffs, scenario.f_max, completion_time, t_min)
            return True
        except InfeasibleError:
            return False

    return _bisect_time(feasible, tol)


def min_time_fe_fdma(scenario, coeffs, fixed_accuracy=0.5, tol=None):
    """Smallest completion time with the local accuracy pinned."""

    def feasible(completion_time):
        window = transmit_window(coeffs, scenario.f_max, completion_time,
                                 fixed_accuracy)
        if np.any(window <= 0.0):
            return False
        demand = scenario.upload_bits / window
        cap = scenario.gains * scenario.p_max / (scenario.noise_psd * math.log(2.0))
        if np.any(demand >= cap):
            return False
        need = float(np.sum(time_opt.bandwidth_for_rate(scenario, demand)))
        return need <= scenario.bandwidth

    return _bisect_time(feasible, tol)


def min_time_tdma(scenario, coeffs, tol=None):
    """Smallest completion time under the serialized uplink."""
    full_band = np.full(scenario.num_users, scenario.bandwidth)
    t_min = min_transmit_time(scenario, full_band, scenario.p_max)
    total_t = float(np.sum(t_min))
    pseudo = _tdma_coeffs(scenario, coeffs, scenario.f_max)

    def feasible(completion_time):
        try:
            eta_bounds(pseudo, np.array([1.0]), completion_time,
                       np.array([total_t]))
            return True
        except InfeasibleError:
            return False

    return _bisect_time(feasible, tol)


def scheme_min_time(scenario, fl, scheme, tol=None, coeffs=None):
    """Minimum completion time of any scheme."""
    coeffs = coeffs or derive_coefficients(fl, scenario)
    if scheme.kind == "proposed":
        return time_opt.min_completion_time(scenario, coeffs, tol)[0]
    if scheme.kind == "eb_fdma":
        return min_time_eb_fdma(scenario, coeffs, tol)
    if scheme.kind == "fe_fdma":
        return min_time_fe_fdma(scenario, coeffs, tol=tol)
    if scheme.kind == "tdma":
        return min_time_tdma(scenario, coeffs, tol)
    if scheme.kind == "rs":
        k = scenario.num_users
        m = scheme.selected_count if scheme.selected_count is not None else (k + 1) // 2
        scale = k / m
        return time_opt.min_completion_time(
            scenario.with_bandwidth(scenario.bandwidth * scale),
            coeffs.with_global_coeff(coeffs.global_coeff * scale), tol)[0]
    raise ValueError(f"unknown scheme {scheme.kind!r}")


def solve_scheme(scenario, fl, scheme, completion_time, tol=None, coeffs=None):
    """Dispatch one scheme's energy solve at a given completion time."""
    if scheme.kind == "proposed":
        return solve_proposed(scenario, fl, completion_time, tol, coeffs)
    if scheme.kind == "eb_fdma":
        return solve_eb_fdma(scenario, fl, completion_time, tol, coeffs)
    if scheme.kind == "fe_fdma":
        return solve_fe_fdma(scenario, fl, completion_time, tol=tol, coeffs=coeffs)
    if scheme.kind == "tdma":
        return solve_tdma(scenario, fl, completion_time, tol, coeffs)
    if scheme.kind == "rs":
        return solve_rs(scenario, fl, completion_time,
                        selected_count=scheme.selected_count,
                        seed=scheme.seed, tol=tol, coeffs=coeffs)
    raise ValueError(f"unknown scheme {scheme.kind!r}")
