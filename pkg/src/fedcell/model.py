"""Domain types for the wireless FL cell and the closed-form energy/time model.

All quantities are strict SI: Hz, W, J, s, bits, CPU cycles.  dB and dBm
values are converted at the configuration boundary (see harness); nothing in
here knows about decibels.
"""

import math
from dataclasses import dataclass, field

import numpy as np


class InfeasibleError(RuntimeError):
    """A solver (sub)problem has no feasible point for the given inputs."""


class DivergenceError(RuntimeError):
    """The FL training loop increased its loss for too many rounds."""


@dataclass(frozen=True)
class UserParams:
    """Per-user channel and compute constants.

    gain is the linear power gain of the uplink channel, cycles_per_sample
    the CPU work per data sample, f_max the CPU frequency cap in Hz and
    p_max the average transmit power cap in W.
    """

    gain: float
    cycles_per_sample: float
    samples: int
    f_max: float
    p_max: float

    def __post_init__(self):
        for name in ("gain", "cycles_per_sample", "samples", "f_max", "p_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"UserParams.{name} must be positive")


@dataclass(frozen=True)
class NetworkScenario:
    """One cell: K users plus the shared radio constants.

    bandwidth is the total uplink bandwidth B in Hz, noise_psd the noise
    power spectral density in W/Hz, upload_bits the size of one model
    upload, kappa the effective switched capacitance of the user CPUs.
    """

    users: tuple
    bandwidth: float
    noise_psd: float
    upload_bits: float
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        if len(self.users) < 1:
            raise ValueError("scenario needs at least one user")
        for name in ("bandwidth", "noise_psd", "upload_bits", "kappa"):
            if getattr(self, name) <= 0:
                raise ValueError(f"NetworkScenario.{name} must be positive")

    @property
    def num_users(self):
        return len(self.users)

    @property
    def gains(self):
        return np.array([u.gain for u in self.users])

    @property
    def cycles(self):
        return np.array([u.cycles_per_sample for u in self.users])

    @property
    def samples(self):
        return np.array([float(u.samples) for u in self.users])

    @property
    def f_max(self):
        return np.array([u.f_max for u in self.users])

    @property
    def p_max(self):
        return np.array([u.p_max for u in self.users])

    def subset(self, indices):
        """Scenario restricted to the given user indices (same cell constants)."""
        picked = tuple(self.users[i] for i in indices)
        return NetworkScenario(picked, self.bandwidth, self.noise_psd,
                               self.upload_bits, self.kappa)

    def with_bandwidth(self, bandwidth):
        return NetworkScenario(self.users, bandwidth, self.noise_psd,
                               self.upload_bits, self.kappa)


@dataclass(frozen=True)
class FlParams:
    """Learning-side constants of the training task.

    lipschitz and strong_convexity are the curvature bounds of the per-user
    losses, xi the surrogate correction weight, step_size the local GD step,
    eps0 the target global accuracy.  eta_lo/eta_hi bound the local accuracy
    search box.
    """

    lipschitz: float
    strong_convexity: float
    xi: float
    step_size: float
    eps0: float
    eta_lo: float = 1e-6
    eta_hi: float = 1.0 - 1e-6

    def __post_init__(self):
        if not 0 < self.strong_convexity <= self.lipschitz:
            raise ValueError("need 0 < strong_convexity <= lipschitz")
        if not 0 < self.xi <= self.strong_convexity / self.lipschitz * (1 + 1e-12):
            raise ValueError("need 0 < xi <= strong_convexity / lipschitz")
        if not 0 < self.step_size < 2.0 / self.lipschitz:
            raise ValueError("need 0 < step_size < 2 / lipschitz")
        if not 0 < self.eps0 < 1:
            raise ValueError("need 0 < eps0 < 1")
        if not 0 < self.eta_lo <= self.eta_hi < 1:
            raise ValueError("accuracy bounds must satisfy 0 < lo <= hi < 1")


@dataclass(frozen=True)
class IterationCoefficients:
    """Iteration-count coefficients derived from FlParams.

    local_coeff * log2(1/eta) approximates the local GD iterations needed
    for local accuracy eta; global_coeff / (1 - eta) approximates the global
    rounds to accuracy eps0; cycle_coeff[k] * log2(1/eta) is the CPU cycle
    count of one round at user k.
    """

    local_coeff: float
    global_coeff: float
    cycle_coeff: np.ndarray

    def __post_init__(self):
        if self.local_coeff <= 0 or self.global_coeff <= 0:
            raise ValueError("iteration coefficients must be positive")
        if np.any(np.asarray(self.cycle_coeff) <= 0):
            raise ValueError("cycle coefficients must be positive")

    def with_global_coeff(self, value):
        return IterationCoefficients(self.local_coeff, value, self.cycle_coeff)


def derive_coefficients(fl, scenario):
    """IterationCoefficients from the learning constants and the user data sizes."""
    denom = (2.0 - fl.lipschitz * fl.step_size) * fl.step_size * fl.strong_convexity
    local = 2.0 / denom
    glob = (2.0 * fl.lipschitz ** 2 / (fl.strong_convexity ** 2 * fl.xi)
            * math.log(1.0 / fl.eps0))
    cycle = local * scenario.cycles * scenario.samples
    return IterationCoefficients(local, glob, cycle)


@dataclass(frozen=True)
class Allocation:
    """One resource-allocation decision: transmit times t (s), bandwidths b
    (Hz), CPU frequencies f (Hz), transmit powers p (W) and the shared local
    accuracy eta."""

    t: np.ndarray
    b: np.ndarray
    f: np.ndarray
    p: np.ndarray
    eta: float

    def __post_init__(self):
        for name in ("t", "b", "f", "p"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
        k = self.t.shape[0]
        if not (self.b.shape[0] == self.f.shape[0] == self.p.shape[0] == k):
            raise ValueError("allocation vectors must share one length")
        for name in ("t", "b", "f", "p"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"Allocation.{name} must be nonnegative")
        if not 0.0 < self.eta < 1.0:
            raise ValueError("Allocation.eta must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class EnergyTimeBreakdown:
    """Energy and time totals of one allocation over the whole training run.

    comp_energy/tx_energy are per-user totals in J (global rounds included),
    per_user_completion the wall-clock seconds each user needs, global_iters
    the (real-valued) round count and local_iters the per-user local
    iteration counts per round.
    """

    comp_energy: np.ndarray
    tx_energy: np.ndarray
    total_energy: float
    per_user_completion: np.ndarray
    global_iters: float
    local_iters: np.ndarray


@dataclass
class SolveReport:
    """Diagnostics of one solver run, shared by all schemes."""

    scheme: str
    completion_time: float
    allocation: Allocation
    breakdown: EnergyTimeBreakdown
    objective_trace: list
    iterations: int
    converged: bool
    violations: list
    t_star: float = None
    notes: dict = field(default_factory=dict)

    @property
    def total_energy(self):
        return self.breakdown.total_energy


def local_iterations(eta, coeffs):
    """Local GD iterations (real-valued) needed for local accuracy eta."""
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie strictly inside (0, 1)")
    return coeffs.local_coeff * math.log2(1.0 / eta)


def global_iterations(eta, coeffs):
    """Global rounds (real-valued) needed for the target global accuracy."""
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie strictly inside (0, 1)")
    return coeffs.global_coeff / (1.0 - eta)


def comp_energy(user, f, iters, kappa):
    """Computation energy of one user over `iters` local iterations at CPU
    frequency f: kappa * iters * cycles * f^2."""
    if f <= 0:
        raise ValueError("CPU frequency must be positive")
    return kappa * iters * user.cycles_per_sample * user.samples * f * f


def achievable_rate(user, b, p, noise_psd):
    """Shannon uplink rate b * log2(1 + g p / (N0 b)) in bits/s."""
    if b <= 0:
        raise ValueError("bandwidth must be positive")
    if p < 0:
        raise ValueError("power must be nonnegative")
    return b * math.log2(1.0 + user.gain * p / (noise_psd * b))


def tx_energy(t, p):
    """Transmit energy t * p in J."""
    if t < 0 or p < 0:
        raise ValueError("time and power must be nonnegative")
    return t * p


def rates(scenario, b, p):
    """Vectorized Shannon rates of all users, in bits/s."""
    b = np.asarray(b, dtype=float)
    p = np.asarray(p, dtype=float)
    snr = scenario.gains * p / (scenario.noise_psd * b)
    return b * np.log2(1.0 + snr)


def transmit_window(coeffs, f, completion_time, eta):
    """Largest transmit time per round compatible with the latency budget.

    Rearranges the per-user latency constraint at accuracy eta and CPU
    frequency f: window = (1-eta)T/a - (per-round compute time).  Concave in
    eta, equal to 0 at eta = 1, -inf as eta -> 0+.
    """
    f = np.asarray(f, dtype=float)
    with np.errstate(divide="ignore"):
        log_eta = np.log2(eta)
    return ((1.0 - eta) * completion_time / coeffs.global_coeff
            + coeffs.cycle_coeff * log_eta / f)


def evaluate(scenario, fl, alloc):
    """Energy and time breakdown of an allocation under the iteration model.

    fl may be FlParams or ready-made IterationCoefficients.
    """
    coeffs = fl if isinstance(fl, IterationCoefficients) else derive_coefficients(fl, scenario)
    rounds = global_iterations(alloc.eta, coeffs)
    per_user_local = np.full(scenario.num_users, local_iterations(alloc.eta, coeffs))
    log_inv = math.log2(1.0 / alloc.eta)
    comp_round = scenario.kappa * coeffs.cycle_coeff * log_inv * alloc.f ** 2
    tx_round = alloc.t * alloc.p
    comp_total = rounds * comp_round
    tx_total = rounds * tx_round
    total = float(np.sum(comp_total + tx_total))
    with np.errstate(divide="ignore"):
        compute_time = np.where(alloc.f > 0,
                                coeffs.cycle_coeff * log_inv / np.where(alloc.f > 0, alloc.f, 1.0),
                                np.inf if log_inv > 0 else 0.0)
    completion = rounds * (compute_time + alloc.t)
    return EnergyTimeBreakdown(
        comp_energy=comp_total,
        tx_energy=tx_total,
        total_energy=total,
        per_user_completion=completion,
        global_iters=rounds,
        local_iters=per_user_local,
    )


def check_feasible(scenario, fl, alloc, completion_time, slack=1e-9):
    """Names of the constraints an allocation violates beyond relative slack.

    Constraint names: latency, data, bandwidth, frequency, power, accuracy,
    nonneg.  An empty list means the allocation is feasible.
    """
    coeffs = fl if isinstance(fl, IterationCoefficients) else derive_coefficients(fl, scenario)
    violated = []

    eta_ok = 0.0 < alloc.eta < 1.0
    if not eta_ok:
        violated.append("accuracy")

    if (np.any(alloc.t < 0) or np.any(alloc.b < 0)
            or np.any(alloc.f < 0) or np.any(alloc.p < 0)):
        violated.append("nonneg")

    if eta_ok:
        rounds = global_iterations(alloc.eta, coeffs)
        log_inv = math.log2(1.0 / alloc.eta)
        with np.errstate(divide="ignore"):
            compute_time = coeffs.cycle_coeff * log_inv / np.where(alloc.f > 0, alloc.f, np.nan)
        compute_time = np.where(np.isnan(compute_time),
                                np.where(log_inv > 0, np.inf, 0.0), compute_time)
        completion = rounds * (compute_time + alloc.t)
        if np.any(completion > completion_time * (1.0 + slack)):
            violated.append("latency")

    with np.errstate(divide="ignore", invalid="ignore"):
        r = rates(scenario, np.where(alloc.b > 0, alloc.b, np.nan), alloc.p)
    bits = np.where(np.isnan(r), 0.0, r) * alloc.t
    if np.any(bits < scenario.upload_bits * (1.0 - slack)):
        violated.append("data")

    if float(np.sum(alloc.b)) > scenario.bandwidth * (1.0 + slack):
        violated.append("bandwidth")
    if np.any(alloc.f > scenario.f_max * (1.0 + slack)):
        violated.append("frequency")
    if np.any(alloc.p > scenario.p_max * (1.0 + slack)):
        violated.append("power")
    return violated
