"""Executable federated training loop with a gradient-corrected local solver.

Each round the server broadcasts the (data-weighted) global gradient, every
user descends its corrected local objective to a target accuracy, and the
server averages the resulting steps.  The module also measures the local and
global iteration counts so the closed-form bounds used by the resource
optimizers can be checked against reality, estimates curvature constants
from data, partitions a sample pool across users, and ingests CSV datasets.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .model import DivergenceError
from .numerics import ConvergenceError


@dataclass(frozen=True)
class Sample:
    """One labelled sample: feature vector x and scalar target y."""

    x: np.ndarray
    y: float


@dataclass
class UserDataset:
    """Samples held by one user, stored as a design matrix and target vector."""

    x: np.ndarray  # (num_samples, dim)
    y: np.ndarray  # (num_samples,)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 2 or self.y.ndim != 1 or self.x.shape[0] != self.y.shape[0]:
            raise ValueError("x must be (n, d) and y must be (n,)")
        if self.x.shape[0] < 1:
            raise ValueError("a dataset needs at least one sample")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset entries must be finite")

    @classmethod
    def from_samples(cls, samples):
        return cls(np.stack([np.asarray(s.x, dtype=float) for s in samples]),
                   np.array([s.y for s in samples], dtype=float))

    @property
    def num_samples(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]


@dataclass(frozen=True)
class LossModel:
    """Loss family plus an optional proximal term for nonconvex objectives.

    kind is "linear_regression" (squared error) or "logistic_regression".
    When reg_strength > 0 the loss gains reg_strength * ||w - anchor||^2,
    which restores strong convexity round by round; the training loop moves
    the anchor to the current global model each round.
    """

    kind: str
    reg_strength: float = 0.0
    anchor: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("linear_regression", "logistic_regression"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.reg_strength < 0:
            raise ValueError("reg_strength must be nonnegative")


@dataclass
class TrainingTrace:
    """Per-round record of one training run.

    global_loss has one entry per completed round plus the starting loss;
    local_iters / measured_accuracy hold one list per round with per-user
    values; rounds_to_target is the first round meeting the global accuracy
    target, or None if it was never met.
    """

    global_loss: list = field(default_factory=list)
    local_iters: list = field(default_factory=list)
    measured_accuracy: list = field(default_factory=list)
    rounds_to_target: int = None
    xi_trace: list = field(default_factory=list)


@dataclass(frozen=True)
class DaneConfig:
    """Controls of the training loop.

    local_solver is "gd" or "sgd"; batch_size only applies to sgd.
    local_stop is ("accuracy", eta) to stop each local solve at the target
    accuracy, or ("iters", n) for a fixed iteration count.
    """

    fl_params: object
    local_solver: str = "gd"
    batch_size: int = None
    local_stop: tuple = ("accuracy", 0.5)
    max_rounds: int = 200
    seed: int = 0
    oracle_tol: float = 1e-10

    def __post_init__(self):
        if self.local_solver not in ("gd", "sgd"):
            raise ValueError("local_solver must be 'gd' or 'sgd'")
        if self.local_solver == "sgd" and (self.batch_size is None or self.batch_size < 1):
            raise ValueError("sgd needs a positive batch_size")
        kind, value = self.local_stop
        if kind not in ("accuracy", "iters"):
            raise ValueError("local_stop kind must be 'accuracy' or 'iters'")
        if kind == "accuracy" and not 0.0 < value < 1.0:
            raise ValueError("accuracy target must lie in (0, 1)")


def loss_and_grad(model, w, data):
    """Mean per-sample loss of one user and its gradient in w.

    Squared error 0.5 (x'w - y)^2 for linear regression; the logistic form
    is -log(1 + exp(-y x'w)) with the matching analytic gradient.  The
    proximal term is added when the model carries one.
    """
    w = np.asarray(w, dtype=float)
    if w.shape[0] != data.dim:
        raise ValueError(f"model dim {w.shape[0]} != data dim {data.dim}")
    n = data.num_samples
    if model.kind == "linear_regression":
        resid = data.x @ w - data.y
        value = 0.5 * float(resid @ resid) / n
        grad = data.x.T @ resid / n
    else:
        z = data.y * (data.x @ w)
        value = -float(np.sum(np.logaddexp(0.0, -z))) / n
        sig = np.exp(-np.logaddexp(0.0, z))  # 1 / (1 + e^z), overflow-safe
        grad = data.x.T @ (sig * data.y) / n
    if model.reg_strength > 0.0 and model.anchor is not None:
        diff = w - model.anchor
        value += model.reg_strength * float(diff @ diff)
        grad = grad + 2.0 * model.reg_strength * diff
    return value, grad


def global_loss(model, datasets, w):
    """Data-weighted average of the per-user losses."""
    sizes = np.array([d.num_samples for d in datasets], dtype=float)
    weights = sizes / sizes.sum()
    return float(sum(wt * loss_and_grad(model, w, d)[0]
                     for wt, d in zip(weights, datasets)))


def global_gradient(model, datasets, w):
    """Data-weighted average of the per-user gradients."""
    sizes = np.array([d.num_samples for d in datasets], dtype=float)
    weights = sizes / sizes.sum()
    grad = np.zeros_like(np.asarray(w, dtype=float))
    for wt, d in zip(weights, datasets):
        grad += wt * loss_and_grad(model, w, d)[1]
    return grad


def local_surrogate(model, data, w_round, broadcast_grad, local_grad, xi, h):
    """Gradient-corrected local objective and its gradient in the step h.

    Value is the shifted local loss minus the correction (local gradient at
    the round start minus xi times the broadcast gradient) applied to h.
    """
    value, shifted_grad = loss_and_grad(model, np.asarray(w_round) + np.asarray(h), data)
    correction = np.asarray(local_grad) - xi * np.asarray(broadcast_grad)
    return value - float(correction @ h), shifted_grad - correction


def solve_local(surrogate, dim, step_size, stop, oracle_tol=1e-10,
                max_iter=2_000_000):
    """Gradient descent on a local surrogate from the zero step.

    surrogate maps h to (value, gradient).  With stop = ("accuracy", eta)
    the loop ends once the remaining suboptimality is at most eta times the
    initial one, measured against a high-precision reference solve (gradient
    norm driven below oracle_tol).  With stop = ("iters", n) it runs exactly
    n steps.  Returns (h, iterations, measured accuracy ratio).
    """
    kind, target = stop
    h = np.zeros(dim)
    if kind == "iters":
        for _ in range(int(target)):
            h = h - step_size * surrogate(h)[1]
        return h, int(target), math.nan

    h_star = _descend_to_gradient(surrogate, dim, step_size, oracle_tol, max_iter)
    best = surrogate(h_star)[0]
    start = surrogate(h)[0]
    denom = start - best
    if denom <= 0.0:
        return h, 0, 0.0
    iters = 0
    ratio = 1.0
    while True:
        value, grad = surrogate(h)
        ratio = (value - best) / denom
        if ratio <= target:
            return h, iters, ratio
        if iters >= max_iter:
            raise ConvergenceError("local solve hit its iteration cap")
        h = h - step_size * grad
        iters += 1


def _descend_to_gradient(surrogate, dim, step_size, tol, max_iter):
    h = np.zeros(dim)
    for _ in range(max_iter):
        grad = surrogate(h)[1]
        if float(np.linalg.norm(grad)) <= tol:
            return h
        h = h - step_size * grad
    raise ConvergenceError("reference local solve did not reach the gradient target")


def reference_optimum(model, datasets, tol=1e-12, max_iter=500_000):
    """Global minimizer and minimum of the training objective.

    Linear regression is solved by least squares on the weighted pooled
    system; anything else falls back to long-run gradient descent.
    """
    dim = datasets[0].dim
    sizes = np.array([d.num_samples for d in datasets], dtype=float)
    weights = sizes / sizes.sum()
    if model.kind == "linear_regression" and model.reg_strength == 0.0:
        # stack sqrt(weight / n_k) X_k so the normal equations match the
        # weighted mean of per-user mean losses
        rows = [np.sqrt(wt / d.num_samples) * d.x for wt, d in zip(weights, datasets)]
        rhs = [np.sqrt(wt / d.num_samples) * d.y for wt, d in zip(weights, datasets)]
        a = np.vstack(rows)
        b = np.concatenate(rhs)
        w, *_ = np.linalg.lstsq(a, b, rcond=None)
    else:
        w = np.zeros(dim)
        for _ in range(max_iter):
            grad = global_gradient(model, datasets, w)
            if float(np.linalg.norm(grad)) <= tol:
                break
            w = w - 0.5 * grad
    return w, global_loss(model, datasets, w)


def run_dane(datasets, model, config):
    """Train the shared model: broadcast gradient, local solves, averaging.

    Stops once the global suboptimality falls to eps0 times the initial one
    (reference optimum computed up front) or at max_rounds.  Raises
    DivergenceError after five straight rounds of increasing loss.  When the
    loss stalls for three rounds the correction weight xi is halved.
    """
    dims = {d.dim for d in datasets}
    if len(dims) != 1:
        raise ValueError("all users must share one model dimension")
    dim = dims.pop()
    fl = config.fl_params
    rng = np.random.default_rng(config.seed)

    w = np.zeros(dim)
    trace = TrainingTrace()
    convex_target = model.reg_strength == 0.0
    if convex_target:
        _, f_best = reference_optimum(model, datasets)
    else:
        f_best = None

    round_model = _anchored(model, w)
    f_now = global_loss(round_model, datasets, w)
    trace.global_loss.append(f_now)
    target = None
    if convex_target:
        target = f_best + fl.eps0 * (f_now - f_best)
        if f_now <= target:
            trace.rounds_to_target = 0
            return trace

    xi = fl.xi
    increase_streak = 0
    stall_streak = 0
    for rnd in range(config.max_rounds):
        round_model = _anchored(model, w)
        local_grads = [loss_and_grad(round_model, w, d)[1] for d in datasets]
        sizes = np.array([d.num_samples for d in datasets], dtype=float)
        weights = sizes / sizes.sum()
        broadcast = sum(wt * g for wt, g in zip(weights, local_grads))

        steps = []
        iters_round = []
        acc_round = []
        for d, g_local in zip(datasets, local_grads):
            solver_data = _round_data(d, config, rng)

            def surrogate(h, _d=solver_data, _g=g_local):
                return local_surrogate(round_model, _d, w, broadcast, _g, xi, h)

            h, iters, acc = solve_local(surrogate, dim, fl.step_size,
                                        config.local_stop, config.oracle_tol)
            steps.append(h)
            iters_round.append(iters)
            acc_round.append(acc)

        w = w + sum(steps) / len(steps)
        f_new = global_loss(_anchored(model, w), datasets, w)
        trace.global_loss.append(f_new)
        trace.local_iters.append(iters_round)
        trace.measured_accuracy.append(acc_round)
        trace.xi_trace.append(xi)

        if f_new > f_now:
            increase_streak += 1
            if increase_streak >= 5:
                raise DivergenceError(
                    "global loss increased for 5 straight rounds "
                    "(correction weight xi is likely too large)")
        else:
            increase_streak = 0
        if f_new >= f_now - 1e-12 * abs(f_now):
            stall_streak += 1
            if stall_streak >= 3:
                xi *= 0.5
                stall_streak = 0
        else:
            stall_streak = 0
        f_now = f_new

        if convex_target and f_new <= target:
            trace.rounds_to_target = rnd + 1
            break
    return trace


def _anchored(model, w):
    if model.reg_strength > 0.0:
        return replace(model, anchor=np.array(w))
    return model


def _round_data(dataset, config, rng):
    """Dataset view one local solve runs on: everything for GD, a fresh
    without-replacement batch for SGD."""
    if config.local_solver == "gd" or config.batch_size is None:
        return dataset
    n = dataset.num_samples
    batch = min(config.batch_size, n)
    idx = rng.permutation(n)[:batch]
    return UserDataset(dataset.x[idx], dataset.y[idx])


def estimate_curvature(datasets, model, tol=1e-8, max_iter=10_000):
    """Curvature bounds (lipschitz, strong convexity) measured from data.

    Linear regression: extreme eigenvalues of the per-user Gram matrices
    X'X / n via power iteration (shifted for the smallest).  Logistic: a
    quarter of the largest Gram eigenvalue bounds the Hessian; the strong
    convexity reported is the configured proximal strength.  Warns when the
    data is (numerically) rank deficient.
    """
    lip = 0.0
    gamma = math.inf
    for d in datasets:
        gram = d.x.T @ d.x / d.num_samples
        top = _power_iteration(gram, tol, max_iter)
        if model.kind == "logistic_regression":
            lip = max(lip, 0.25 * top)
            continue
        lip = max(lip, top)
        # smallest eigenvalue by inverting the spectrum around the top
        shifted = top * np.eye(gram.shape[0]) - gram
        gamma = min(gamma, top - _power_iteration(shifted, tol, max_iter))
    if model.kind == "logistic_regression":
        gamma = model.reg_strength
    if gamma < 1e-12:
        warnings.warn("data is rank deficient (strong convexity ~ 0); "
                      "enable the proximal regularization", RuntimeWarning)
    return lip, gamma


def _power_iteration(mat, tol, max_iter):
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(mat.shape[0])
    v /= np.linalg.norm(v)
    value = 0.0
    for _ in range(max_iter):
        u = mat @ v
        norm = float(np.linalg.norm(u))
        if norm == 0.0:
            return 0.0
        v = u / norm
        new_value = float(v @ mat @ v)
        if abs(new_value - value) <= tol * max(1.0, abs(new_value)):
            return new_value
        value = new_value
    return value


def partition(pool, num_users, mode="iid", shards_per_user=2, shard_size=None,
              seed=0):
    """Split a sample pool across users.

    iid: shuffle, then cut into num_users equal parts (the pool size must
    divide evenly).  noniid: sort by target value, cut into shards of
    shard_size, deal shards_per_user random shards to each user, so most
    users only see a narrow target range.
    """
    if isinstance(pool, (list, tuple)):
        pool = UserDataset.from_samples(pool)
    rng = np.random.default_rng(seed)
    n = pool.num_samples
    if num_users < 1:
        raise ValueError("need at least one user")
    if mode == "iid":
        if n % num_users != 0:
            raise ValueError(f"{n} samples do not split evenly across "
                             f"{num_users} users")
        order = rng.permutation(n)
        per = n // num_users
        return [UserDataset(pool.x[order[i * per:(i + 1) * per]],
                            pool.y[order[i * per:(i + 1) * per]])
                for i in range(num_users)]
    if mode == "noniid":
        if shard_size is None:
            raise ValueError("noniid partitioning needs shard_size")
        total_shards = n // shard_size
        if num_users * shards_per_user > total_shards:
            raise ValueError(
                f"{num_users} users x {shards_per_user} shards exceed the "
                f"{total_shards} shards of size {shard_size} available")
        order = np.argsort(pool.y, kind="stable")
        shard_ids = rng.permutation(total_shards)
        out = []
        for u in range(num_users):
            mine = shard_ids[u * shards_per_user:(u + 1) * shards_per_user]
            rows = np.concatenate([order[s * shard_size:(s + 1) * shard_size]
                                   for s in mine])
            out.append(UserDataset(pool.x[rows], pool.y[rows]))
        return out
    raise ValueError(f"unknown partition mode {mode!r}")


def make_regression_pool(num_samples, dim, noise=0.1, seed=0, spread=0.0):
    """Synthetic linear-regression pool with a planted parameter vector.

    spread > 0 stretches the feature covariance to worsen conditioning.
    """
    rng = np.random.default_rng(seed)
    scales = np.exp(spread * rng.standard_normal(dim)) if spread > 0 else np.ones(dim)
    x = rng.standard_normal((num_samples, dim)) * scales
    w_true = rng.standard_normal(dim)
    y = x @ w_true + noise * rng.standard_normal(num_samples)
    return UserDataset(x, y)


def load_csv(path, normalize=False, header="auto"):
    """Load a dataset from CSV: one sample per row, features then target.

    header may be True, False or "auto" (skip the first row when it does
    not parse as numbers).  normalize applies per-feature min-max scaling.
    Raises ValueError with row/column context on malformed input.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for i, row in enumerate(reader):
            if not row or all(not c.strip() for c in row):
                continue
            if i == 0 and header in (True, "auto"):
                try:
                    [float(c) for c in row]
                except ValueError:
                    continue  # treat as header line
                if header is True:
                    continue
            parsed = []
            for j, cell in enumerate(row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: row {i + 1}, column {j + 1}: "
                        f"cannot parse {cell!r} as a number") from None
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: inconsistent row lengths {sorted(widths)}")
    if widths.pop() < 2:
        raise ValueError(f"{path}: rows need at least one feature and a target")
    data = np.asarray(rows, dtype=float)
    x, y = data[:, :-1], data[:, -1]
    if normalize:
        lo = x.min(axis=0)
        span = x.max(axis=0) - lo
        span[span == 0.0] = 1.0
        x = (x - lo) / span
    return UserDataset(x, y)
