"""Local SGD with explicitly constructed biased stochastic gradients, and
closed-form evaluators for the strongly-convex and nonconvex error bounds.

The gradient oracle realizes a per-client bias of exactly the scheduled
squared norm through a fixed family of unit directions that sums to zero
over the cohort, plus zero-mean noise with second moment at most
M * ||grad + bias||^2 + sigma^2. Monte-Carlo verification averages many
simulated trajectories and checks them against the evaluated bound; the
bounds are deterministic upper bounds, so a failure indicates a bug rather
than bad luck.

Index conventions: a schedule matrix has shape (T+1, J+1); one round runs
local steps j = 0..J. The simulators execute rounds t = 0..T-1 (so the
measured endpoint is the round-T starting average), while the convex bound
consumes rows 1..T of the schedules and the nonconvex bound rows 0..T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .errors import ConfigurationError


class BiasKind(Enum):
    CLIENT_BASED = "client"  # grows across rounds, constant within a round
    DATA_BASED = "data"  # grows within rounds, continuous at round boundaries


@dataclass
class BiasSchedule:
    kind: BiasKind
    values: np.ndarray  # (T+1, J+1) nonnegative squared-norm caps


def make_bias_schedule(
    kind: BiasKind, T: int, J: int, b_start: float, b_end: float
) -> BiasSchedule:
    """Linear bias growth from b_start to b_end over the (t, j) grid."""
    if not 0 <= b_start < b_end:
        raise ValueError("need 0 <= b_start < b_end")
    if kind is BiasKind.CLIENT_BASED:
        if T < 1:
            raise ValueError("client-based schedule needs T >= 1")
        rows = b_start + (b_end - b_start) * np.arange(T + 1) / T
        values = np.repeat(rows[:, None], J + 1, axis=1)
    else:
        if J < 1:
            raise ValueError("data-based schedule needs J >= 1")
        flat_max = (T + 1) * (J + 1) - 1
        values = (
            b_start + (b_end - b_start) * np.arange(flat_max + 1) / flat_max
        ).reshape(T + 1, J + 1)
        for t in range(1, T + 1):
            values[t, 0] = values[t - 1, J]
    return BiasSchedule(kind=kind, values=values)


def validate_bias_schedule(schedule: BiasSchedule) -> None:
    v = schedule.values
    if v.ndim != 2 or np.any(v < 0):
        raise AssertionError("bias values must be a nonnegative (T+1, J+1) matrix")
    T = v.shape[0] - 1
    if schedule.kind is BiasKind.CLIENT_BASED:
        if np.any(v.max(axis=1) != v.min(axis=1)):
            raise AssertionError("client-based caps must be constant within a round")
        if np.any(np.diff(v[:, 0]) <= 0):
            raise AssertionError("client-based caps must strictly increase across rounds")
    else:
        if np.any(np.diff(v, axis=1) <= 0):
            raise AssertionError("data-based caps must strictly increase within a round")
        for t in range(T):
            if v[t, -1] != v[t + 1, 0]:
                raise AssertionError("data-based caps must be continuous across rounds")


def zero_sum_directions(num_clients: int, dim: int) -> np.ndarray:
    """Unit-norm direction per client whose running sum cancels exactly in
    floating point: an equilateral planar triple when the count is odd,
    then +/- basis-vector pairs."""
    dirs = np.zeros((num_clients, dim))
    if num_clients == 1:
        return dirs
    i = 0
    axis = 0
    if num_clients % 2 == 1:
        if dim < 2:
            raise ConfigurationError("odd cohorts need dimension >= 2 for zero-sum directions")
        s = math.sqrt(3.0) / 2.0
        dirs[0, 0] = 1.0
        dirs[1, 0], dirs[1, 1] = -0.5, s
        dirs[2, 0], dirs[2, 1] = -0.5, -s
        i, axis = 3, 2 % dim
    while i < num_clients:
        a = axis % dim
        dirs[i, a] = 1.0
        dirs[i + 1, a] = -1.0
        i += 2
        axis += 1
    return dirs


@dataclass
class BiasedGradOracle:
    """Gradient oracle g = grad(theta) + bias_k + noise with a zero-sum,
    norm-capped bias per client and relative-plus-additive noise."""

    grad_fn: Callable[[np.ndarray], np.ndarray]
    bias_values: np.ndarray  # (T+1, J+1) squared-norm caps
    directions: np.ndarray  # (num_clients, dim) zero-sum unit family
    rel_var: float = 0.0  # M: relative variance coefficient
    sigma: float = 0.0  # additive noise scale

    @property
    def num_clients(self) -> int:
        return self.directions.shape[0]


def biased_grad(
    oracle: BiasedGradOracle,
    k: int,
    theta: np.ndarray,
    t: int,
    j: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """One stochastic gradient draw for client k at local step (t, j)."""
    g = oracle.grad_fn(theta)
    cap = float(oracle.bias_values[t, j])
    if cap > 0:
        if oracle.num_clients < 2:
            raise ConfigurationError("zero-sum bias needs a cohort of at least 2 clients")
        g = g + math.sqrt(cap) * oracle.directions[k]
    if oracle.rel_var > 0 or oracle.sigma > 0:
        dim = g.shape[0]
        z1 = rng.standard_normal(dim) / math.sqrt(dim)
        z2 = rng.standard_normal(dim) / math.sqrt(dim)
        g = g + math.sqrt(oracle.rel_var) * float(np.linalg.norm(g)) * z1 + oracle.sigma * z2
    return g


@dataclass
class ConvexProblem:
    """Quadratic 0.5 (theta - theta*)^T A (theta - theta*) with spectrum
    inside [mu, L]."""

    matrix: np.ndarray
    theta_star: np.ndarray
    mu: float
    L: float

    def __post_init__(self):
        if self.mu <= 0 or self.mu > self.L:
            raise ConfigurationError("need 0 < mu <= L")

    def value(self, theta: np.ndarray) -> float:
        d = theta - self.theta_star
        return 0.5 * float(d @ self.matrix @ d)

    def grad(self, theta: np.ndarray) -> np.ndarray:
        return self.matrix @ (theta - self.theta_star)


def make_quadratic(dim: int, mu: float, L: float, seed: int = 0) -> ConvexProblem:
    """Random-rotation quadratic with eigenvalues spread linearly in [mu, L]."""
    rng = np.random.default_rng(seed)
    eigs = np.linspace(mu, L, dim)
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    a = q @ np.diag(eigs) @ q.T
    a = 0.5 * (a + a.T)
    return ConvexProblem(matrix=a, theta_star=rng.standard_normal(dim), mu=mu, L=L)


@dataclass
class NonconvexProblem:
    """Separable log-cosh objective: smooth, bounded gradient, lower bounded."""

    dim: int
    offset: float = 0.0

    @property
    def grad_bound(self) -> float:  # uniform bound on ||grad f||
        return math.sqrt(self.dim)

    @property
    def lipschitz(self) -> float:
        return 1.0

    @property
    def f_star(self) -> float:
        return self.offset

    def value(self, theta: np.ndarray) -> float:
        ax = np.abs(theta)
        return float(np.sum(ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0))) + self.offset

    def grad(self, theta: np.ndarray) -> np.ndarray:
        return np.tanh(theta)


@dataclass
class StepsizeSchedule:
    alpha: np.ndarray  # (T+1, J+1), nonnegative

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.alpha.ndim != 2 or np.any(self.alpha < 0):
            raise ConfigurationError("stepsizes must be a nonnegative (T+1, J+1) matrix")

    @property
    def rounds(self) -> int:
        return self.alpha.shape[0] - 1

    @property
    def local_steps(self) -> int:
        return self.alpha.shape[1] - 1


def constant_stepsizes(alpha: float, T: int, J: int) -> StepsizeSchedule:
    return StepsizeSchedule(np.full((T + 1, J + 1), alpha))


def inverse_round_stepsizes(alpha0: float, T: int, J: int) -> StepsizeSchedule:
    """alpha(t, j) = alpha0 / (t + 1): diminishing across rounds."""
    rows = alpha0 / (np.arange(T + 1) + 1.0)
    return StepsizeSchedule(np.repeat(rows[:, None], J + 1, axis=1))


def _bias_matrix(bias: BiasSchedule | np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    values = bias.values if isinstance(bias, BiasSchedule) else np.asarray(bias, dtype=np.float64)
    if values.shape != shape:
        raise ConfigurationError(f"bias schedule shape {values.shape} != stepsize shape {shape}")
    return values


def bound_convex(
    prob: ConvexProblem,
    sched: StepsizeSchedule,
    bias: BiasSchedule | np.ndarray,
    rel_var: float,
    sigma2: float,
    num_clients: int,
    theta0: np.ndarray,
    strict_sigma_cubed: bool = False,
) -> float:
    """Right-hand side of the strongly convex distance bound.

    contraction * ||theta0 - theta*||^2
      + sum 2 a^2 (L (3+2M) B + 3 sigma^2) / Q
      + sum 2 a L B^2 / (mu Q)
    with the contraction product and both sums running over rounds 1..T and
    local steps 0..J. ``strict_sigma_cubed`` switches the noise term to
    3 sigma^3 as an alternate reading of the constant.
    """
    alpha = sched.alpha
    limit = 1.0 / (4.0 * (3.0 + 2.0 * rel_var) * prob.L)
    bad = np.argwhere(alpha > limit * (1 + 1e-12))
    if len(bad):
        t, j = (int(v) for v in bad[0])
        raise ValueError(
            f"stepsize alpha[{t},{j}]={alpha[t, j]:g} violates alpha <= 1/(4(3+2M)L)={limit:g}"
        )
    values = _bias_matrix(bias, alpha.shape)
    a = alpha[1:, :]
    b = values[1:, :]
    d0 = float(np.sum((theta0 - prob.theta_star) ** 2))
    noise = 3.0 * sigma2**1.5 if strict_sigma_cubed else 3.0 * sigma2
    contraction = float(np.prod(1.0 - a * prob.mu / 2.0))
    term_var = float(np.sum(2.0 * a**2 * (prob.L * (3.0 + 2.0 * rel_var) * b + noise)))
    term_bias = float(np.sum(2.0 * a * prob.L * b**2)) / prob.mu
    return contraction * d0 + term_var / num_clients + term_bias / num_clients


def bound_nonconvex(
    prob: NonconvexProblem,
    sched: StepsizeSchedule,
    num_clients: int,
    theta0: np.ndarray,
) -> float:
    """Right-hand side of the nonconvex ergodic bound:
    Q (f(theta0) - f*) + 2 sum a (a + suffix-sum of a) L G^2 over all (t, j)."""
    alpha = sched.alpha
    suffix = np.cumsum(alpha[:, ::-1], axis=1)[:, ::-1]
    cross = float(np.sum(alpha * (alpha + suffix)))
    gap = prob.value(theta0) - prob.f_star
    return num_clients * gap + 2.0 * cross * prob.lipschitz * prob.grad_bound**2


@dataclass
class BoundReport:
    empirical: float
    bound: float
    passed: bool


def _simulate_rounds(
    oracle: BiasedGradOracle,
    sched: StepsizeSchedule,
    theta0: np.ndarray,
    rng: np.random.Generator,
    on_round_start: Callable[[np.ndarray], None] | None = None,
) -> np.ndarray:
    """Full-participation Local SGD: rounds t = 0..T-1 of J+1 steps each,
    averaging the cohort after every round. Returns the final average."""
    q = oracle.num_clients
    alpha = sched.alpha
    theta_hat = theta0.copy()
    for t in range(sched.rounds):
        if on_round_start is not None:
            on_round_start(theta_hat)
        thetas = [theta_hat.copy() for _ in range(q)]
        for j in range(sched.local_steps + 1):
            for k in range(q):
                g = biased_grad(oracle, k, thetas[k], t, j, rng)
                thetas[k] = thetas[k] - alpha[t, j] * g
        theta_hat = np.mean(thetas, axis=0)
    if on_round_start is not None:
        on_round_start(theta_hat)
    return theta_hat


def verify_convex(
    prob: ConvexProblem,
    sched: StepsizeSchedule,
    bias: BiasSchedule | np.ndarray,
    rel_var: float,
    sigma2: float,
    num_clients: int,
    theta0: np.ndarray,
    n_runs: int,
    rng: np.random.Generator,
) -> BoundReport:
    """Monte-Carlo check that the mean squared distance of the simulated
    endpoint stays below the evaluated convex bound."""
    if n_runs < 100:
        raise ValueError("need n_runs >= 100 for a meaningful average")
    bound = bound_convex(prob, sched, bias, rel_var, sigma2, num_clients, theta0)
    values = _bias_matrix(bias, sched.alpha.shape)
    oracle = BiasedGradOracle(
        grad_fn=prob.grad,
        bias_values=values,
        directions=zero_sum_directions(num_clients, theta0.shape[0]),
        rel_var=rel_var,
        sigma=math.sqrt(sigma2),
    )
    total = 0.0
    for child in rng.spawn(n_runs):
        endpoint = _simulate_rounds(oracle, sched, theta0, child)
        total += float(np.sum((endpoint - prob.theta_star) ** 2))
    empirical = total / n_runs
    return BoundReport(empirical=empirical, bound=bound, passed=empirical <= bound)


def verify_nonconvex(
    prob: NonconvexProblem,
    sched: StepsizeSchedule,
    num_clients: int,
    theta0: np.ndarray,
    n_runs: int,
    rng: np.random.Generator,
    sigma: float = 0.0,
) -> BoundReport:
    """Monte-Carlo check of the ergodic bound: the (J+1)-weighted sum of
    squared round-start gradient norms against the nonconvex right-hand
    side. Gradients carry additive noise only; bias is off."""
    bound = bound_nonconvex(prob, sched, num_clients, theta0)
    oracle = BiasedGradOracle(
        grad_fn=prob.grad,
        bias_values=np.zeros_like(sched.alpha),
        directions=zero_sum_directions(num_clients, theta0.shape[0]),
        sigma=sigma,
    )
    multiplier = sched.local_steps + 1
    total = 0.0
    for child in rng.spawn(n_runs):
        acc = 0.0

        def record(theta_hat: np.ndarray) -> None:
            nonlocal acc
            acc += multiplier * float(np.sum(prob.grad(theta_hat) ** 2))

        _simulate_rounds(oracle, sched, theta0, child, on_round_start=record)
        total += acc
    empirical = total / n_runs
    return BoundReport(empirical=empirical, bound=bound, passed=empirical <= bound)
