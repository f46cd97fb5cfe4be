"""Federated round loop: broadcast, curriculum-aware local training, and
aggregation under FedAvg, FedProx, SCAFFOLD or FedNova.

Determinism contract: every random draw comes from a generator keyed by
(seed, stream tag, round, client id), so results are bitwise identical
regardless of how many worker threads execute the client updates.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .clients import ClientSelectionConfig, client_loss, score_clients, select_clients
from .curriculum import (
    OrderingKind,
    PacingFamily,
    PacingSpec,
    ScoringKind,
    order_and_select,
    pace,
    score_samples,
)
from .data import Dataset, Partition
from .errors import ConfigurationError
from .models import (
    Batch,
    ModelSpec,
    SgdHyper,
    accuracy,
    batch_loss,
    grad,
    init_params,
    sgd_step,
)

# Seed-stream tags; each generator is keyed (seed, tag, ...).
_INIT_STREAM = 0
_SERVER_STREAM = 1
_CLIENT_STREAM = 2


class Algorithm(Enum):
    FEDAVG = "fedavg"
    FEDPROX = "fedprox"
    SCAFFOLD = "scaffold"
    FEDNOVA = "fednova"


@dataclass(frozen=True)
class DataCurriculumConfig:
    scoring: ScoringKind
    family: PacingFamily
    a: float
    b: float
    ordering: OrderingKind


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    num_clients: int = 100
    participants: int = 10
    rounds: int = 100
    local_epochs: int = 10
    algorithm: Algorithm = Algorithm.FEDAVG
    mu_prox: float = 0.0
    data_curriculum: DataCurriculumConfig | None = None
    client_curriculum: ClientSelectionConfig | None = None
    hyper: SgdHyper = field(default_factory=SgdHyper)
    seed: int = 202207

    def __post_init__(self):
        if self.num_clients < 1 or not 1 <= self.participants <= self.num_clients:
            raise ConfigurationError("need 1 <= participants <= num_clients")
        if self.rounds < 0 or self.local_epochs < 1:
            raise ConfigurationError("rounds must be >= 0 and local_epochs >= 1")
        if self.mu_prox < 0:
            raise ConfigurationError("mu_prox must be >= 0")
        if self.client_curriculum is not None:
            if self.client_curriculum.pacing.total != self.num_clients:
                raise ConfigurationError("client pacing total must equal num_clients")


@dataclass
class ClientState:
    client_id: int
    indices: np.ndarray
    momentum: np.ndarray
    local_params: np.ndarray | None = None  # last locally trained parameters
    control: np.ndarray | None = None  # SCAFFOLD control variate
    tau: int = 0  # local steps taken in the last update


@dataclass
class ClientUpdateResult:
    client_id: int
    params: np.ndarray
    num_samples: int
    tau: int
    selected: int  # size of the trained subset
    control_delta: np.ndarray | None = None


@dataclass
class RoundMetrics:
    round: int
    test_acc: float
    test_loss: float
    participants: list[int]
    mean_client_loss: float
    lam: float
    subset_frac: float


def gradient_dissimilarity(grads: list[np.ndarray], weights: np.ndarray) -> float:
    """Weighted per-client gradient energy over the energy of the weighted
    aggregate; 1 for homogeneous gradients, larger for dissimilar ones."""
    weights = np.asarray(weights, dtype=np.float64)
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    num = sum(w * float(g @ g) for w, g in zip(weights, grads))
    agg = sum(w * g for w, g in zip(weights, grads))
    den = float(agg @ agg)
    if den <= 1e-300 * max(num, 1.0):
        raise ValueError("aggregate gradient is zero; dissimilarity undefined")
    return num / den


def client_update(
    state: ClientState,
    global_params: np.ndarray,
    cfg: ExperimentConfig,
    ds: Dataset,
    t: int,
    rng: np.random.Generator,
    server_control: np.ndarray | None = None,
    expert_params: np.ndarray | None = None,
) -> tuple[ClientUpdateResult, ClientState]:
    """One local-training pass: select the paced subset, run the configured
    epochs of mini-batch SGD from the broadcast parameters, and report the
    trained parameters. The momentum buffer persists across rounds; the step
    index (and with it the learning-rate schedule) resets each round."""
    if len(state.indices) < 1:
        raise ConfigurationError(f"client {state.client_id} holds no data")
    full = ds.batch(state.indices)
    dc = cfg.data_curriculum
    if dc is not None:
        table = score_samples(
            dc.scoring,
            cfg.model,
            full,
            global_params=global_params,
            local_params=state.local_params if state.local_params is not None else global_params,
            expert_params=expert_params,
            rng=rng,
            round_index=t,
        )
        spec = PacingSpec(dc.family, dc.a, dc.b, total=len(state.indices), budget=cfg.rounds)
        n_sel = pace(spec, t)
        chosen = np.sort(order_and_select(table, dc.ordering, n_sel, rng))
        train_idx = state.indices[chosen]
    else:
        n_sel = len(state.indices)
        train_idx = state.indices
    batch = ds.batch(train_idx)

    theta = global_params.copy()
    v = state.momentum.copy()
    bs = cfg.hyper.batch_size
    step = 0
    eta_sum = 0.0
    for _ in range(cfg.local_epochs):
        perm = rng.permutation(len(batch))
        for lo in range(0, len(batch), bs):
            mini = batch.subset(perm[lo : lo + bs])
            g = grad(cfg.model, theta, mini)
            if cfg.algorithm is Algorithm.FEDPROX and cfg.mu_prox != 0.0:
                g = g + cfg.mu_prox * (theta - global_params)
            if cfg.algorithm is Algorithm.SCAFFOLD:
                g = g + server_control - state.control
            eta_sum += cfg.hyper.learning_rate(step)
            theta, v = sgd_step(theta, g, cfg.hyper, step, v)
            step += 1

    control_delta = None
    new_control = state.control
    if cfg.algorithm is Algorithm.SCAFFOLD:
        alpha_bar = eta_sum / step
        new_control = state.control - server_control + (global_params - theta) / (step * alpha_bar)
        control_delta = new_control - state.control
    new_state = replace(
        state,
        momentum=v,
        local_params=theta.copy(),
        control=new_control,
        tau=step,
    )
    result = ClientUpdateResult(
        client_id=state.client_id,
        params=theta,
        num_samples=len(state.indices),
        tau=step,
        selected=n_sel,
        control_delta=control_delta,
    )
    return result, new_state


def aggregate(
    updates: list[ClientUpdateResult],
    algorithm: Algorithm,
    global_params: np.ndarray,
    server_control: np.ndarray | None = None,
    num_clients_total: int = 0,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Combine client parameters into the new global model.

    Weights are the participants' sample counts renormalized to sum to 1.
    The update is applied in delta form, theta - sum w_k * s_k * (theta -
    theta_k), with s_k = 1 except under FedNova where s_k = tau_eff / tau_k;
    tau_eff is computed with an integer numerator so equal step counts give
    s_k exactly 1.
    """
    if not updates:
        raise ValueError("no client updates to aggregate")
    n_round = sum(u.num_samples for u in updates)
    if algorithm is Algorithm.FEDNOVA:
        tau_eff = sum(u.num_samples * u.tau for u in updates) / n_round
        scales = [tau_eff / u.tau for u in updates]
    else:
        scales = [1.0] * len(updates)
    if len(updates) == 1:
        new = updates[0].params.copy()
    else:
        new = global_params.copy()
        for u, s in zip(updates, scales):
            new = new - (u.num_samples / n_round) * s * (global_params - u.params)
    new_control = server_control
    if algorithm is Algorithm.SCAFFOLD:
        if server_control is None or num_clients_total < 1:
            raise ConfigurationError("SCAFFOLD aggregation needs server control state")
        mean_delta = sum(u.control_delta for u in updates) / len(updates)
        new_control = server_control + (len(updates) / num_clients_total) * mean_delta
    return new, new_control


def evaluate(model: ModelSpec, params: np.ndarray, test: Batch) -> tuple[float, float]:
    return accuracy(model, params, test), batch_loss(model, params, test)


def run_experiment(
    cfg: ExperimentConfig,
    ds: Dataset,
    part: Partition,
    test: Batch,
    expert_params: np.ndarray | None = None,
    threads: int = 1,
) -> list[RoundMetrics]:
    """Run the full federation and return one metrics row per round
    (or the initial model's row when rounds == 0)."""
    if part.num_clients != cfg.num_clients:
        raise ConfigurationError("partition does not match num_clients")
    if cfg.data_curriculum is not None and cfg.data_curriculum.scoring is ScoringKind.EXPERT:
        if expert_params is None:
            raise ConfigurationError("expert scoring needs expert parameters")
    model = cfg.model
    theta = init_params(model, np.random.default_rng([cfg.seed, _INIT_STREAM]))
    dim = theta.shape[0]
    states = [
        ClientState(
            client_id=i,
            indices=part.assignment[i],
            momentum=np.zeros(dim),
            control=np.zeros(dim) if cfg.algorithm is Algorithm.SCAFFOLD else None,
        )
        for i in range(cfg.num_clients)
    ]
    server_control = np.zeros(dim) if cfg.algorithm is Algorithm.SCAFFOLD else None

    if cfg.rounds == 0:
        acc, loss = evaluate(model, theta, test)
        return [RoundMetrics(0, acc, loss, [], float("nan"), float("nan"), float("nan"))]

    metrics = []
    for t in range(cfg.rounds):
        round_rng = np.random.default_rng([cfg.seed, _SERVER_STREAM, t])
        if cfg.client_curriculum is not None:
            cscores = score_clients(model, theta, [ds.batch(s.indices) for s in states])
            ids = select_clients(cscores, cfg.client_curriculum, t, round_rng)
        else:
            ids = sorted(
                int(c)
                for c in round_rng.choice(cfg.num_clients, size=cfg.participants, replace=False)
            )

        sizes = np.array([len(states[i].indices) for i in ids], dtype=np.float64)
        w = sizes / sizes.sum()
        grads = [grad(model, theta, ds.batch(states[i].indices)) for i in ids]
        try:
            lam = gradient_dissimilarity(grads, w)
        except ValueError:
            lam = float("nan")
        mean_cl = float(
            np.mean([client_loss(model, theta, ds.batch(states[i].indices)) for i in ids])
        )

        def update_one(cid: int, t=t, theta=theta, server_control=server_control):
            crng = np.random.default_rng([cfg.seed, _CLIENT_STREAM, t, cid])
            return client_update(
                states[cid], theta, cfg, ds, t, crng, server_control, expert_params
            )

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outcome = dict(zip(ids, pool.map(update_one, ids)))
        else:
            outcome = {cid: update_one(cid) for cid in ids}
        updates = []
        for cid in ids:  # ascending id: fixed reduction order
            result, states[cid] = outcome[cid]
            updates.append(result)
        theta, server_control = aggregate(
            updates, cfg.algorithm, theta, server_control, cfg.num_clients
        )

        acc, loss = evaluate(model, theta, test)
        subset_frac = float(np.mean([u.selected / u.num_samples for u in updates]))
        metrics.append(RoundMetrics(t, acc, loss, list(ids), mean_cl, lam, subset_frac))
    return metrics


def train_centralized(
    model: ModelSpec,
    ds: Dataset,
    hyper: SgdHyper,
    epochs: int,
    seed: int,
) -> np.ndarray:
    """Plain centralized SGD over the full dataset; used to build expert
    and reference models."""
    rng = np.random.default_rng([seed, _INIT_STREAM])
    theta = init_params(model, rng)
    v = np.zeros_like(theta)
    data = ds.batch()
    step = 0
    for _ in range(epochs):
        perm = rng.permutation(len(data))
        for lo in range(0, len(data), hyper.batch_size):
            mini = data.subset(perm[lo : lo + hyper.batch_size])
            theta, v = sgd_step(theta, grad(model, theta, mini), hyper, step, v)
            step += 1
    return theta
