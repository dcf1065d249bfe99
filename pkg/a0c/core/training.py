"""
Training
Replay database of root-state targets, the policy/entropy/value losses and
the per-episode epoch schedule.
"""

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Sequence, Tuple

import numpy as np

from a0c.config import ExperimentConfig
from a0c.core import policy_dist
from a0c.core.mcts import SearchResult
from a0c.core.netapprox import (
    NetworkParams,
    OptimizerState,
    backward,
    forward,
    forward_with_cache,
    rmsprop_step,
)
from a0c.core.policy_dist import BetaPolicyParams
from a0c.exceptions import DimensionError, NumericError
from a0c.utils.logger import logger


def _as_support_actions(actions) -> np.ndarray:
    # a 1-D array is read as K scalar actions
    arr = np.asarray(actions, dtype=np.float64)
    return arr.reshape(-1, 1) if arr.ndim == 1 else arr


@dataclass(frozen=True)
class ReplayEntry:
    """One root state: observation, support actions (K, n_a) with counts (K,), value target"""
    obs: np.ndarray
    actions: np.ndarray
    counts: np.ndarray
    value_target: float

    def __post_init__(self):
        object.__setattr__(self, "obs", np.asarray(self.obs, dtype=np.float64))
        object.__setattr__(self, "actions", _as_support_actions(self.actions))
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64).reshape(-1))
        if len(self.counts) == 0 or len(self.actions) != len(self.counts):
            raise DimensionError("support must be nonempty with one count per action")
        if np.any(self.counts < 1):
            raise DimensionError("support counts must be >= 1", f"{self.counts}")

    @property
    def support(self) -> List[Tuple[np.ndarray, int]]:
        return [(a, int(n)) for a, n in zip(self.actions, self.counts)]


class ReplayBuffer:
    """FIFO ring of ReplayEntry; the oldest entry is evicted first"""

    def __init__(self, capacity: int = 25_000):
        self.capacity = capacity
        self.entries: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ReplayEntry]:
        return iter(self.entries)

    def push(self, entry: ReplayEntry) -> None:
        self.entries.append(entry)

    def extend(self, entries: Iterable[ReplayEntry]) -> None:
        for entry in entries:
            self.push(entry)

    def minibatches(self, batch_size: int, rng: np.random.Generator) -> Iterator[List[ReplayEntry]]:
        """One shuffled pass over the buffer; the last batch may be short"""
        order = rng.permutation(len(self.entries))
        for start in range(0, len(order), batch_size):
            yield [self.entries[i] for i in order[start:start + batch_size]]


def make_entry(result: SearchResult, obs: np.ndarray) -> ReplayEntry:
    """Raw root counts (tau is applied inside the loss) and the search's value target"""
    return ReplayEntry(
        obs=np.asarray(obs, dtype=np.float64).copy(),
        actions=result.actions.astype(np.float64),
        counts=result.counts.astype(np.int64),
        value_target=float(result.value_target),
    )


def epochs_for(n_trace: int, c_e: float) -> int:
    """n_epochs = ceil(N_trace / c_e)"""
    if n_trace <= 0 or c_e <= 0:
        raise ValueError("n_trace and c_e must be positive")
    return math.ceil(n_trace / c_e)


@dataclass
class LossBreakdown:
    """Minibatch means of each loss term; total = policy - lambda * entropy + value"""
    total: float
    policy: float
    entropy: float
    value: float
    skipped: int = 0
    action_entropy: float = float("nan")


@dataclass
class LossStats:
    """Averages over all optimizer steps of one training phase"""
    policy: float = float("nan")
    entropy: float = float("nan")
    value: float = float("nan")
    total: float = float("nan")
    action_entropy: float = float("nan")
    steps: int = 0
    epochs: int = 0
    skipped: int = 0


@dataclass(frozen=True)
class _Support:
    actions: np.ndarray
    counts: np.ndarray
    owner: np.ndarray


def _flatten_support(entries: Sequence[ReplayEntry]) -> _Support:
    actions = np.concatenate([e.actions for e in entries], axis=0)
    counts = np.concatenate([e.counts for e in entries]).astype(np.float64)
    owner = np.concatenate([np.full(len(e.counts), i) for i, e in enumerate(entries)])
    return _Support(actions=actions, counts=counts, owner=owner)


def _policy_terms(policy: BetaPolicyParams, support: _Support, tau: float, c_b: float, baseline: str = "mean"):
    """
    Per support point: log pi, the detached coefficient log pi - tau log n,
    the per-entry averaging weight and a validity mask.

    With the ``mean`` baseline each entry's coefficients are centred on their
    mean, which stands in for the unknown log Z(s, tau). Only the density
    profile across the support is then fitted, not its overall level.
    """
    point_policy = BetaPolicyParams(alpha=policy.alpha[support.owner], beta=policy.beta[support.owner])
    log_prob = policy_dist.log_density(point_policy, support.actions, c_b)
    valid = np.isfinite(log_prob)
    coef = np.where(valid, log_prob - tau * np.log(support.counts), 0.0)
    n_valid = np.bincount(support.owner[valid], minlength=len(policy.alpha))
    weight = np.where(valid, 1.0 / np.maximum(n_valid[support.owner], 1), 0.0)
    if baseline == "mean":
        offset = np.bincount(support.owner, weights=weight * coef, minlength=len(policy.alpha))
        coef = np.where(valid, coef - offset[support.owner], 0.0)
    elif baseline != "none":
        raise ValueError(f"unknown policy baseline {baseline!r}")
    return point_policy, np.where(valid, log_prob, 0.0), coef, weight, valid


def policy_loss_terms(
    params: NetworkParams, entry: ReplayEntry, tau: float, c_b: float, baseline: str = "mean"
) -> Tuple[np.ndarray, int]:
    """
    Surrogate contributions coef_i * log pi(a_i|s) per support point, where
    coef_i = log pi(a_i|s) - tau * log n(s, a_i) - b(s) is held constant under
    differentiation. b(s) is the entry's mean coefficient, or 0 for the
    ``none`` baseline. Points with zero density are skipped.

    Returns:
        (contributions of the valid points, number of skipped points)
    """
    output = forward(params, entry.obs[None, :])
    support = _flatten_support([entry])
    _, log_prob, coef, _, valid = _policy_terms(output.policy, support, tau, c_b, baseline)
    return (coef * log_prob)[valid], int((~valid).sum())


def entropy_loss(params: NetworkParams, obs: np.ndarray) -> np.ndarray:
    """Base Beta entropy H(pi(.|s)) for each observation row"""
    return policy_dist.entropy(forward(params, np.atleast_2d(obs)).policy)


def value_loss(params: NetworkParams, entries: Sequence[ReplayEntry]) -> float:
    """Mean of (V(s) - V_hat(s))^2 over the entries"""
    obs = np.stack([e.obs for e in entries])
    targets = np.array([e.value_target for e in entries])
    values = forward(params, obs).value
    return float(np.mean((values - targets) ** 2))


def _check_finite(**terms: float) -> None:
    for name, value in terms.items():
        if not np.isfinite(value):
            raise NumericError("non-finite loss", term=name, detail=f"{name}={value}")


def loss_and_grads(
    params: NetworkParams,
    entries: Sequence[ReplayEntry],
    tau: float,
    lambda_: float,
    c_b: float,
    compute_grads: bool = True,
    baseline: str = "mean",
) -> Tuple[LossBreakdown, NetworkParams]:
    """
    Mean over entries of [policy surrogate - lambda * H + (V - V_hat)^2] and
    its exact gradient with respect to every network parameter.

    Raises:
        DimensionError: empty minibatch
        NumericError: a loss term is not finite
    """
    if not entries:
        raise DimensionError("minibatch must be nonempty")
    batch = len(entries)
    obs = np.stack([e.obs for e in entries])
    targets = np.array([e.value_target for e in entries])
    output, cache = forward_with_cache(params, obs)
    policy = output.policy

    support = _flatten_support(entries)
    point_policy, log_prob, coef, weight, valid = _policy_terms(policy, support, tau, c_b, baseline)
    policy_per_entry = np.bincount(support.owner, weights=weight * coef * log_prob, minlength=batch)
    entropy = policy_dist.entropy(policy)
    residual = output.value - targets

    breakdown = LossBreakdown(
        policy=float(policy_per_entry.mean()),
        entropy=float(entropy.mean()),
        value=float(np.mean(residual ** 2)),
        total=0.0,
        skipped=int((~valid).sum()),
        action_entropy=float(policy_dist.transformed_entropy(policy, c_b).mean()),
    )
    breakdown.total = breakdown.policy - lambda_ * breakdown.entropy + breakdown.value
    _check_finite(policy=breakdown.policy, entropy=breakdown.entropy, value=breakdown.value)
    if breakdown.skipped:
        logger.warning(f"Skipped {breakdown.skipped} zero-density support point(s)")

    if not compute_grads:
        return breakdown, params.zeros_like()

    d_alpha_pt, d_beta_pt = policy_dist.log_density_grad(point_policy, support.actions, c_b)
    scale = (weight * coef)[:, None]
    d_alpha_pt = np.where(valid[:, None], scale * np.nan_to_num(d_alpha_pt), 0.0)
    d_beta_pt = np.where(valid[:, None], scale * np.nan_to_num(d_beta_pt), 0.0)
    d_alpha = np.zeros_like(policy.alpha)
    d_beta = np.zeros_like(policy.beta)
    np.add.at(d_alpha, support.owner, d_alpha_pt)
    np.add.at(d_beta, support.owner, d_beta_pt)

    h_alpha, h_beta = policy_dist.entropy_grad(policy)
    d_alpha = (d_alpha - lambda_ * h_alpha) / batch
    d_beta = (d_beta - lambda_ * h_beta) / batch
    d_value = 2.0 * residual / batch

    grads = backward(params, cache, d_alpha, d_beta, d_value)
    return breakdown, grads


def total_loss(
    params: NetworkParams,
    entries: Sequence[ReplayEntry],
    tau: float,
    lambda_: float,
    c_b: float,
    baseline: str = "mean",
) -> LossBreakdown:
    """Loss value only; see loss_and_grads"""
    breakdown, _ = loss_and_grads(params, entries, tau, lambda_, c_b, compute_grads=False, baseline=baseline)
    return breakdown


def train_after_episode(
    params: NetworkParams,
    opt_state: OptimizerState,
    buffer: ReplayBuffer,
    config: ExperimentConfig,
    rng: np.random.Generator,
) -> Tuple[NetworkParams, OptimizerState, LossStats]:
    """
    Run ceil(N_trace / c_e) shuffled epochs over the buffer with one RMSProp
    step per minibatch.

    Returns:
        Updated parameters, optimizer state and mean losses
    """
    if len(buffer) == 0:
        raise DimensionError("cannot train on an empty replay buffer")

    epochs = epochs_for(config.n_trace, config.c_e)
    totals = np.zeros(5)
    steps = 0
    skipped = 0
    for _ in range(epochs):
        for minibatch in buffer.minibatches(config.batch, rng):
            breakdown, grads = loss_and_grads(
                params, minibatch, config.tau, config.lambda_, config.c_b, baseline=config.policy_baseline
            )
            params, opt_state = rmsprop_step(params, grads, opt_state)
            totals += (breakdown.policy, breakdown.entropy, breakdown.value, breakdown.total, breakdown.action_entropy)
            steps += 1
            skipped += breakdown.skipped

    means = totals / steps
    stats = LossStats(
        policy=float(means[0]),
        entropy=float(means[1]),
        value=float(means[2]),
        total=float(means[3]),
        action_entropy=float(means[4]),
        steps=steps,
        epochs=epochs,
        skipped=skipped,
    )
    logger.debug(
        f"Trained {epochs} epoch(s), {steps} step(s): policy={stats.policy:.5f} "
        f"entropy={stats.entropy:.5f} value={stats.value:.6f}"
    )
    return params, opt_state, stats
