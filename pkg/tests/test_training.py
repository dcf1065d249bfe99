"""Replay database, losses and the training schedule"""

import math

import numpy as np
import pytest

from a0c.config import ExperimentConfig
from a0c.core import policy_dist
from a0c.core.env import EnvState
from a0c.core.mcts import ActionEdge, StateNode, search_result
from a0c.core.netapprox import forward, init_optimizer, init_params
from a0c.core.training import (
    ReplayBuffer,
    ReplayEntry,
    entropy_loss,
    epochs_for,
    loss_and_grads,
    make_entry,
    policy_loss_terms,
    total_loss,
    train_after_episode,
    value_loss,
)
from a0c.exceptions import DimensionError, NumericError
from a0c.utils.logger import logger


C_B = 2.0


def random_entries(rng, count, points=3):
    entries = []
    for _ in range(count):
        entries.append(ReplayEntry(
            obs=rng.normal(size=3),
            actions=rng.uniform(-1.8, 1.8, size=(points, 1)),
            counts=rng.integers(1, 6, size=points),
            value_target=float(rng.normal(scale=0.5)),
        ))
    return entries


def frozen_coefficients(params, entries, tau, baseline="none"):
    policy = forward(params, np.stack([e.obs for e in entries])).policy
    coefs = [
        policy_dist.log_density(policy.row(j), e.actions, C_B) - tau * np.log(e.counts)
        for j, e in enumerate(entries)
    ]
    if baseline == "mean":
        coefs = [c - c.mean() for c in coefs]
    return coefs


def frozen_objective(params, entries, coefs, lambda_):
    """Composite loss with the policy coefficients held fixed"""
    out = forward(params, np.stack([e.obs for e in entries]))
    policy_terms = [
        np.mean(coefs[j] * policy_dist.log_density(out.policy.row(j), e.actions, C_B))
        for j, e in enumerate(entries)
    ]
    targets = np.array([e.value_target for e in entries])
    return float(
        np.mean(policy_terms)
        - lambda_ * np.mean(policy_dist.entropy(out.policy))
        + np.mean((out.value - targets) ** 2)
    )


def entry(actions, counts, value_target=0.0, obs=(0.0, 0.0, 0.0)):
    return ReplayEntry(obs=np.array(obs), actions=np.array(actions, dtype=float), counts=np.array(counts), value_target=value_target)


class TestReplayEntry:

    def test_scalar_actions_become_columns(self):
        e = entry([0.5, -0.5], [3, 1])
        assert e.actions.shape == (2, 1)
        assert [n for _, n in e.support] == [3, 1]

    def test_empty_support(self):
        with pytest.raises(DimensionError):
            entry(np.zeros((0, 1)), [])

    def test_zero_count(self):
        with pytest.raises(DimensionError):
            entry([0.1, 0.2], [1, 0])

    def test_count_action_mismatch(self):
        with pytest.raises(DimensionError):
            entry([0.1, 0.2], [1])

    def test_make_entry_uses_max_q(self):
        edges = [
            ActionEdge(action=np.array([a]), n=n, W=q * n, Q=q)
            for a, n, q in [(0.5, 7, 0.1), (-0.3, 2, 0.3), (1.1, 1, -0.2)]
        ]
        root = StateNode(env_state=EnvState(0.0, 0.0), obs=np.ones(3), terminal=False, n=10, edges=edges)
        e = make_entry(search_result(root), root.obs)
        assert e.value_target == pytest.approx(0.3)
        np.testing.assert_array_equal(e.counts, [7, 2, 1])
        np.testing.assert_array_equal(e.actions[:, 0], [0.5, -0.3, 1.1])

    def test_single_action(self):
        edges = [ActionEdge(action=np.array([0.2]), n=4, W=-0.4, Q=-0.1)]
        root = StateNode(env_state=EnvState(0.0, 0.0), obs=np.zeros(3), terminal=False, n=4, edges=edges)
        assert len(make_entry(search_result(root), root.obs).support) == 1


class TestReplayBuffer:

    def test_fifo_eviction(self):
        buffer = ReplayBuffer(capacity=5)
        entries = [entry([0.0], [1], value_target=float(i)) for i in range(8)]
        buffer.extend(entries)
        assert len(buffer) == 5
        assert [e.value_target for e in buffer] == [3.0, 4.0, 5.0, 6.0, 7.0]

    def test_entries_unchanged_through_buffer(self, rng):
        buffer = ReplayBuffer()
        original = random_entries(rng, 1)[0]
        buffer.push(original)
        (batch,) = list(buffer.minibatches(32, rng))
        assert batch[0] is original

    def test_minibatch_sizes_cover_buffer(self, rng):
        buffer = ReplayBuffer()
        buffer.extend(random_entries(rng, 70))
        batches = list(buffer.minibatches(32, rng))
        assert [len(b) for b in batches] == [32, 32, 6]
        assert len({id(e) for b in batches for e in b}) == 70


class TestEpochs:

    @pytest.mark.parametrize("n_trace, c_e, expected", [(10, 20, 1), (25, 20, 2), (20, 20, 1), (1, 20, 1), (41, 20, 3)])
    def test_ceiling(self, n_trace, c_e, expected):
        assert epochs_for(n_trace, c_e) == expected

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            epochs_for(0, 20)


class TestLossTerms:

    def test_fixed_point_has_zero_gradient(self, tiny_params):
        obs = np.array([0.2, -0.1, 0.4])
        action = np.array([[0.3]])
        log_prob = float(policy_dist.log_density(forward(tiny_params, obs[None]).policy.row(0), action, C_B)[0])
        tau = log_prob / math.log(3.0)
        value = float(forward(tiny_params, obs[None]).value[0])
        e = ReplayEntry(obs=obs, actions=action, counts=np.array([3]), value_target=value)

        contributions, skipped = policy_loss_terms(tiny_params, e, tau, C_B)
        assert skipped == 0
        assert contributions[0] == pytest.approx(0.0, abs=1e-12)

        breakdown, grads = loss_and_grads(tiny_params, [e], tau, 0.0, C_B)
        assert breakdown.total == pytest.approx(0.0, abs=1e-12)
        for name in grads:
            np.testing.assert_allclose(grads[name], 0.0, atol=1e-12)

    def test_tau_zero_uses_log_density_only(self, tiny_params, rng):
        e = random_entries(rng, 1)[0]
        contributions, _ = policy_loss_terms(tiny_params, e, 0.0, C_B, baseline="none")
        log_prob = policy_dist.log_density(forward(tiny_params, e.obs[None]).policy.row(0), e.actions, C_B)
        np.testing.assert_allclose(contributions, log_prob ** 2)

    def test_boundary_points_are_skipped(self, tiny_params):
        e = entry([2.0, 0.3], [1, 2])
        contributions, skipped = policy_loss_terms(tiny_params, e, 0.1, C_B)
        assert skipped == 1 and len(contributions) == 1
        breakdown, grads = loss_and_grads(tiny_params, [e], 0.1, 0.1, C_B)
        assert breakdown.skipped == 1
        assert grads.all_finite()

    def test_skipped_points_are_warned_about(self, tiny_params):
        messages = []
        sink = logger.add(lambda m: messages.append(m.record), level="WARNING")
        try:
            loss_and_grads(tiny_params, [entry([-2.0, 0.3], [1, 2])], 0.1, 0.1, C_B)
        finally:
            logger.remove(sink)
        assert [r["level"].name for r in messages] == ["WARNING"]
        assert "Skipped 1 zero-density" in messages[0]["message"]

    def test_baseline_centres_coefficients(self, tiny_params, rng):
        e = random_entries(rng, 1, points=4)[0]
        raw, _ = policy_loss_terms(tiny_params, e, 0.1, C_B, baseline="none")
        centred, _ = policy_loss_terms(tiny_params, e, 0.1, C_B, baseline="mean")
        log_prob = policy_dist.log_density(forward(tiny_params, e.obs[None]).policy.row(0), e.actions, C_B)
        coef = raw / log_prob
        np.testing.assert_allclose(centred, (coef - coef.mean()) * log_prob)

    def test_equal_counts_at_equal_density_carry_no_policy_gradient(self):
        # symmetric head (alpha = beta) and mirrored support: only the level of
        # the density could move, and the baseline removes that pull
        params = init_params(seed=0, hidden_units=2, hidden_layers=1).map(np.zeros_like)
        params["policy.bias"][:] = [0.4, 0.4]
        e = entry([0.8, -0.8], [3, 3])
        _, centred = loss_and_grads(params, [e], 0.1, 0.0, C_B, baseline="mean")
        _, raw = loss_and_grads(params, [e], 0.1, 0.0, C_B, baseline="none")
        np.testing.assert_allclose(centred["policy.bias"], 0.0, atol=1e-12)
        assert np.all(raw["policy.bias"] != 0.0)

    def test_unknown_baseline(self, tiny_params, rng):
        with pytest.raises(ValueError):
            loss_and_grads(tiny_params, random_entries(rng, 2), 0.1, 0.1, C_B, baseline="median")

    def test_entropy_loss(self, tiny_params, rng):
        obs = rng.normal(size=(4, 3))
        expected = policy_dist.entropy(forward(tiny_params, obs).policy)
        np.testing.assert_allclose(entropy_loss(tiny_params, obs), expected)

    def test_value_loss(self, tiny_params):
        obs = np.array([0.5, 0.5, -1.0])
        value = float(forward(tiny_params, obs[None]).value[0])
        assert value_loss(tiny_params, [entry([0.0], [1], value_target=value, obs=obs)]) == pytest.approx(0.0, abs=1e-15)
        assert value_loss(tiny_params, [entry([0.0], [1], value_target=value + 0.2, obs=obs)]) == pytest.approx(0.04)

    def test_value_head_gradient(self, tiny_params, rng):
        entries = random_entries(rng, 6)
        values = forward(tiny_params, np.stack([e.obs for e in entries])).value
        residual = values - np.array([e.value_target for e in entries])
        _, grads = loss_and_grads(tiny_params, entries, 0.1, 0.1, C_B)
        assert grads["value.bias"][0] == pytest.approx(np.sum(2.0 * residual / len(entries)))

    def test_lambda_scales_entropy_linearly(self, tiny_params, rng):
        entries = random_entries(rng, 5)
        base = total_loss(tiny_params, entries, 0.1, 0.0, C_B).total
        once = total_loss(tiny_params, entries, 0.1, 0.1, C_B).total
        twice = total_loss(tiny_params, entries, 0.1, 0.2, C_B).total
        assert twice - base == pytest.approx(2.0 * (once - base), rel=1e-10)

    def test_non_finite_term_is_named(self, tiny_params):
        e = entry([0.1], [1], value_target=float("inf"))
        with pytest.raises(NumericError) as info:
            loss_and_grads(tiny_params, [e], 0.1, 0.1, C_B)
        assert info.value.term == "value"

    def test_empty_minibatch(self, tiny_params):
        with pytest.raises(DimensionError):
            loss_and_grads(tiny_params, [], 0.1, 0.1, C_B)


class TestGradients:

    @pytest.mark.parametrize("baseline", ["none", "mean"])
    @pytest.mark.parametrize("lambda_", [0.0, 0.1])
    def test_composite_matches_finite_differences(self, tiny_params, lambda_, baseline):
        rng = np.random.default_rng(31)
        for trial in range(50):
            params = tiny_params.map(lambda v: v + rng.normal(scale=0.3, size=v.shape))
            entries = random_entries(rng, 4)
            coefs = frozen_coefficients(params, entries, 0.1, baseline)
            _, grads = loss_and_grads(params, entries, 0.1, lambda_, C_B, baseline=baseline)

            h = 1e-6
            for name, value in params.items():
                for index in np.ndindex(value.shape):
                    plus, minus = params.copy(), params.copy()
                    plus[name][index] += h
                    minus[name][index] -= h
                    fd = (frozen_objective(plus, entries, coefs, lambda_) - frozen_objective(minus, entries, coefs, lambda_)) / (2 * h)
                    if abs(fd) < 1e-8 and abs(grads[name][index]) < 1e-8:
                        continue
                    assert grads[name][index] == pytest.approx(fd, rel=1e-4, abs=1e-7), f"trial {trial} {name}{index}"

    @pytest.mark.parametrize("baseline", ["none", "mean"])
    def test_surrogate_equals_estimator_on_toy_density(self, baseline):
        # one Beta(alpha, 1) density with alpha = 1 + softplus(b): the policy gradient
        # with respect to the policy bias is sum_i w_i (log pi_i - tau log n_i - b) dlog pi_i/db
        params = init_params(seed=0, hidden_units=2, hidden_layers=1)
        params = params.map(np.zeros_like)
        params["policy.bias"][:] = [0.7, -50.0]
        e = entry([0.4, -1.2], [5, 2])
        _, grads = loss_and_grads(params, [e], 0.25, 0.0, C_B, baseline=baseline)

        alpha = 1.0 + math.log1p(math.exp(0.7))
        beta = 1.0 + math.log1p(math.exp(-50.0))
        u = (np.array([0.4, -1.2]) / C_B + 1.0) / 2.0
        log_pi = (alpha - 1) * np.log(u) + (beta - 1) * np.log1p(-u) - (
            math.lgamma(alpha) + math.lgamma(beta) - math.lgamma(alpha + beta)
        ) - math.log(2 * C_B)
        d_log_pi = np.log(u) - (policy_dist.digamma(alpha) - policy_dist.digamma(alpha + beta))
        sigmoid = 1.0 / (1.0 + math.exp(-0.7))
        coef = log_pi - 0.25 * np.log([5, 2])
        if baseline == "mean":
            coef = coef - coef.mean()
        expected = np.mean(coef * d_log_pi) * sigmoid
        assert grads["policy.bias"][0] == pytest.approx(expected, rel=1e-8)


class TestTrainAfterEpisode:

    def test_one_full_batch_is_one_step(self, tiny_params, rng):
        buffer = ReplayBuffer()
        buffer.extend(random_entries(rng, 32))
        config = ExperimentConfig(n_trace=10, c_e=20, batch=32)
        params, state, stats = train_after_episode(tiny_params, init_optimizer(tiny_params), buffer, config, rng)
        assert stats.steps == 1 and stats.epochs == 1
        assert state.steps == 1
        assert np.isfinite(stats.policy) and np.isfinite(stats.entropy) and np.isfinite(stats.value)
        assert stats.action_entropy == pytest.approx(stats.entropy + math.log(2 * config.c_b))

    def test_epoch_schedule(self, tiny_params, rng):
        buffer = ReplayBuffer()
        buffer.extend(random_entries(rng, 10))
        config = ExperimentConfig(n_trace=25, c_e=20, batch=4)
        _, _, stats = train_after_episode(tiny_params, init_optimizer(tiny_params), buffer, config, rng)
        assert stats.epochs == 2
        assert stats.steps == 6

    def test_empty_buffer(self, tiny_params, rng):
        with pytest.raises(DimensionError):
            train_after_episode(tiny_params, init_optimizer(tiny_params), ReplayBuffer(), ExperimentConfig(), rng)

    def test_deterministic(self, tiny_params):
        def run():
            rng = np.random.default_rng(44)
            buffer = ReplayBuffer()
            buffer.extend(random_entries(np.random.default_rng(1), 20))
            config = ExperimentConfig(n_trace=40, batch=8)
            return train_after_episode(tiny_params.copy(), init_optimizer(tiny_params), buffer, config, rng)

        (p1, _, s1), (p2, _, s2) = run(), run()
        assert s1 == s2
        for name in p1:
            np.testing.assert_array_equal(p1[name], p2[name])

    def test_counts_shift_density_toward_visited_action(self):
        params = init_params(seed=6, hidden_units=16, hidden_layers=1)
        obs = np.zeros(3)
        value = float(forward(params, obs[None]).value[0])
        e = entry([1.0, -1.0], [9, 1], value_target=value)
        buffer = ReplayBuffer()
        buffer.push(e)

        def gap(p):
            log_pi = policy_dist.log_density(forward(p, obs[None]).policy.row(0), e.actions, C_B)
            return log_pi[0] - log_pi[1]

        assert gap(params) == pytest.approx(0.0, abs=1e-12)
        config = ExperimentConfig(n_trace=10, c_e=20, lambda_=1e-3)
        trained, _, stats = train_after_episode(params, init_optimizer(params, lr=config.lr), buffer, config, np.random.default_rng(0))
        assert stats.steps == 1
        assert gap(trained) > 0.0

    def test_network_density_approaches_count_profile(self):
        rng = np.random.default_rng(2)
        target = (20.0, 10.0)
        entries = []
        for _ in range(4):
            u = np.sort(rng.beta(*target, size=12))
            density = np.exp(policy_dist.beta_log_pdf(u, *target))
            counts = np.maximum(1, np.round(20 * density / density.max())).astype(int)
            entries.append(ReplayEntry(
                obs=rng.normal(size=3),
                actions=(C_B * (2 * u - 1))[:, None],
                counts=counts,
                value_target=-0.5,
            ))
        buffer = ReplayBuffer()
        buffer.extend(entries)
        params = init_params(seed=4, hidden_units=8, hidden_layers=1)
        config = ExperimentConfig(n_trace=10_000, c_e=20, lr=3e-2, lambda_=1e-3, tau=0.1, policy_baseline="none")

        def mean_abs_coef(p):
            return float(np.mean(np.abs(np.concatenate(frozen_coefficients(p, entries, config.tau)))))

        before = mean_abs_coef(params)
        trained, _, stats = train_after_episode(params, init_optimizer(params, lr=config.lr), buffer, config, rng)
        assert stats.epochs == 500
        assert mean_abs_coef(trained) <= 0.5 * before
