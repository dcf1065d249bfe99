"""
A0C Agent - Experiment Orchestrator
Coordinates environment, tree search, replay database and network training
into seeded repetitions of the episode loop.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from a0c.config import ExperimentConfig, settings
from a0c.core.env import Environment, PendulumEnv
from a0c.core.mcts import NetworkEvaluator, TreeSearch, advance_root, make_root, root_distribution
from a0c.core.netapprox import NetworkParams, init_optimizer, init_params, save_checkpoint
from a0c.core.training import LossStats, ReplayBuffer, make_entry, train_after_episode
from a0c.exceptions import DomainError, NumericError
from a0c.models.schemas import RepetitionResult, RunRecord
from a0c.utils.logger import logger, repetition_logger


class A0CAgent:
    """
    One isolated repetition: its own environment, network, optimizer,
    replay buffer and random stream, all derived from ``config.seed + rep``.
    """

    def __init__(self, config: ExperimentConfig, rep: int = 0, env: Optional[Environment] = None):
        self.config = config
        self.rep = rep
        self.seed = config.seed + rep
        self.env = env if env is not None else PendulumEnv(horizon=config.horizon, c_b=config.c_b)
        self.rng = np.random.default_rng(self.seed)
        self.log = repetition_logger(rep)

        self.params: NetworkParams = init_params(
            self.seed,
            obs_dim=self.env.obs_dim,
            n_a=self.env.n_a,
            hidden_units=config.hidden_units,
            hidden_layers=config.hidden_layers,
        )
        self.opt_state = init_optimizer(self.params, lr=config.lr, rho=config.rmsprop_rho, eps=config.rmsprop_eps)
        self.buffer = ReplayBuffer(config.buffer_capacity)

        self.real_steps = 0
        self.episodes = 0
        self.clamped_proposals = 0
        self.records: List[RunRecord] = []

    @property
    def accounted_steps(self) -> int:
        return self.real_steps * self.config.n_trace

    def play_episode(self) -> float:
        """
        Act in the environment until the episode ends, searching before
        every real step and storing one replay entry per root.

        Returns:
            Sum of scaled rewards
        """
        env = self.env
        evaluator = NetworkEvaluator(self.params)
        search = TreeSearch(env, evaluator, self.config)

        state = env.reset(int(self.rng.integers(2 ** 31 - 1)))
        root = make_root(env, state, evaluator)
        episode_return = 0.0
        while not root.terminal:
            result = search.run(root, self.config.n_trace, self.rng)
            action = root_distribution(result, self.rng)
            step = env.step(root.env_state, action)
            self.buffer.push(make_entry(result, root.obs))
            episode_return += step.reward
            self.real_steps += 1
            root = advance_root(root, action)

        self.clamped_proposals += search.clamped_proposals
        return episode_return

    def train(self) -> LossStats:
        self.params, self.opt_state, stats = train_after_episode(
            self.params, self.opt_state, self.buffer, self.config, self.rng
        )
        return stats

    def budget_exhausted(self, elapsed: float) -> bool:
        """Checked before each episode, so a budget is overshot by at most one episode"""
        config = self.config
        if self.accounted_steps >= config.budget_steps:
            return True
        if config.budget_seconds is not None and elapsed >= config.budget_seconds:
            return True
        if config.max_episodes is not None and self.episodes >= config.max_episodes:
            return True
        return False

    def run_episode(self, started: float) -> RunRecord:
        """Play one episode, train on the buffer and summarize both"""
        episode_return = self.play_episode()
        stats = self.train()
        record = RunRecord(
            rep=self.rep,
            episode=self.episodes,
            real_steps=self.real_steps,
            accounted_steps=self.accounted_steps,
            return_=episode_return,
            policy_loss=stats.policy,
            entropy=stats.entropy,
            value_loss=stats.value,
            wall_s=time.perf_counter() - started if self.config.record_wall_time else 0.0,
            skipped=stats.skipped,
        )
        self.episodes += 1
        self.records.append(record)
        self.log.info(
            f"episode {record.episode}: return={record.return_:.4f} "
            f"steps={record.accounted_steps} policy={stats.policy:.4f} "
            f"entropy={stats.entropy:.4f} (action box {stats.action_entropy:.4f}) "
            f"value={stats.value:.6f} skipped={record.skipped}"
        )
        return record

    def run(self, checkpoint_dir: Optional[Union[str, Path]] = None) -> RepetitionResult:
        """
        Loop episodes until the budget is spent, then optionally write the
        network to ``checkpoint_dir/rep{r}.npz``.

        A NumericError, or a DomainError from degenerate policy heads, aborts
        this repetition only; the records collected so far are kept together
        with the diagnostic.
        """
        self.log.info(f"Starting repetition (seed {self.seed}, n_trace {self.config.n_trace})")
        started = time.perf_counter()
        error = None
        try:
            # search and training messages carry this repetition too
            with logger.contextualize(rep=self.rep):
                while not self.budget_exhausted(time.perf_counter() - started):
                    self.run_episode(started)
        except (NumericError, DomainError) as e:
            error = str(e)
            self.log.error(f"Aborted after {self.episodes} episode(s): {error}")

        if checkpoint_dir is not None and error is None:
            path = save_checkpoint(self.params, Path(checkpoint_dir) / f"rep{self.rep}.npz")
            self.log.debug(f"Checkpoint written to {path}")

        if self.clamped_proposals:
            self.log.warning(f"{self.clamped_proposals} proposal(s) clamped inside the action box")
        self.log.info(
            f"Finished repetition: {self.episodes} episode(s), "
            f"{self.accounted_steps} accounted steps in {time.perf_counter() - started:.1f}s"
        )
        return RepetitionResult(
            rep=self.rep,
            seed=self.seed,
            n_trace=self.config.n_trace,
            records=self.records,
            error=error,
        )


def run_repetition(
    config: ExperimentConfig, rep: int, checkpoint_dir: Optional[Union[str, Path]] = None
) -> RepetitionResult:
    return A0CAgent(config, rep).run(checkpoint_dir)


def worker_count(threads: Optional[int], repetitions: int) -> int:
    """Requested workers, capped by A0C_THREADS and the number of repetitions"""
    requested = threads or settings.threads
    if requested > settings.threads:
        logger.warning(f"--threads {requested} exceeds A0C_THREADS={settings.threads}; using {settings.threads}")
    return max(1, min(requested, settings.threads, repetitions))


def run_experiment(
    config: ExperimentConfig,
    threads: Optional[int] = None,
    checkpoint_dir: Optional[Union[str, Path]] = None,
) -> List[RepetitionResult]:
    """
    Run ``config.repetitions`` isolated repetitions, in parallel worker
    processes when more than one thread is allowed.

    Args:
        config: Validated experiment configuration
        threads: Requested workers; defaults to A0C_THREADS, which also caps it
        checkpoint_dir: Where finished repetitions save their network

    Returns:
        One RepetitionResult per repetition, ordered by repetition index
    """
    workers = worker_count(threads, config.repetitions)
    reps = list(range(config.repetitions))
    if workers <= 1:
        results = [run_repetition(config, rep, checkpoint_dir) for rep in reps]
    else:
        logger.info(f"Running {config.repetitions} repetitions on {workers} worker(s)")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_repetition, [config] * len(reps), reps, [checkpoint_dir] * len(reps)))

    aborted = [r.rep for r in results if r.aborted]
    if aborted:
        logger.error(f"{len(aborted)} repetition(s) aborted: {aborted}")
    return sorted(results, key=lambda r: r.rep)
