"""
Tree Search
Continuous-action UCT with progressive widening. New child actions are proposed
by the policy network, leaves are evaluated by the value network, and the
subtree of the played action is reused at the next timestep.

Visit bookkeeping: a node's own creation counts as one visit, so after any
complete trace every non-root interior node satisfies n = 1 + sum(edge.n).
A fresh root starts at n = 0 and satisfies n = sum(edge.n).
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Protocol, Tuple

import numpy as np

from a0c.config import ExperimentConfig
from a0c.core import policy_dist
from a0c.core.env import EnvState, Environment
from a0c.core.netapprox import NetworkParams, forward
from a0c.core.policy_dist import BetaPolicyParams
from a0c.exceptions import SearchError
from a0c.utils.logger import logger


MAX_PROPOSAL_RESAMPLES = 10
BOUNDARY_MARGIN = 1e-6


class Evaluator(Protocol):
    """Maps one observation to (policy parameters of shape (n_a,), state value)"""

    def __call__(self, obs: np.ndarray) -> Tuple[BetaPolicyParams, float]: ...


class NetworkEvaluator:
    """Evaluator backed by a read-only parameter snapshot"""

    def __init__(self, params: NetworkParams):
        self.params = params

    def __call__(self, obs: np.ndarray) -> Tuple[BetaPolicyParams, float]:
        output = forward(self.params, np.asarray(obs, dtype=np.float64)[None, :])
        return output.policy.row(0), float(output.value[0])


class UniformEvaluator:
    """Uniform proposals over the action box and a constant value"""

    def __init__(self, n_a: int = 1, value: float = 0.0):
        self.policy = BetaPolicyParams(alpha=np.ones(n_a), beta=np.ones(n_a))
        self.value = value

    def __call__(self, obs: np.ndarray) -> Tuple[BetaPolicyParams, float]:
        return self.policy, self.value


@dataclass(eq=False)
class ActionEdge:
    """Child action with statistics {n, W, Q} and the immediate reward"""
    action: np.ndarray
    n: int = 0
    W: float = 0.0
    Q: float = 0.0
    reward: float = 0.0
    child: Optional["StateNode"] = None


@dataclass(eq=False)
class StateNode:
    """Search-tree state; policy is None for terminal nodes"""
    env_state: EnvState
    obs: np.ndarray
    terminal: bool
    policy: Optional[BetaPolicyParams] = None
    n: int = 0
    edges: List[ActionEdge] = field(default_factory=list)


@dataclass(frozen=True)
class SearchResult:
    """Root support (action, count) pairs, their Q values and the value target"""
    root_actions: List[Tuple[np.ndarray, int]]
    root_q: List[float]
    value_target: float

    @property
    def counts(self) -> np.ndarray:
        return np.array([count for _, count in self.root_actions])

    @property
    def actions(self) -> np.ndarray:
        return np.stack([action for action, _ in self.root_actions])


def make_root(env: Environment, state: EnvState, evaluator: Evaluator) -> StateNode:
    """Fresh root node for an environment state"""
    obs = env.observe(state)
    terminal = env.is_terminal(state)
    policy = None if terminal else evaluator(obs)[0]
    return StateNode(env_state=state, obs=obs, terminal=terminal, policy=policy)


class TreeSearch:
    """
    Runs select -> widen/expand -> evaluate -> backup traces on a tree it
    exclusively owns for the duration of a search.
    """

    def __init__(self, env: Environment, evaluator: Evaluator, config: ExperimentConfig):
        self.env = env
        self.evaluator = evaluator
        self.config = config
        self.clamped_proposals = 0

    def select_edge(self, node: StateNode) -> ActionEdge:
        """
        argmax_a Q(s,a) + c_puct * sqrt(n(s)) / (n(s,a) + 1); ties go to the
        lowest edge index.

        Raises:
            SearchError: node has no edges
        """
        if not node.edges:
            raise SearchError("select on a node without edges", "widening must fire first")
        bonus = self.config.c_puct * math.sqrt(node.n)
        scores = np.array([edge.Q + bonus / (edge.n + 1) for edge in node.edges])
        return node.edges[int(np.argmax(scores))]

    def widening_limit(self, node: StateNode) -> int:
        """m(s) = ceil(c_pw * max(n(s), 1)^kappa)"""
        return math.ceil(self.config.c_pw * max(node.n, 1) ** self.config.kappa)

    def propose_action(self, policy: BetaPolicyParams, rng: np.random.Generator) -> np.ndarray:
        """Sample a strictly interior action with nonzero density"""
        c_b = self.config.c_b
        action = policy_dist.sample(policy, c_b, rng)
        for _ in range(MAX_PROPOSAL_RESAMPLES):
            interior = np.all(np.abs(action) < c_b)
            if interior and np.isfinite(policy_dist.log_density(policy, action, c_b)):
                return action
            action = policy_dist.sample(policy, c_b, rng)
        self.clamped_proposals += 1
        logger.warning(f"Degenerate proposal {action} clamped inside the action box")
        return np.clip(action, -c_b + BOUNDARY_MARGIN, c_b - BOUNDARY_MARGIN)

    def maybe_widen(self, node: StateNode, rng: np.random.Generator) -> Optional[ActionEdge]:
        """Append a freshly proposed edge if |edges| < m(s)"""
        if node.terminal:
            return None
        if len(node.edges) >= self.widening_limit(node):
            return None
        if node.policy is None:
            node.policy = self.evaluator(node.obs)[0]
        edge = ActionEdge(action=self.propose_action(node.policy, rng))
        node.edges.append(edge)
        return edge

    def expand_and_evaluate(self, edge: ActionEdge, parent: StateNode) -> float:
        """
        Simulate the edge, attach the child node and return its leaf value
        (0 for terminal children).

        Raises:
            SearchError: edge already expanded
        """
        if edge.child is not None:
            raise SearchError("edge already expanded")
        step = self.env.step(parent.env_state, edge.action)
        edge.reward = step.reward
        obs = self.env.observe(step.next_state)
        if step.terminal:
            edge.child = StateNode(env_state=step.next_state, obs=obs, terminal=True)
            return 0.0
        policy, value = self.evaluator(obs)
        edge.child = StateNode(env_state=step.next_state, obs=obs, terminal=False, policy=policy)
        return value

    def _trace(self, root: StateNode, rng: np.random.Generator) -> None:
        path: List[Tuple[StateNode, ActionEdge]] = []
        node = root
        while True:
            if node.terminal:
                leaf_value = 0.0
                break
            edge = self.maybe_widen(node, rng)
            if edge is None:
                edge = self.select_edge(node)
            path.append((node, edge))
            if edge.child is None:
                leaf_value = self.expand_and_evaluate(edge, node)
                break
            node = edge.child
        backup(path, leaf_value, self.config.gamma)

    def run(self, root: StateNode, n_trace: int, rng: np.random.Generator) -> SearchResult:
        """
        Execute exactly n_trace traces from root.

        Raises:
            SearchError: terminal root or n_trace < 1
        """
        if root.terminal:
            raise SearchError("search from a terminal root")
        if n_trace < 1:
            raise SearchError("trace budget must be >= 1", f"got {n_trace}")
        for _ in range(n_trace):
            self._trace(root, rng)
        result = search_result(root, self.config.value_target)
        logger.debug(
            f"Search done: n(s0)={root.n}, edges={len(root.edges)}, value_target={result.value_target:.6f}"
        )
        return result


def backup(path: List[Tuple[StateNode, ActionEdge]], leaf_value: float, gamma: float) -> None:
    """
    Walk the trace leaf to root with R_i = r_i + gamma * R_{i+1}, updating
    n, W, Q on each edge and n on each node, including the leaf node reached.
    """
    if not path:
        return
    leaf = path[-1][1].child
    if leaf is not None:
        leaf.n += 1
    ret = leaf_value
    for node, edge in reversed(path):
        ret = edge.reward + gamma * ret
        edge.W += ret
        edge.n += 1
        edge.Q = edge.W / edge.n
        node.n += 1


def search_result(root: StateNode, value_target: str = "max") -> SearchResult:
    """Collect visited root edges; value target is max Q or count-weighted mean Q"""
    visited = [edge for edge in root.edges if edge.n > 0]
    if not visited:
        raise SearchError("root has no visited edges")
    q = [edge.Q for edge in visited]
    if value_target == "mean":
        counts = np.array([edge.n for edge in visited], dtype=np.float64)
        target = float(np.dot(counts, q) / counts.sum())
    else:
        target = max(q)
    return SearchResult(
        root_actions=[(edge.action.copy(), edge.n) for edge in visited],
        root_q=q,
        value_target=target,
    )


def run_search(
    root: StateNode,
    env: Environment,
    evaluator: Evaluator,
    n_trace: int,
    config: ExperimentConfig,
    rng: np.random.Generator,
) -> SearchResult:
    """Functional entry point over TreeSearch.run"""
    return TreeSearch(env, evaluator, config).run(root, n_trace, rng)


def root_probabilities(result: SearchResult) -> np.ndarray:
    """pi_hat(a|s0) = n(s0,a) / n(s0)"""
    counts = result.counts.astype(np.float64)
    return counts / counts.sum()


def root_distribution(result: SearchResult, rng: np.random.Generator) -> np.ndarray:
    """Sample the action to play from the normalized root counts"""
    probs = root_probabilities(result)
    index = int(rng.choice(len(probs), p=probs))
    return result.root_actions[index][0].copy()


def advance_root(root: StateNode, chosen: np.ndarray) -> StateNode:
    """
    Keep the subtree of the chosen action as the next root; siblings are dropped.

    Raises:
        SearchError: no root edge with that action, or the edge was never expanded
    """
    for edge in root.edges:
        if np.array_equal(edge.action, chosen):
            if edge.child is None:
                raise SearchError("chosen edge has no subtree")
            child = edge.child
            root.edges = []
            return child
    raise SearchError("no root edge matches the chosen action", f"{chosen}")


def render_tree(node: StateNode, max_depth: int = 2, precision: int = 4) -> str:
    """Indented text dump of nodes and edges with n, W, Q"""
    lines: List[str] = []

    def _walk(current: StateNode, depth: int, indent: str) -> None:
        tag = " terminal" if current.terminal else ""
        lines.append(f"{indent}[node n={current.n}{tag}]")
        if depth >= max_depth:
            return
        for edge in current.edges:
            action = ", ".join(f"{x:.{precision}f}" for x in np.atleast_1d(edge.action))
            lines.append(
                f"{indent}  -> a=({action}) n={edge.n} W={edge.W:.{precision}f} "
                f"Q={edge.Q:.{precision}f} r={edge.reward:.{precision}f}"
            )
            if edge.child is not None:
                _walk(edge.child, depth + 1, indent + "    ")

    _walk(node, 0, "")
    return "\n".join(lines)
