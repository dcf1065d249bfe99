"""
Network Approximator
Shared ELU trunk with a Beta-parameter policy head and a linear value head,
reverse-mode gradients and an RMSProp optimizer, all in numpy.
"""

from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from a0c.core.policy_dist import BetaPolicyParams
from a0c.exceptions import DimensionError, NumericError
from a0c.utils.logger import logger


CHECKPOINT_VERSION = 1
_VERSION_KEY = "__a0c_checkpoint_version__"


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, 1.0, np.exp(np.minimum(x, 0.0)))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class NetworkParams:
    """Named weight matrices (fan_in, fan_out) and bias vectors"""
    arrays: "OrderedDict[str, np.ndarray]"

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def items(self):
        return self.arrays.items()

    @property
    def hidden_layers(self) -> int:
        return sum(1 for name in self.arrays if name.startswith("trunk.") and name.endswith(".weight"))

    @property
    def obs_dim(self) -> int:
        return self.arrays["trunk.0.weight"].shape[0]

    @property
    def n_a(self) -> int:
        return self.arrays["policy.weight"].shape[1] // 2

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "NetworkParams":
        return NetworkParams(OrderedDict((k, fn(v)) for k, v in self.arrays.items()))

    def zip_map(self, other: "NetworkParams", fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "NetworkParams":
        return NetworkParams(OrderedDict((k, fn(v, other.arrays[k])) for k, v in self.arrays.items()))

    def copy(self) -> "NetworkParams":
        return self.map(np.copy)

    def zeros_like(self) -> "NetworkParams":
        return self.map(np.zeros_like)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())


@dataclass(frozen=True)
class ForwardOutput:
    """Policy parameters (batch, n_a) and state values (batch,)"""
    policy: BetaPolicyParams
    value: np.ndarray


@dataclass
class ForwardCache:
    """Intermediate values kept for the backward pass"""
    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)
    features: Optional[np.ndarray] = None
    head_logits: Optional[np.ndarray] = None


@dataclass
class OptimizerState:
    """RMSProp running averages of squared gradients"""
    accumulators: NetworkParams
    rho: float = 0.9
    eps: float = 1e-8
    lr: float = 1e-4
    steps: int = 0


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(
    seed: int,
    obs_dim: int = 3,
    n_a: int = 1,
    hidden_units: int = 128,
    hidden_layers: int = 3,
) -> NetworkParams:
    """
    Glorot-uniform weights and zero biases.

    Args:
        seed: Random seed; equal seeds give identical parameters
        obs_dim: Observation length
        n_a: Action dimensionality
        hidden_units: Width of every trunk layer
        hidden_layers: Number of trunk layers

    Returns:
        NetworkParams
    """
    if min(obs_dim, n_a, hidden_units, hidden_layers) < 1:
        raise DimensionError("network dimensions must be positive")
    rng = np.random.default_rng(seed)
    arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
    fan_in = obs_dim
    for i in range(hidden_layers):
        arrays[f"trunk.{i}.weight"] = _glorot(rng, fan_in, hidden_units)
        arrays[f"trunk.{i}.bias"] = np.zeros(hidden_units)
        fan_in = hidden_units
    arrays["policy.weight"] = _glorot(rng, fan_in, 2 * n_a)
    arrays["policy.bias"] = np.zeros(2 * n_a)
    arrays["value.weight"] = _glorot(rng, fan_in, 1)
    arrays["value.bias"] = np.zeros(1)
    return NetworkParams(arrays)


def forward_with_cache(params: NetworkParams, obs: np.ndarray) -> Tuple[ForwardOutput, ForwardCache]:
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[1] != params.obs_dim:
        raise DimensionError("observation batch must be (batch, obs_dim)", f"got {obs.shape}, obs_dim={params.obs_dim}")

    cache = ForwardCache()
    h = obs
    for i in range(params.hidden_layers):
        cache.inputs.append(h)
        pre = h @ params[f"trunk.{i}.weight"] + params[f"trunk.{i}.bias"]
        cache.pre_activations.append(pre)
        h = elu(pre)
    cache.features = h

    logits = h @ params["policy.weight"] + params["policy.bias"]
    cache.head_logits = logits
    n_a = params.n_a
    alpha = 1.0 + softplus(logits[:, :n_a])
    beta = 1.0 + softplus(logits[:, n_a:])
    value = (h @ params["value.weight"] + params["value.bias"])[:, 0]
    return ForwardOutput(policy=BetaPolicyParams(alpha=alpha, beta=beta), value=value), cache


def forward(params: NetworkParams, obs: np.ndarray) -> ForwardOutput:
    """
    Evaluate the network on a batch of observations.

    Raises:
        DimensionError: obs is not (batch, obs_dim)
    """
    output, _ = forward_with_cache(params, obs)
    return output


def backward(
    params: NetworkParams,
    cache: ForwardCache,
    d_alpha: np.ndarray,
    d_beta: np.ndarray,
    d_value: np.ndarray,
) -> NetworkParams:
    """
    Gradients of a scalar loss with respect to every parameter, given the
    loss gradients with respect to the head outputs alpha, beta (batch, n_a)
    and value (batch,).
    """
    grads: Dict[str, np.ndarray] = {}
    n_a = params.n_a
    logits = cache.head_logits
    d_logits = np.concatenate(
        [d_alpha * sigmoid(logits[:, :n_a]), d_beta * sigmoid(logits[:, n_a:])], axis=1
    )
    d_value = np.asarray(d_value, dtype=np.float64).reshape(-1, 1)
    h = cache.features

    grads["policy.weight"] = h.T @ d_logits
    grads["policy.bias"] = d_logits.sum(axis=0)
    grads["value.weight"] = h.T @ d_value
    grads["value.bias"] = d_value.sum(axis=0)

    d_h = d_logits @ params["policy.weight"].T + d_value @ params["value.weight"].T
    for i in reversed(range(params.hidden_layers)):
        d_pre = d_h * elu_grad(cache.pre_activations[i])
        grads[f"trunk.{i}.weight"] = cache.inputs[i].T @ d_pre
        grads[f"trunk.{i}.bias"] = d_pre.sum(axis=0)
        d_h = d_pre @ params[f"trunk.{i}.weight"].T

    return NetworkParams(OrderedDict((name, grads[name]) for name in params))


def init_optimizer(params: NetworkParams, lr: float = 1e-4, rho: float = 0.9, eps: float = 1e-8) -> OptimizerState:
    return OptimizerState(accumulators=params.zeros_like(), rho=rho, eps=eps, lr=lr)


def rmsprop_step(
    params: NetworkParams,
    grads: NetworkParams,
    state: OptimizerState,
) -> Tuple[NetworkParams, OptimizerState]:
    """
    v <- rho v + (1 - rho) g^2 ; theta <- theta - lr g / (sqrt(v) + eps)

    Raises:
        NumericError: non-finite gradient (step aborted) or parameters
    """
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise DimensionError("gradient shape mismatch", f"{name}: {g.shape} vs {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient, optimizer step aborted", term=name)

    rho, eps, lr = state.rho, state.eps, state.lr
    accumulators = state.accumulators.zip_map(grads, lambda v, g: rho * v + (1.0 - rho) * g * g)
    updated = NetworkParams(OrderedDict(
        (name, value - lr * grads[name] / (np.sqrt(accumulators[name]) + eps))
        for name, value in params.items()
    ))
    if not updated.all_finite():
        raise NumericError("non-finite parameters after optimizer step")

    new_state = OptimizerState(accumulators=accumulators, rho=rho, eps=eps, lr=lr, steps=state.steps + 1)
    logger.debug(f"RMSProp step {new_state.steps}")
    return updated, new_state


def save_checkpoint(params: NetworkParams, path: Union[str, Path]) -> Path:
    """Write named arrays plus a version header to an .npz container"""
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **{_VERSION_KEY: np.array(CHECKPOINT_VERSION)}, **params.arrays)
    return path


def load_checkpoint(path: Union[str, Path]) -> NetworkParams:
    """
    Read a checkpoint written by save_checkpoint.

    Raises:
        DimensionError: missing version header or unsupported version
    """
    with np.load(Path(path)) as data:
        if _VERSION_KEY not in data.files:
            raise DimensionError("not an A0C checkpoint", str(path))
        version = int(data[_VERSION_KEY])
        if version != CHECKPOINT_VERSION:
            raise DimensionError("unsupported checkpoint version", f"{version} != {CHECKPOINT_VERSION}")
        arrays = OrderedDict((name, data[name].copy()) for name in data.files if name != _VERSION_KEY)
    return NetworkParams(arrays)
