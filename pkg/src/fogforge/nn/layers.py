"""Dense layers, batch normalization, MLP stacks, and masked softmax helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fogforge.model import ConfigurationError
from fogforge.nn.autodiff import Tensor, as_tensor, check_finite, where


class Module:
    """Base with recursive parameter/buffer discovery over attributes.

    Attribute iteration is name-sorted so parameter ordering is stable across
    runs; lists of submodules are indexed by position.
    """

    training: bool = True
    _buffer_names: tuple[str, ...] = ()

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self):
        for name in sorted(vars(self)):
            value = vars(self)[name]
            if isinstance(value, (Module, Tensor)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for k, item in enumerate(value):
                    if isinstance(item, (Module, Tensor)):
                        yield f"{name}.{k}", item

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    params[full] = value
            else:
                params.update(value.named_parameters(prefix=f"{full}."))
        return params

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def named_buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        buffers: dict[str, np.ndarray] = {}
        for name in self._buffer_names:
            buffers[f"{prefix}{name}"] = getattr(self, name)
        for name, value in self._children():
            if isinstance(value, Module):
                buffers.update(value.named_buffers(prefix=f"{prefix}{name}."))
        return buffers

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, value in self._children():
            if isinstance(value, Module):
                value.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {k: v.data.copy() for k, v in self.named_parameters().items()}
        state.update({k: v.copy() for k, v in self.named_buffers().items()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        buffers = self.named_buffers()
        expected = set(params) | set(buffers)
        if expected != set(state):
            missing = expected - set(state)
            extra = set(state) - expected
            raise ConfigurationError(
                f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}"
            )
        for name, tensor in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != tensor.data.shape:
                raise ConfigurationError(
                    f"shape mismatch for {name}: {value.shape} vs {tensor.data.shape}"
                )
            tensor.data = value.copy()
        for name, buf in buffers.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != buf.shape:
                raise ConfigurationError(
                    f"shape mismatch for buffer {name}: {value.shape} vs {buf.shape}"
                )
            buf[...] = value


class Linear(Module):
    """Affine map with uniform fan-in init, bound 1/sqrt(input_dim)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        if in_dim < 1 or out_dim < 1:
            raise ConfigurationError("linear dims must be >= 1")
        bound = 1.0 / np.sqrt(in_dim)
        self.w = Tensor(rng.uniform(-bound, bound, size=(in_dim, out_dim)), requires_grad=True)
        self.b = Tensor(rng.uniform(-bound, bound, size=(out_dim,)), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        if x.data.ndim != 2 or x.data.shape[1] != self.w.data.shape[0]:
            raise ConfigurationError(
                f"linear expects (N, {self.w.data.shape[0]}), got {x.shape}"
            )
        return x @ self.w + self.b


class BatchNorm(Module):
    """Per-feature normalization over the batch axis.

    Training mode normalizes by batch statistics (biased variance) and tracks
    running statistics with an unbiased variance estimate; eval mode applies
    the running statistics deterministically.
    """

    _buffer_names = ("running_mean", "running_var")

    def __init__(self, features: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(features), requires_grad=True)
        self.beta = Tensor(np.zeros(features), requires_grad=True)
        self.running_mean = np.zeros(features)
        self.running_var = np.ones(features)
        self.momentum = momentum
        self.eps = eps
        self._batch_stats_only = False

    def always_batch_stats(self) -> "BatchNorm":
        """Normalize by batch statistics in every mode and drop running buffers.

        Used where rollout-time and update-time outputs must agree exactly.
        """
        self._batch_stats_only = True
        self._buffer_names = ()
        return self

    def forward(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        if self.training or self._batch_stats_only:
            mu = x.mean(axis=0, keepdims=True)
            var = ((x - mu) ** 2).mean(axis=0, keepdims=True)
            if not self._batch_stats_only:
                n = x.data.shape[0]
                unbiased = var.data * (n / (n - 1)) if n > 1 else var.data
                m = self.momentum
                self.running_mean = (1 - m) * self.running_mean + m * mu.data.reshape(-1)
                self.running_var = (1 - m) * self.running_var + m * unbiased.reshape(-1)
        else:
            mu = Tensor(self.running_mean.reshape(1, -1))
            var = Tensor(self.running_var.reshape(1, -1))
        xhat = (x - mu) / (var + self.eps).sqrt()
        return xhat * self.gamma + self.beta


def _identity(x: Tensor) -> Tensor:
    return x


_ACTIVATIONS = {
    "tanh": lambda x: x.tanh(),
    "relu": lambda x: x.relu(),
    "identity": _identity,
}


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    activation: str = "tanh"
    batch_norm: bool = False
    final_batch_norm: bool = False

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ConfigurationError(f"all MLP dims must be >= 1: {self}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")


class Mlp(Module):
    """Affine stack: hidden layers use the configured activation (and batch
    norm when enabled); the output layer is linear, optionally normalized."""

    def __init__(self, spec: MlpSpec, rng: np.random.Generator):
        self.spec = spec
        dims = [spec.input_dim, *spec.hidden_dims, spec.output_dim]
        self.linears = [Linear(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]
        self.norms: list[Module] = []
        for i in range(len(self.linears)):
            hidden = i < len(self.linears) - 1
            use_norm = spec.batch_norm if hidden else spec.final_batch_norm
            self.norms.append(BatchNorm(dims[i + 1]) if use_norm else _NoNorm())

    def forward(self, x: Tensor) -> Tensor:
        act = _ACTIVATIONS[self.spec.activation]
        for i, linear in enumerate(self.linears):
            x = linear(x)
            x = self.norms[i](x)
            if i < len(self.linears) - 1:
                x = act(x)
        return check_finite(x, "mlp output")


class _NoNorm(Module):
    def forward(self, x: Tensor) -> Tensor:
        return x


# --- masked categorical utilities --------------------------------------------

def masked_log_softmax(scores: Tensor, mask: np.ndarray) -> Tensor:
    """Log-probabilities over entries where `mask` is true; others are 0.

    The max-shift constant is taken over masked entries only and detached, and
    deselected scores are replaced *before* exponentiation so no overflow or
    0 * inf can leak into the backward pass.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ConfigurationError("mask selects no entries")
    shift = float(scores.data[mask].max())
    zeros = np.zeros_like(scores.data)
    centered = where(mask, scores - shift, zeros)
    denom = where(mask, centered.exp(), zeros).sum()
    return where(mask, centered - denom.log(), zeros)


def masked_softmax(scores: Tensor, mask: np.ndarray) -> Tensor:
    """Probabilities over masked entries; deselected entries are exactly 0."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ConfigurationError("mask selects no entries")
    shift = float(scores.data[mask].max())
    zeros = np.zeros_like(scores.data)
    centered = where(mask, scores - shift, zeros)
    exp = where(mask, centered.exp(), zeros)
    return exp / exp.sum()


def masked_entropy(scores: Tensor, mask: np.ndarray) -> Tensor:
    """Shannon entropy of the masked categorical distribution."""
    probs = masked_softmax(scores, mask)
    logp = masked_log_softmax(scores, mask)
    zeros = np.zeros_like(scores.data)
    return -where(np.asarray(mask, dtype=bool), probs * logp, zeros).sum()
