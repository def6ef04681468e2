"""Graph isomorphism network over the service dependency graph.

Each round aggregates (1 + epsilon) * self + sum of neighbors and feeds the
result through that round's MLP; node embeddings are mean-pooled into a graph
embedding. Aggregation treats edges as undirected so priority information
flows both ways along dependencies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fogforge.model import ConfigurationError
from fogforge.nn import Mlp, MlpSpec, Module, Tensor, as_tensor
from fogforge.nn.layers import BatchNorm


@dataclass(frozen=True)
class GinConfig:
    """Encoder shape.

    ``hidden_dim`` defaults to 32 so the service head's input, the
    concatenation of graph and node embeddings, is 64 wide. ``mlp_layers``
    counts affine layers per round; each is followed by batch normalization
    computed from batch statistics in every mode, which keeps the encoder
    permutation-invariant and makes repeated forward passes agree exactly.
    """

    node_feature_dim: int = 5
    hidden_dim: int = 32
    k_iterations: int = 2
    mlp_layers: int = 4
    batch_norm: bool = True

    def __post_init__(self) -> None:
        if min(self.node_feature_dim, self.hidden_dim, self.k_iterations, self.mlp_layers) < 1:
            raise ConfigurationError(f"all encoder dims must be >= 1: {self}")


@dataclass
class GraphEmbedding:
    node_embeddings: Tensor  # (tasks, hidden_dim)
    graph_embedding: Tensor  # (1, hidden_dim), arithmetic mean over nodes


class GinEncoder(Module):
    def __init__(self, config: GinConfig, rng: np.random.Generator):
        self.config = config
        self.input_mlp = self._make_mlp(config.node_feature_dim, rng)
        self.round_mlps = [self._make_mlp(config.hidden_dim, rng) for _ in range(config.k_iterations)]
        self.epsilons = [
            Tensor(np.zeros(1), requires_grad=True) for _ in range(config.k_iterations)
        ]

    def _make_mlp(self, in_dim: int, rng: np.random.Generator) -> Mlp:
        cfg = self.config
        hidden = tuple(cfg.hidden_dim for _ in range(cfg.mlp_layers - 1))
        # no norm on the output layer: normalizing there would pin the node
        # mean to the norm bias and erase the pooled graph embedding
        mlp = Mlp(
            MlpSpec(
                input_dim=in_dim,
                hidden_dims=hidden,
                output_dim=cfg.hidden_dim,
                activation="tanh",
                batch_norm=cfg.batch_norm,
                final_batch_norm=False,
            ),
            rng,
        )
        for norm in mlp.norms:
            if isinstance(norm, BatchNorm):
                norm.always_batch_stats()
        return mlp

    def forward(self, node_features, adjacency: np.ndarray) -> GraphEmbedding:
        x = as_tensor(node_features)
        if x.data.ndim != 2 or x.data.shape[1] != self.config.node_feature_dim:
            raise ConfigurationError(
                f"node features must be (tasks, {self.config.node_feature_dim}), got {x.shape}"
            )
        tasks = x.data.shape[0]
        adjacency = np.asarray(adjacency, dtype=np.float64)
        if adjacency.shape != (tasks, tasks):
            raise ConfigurationError(
                f"adjacency must be ({tasks}, {tasks}), got {adjacency.shape}"
            )
        adj = Tensor(adjacency)

        h = self.input_mlp(x)
        for eps, mlp in zip(self.epsilons, self.round_mlps):
            aggregated = (1.0 + eps) * h + adj @ h
            h = mlp(aggregated)
        return GraphEmbedding(node_embeddings=h, graph_embedding=h.mean(axis=0, keepdims=True))
