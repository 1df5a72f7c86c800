"""Recurrent graph neural network with a mean readout over all nodes.

Each of the ``K`` synchronous iterations updates every node state with the
state network ``f_w`` applied to ``[x_n ; l_n ; a * sum_{m->n} (x_m ; l_m ; e_mn)]``,
starting from ``x = 0``. The graph output is the mean of the output network
``g_w([x_n^K ; l_n])`` over the nodes. Gradients are propagated exactly
through the unrolled iterations.

Graphs are processed in batches as a disjoint union; the neighbour sums are
sparse matrix products whose rows are visited in ``(target, source)`` order,
so summation order is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .molgraph import NUM_BOND_KINDS, NUM_GROUPS, MolGraph
from .nn import Mlp, MlpCache, NumericalFault, mlp_backward, mlp_forward

LABEL_DIM = NUM_GROUPS
MESSAGE_DIM_EXTRA = NUM_GROUPS + NUM_BOND_KINDS


@dataclass
class GnnParams:
    f_w: Mlp
    g_w: Mlp
    state_dim: int
    iterations: int = 6
    aggregation: float = 1.0

    def __post_init__(self):
        s = self.state_dim
        if s < 1 or self.iterations < 1:
            raise ValueError("state_dim and iterations must be >= 1")
        if self.f_w.in_dim != 2 * s + LABEL_DIM + MESSAGE_DIM_EXTRA or self.f_w.out_dim != s:
            raise ValueError(
                f"state network must map {2 * s + LABEL_DIM + MESSAGE_DIM_EXTRA} -> {s}, "
                f"got {self.f_w.in_dim} -> {self.f_w.out_dim}"
            )
        if self.g_w.in_dim != s + LABEL_DIM:
            raise ValueError(f"output network input must be {s + LABEL_DIM}, got {self.g_w.in_dim}")

    @classmethod
    def create(
        cls,
        num_classes: int,
        state_dim: int = 32,
        iterations: int = 6,
        aggregation: float = 1.0,
        state_hidden: Sequence[int] = (150, 150),
        output_hidden: Sequence[int] = (100, 100),
        seed: int | np.random.Generator = 0,
        dtype=np.float64,
    ) -> "GnnParams":
        """Randomly initialised parameters.

        The state network is SeLU throughout with LeCun-normal weights; the
        output network uses SeLU hidden layers, a sigmoid output layer and
        Glorot-normal weights.
        """
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        f_sizes = [2 * state_dim + LABEL_DIM + MESSAGE_DIM_EXTRA, *state_hidden, state_dim]
        g_sizes = [state_dim + LABEL_DIM, *output_hidden, num_classes]
        f_w = Mlp.create(f_sizes, ["selu"] * (len(f_sizes) - 1), "lecun_normal", rng, dtype)
        g_w = Mlp.create(
            g_sizes, ["selu"] * (len(g_sizes) - 2) + ["sigmoid"], "glorot_normal", rng, dtype
        )
        return cls(f_w, g_w, state_dim, iterations, aggregation)

    @property
    def num_classes(self) -> int:
        return self.g_w.out_dim

    @property
    def dtype(self):
        return self.f_w.layers[0].weight.dtype

    def arrays(self) -> dict[str, np.ndarray]:
        """Named views of every learnable array (mutating them mutates the model)."""
        out = dict(self.f_w.named_arrays("f_w."))
        out.update(self.g_w.named_arrays("g_w."))
        return out

    def copy(self) -> "GnnParams":
        return GnnParams(self.f_w.copy(), self.g_w.copy(), self.state_dim, self.iterations, self.aggregation)


class GraphBatch:
    """A set of graphs merged into one disjoint union for vectorised passes."""

    def __init__(self, graphs: Sequence[MolGraph], dtype=np.float64):
        if not graphs:
            raise ValueError("empty batch")
        sizes = np.array([g.num_nodes for g in graphs], dtype=np.int64)
        if (sizes == 0).any():
            raise ValueError("graphs must have at least one node")
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.num_graphs = len(graphs)
        self.num_nodes = int(sizes.sum())
        self.sizes = sizes
        self.labels = np.concatenate([g.nodes for g in graphs]).astype(dtype)

        edges = [g.edges for g in graphs]
        src = np.concatenate([e[:, 0] + o for e, o in zip(edges, offsets)]).astype(np.int64)
        tgt = np.concatenate([e[:, 1] + o for e, o in zip(edges, offsets)]).astype(np.int64)
        bond = np.concatenate([e[:, 2:] for e in edges]).astype(dtype)
        n = self.num_nodes
        # adjacency[n, m] = number of edges m -> n
        self.adjacency = sp.csr_matrix(
            (np.ones(len(src), dtype=dtype), (tgt, src)), shape=(n, n)
        )
        self.adjacency.sum_duplicates()
        self.adjacency.sort_indices()
        incidence = sp.csr_matrix(
            (np.ones(len(src), dtype=dtype), (tgt, np.arange(len(src)))), shape=(n, len(src))
        )
        # label and bond parts of the neighbour sum do not depend on the state
        self.static_messages = np.asarray(
            incidence @ np.hstack([self.labels[src], bond]), dtype=dtype
        ).reshape(n, MESSAGE_DIM_EXTRA)

        node_graph = np.repeat(np.arange(self.num_graphs), sizes)
        self.pool = sp.csr_matrix(
            (1.0 / sizes[node_graph].astype(dtype), (node_graph, np.arange(n))),
            shape=(self.num_graphs, n),
        )
        self.targets = np.stack([np.asarray(g.target, dtype=dtype) for g in graphs])


@dataclass
class GnnCache:
    state_caches: list[MlpCache]
    output_cache: MlpCache
    states: list[np.ndarray]  # x^0 .. x^K, each N x s


def neighbor_aggregate(graph: MolGraph | GraphBatch, states: np.ndarray, aggregation: float = 1.0) -> np.ndarray:
    """``a * sum over incoming edges m -> n of [x_m ; l_m ; e_mn]`` for every node ``n``."""
    batch = graph if isinstance(graph, GraphBatch) else GraphBatch([graph], states.dtype)
    if states.ndim != 2 or states.shape[0] != batch.num_nodes:
        raise ValueError(f"expected {batch.num_nodes} state rows, got {states.shape}")
    return aggregation * np.hstack([batch.adjacency @ states, batch.static_messages])


def forward_batch(params: GnnParams, batch: GraphBatch) -> tuple[np.ndarray, GnnCache]:
    """Return graph outputs (num_graphs x C) and the cache for :func:`backward_batch`."""
    a = params.aggregation
    x = np.zeros((batch.num_nodes, params.state_dim), dtype=params.dtype)
    static = a * batch.static_messages
    states = [x]
    caches = []
    for t in range(1, params.iterations + 1):
        inp = np.hstack([x, batch.labels, a * (batch.adjacency @ x), static])
        x, cache = mlp_forward(params.f_w, inp)
        if not np.all(np.isfinite(x)):
            raise NumericalFault(f"non-finite node state at iteration {t}")
        states.append(x)
        caches.append(cache)
    node_out, out_cache = mlp_forward(params.g_w, np.hstack([x, batch.labels]))
    y = np.asarray(batch.pool @ node_out)
    return y, GnnCache(caches, out_cache, states)


def backward_batch(params: GnnParams, batch: GraphBatch, cache: GnnCache, grad_y: np.ndarray) -> GnnParams:
    """Gradients of a scalar loss w.r.t. all parameters, given ``dL/dy`` per graph."""
    if cache is None or len(cache.state_caches) != params.iterations:
        raise ValueError("missing or mismatched forward cache")
    s = params.state_dim
    a = params.aggregation
    grad_nodes = np.asarray(batch.pool.T @ grad_y)
    grad_in, g_grads = mlp_backward(params.g_w, cache.output_cache, grad_nodes)
    dx = grad_in[:, :s]
    f_grads = params.f_w.zeros_like()
    agg_lo = s + LABEL_DIM
    for t in range(params.iterations - 1, -1, -1):
        grad_in, step = mlp_backward(params.f_w, cache.state_caches[t], dx)
        for acc, g in zip(f_grads.layers, step.layers):
            acc.weight += g.weight
            acc.bias += g.bias
        dx = grad_in[:, :s] + a * (batch.adjacency.T @ grad_in[:, agg_lo : agg_lo + s])
    return GnnParams(f_grads, g_grads, params.state_dim, params.iterations, params.aggregation)


def gnn_forward(params: GnnParams, graph: MolGraph) -> tuple[np.ndarray, GnnCache]:
    """Output vector of a single graph, plus the cache needed for backward."""
    y, cache = forward_batch(params, GraphBatch([graph], params.dtype))
    return y[0], cache


def gnn_backward(params: GnnParams, graph: MolGraph, cache: GnnCache, grad_y: np.ndarray) -> GnnParams:
    return backward_batch(params, GraphBatch([graph], params.dtype), cache, np.atleast_2d(grad_y))


def predict_scores(params: GnnParams, graphs: Sequence[MolGraph], batch_size: int = 256) -> np.ndarray:
    """Scores for many graphs, ``len(graphs) x C``."""
    out = [
        forward_batch(params, GraphBatch(graphs[i : i + batch_size], params.dtype))[0]
        for i in range(0, len(graphs), batch_size)
    ]
    return np.vstack(out) if out else np.zeros((0, params.num_classes))


def predict(params: GnnParams, graph: MolGraph, threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Binary prediction (``score > threshold``) and the raw score vector."""
    scores, _ = gnn_forward(params, graph)
    return (scores > threshold).astype(np.int8), scores
