"""Geometric neural operator: lifting, stacked graph-kernel integral
layers (full or factorized block-diagonal kernels), and projection, all
evaluated over a point-cloud radius graph built once per forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Mlp, Tensor

__all__ = ["RadiusGraph", "GnpConfig", "GnpModel", "build_graph",
           "brute_force_neighbors", "kernel_apply_full",
           "kernel_apply_factorized", "forward"]


@dataclass
class RadiusGraph:
    """Directed edges j -> i for all pairs with ||x_i - x_j|| < r.

    Self-edges included, so every node has at least one neighbor.  Edges
    are sorted by (destination, source) for a deterministic reduction
    order; edge features are computed once and reused by every layer.
    """

    points: np.ndarray
    radius: float
    src: np.ndarray
    dst: np.ndarray
    counts: np.ndarray  # in-degree per node
    edge_features: np.ndarray = field(repr=False, default=None)

    @property
    def n_nodes(self):
        return self.points.shape[0]

    @property
    def n_edges(self):
        return self.src.size

    def neighbor_lists(self):
        """Per-node sorted neighbor index lists."""
        out = [[] for _ in range(self.n_nodes)]
        for s, d in zip(self.src, self.dst):
            out[d].append(int(s))
        return [sorted(lst) for lst in out]


def brute_force_neighbors(points, radius):
    """O(N^2) reference scan; returns sorted (src, dst) edge arrays."""
    diff = points[:, None, :] - points[None, :, :]
    dist2 = np.sum(diff * diff, axis=-1)
    dst, src = np.nonzero(dist2 < radius * radius)
    order = np.lexsort((src, dst))
    return src[order], dst[order]


def build_graph(points, radius, with_features=True):
    """Exact radius graph via a cell grid (identical to the O(N^2) scan)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("points must be N x 3")
    if radius <= 0:
        raise ValueError("radius must be positive")
    n = points.shape[0]
    lo = points.min(axis=0)
    cells = np.floor((points - lo) / radius).astype(np.int64)
    buckets = {}
    for i, key in enumerate(map(tuple, cells)):
        buckets.setdefault(key, []).append(i)

    src_parts, dst_parts = [], []
    r2 = radius * radius
    for i in range(n):
        ci = cells[i]
        cand = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    cand.extend(buckets.get((ci[0] + dx, ci[1] + dy, ci[2] + dz),
                                            ()))
        cand = np.asarray(cand, dtype=np.intp)
        d2 = np.sum((points[cand] - points[i]) ** 2, axis=1)
        nb = cand[d2 < r2]
        nb.sort()
        src_parts.append(nb)
        dst_parts.append(np.full(nb.size, i, dtype=np.intp))
    src = np.concatenate(src_parts)
    dst = np.concatenate(dst_parts)
    counts = np.bincount(dst, minlength=n)
    graph = RadiusGraph(points=points, radius=float(radius), src=src, dst=dst,
                        counts=counts)
    if with_features:
        graph.edge_features = edge_feature_matrix(graph)
    return graph


def edge_feature_matrix(graph, values=None):
    """Per-edge kernel input: (x_dst, x_src, x_src - x_dst), optionally
    extended with the input-function values at both endpoints."""
    x = graph.points[graph.dst]
    y = graph.points[graph.src]
    feats = [x, y, y - x]
    if values is not None:
        feats.extend([values[graph.dst], values[graph.src]])
    return np.concatenate(feats, axis=1)


@dataclass(frozen=True)
class GnpConfig:
    """Architecture hyperparameters for one operator model."""

    in_channels: int
    out_channels: int
    latent_dim: int = 64
    depth: int = 4
    kernel_width: int = 128
    kernel_mode: str = "full"  # full | factorized
    n_blocks: int = 8
    block_dim: int = 8
    radius: float = 0.4
    edge_values: bool = False  # include a(x), a(y) in the kernel input

    def __post_init__(self):
        if self.kernel_mode not in ("full", "factorized"):
            raise ValueError(f"unknown kernel mode {self.kernel_mode!r}")
        if self.kernel_mode == "factorized":
            if self.n_blocks * self.block_dim != self.latent_dim:
                raise ValueError(
                    f"n_blocks * block_dim = {self.n_blocks * self.block_dim}"
                    f" must equal latent_dim = {self.latent_dim}")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")

    @property
    def edge_dim(self):
        return 9 + (2 * self.in_channels if self.edge_values else 0)

    def kernel_out_dim(self):
        if self.kernel_mode == "full":
            return self.latent_dim ** 2
        return self.n_blocks * self.block_dim ** 2

    def kernel_widths(self):
        n = self.kernel_width
        return (self.edge_dim, n // 4, n // 2, n, self.kernel_out_dim())

    def to_dict(self):
        return {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "latent_dim": self.latent_dim,
            "depth": self.depth,
            "kernel_width": self.kernel_width,
            "kernel_mode": self.kernel_mode,
            "n_blocks": self.n_blocks,
            "block_dim": self.block_dim,
            "radius": self.radius,
            "edge_values": self.edge_values,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class GnpLayer:
    """One kernel-integral layer: skip matrix, bias, kernel net, and (in
    factorized mode) the node-side mixing matrix."""

    def __init__(self, cfg, rng):
        d = cfg.latent_dim
        self.skip = Tensor(ad.glorot_uniform(rng, d, d), requires_grad=True)
        self.bias = Tensor(np.zeros(d), requires_grad=True)
        self.kernel_net = Mlp(cfg.kernel_widths(), rng)
        if cfg.kernel_mode == "factorized":
            cd = cfg.n_blocks * cfg.block_dim
            self.mix = Tensor(ad.glorot_uniform(rng, cd, d), requires_grad=True)
        else:
            self.mix = None

    def parameters(self, prefix):
        out = [(f"{prefix}.skip", self.skip), (f"{prefix}.bias", self.bias)]
        out += [(f"{prefix}.kernel.{n}", p)
                for n, p in self.kernel_net.parameters()]
        if self.mix is not None:
            out.append((f"{prefix}.mix", self.mix))
        return out


class GnpModel:
    """Lift -> depth kernel-integral layers -> projection."""

    def __init__(self, cfg, seed=0):
        self.cfg = cfg
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        d = cfg.latent_dim
        self.lift_w = Tensor(ad.glorot_uniform(rng, cfg.in_channels, d),
                             requires_grad=True)
        self.lift_b = Tensor(np.zeros(d), requires_grad=True)
        self.layers = [GnpLayer(cfg, rng) for _ in range(cfg.depth)]
        self.project = Mlp((d, 2 * d, cfg.out_channels), rng)

    def named_parameters(self):
        out = [("lift.w", self.lift_w), ("lift.b", self.lift_b)]
        for t, layer in enumerate(self.layers):
            out += layer.parameters(f"layer{t}")
        out += [(f"project.{n}", p) for n, p in self.project.parameters()]
        return out

    def parameter_count(self):
        return sum(p.data.size for _, p in self.named_parameters())

    def __call__(self, graph, a):
        return forward(self, graph, a)


def _mean_scale(graph):
    return (1.0 / graph.counts)[:, None]


def kernel_apply_full(layer, graph, v):
    """Mean-aggregated kernel integral with a dense d x d kernel per edge."""
    n, d = graph.n_nodes, v.shape[1]
    k = layer.kernel_net(Tensor(graph.edge_features)
                         if not isinstance(graph.edge_features, Tensor)
                         else graph.edge_features)
    if k.shape[1] != d * d:
        raise ValueError(
            f"kernel net output width {k.shape[1]} != latent_dim^2 = {d * d}")
    k = ad.reshape(k, (graph.n_edges, d, d))
    vs = ad.gather_rows(v, graph.src)
    msg = ad.batched_matvec(k, vs)
    agg = ad.segment_sum(msg, graph.dst, n)
    return ad.mul(agg, _mean_scale(graph))


def kernel_apply_factorized(layer, graph, v, n_blocks, block_dim):
    """Block-diagonal kernel per edge, mean aggregation, then the node-side
    mixing matrix (cheaper than mixing on every edge)."""
    n = graph.n_nodes
    e = graph.n_edges
    cd = n_blocks * block_dim
    k = layer.kernel_net(Tensor(graph.edge_features)
                         if not isinstance(graph.edge_features, Tensor)
                         else graph.edge_features)
    if k.shape[1] != n_blocks * block_dim * block_dim:
        raise ValueError(
            f"kernel net output width {k.shape[1]} != "
            f"n_blocks * block_dim^2 = {n_blocks * block_dim ** 2}")
    k = ad.reshape(k, (e, n_blocks, block_dim, block_dim))
    vs = ad.gather_rows(v, graph.src)
    vs = ad.reshape(vs, (e, n_blocks, block_dim))
    msg = ad.reshape(ad.batched_matvec(k, vs), (e, cd))
    agg = ad.segment_sum(msg, graph.dst, n)
    agg = ad.mul(agg, _mean_scale(graph))
    return ad.matmul(agg, layer.mix)


def forward(model, graph, a):
    """Full operator evaluation over one point cloud.

    a: node features, N x in_channels (array or Tensor).  Differentiable
    end to end through the autodiff tape.
    """
    cfg = model.cfg
    if not isinstance(a, Tensor):
        a = Tensor(a)
    if a.shape[1] != cfg.in_channels:
        raise ValueError(
            f"input has {a.shape[1]} channels, model expects {cfg.in_channels}")
    if graph.edge_features is None or (
            cfg.edge_values and graph.edge_features.shape[1] != cfg.edge_dim):
        graph.edge_features = edge_feature_matrix(
            graph, a.data if cfg.edge_values else None)
    v = ad.add(ad.matmul(a, model.lift_w), model.lift_b)
    last = cfg.depth - 1
    for t, layer in enumerate(model.layers):
        if cfg.kernel_mode == "full":
            kv = kernel_apply_full(layer, graph, v)
        else:
            kv = kernel_apply_factorized(layer, graph, v, cfg.n_blocks,
                                         cfg.block_dim)
        pre = ad.add(ad.add(ad.matmul(v, layer.skip), kv), layer.bias)
        v = pre if t == last else ad.relu(pre)
    return model.project(v)
