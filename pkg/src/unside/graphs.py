"""Toy graphs: generators, simplex encoding, statistics and MMD."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .simplex import ValidationError, clamp_to_simplex, nearest_vertex, one_hot

N_BINS = 20
MAX_NODES = 32
GENERATORS = ("erdos-renyi", "two-block-sbm", "path-graph")


@dataclass
class GraphInstance:
    """Undirected graph; edge categories stored once per upper-triangle pair
    in ``numpy.triu_indices(n, 1)`` order. Edge category 0 means no edge."""

    n: int
    node_cats: np.ndarray
    edge_cats: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("a graph needs at least one node")
        self.node_cats = np.asarray(self.node_cats, dtype=np.int64).reshape(-1)
        self.edge_cats = np.asarray(self.edge_cats, dtype=np.int64).reshape(-1)
        if self.node_cats.size != self.n:
            raise ValidationError(f"expected {self.n} node categories, got {self.node_cats.size}")
        if self.edge_cats.size != self.n * (self.n - 1) // 2:
            raise ValidationError("edge categories must cover the upper triangle")

    @classmethod
    def from_edges(cls, n: int, edges, node_cats=None) -> "GraphInstance":
        iu, ju = np.triu_indices(n, 1)
        index = {(int(i), int(j)): k for k, (i, j) in enumerate(zip(iu, ju))}
        cats = np.zeros(iu.size, dtype=np.int64)
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j or not (0 <= i < n and 0 <= j < n):
                raise ValidationError(f"invalid edge ({i}, {j}) for n={n}")
            cats[index[(min(i, j), max(i, j))]] = 1
        node_cats = np.zeros(n, dtype=np.int64) if node_cats is None else node_cats
        return cls(n, node_cats, cats)

    @classmethod
    def from_adjacency(cls, adj: np.ndarray, node_cats=None) -> "GraphInstance":
        adj = np.asarray(adj)
        n = adj.shape[0]
        iu, ju = np.triu_indices(n, 1)
        node_cats = np.zeros(n, dtype=np.int64) if node_cats is None else node_cats
        return cls(n, node_cats, (adj[iu, ju] != 0).astype(np.int64))

    def adjacency(self) -> np.ndarray:
        iu, ju = np.triu_indices(self.n, 1)
        a = np.zeros((self.n, self.n))
        present = (self.edge_cats != 0).astype(float)
        a[iu, ju] = present
        a[ju, iu] = present
        return a

    def edges(self) -> list[list[int]]:
        iu, ju = np.triu_indices(self.n, 1)
        keep = self.edge_cats != 0
        return [[int(i), int(j)] for i, j in zip(iu[keep], ju[keep])]

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(self.edge_cats))

    def permuted(self, perm) -> "GraphInstance":
        """Relabel node ``perm[i]`` as node ``i``."""
        perm = np.asarray(perm)
        adj = self.adjacency()[np.ix_(perm, perm)]
        return GraphInstance.from_adjacency(adj, self.node_cats[perm])

    def to_json(self) -> dict:
        return {"n": self.n, "edges": self.edges(), "node_cats": self.node_cats.tolist()}

    @classmethod
    def from_json(cls, rec: dict) -> "GraphInstance":
        try:
            return cls.from_edges(int(rec["n"]), rec.get("edges", []), rec.get("node_cats"))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed graph record: {rec!r}") from exc

    def __eq__(self, other):
        return (isinstance(other, GraphInstance) and self.n == other.n
                and np.array_equal(self.node_cats, other.node_cats)
                and np.array_equal(self.edge_cats, other.edge_cats))


@dataclass(frozen=True)
class GraphDatasetSpec:
    generator: str = "erdos-renyi"
    n: int = 8
    count: int = 100
    seed: int = 0
    p: float = 0.3
    p_in: float = 0.3
    p_out: float = 0.005

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValidationError(f"generator must be one of {GENERATORS}")
        if not 1 <= self.n <= MAX_NODES:
            raise ValidationError(f"n must lie in [1, {MAX_NODES}]")
        if self.count < 1:
            raise ValidationError("count must be at least 1")
        for name in ("p", "p_in", "p_out"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")


def block_labels(n: int) -> np.ndarray:
    return (np.arange(n) >= n // 2).astype(np.int64)


def generate_dataset(spec: GraphDatasetSpec, rng: np.random.Generator | None = None) -> list[GraphInstance]:
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    n = spec.n
    iu, ju = np.triu_indices(n, 1)
    if spec.generator == "erdos-renyi":
        prob = np.full(iu.size, spec.p)
    elif spec.generator == "two-block-sbm":
        blocks = block_labels(n)
        prob = np.where(blocks[iu] == blocks[ju], spec.p_in, spec.p_out)
    else:
        prob = (ju == iu + 1).astype(float)
    graphs = []
    for _ in range(spec.count):
        cats = (rng.random(iu.size) < prob).astype(np.int64)
        graphs.append(GraphInstance(n, np.zeros(n, dtype=np.int64), cats))
    return graphs


# --------------------------------------------------------------------------
# Encoding on the multi-simplex


def graph_categories(g: GraphInstance, K_v: int = 1) -> dict[str, np.ndarray]:
    """Clean categories per channel; the node channel is dropped when K_v == 1."""
    out = {"edges": g.edge_cats.copy()}
    if K_v > 1:
        out["nodes"] = g.node_cats.copy()
    return out


def encode_graph(g: GraphInstance, K_v: int = 1, K_e: int = 2) -> dict[str, np.ndarray]:
    """Clean state as interior simplex vertices, ``{channel: (L, K)}``."""
    if g.edge_cats.size and g.edge_cats.max() >= K_e:
        raise ValidationError(f"edge category outside [0, {K_e})")
    out = {"edges": clamp_to_simplex(one_hot(g.edge_cats, K_e))}
    if K_v > 1:
        if g.node_cats.max() >= K_v:
            raise ValidationError(f"node category outside [0, {K_v})")
        out["nodes"] = clamp_to_simplex(one_hot(g.node_cats, K_v))
    return out


def decode_graph(state: dict[str, np.ndarray], n: int) -> GraphInstance:
    """Nearest vertex per dimension of a (possibly noisy) single state."""
    edges = np.asarray(state["edges"])
    if edges.ndim != 2 or edges.shape[0] != n * (n - 1) // 2:
        raise ValidationError(f"edge channel has shape {edges.shape}, expected ({n * (n - 1) // 2}, K)")
    nodes = state.get("nodes")
    if nodes is not None and np.asarray(nodes).shape[0] != n:
        raise ValidationError(f"node channel has {np.asarray(nodes).shape[0]} rows, expected {n}")
    node_cats = np.zeros(n, dtype=np.int64) if nodes is None else nearest_vertex(nodes)
    return GraphInstance(n, node_cats, nearest_vertex(edges))


def graphs_to_samples(graphs: list[GraphInstance], K_v: int = 1) -> dict[str, np.ndarray]:
    sizes = {g.n for g in graphs}
    if len(sizes) != 1:
        raise ValidationError("all graphs in a training set must share n")
    cats = [graph_categories(g, K_v) for g in graphs]
    return {k: np.stack([c[k] for c in cats]) for k in cats[0]}


def samples_to_graphs(samples: dict[str, np.ndarray], n: int) -> list[GraphInstance]:
    edges = np.asarray(samples["edges"])
    nodes = samples.get("nodes")
    return [GraphInstance(n, np.zeros(n, dtype=np.int64) if nodes is None else nodes[i], edges[i])
            for i in range(edges.shape[0])]


# --------------------------------------------------------------------------
# Statistics


@dataclass
class GraphStats:
    degree_hist: np.ndarray
    clustering_hist: np.ndarray
    spectral_hist: np.ndarray
    triangles: int
    degrees: np.ndarray
    clustering: np.ndarray
    spectrum: np.ndarray

    def to_json(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}


def _normalised(counts: np.ndarray) -> np.ndarray:
    total = counts.sum()
    return counts / total if total > 0 else counts.astype(float)


def compute_stats(g: GraphInstance) -> GraphStats:
    a = g.adjacency()
    n = g.n
    deg = a.sum(axis=1)
    tri_at = np.diag(a @ a @ a) / 2.0
    pairs = deg * (deg - 1) / 2.0
    clustering = np.divide(tri_at, pairs, out=np.zeros(n), where=pairs > 0)
    lap = np.diag(deg) - a
    spectrum = np.clip(np.linalg.eigvalsh(lap), 0.0, None) if n > 1 else np.zeros(1)
    spectrum[np.abs(spectrum) < 1e-10] = 0.0
    top = max(2.0 * (n - 1), 1.0)
    return GraphStats(
        degree_hist=_normalised(np.bincount(deg.astype(int), minlength=n)[:max(n, 1)].astype(float)),
        clustering_hist=_normalised(np.histogram(clustering, bins=N_BINS, range=(0.0, 1.0))[0].astype(float)),
        spectral_hist=_normalised(np.histogram(spectrum, bins=N_BINS, range=(0.0, top))[0].astype(float)),
        triangles=int(round(tri_at.sum() / 3.0)),
        degrees=deg.astype(np.int64),
        clustering=clustering,
        spectrum=np.sort(spectrum),
    )


def connected_components(g: GraphInstance) -> int:
    parent = list(range(g.n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in g.edges():
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    return len({find(i) for i in range(g.n)})


# --------------------------------------------------------------------------
# MMD


def _stack_hists(sample) -> np.ndarray:
    width = max(len(h) for h in sample)
    out = np.zeros((len(sample), width))
    for i, h in enumerate(sample):
        out[i, :len(h)] = h
    return out


def _pad_pair(a: np.ndarray, b: np.ndarray):
    width = max(a.shape[1], b.shape[1])
    return (np.pad(a, ((0, 0), (0, width - a.shape[1]))),
            np.pad(b, ((0, 0), (0, width - b.shape[1]))))


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)


def median_bandwidth(sample_a, sample_b) -> float:
    """Median pairwise Euclidean distance over the pooled sample (1.0 if degenerate)."""
    a, b = _pad_pair(_stack_hists(sample_a), _stack_hists(sample_b))
    pooled = np.concatenate([a, b])
    d = np.sqrt(_sq_dists(pooled, pooled)[np.triu_indices(len(pooled), 1)])
    med = float(np.median(d)) if d.size else 0.0
    return med if med > 0 else 1.0


def _mmd_from_kernel(kxx, kyy, kxy, unbiased: bool) -> float:
    m, n = kxx.shape[0], kyy.shape[0]
    if unbiased:
        if m < 2 or n < 2:
            raise ValidationError("unbiased MMD needs at least two histograms per sample")
        xx = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
        yy = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    else:
        xx = kxx.sum() / (m * m)
        yy = kyy.sum() / (n * n)
    # symmetric in the two samples to the last bit
    xy = (kxy.sum() + kxy.T.sum()) / (2.0 * m * n)
    return float((xx + yy) - 2.0 * xy)


def mmd_gaussian(sample_a, sample_b, bandwidth: float, unbiased: bool = True,
                 clamp: bool = True) -> float:
    """MMD^2 with kernel ``exp(-|h - h'|^2 / (2 bandwidth^2))``."""
    if not bandwidth > 0:
        raise ValidationError("bandwidth must be positive")
    if len(sample_a) == 0 or len(sample_b) == 0:
        raise ValidationError("MMD needs non-empty samples")
    a, b = _pad_pair(_stack_hists(sample_a), _stack_hists(sample_b))
    s = 2.0 * bandwidth * bandwidth
    val = _mmd_from_kernel(np.exp(-_sq_dists(a, a) / s), np.exp(-_sq_dists(b, b) / s),
                           np.exp(-_sq_dists(a, b) / s), unbiased)
    return max(val, 0.0) if clamp else val


@dataclass
class PermutationTest:
    mmd2: float
    p_value: float
    null_p95: float
    null_p99: float
    bandwidth: float
    null: np.ndarray

    def to_json(self) -> dict:
        return {"mmd2": self.mmd2, "p_value": self.p_value, "null_p95": self.null_p95,
                "null_p99": self.null_p99, "bandwidth": self.bandwidth}


def mmd_permutation_test(sample_a, sample_b, rng: np.random.Generator, n_perm: int = 200,
                         bandwidth: float | None = None) -> PermutationTest:
    """Unbiased MMD^2 against its label-permutation null (unclamped statistics)."""
    a, b = _pad_pair(_stack_hists(sample_a), _stack_hists(sample_b))
    bw = median_bandwidth(sample_a, sample_b) if bandwidth is None else bandwidth
    pooled = np.concatenate([a, b])
    kern = np.exp(-_sq_dists(pooled, pooled) / (2.0 * bw * bw))
    m = a.shape[0]

    def stat(idx):
        ia, ib = idx[:m], idx[m:]
        return _mmd_from_kernel(kern[np.ix_(ia, ia)], kern[np.ix_(ib, ib)], kern[np.ix_(ia, ib)], True)

    observed = stat(np.arange(pooled.shape[0]))
    null = np.array([stat(rng.permutation(pooled.shape[0])) for _ in range(n_perm)])
    p = (1 + np.count_nonzero(null >= observed)) / (1 + n_perm)
    return PermutationTest(observed, float(p), float(np.percentile(null, 95)),
                           float(np.percentile(null, 99)), bw, null)


METRICS = ("degree", "clustering", "spectral")


def metric_histograms(graphs: list[GraphInstance], metric: str) -> list[np.ndarray]:
    attr = {"degree": "degree_hist", "clustering": "clustering_hist", "spectral": "spectral_hist"}[metric]
    return [getattr(compute_stats(g), attr) for g in graphs]


# --------------------------------------------------------------------------
# JSON-lines I/O


def write_graphs_jsonl(graphs: list[GraphInstance], path) -> None:
    with Path(path).open("w") as fh:
        for g in graphs:
            fh.write(json.dumps(g.to_json()) + "\n")


def read_graphs_jsonl(path) -> list[GraphInstance]:
    graphs = []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: invalid JSON") from exc
            graphs.append(GraphInstance.from_json(rec))
    return graphs
