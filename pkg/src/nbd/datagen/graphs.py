"""Weighted grid graphs, landmark features and exact path-length targets."""
from __future__ import annotations

import heapq
import itertools
from dataclasses import asdict, dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from . import PairSet

DATASETS = ("3d", "taxi", "3dd", "traffic", "octagon")
ASYMMETRIC = ("3dd", "traffic", "octagon")
DESK_SIZES = {"3d": 10, "3dd": 10, "taxi": 6, "traffic": 30, "octagon": 30}
WEIGHT_LEVELS = np.round(np.arange(1, 101) * 0.01, 2)
# per-direction noise around the shared edge mean on traffic/octagon
DIRECTION_SD = 0.2
MIN_WEIGHT = 0.01


class DisconnectedError(RuntimeError):
    pass


@dataclass(frozen=True)
class GraphSpec:
    dataset: str = "3d"
    size: int | None = None
    landmarks: int = 32
    distractors: int = 96
    noise: float = 0.2
    n_train: int = 20000
    n_test: int = 4000
    seed: int = 0
    unit_weights: bool = False

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ValueError(f"unknown graph dataset {self.dataset!r}; expected one of {DATASETS}")
        if self.size is not None and self.size < 3:
            raise ValueError("grid size must be >= 3")
        if self.landmarks < 1 or self.distractors < 0 or self.noise < 0:
            raise ValueError("invalid feature parameters")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("need at least one train and one test pair")

    @property
    def grid(self) -> int:
        return DESK_SIZES[self.dataset] if self.size is None else self.size

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GraphTask:
    train: PairSet
    test: PairSet
    adjacency: sparse.csr_matrix
    features: np.ndarray
    landmarks: np.ndarray
    # raw path lengths are target * scale
    scale: float
    train_nodes: np.ndarray
    test_nodes: np.ndarray

    def distance(self, u: int, v: int) -> float:
        return astar(self.adjacency, u, v)


def _grid_edges(shape: tuple, offsets, wrap: bool):
    """Directed (src, dst) index arrays for every node and offset."""
    coords = np.stack(np.meshgrid(*[np.arange(s) for s in shape], indexing="ij"), -1).reshape(-1, len(shape))
    dims = np.array(shape)
    src, dst = [], []
    for off in offsets:
        nxt = coords + np.array(off)
        if wrap:
            nxt = nxt % dims
            ok = np.ones(len(coords), dtype=bool)
        else:
            ok = np.all((nxt >= 0) & (nxt < dims), axis=1)
        src.append(np.ravel_multi_index(coords[ok].T, shape))
        dst.append(np.ravel_multi_index(nxt[ok].T, shape))
    return np.concatenate(src), np.concatenate(dst)


def _unit_offsets(ndim: int):
    return [tuple(int(i == j) for j in range(ndim)) for i in range(ndim)]


def build_graph(spec: GraphSpec, rng: np.random.Generator) -> sparse.csr_matrix:
    """Adjacency with ``A[u, v]`` = weight of the edge u -> v."""
    n = spec.grid
    ds = spec.dataset
    if ds in ("3d", "3dd"):
        shape, offsets, wrap = (n, n, n), _unit_offsets(3), True
    elif ds == "taxi":
        shape, offsets, wrap = (n,) * 4, _unit_offsets(4), False
    elif ds == "traffic":
        shape, offsets, wrap = (n, n), _unit_offsets(2), False
    else:
        shape, offsets, wrap = (n, n), [(1, 0), (0, 1), (1, 1), (1, -1)], False
    src, dst = _grid_edges(shape, offsets, wrap)
    m = len(src)
    if spec.unit_weights:
        fwd = rev = np.ones(m)
    elif ds in ("traffic", "octagon"):
        mean = rng.choice(WEIGHT_LEVELS, size=m)
        fwd = np.maximum(rng.normal(mean, DIRECTION_SD), MIN_WEIGHT)
        rev = np.maximum(rng.normal(mean, DIRECTION_SD), MIN_WEIGHT)
    else:
        fwd = rng.choice(WEIGHT_LEVELS, size=m)
        rev = fwd
    size = int(np.prod(shape))
    if ds == "3dd":
        rows, cols, vals = src, dst, fwd
    else:
        rows = np.concatenate([src, dst])
        cols = np.concatenate([dst, src])
        vals = np.concatenate([fwd, rev])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))


def shortest_from(adj: sparse.csr_matrix, sources) -> np.ndarray:
    """Rows of exact distances d(source, .) via Dijkstra."""
    return csgraph.dijkstra(adj, directed=True, indices=np.asarray(sources))


def astar(adj: sparse.csr_matrix, source: int, target: int, heuristic=None) -> float:
    """A* on the adjacency; the default heuristic is zero."""
    h = heuristic or (lambda v: 0.0)
    indptr, indices, data = adj.indptr, adj.indices, adj.data
    best = {source: 0.0}
    done = set()
    counter = itertools.count()
    heap = [(h(source), next(counter), source)]
    while heap:
        _, _, u = heapq.heappop(heap)
        if u == target:
            return best[u]
        if u in done:
            continue
        done.add(u)
        du = best[u]
        for k in range(indptr[u], indptr[u + 1]):
            v = int(indices[k])
            nd = du + float(data[k])
            if nd < best.get(v, np.inf):
                best[v] = nd
                heapq.heappush(heap, (nd + h(v), next(counter), v))
    raise DisconnectedError(f"no path from {source} to {target}")


def landmark_features(adj, landmarks, directed: bool, noise: float, distractors: int, rng) -> np.ndarray:
    to_lm = shortest_from(adj.T.tocsr(), landmarks).T  # d(node, landmark)
    parts = [to_lm]
    if directed:
        parts.append(shortest_from(adj, landmarks).T)  # d(landmark, node)
    feats = np.concatenate(parts, axis=1)
    if not np.all(np.isfinite(feats)):
        raise DisconnectedError("graph is not strongly connected")
    feats = (feats - feats.mean(axis=0)) / feats.std(axis=0)
    feats = feats + rng.normal(0.0, noise, size=feats.shape)
    return np.concatenate([feats, rng.standard_normal((len(feats), distractors))], axis=1)


def pair_distances(adj, u: np.ndarray, v: np.ndarray, block: int = 256) -> np.ndarray:
    out = np.empty(len(u))
    sources = np.unique(u)
    for start in range(0, len(sources), block):
        chunk = sources[start : start + block]
        rows = shortest_from(adj, chunk)
        pos = {s: i for i, s in enumerate(chunk.tolist())}
        sel = np.isin(u, chunk)
        out[sel] = rows[[pos[s] for s in u[sel].tolist()], v[sel]]
    if not np.all(np.isfinite(out)):
        raise DisconnectedError("a sampled pair is disconnected")
    return out


def gen_graph_task(spec: GraphSpec) -> GraphTask:
    """Uniformly sampled ordered node pairs (u != v) with normalized path lengths."""
    rng = np.random.default_rng(spec.seed)
    adj = build_graph(spec, rng)
    n_nodes = adj.shape[0]
    lms = rng.choice(n_nodes, size=min(spec.landmarks, n_nodes), replace=False)
    feats = landmark_features(adj, lms, spec.dataset in ASYMMETRIC, spec.noise, spec.distractors, rng)
    total = spec.n_train + spec.n_test
    u = rng.integers(0, n_nodes, size=total)
    v = (u + rng.integers(1, n_nodes, size=total)) % n_nodes
    dist = pair_distances(adj, u, v)
    scale = float(dist.mean())
    y = dist / scale
    tr, te = slice(0, spec.n_train), slice(spec.n_train, total)
    return GraphTask(
        PairSet(feats[u[tr]], feats[v[tr]], y[tr]),
        PairSet(feats[u[te]], feats[v[te]], y[te]),
        adj,
        feats,
        lms,
        scale,
        np.stack([u[tr], v[tr]], 1),
        np.stack([u[te], v[te]], 1),
    )
