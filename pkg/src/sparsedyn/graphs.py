"""Finite simple graphs: random generators, components, roots, and balls.

All graphs are undirected, simple, and stored as sorted adjacency lists.
Instances are immutable after construction and safe to share across threads.
Generators are deterministic functions of their arguments and the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import log, floor

import numpy as np

from . import rng

DEFAULT_SIZE_CAP = 10**7


class SizeCapError(ValueError):
    """Requested deterministic graph exceeds the configured vertex cap."""


def _check_cap(n: int, cap: int) -> None:
    if n > cap:
        raise SizeCapError(f"graph would have {n} vertices, above the cap of {cap}")


@dataclass(frozen=True)
class Graph:
    """Finite simple graph as a tuple of sorted neighbor tuples.

    ``erased_fallback`` marks configuration-model outputs that needed the
    erasure fallback (self-loops dropped, multi-edges collapsed).
    """

    adjacency: tuple[tuple[int, ...], ...]
    erased_fallback: bool = field(default=False, compare=False)

    @property
    def vertex_count(self) -> int:
        return len(self.adjacency)

    @property
    def edge_count(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adjacency[v]

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) arrays for vectorized traversal."""
        indptr = np.zeros(self.vertex_count + 1, dtype=np.int64)
        np.cumsum(self.degrees, out=indptr[1:])
        if self.vertex_count and indptr[-1]:
            indices = np.concatenate([np.asarray(a, dtype=np.int64) for a in self.adjacency if a])
        else:
            indices = np.zeros(0, dtype=np.int64)
        return indptr, indices

    def edges(self) -> np.ndarray:
        """(m, 2) array of edges with u < v, lexicographically sorted."""
        out = [(u, v) for u in range(self.vertex_count) for v in self.adjacency[u] if u < v]
        return np.array(out, dtype=np.int64).reshape(-1, 2)

    @staticmethod
    def from_edges(n: int, edges, *, erased_fallback: bool = False) -> "Graph":
        """Build and validate a graph from an iterable of (u, v) pairs."""
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        arr = arr.reshape(-1, 2)
        if arr.size:
            if arr.min() < 0 or arr.max() >= n:
                raise ValueError("edge endpoint out of range")
            if np.any(arr[:, 0] == arr[:, 1]):
                raise ValueError("self-loop in edge list")
            lo = np.minimum(arr[:, 0], arr[:, 1])
            hi = np.maximum(arr[:, 0], arr[:, 1])
            keys = lo * n + hi
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate edge in edge list")
        return _from_edge_arrays(n, arr, erased_fallback=erased_fallback)

    def validate(self) -> None:
        """Recheck all structural invariants (used by tests)."""
        n = self.vertex_count
        for u, adj in enumerate(self.adjacency):
            if any(v < 0 or v >= n for v in adj):
                raise AssertionError("neighbor index out of range")
            if any(v == u for v in adj):
                raise AssertionError("self-loop")
            if list(adj) != sorted(set(adj)):
                raise AssertionError("adjacency not sorted/unique")
            for v in adj:
                if u not in self.adjacency[v]:
                    raise AssertionError("adjacency not symmetric")


def _from_edge_arrays(n: int, arr: np.ndarray, *, erased_fallback: bool = False) -> Graph:
    """Trusted constructor: arr is a validated (m, 2) int array of simple edges."""
    if arr.size == 0:
        return Graph(tuple(() for _ in range(n)), erased_fallback)
    both_src = np.concatenate([arr[:, 0], arr[:, 1]])
    both_dst = np.concatenate([arr[:, 1], arr[:, 0]])
    order = np.lexsort((both_dst, both_src))
    src = both_src[order]
    dst = both_dst[order]
    counts = np.bincount(src, minlength=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    adjacency = tuple(tuple(int(x) for x in dst[offsets[i]:offsets[i + 1]]) for i in range(n))
    return Graph(adjacency, erased_fallback)


@dataclass(frozen=True)
class RootedGraph:
    """Connected graph with a distinguished root.

    ``origin`` maps local vertex indices back to the parent graph when this
    object was extracted as a component or a ball; ``None`` otherwise.
    ``truncated`` reports that a sampler stopped growing this graph at its
    vertex budget.
    """

    graph: Graph
    root: int
    origin: tuple[int, ...] | None = field(default=None, compare=False)
    truncated: bool = field(default=False, compare=False)

    def __post_init__(self):
        n = self.graph.vertex_count
        if not (0 <= self.root < n):
            raise ValueError("root out of range")
        if _reach_count(self.graph, self.root) != n:
            raise ValueError("rooted graph must be connected")

    @property
    def vertex_count(self) -> int:
        return self.graph.vertex_count


@dataclass(frozen=True)
class MarkedGraph:
    """Rooted graph with one mark per vertex.

    Marks are either an int vector (finite-alphabet states) or a float array
    of shape (n,) or (n, d) for vector-valued states.
    """

    rooted: RootedGraph
    marks: np.ndarray

    def __post_init__(self):
        if len(self.marks) != self.rooted.vertex_count:
            raise ValueError("marks length must equal vertex count")

    @property
    def graph(self) -> Graph:
        return self.rooted.graph


def _reach_count(g: Graph, start: int) -> int:
    indptr, indices = g.csr
    seen = np.zeros(g.vertex_count, dtype=bool)
    seen[start] = True
    frontier = [start]
    total = 1
    while frontier:
        nxt = []
        for u in frontier:
            for v in indices[indptr[u]:indptr[u + 1]]:
                if not seen[v]:
                    seen[v] = True
                    nxt.append(int(v))
        total += len(nxt)
        frontier = nxt
    return total


def _bfs(g: Graph, start: int, max_depth: int | None = None) -> tuple[list[int], np.ndarray]:
    """BFS order and distances from start (unreached = -1)."""
    indptr, indices = g.csr
    dist = np.full(g.vertex_count, -1, dtype=np.int64)
    dist[start] = 0
    order = [start]
    frontier = [start]
    depth = 0
    while frontier and (max_depth is None or depth < max_depth):
        depth += 1
        nxt = []
        for u in frontier:
            for v in indices[indptr[u]:indptr[u + 1]]:
                if dist[v] < 0:
                    dist[v] = depth
                    nxt.append(int(v))
        order.extend(nxt)
        frontier = nxt
    return order, dist


def _induced_rooted(g: Graph, vertices: list[int], root: int) -> RootedGraph:
    """Induced subgraph on ``vertices`` (BFS order), reindexed, rooted at ``root``'s image."""
    local = {v: i for i, v in enumerate(vertices)}
    edges = []
    for v in vertices:
        for u in g.adjacency[v]:
            iu = local.get(u)
            if iu is not None and local[v] < iu:
                edges.append((local[v], iu))
    sub = _from_edge_arrays(len(vertices), np.array(edges, dtype=np.int64).reshape(-1, 2))
    return RootedGraph(sub, local[root], origin=tuple(vertices))


# ---------------------------------------------------------------------------
# Random generators
# ---------------------------------------------------------------------------

def gen_erdos_renyi(n: int, p: float, seed: int, *, size_cap: int = DEFAULT_SIZE_CAP) -> Graph:
    """G(n, p): each unordered pair is an edge independently with probability p."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    _check_cap(n, size_cap)
    if p == 0.0 or n == 1:
        return Graph(tuple(() for _ in range(n)))
    if p == 1.0:
        return _from_edge_arrays(n, np.array([(u, v) for u in range(n) for v in range(u + 1, n)]))
    gen = rng.generator(seed, 0x4552)
    # skip-sampling over the lexicographic pair order: geometric gaps between edges
    edges = []
    lq = log(1.0 - p)
    v, w = 1, -1
    while v < n:
        w += 1 + int(floor(log(1.0 - gen.random()) / lq))
        while w >= v and v < n:
            w -= v
            v += 1
        if v < n:
            edges.append((w, v))
    return _from_edge_arrays(n, np.array(edges, dtype=np.int64).reshape(-1, 2))


def _pair_decode(idx: np.ndarray, n: int) -> np.ndarray:
    """Decode lexicographic pair index (u<v) over n vertices."""
    # row u occupies indices [u*n - u(u+1)/2, ...) of length n-1-u
    u = np.floor((2 * n - 1 - np.sqrt((2 * n - 1) ** 2 - 8.0 * idx)) / 2).astype(np.int64)
    base = u * n - u * (u + 1) // 2
    # guard against float rounding at row boundaries
    over = base > idx
    u[over] -= 1
    base = u * n - u * (u + 1) // 2
    under = idx - base >= n - 1 - u
    u[under] += 1
    base = u * n - u * (u + 1) // 2
    v = u + 1 + (idx - base)
    return np.stack([u, v], axis=1)


def gen_gnm(n: int, m: int, seed: int, *, size_cap: int = DEFAULT_SIZE_CAP) -> Graph:
    """Uniform simple graph with exactly m edges on n labeled vertices."""
    if n < 1:
        raise ValueError("n must be >= 1")
    total = n * (n - 1) // 2
    if m > total:
        raise ValueError(f"m={m} exceeds the {total} available pairs")
    _check_cap(n, size_cap)
    gen = rng.generator(seed, 0x474D)
    if m == 0:
        return Graph(tuple(() for _ in range(n)))
    if m > total // 2:
        idx = gen.permutation(total)[:m]
    else:
        chosen: set[int] = set()
        while len(chosen) < m:
            draw = gen.integers(0, total, size=2 * (m - len(chosen)))
            for x in draw:
                chosen.add(int(x))
                if len(chosen) == m:
                    break
        idx = np.fromiter(chosen, dtype=np.int64)
    return _from_edge_arrays(n, _pair_decode(np.sort(idx), n))


def gen_configuration_model(
    degrees, seed: int, *, max_pairing_attempts: int = 100, size_cap: int = DEFAULT_SIZE_CAP
) -> Graph:
    """Uniform half-edge pairing conditioned on simplicity.

    The whole pairing is resampled up to ``max_pairing_attempts`` times until
    it is simple; on exhaustion self-loops are erased and multi-edges
    collapsed, and the result carries ``erased_fallback=True``.
    """
    deg = np.asarray(degrees, dtype=np.int64)
    n = len(deg)
    if n < 1:
        raise ValueError("degree sequence must be nonempty")
    if deg.min(initial=0) < 0:
        raise ValueError("degrees must be nonnegative")
    if np.any(deg >= n):
        raise ValueError("each degree must be < n")
    if int(deg.sum()) % 2 != 0:
        raise ValueError("degree sum must be even")
    _check_cap(n, size_cap)
    stubs = np.repeat(np.arange(n, dtype=np.int64), deg)
    if stubs.size == 0:
        return Graph(tuple(() for _ in range(n)))
    gen = rng.generator(seed, 0x434D)
    pairing = None
    for _ in range(max_pairing_attempts):
        perm = gen.permutation(stubs)
        a, b = perm[0::2], perm[1::2]
        if np.any(a == b):
            continue
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys = lo * n + hi
        if np.unique(keys).size != keys.size:
            continue
        pairing = np.stack([lo, hi], axis=1)
        break
    if pairing is not None:
        return _from_edge_arrays(n, pairing)
    perm = gen.permutation(stubs)
    a, b = perm[0::2], perm[1::2]
    keep = a != b
    lo, hi = np.minimum(a[keep], b[keep]), np.maximum(a[keep], b[keep])
    keys = np.unique(lo * n + hi)
    pairing = np.stack([keys // n, keys % n], axis=1)
    return _from_edge_arrays(n, pairing, erased_fallback=True)


def gen_random_regular(n: int, k: int, seed: int, **kwargs) -> Graph:
    """Uniform k-regular graph via the configuration model."""
    if (n * k) % 2 != 0:
        raise ValueError("n*k must be even")
    if k >= n:
        raise ValueError("k must be < n")
    return gen_configuration_model([k] * n, seed, **kwargs)


# ---------------------------------------------------------------------------
# Deterministic graphs
# ---------------------------------------------------------------------------

def gen_lattice_box(dim: int, n: int, *, size_cap: int = DEFAULT_SIZE_CAP) -> RootedGraph:
    """Box {-n..n}^dim with nearest-neighbor edges, rooted at the origin."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if n < 0:
        raise ValueError("n must be >= 0")
    side = 2 * n + 1
    total = side**dim
    _check_cap(total, size_cap)
    shape = (side,) * dim
    edges = []
    idx = np.arange(total, dtype=np.int64).reshape(shape)
    for axis in range(dim):
        lo = np.moveaxis(idx, axis, 0)[:-1].ravel()
        hi = np.moveaxis(idx, axis, 0)[1:].ravel()
        edges.append(np.stack([lo, hi], axis=1))
    arr = np.concatenate(edges, axis=0) if edges else np.zeros((0, 2), dtype=np.int64)
    g = _from_edge_arrays(total, arr)
    root = int(np.ravel_multi_index((n,) * dim, shape))
    return RootedGraph(g, root)


def lattice_index(coord, n: int, dim: int) -> int:
    """Vertex index of a lattice coordinate in {-n..n}^dim (row-major)."""
    side = 2 * n + 1
    return int(np.ravel_multi_index(tuple(c + n for c in coord), (side,) * dim))


def lattice_coord(index: int, n: int, dim: int) -> tuple[int, ...]:
    side = 2 * n + 1
    return tuple(int(c) - n for c in np.unravel_index(index, (side,) * dim))


def gen_regular_tree(k: int, height: int, *, size_cap: int = DEFAULT_SIZE_CAP) -> RootedGraph:
    """Rooted tree whose internal vertices have degree k and leaves sit at ``height``."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if height < 0:
        raise ValueError("height must be >= 0")
    if height == 0:
        return RootedGraph(Graph(((),)), 0)
    if k == 2:
        total = 2 * height + 1
    else:
        total = 1 + k * ((k - 1) ** height - 1) // (k - 2)
    _check_cap(total, size_cap)
    edges = []
    next_free = 1
    frontier = [0]
    for depth in range(height):
        children_per = k if depth == 0 else k - 1
        new_frontier = []
        for parent in frontier:
            for _ in range(children_per):
                edges.append((parent, next_free))
                new_frontier.append(next_free)
                next_free += 1
        frontier = new_frontier
    g = _from_edge_arrays(total, np.array(edges, dtype=np.int64))
    return RootedGraph(g, 0)


def gen_canopy_truncation(
    d: int,
    levels: int,
    base_width: int,
    *,
    root_level: int = 0,
    size_cap: int = DEFAULT_SIZE_CAP,
) -> RootedGraph:
    """Finite slab of the leaf-rooted limit of deep regular trees.

    Vertices are (i, j) for i = 0..levels with row widths
    ``base_width * (d-1)**(levels-i)``, and (i, j) is joined to
    (i+1, j // (d-1)).  The root is (root_level, 0).  Because row 0 vertices
    have the wrong degree only near i = levels, simulations on this graph are
    exact for horizons shorter than ``levels - root_level``.
    """
    if d < 3:
        raise ValueError("d must be >= 3")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if base_width < 1:
        raise ValueError("base_width must be >= 1")
    if not 0 <= root_level <= levels:
        raise ValueError("root_level out of range")
    widths = [base_width * (d - 1) ** (levels - i) for i in range(levels + 1)]
    offsets = np.zeros(levels + 2, dtype=np.int64)
    np.cumsum(widths, out=offsets[1:])
    total = int(offsets[-1])
    _check_cap(total, size_cap)
    edges = []
    for i in range(levels):
        j = np.arange(widths[i], dtype=np.int64)
        src = offsets[i] + j
        dst = offsets[i + 1] + j // (d - 1)
        edges.append(np.stack([src, dst], axis=1))
    g = _from_edge_arrays(total, np.concatenate(edges, axis=0))
    root = int(offsets[root_level])
    if base_width == 1:
        return RootedGraph(g, root)
    return component_of(g, root)


# ---------------------------------------------------------------------------
# Components, roots, balls
# ---------------------------------------------------------------------------

def component_of(g: Graph, v: int) -> RootedGraph:
    """Connected component of v, reindexed in BFS order and rooted at v's image."""
    if not 0 <= v < g.vertex_count:
        raise ValueError("vertex out of range")
    order, _ = _bfs(g, v)
    return _induced_rooted(g, order, v)


def uniform_root_component(g: Graph, seed: int) -> RootedGraph:
    """Component of a uniformly random vertex."""
    v = int(rng.generator(seed, 0x524F).integers(0, g.vertex_count))
    return component_of(g, v)


def component_labels(g: Graph) -> np.ndarray:
    """Label array assigning each vertex the smallest vertex of its component."""
    labels = np.full(g.vertex_count, -1, dtype=np.int64)
    for v in range(g.vertex_count):
        if labels[v] < 0:
            order, _ = _bfs(g, v)
            labels[np.array(order, dtype=np.int64)] = v
    return labels


def largest_component(g: Graph) -> RootedGraph:
    """Largest component; ties broken by smallest contained vertex, which roots it."""
    if g.vertex_count < 1:
        raise ValueError("graph must have at least one vertex")
    labels = component_labels(g)
    reps, counts = np.unique(labels, return_counts=True)
    best = reps[np.argmax(counts)]  # np.argmax takes the first max; reps ascend
    return component_of(g, int(best))


def ball(rg: RootedGraph, k: int) -> RootedGraph:
    """Induced subgraph on vertices within distance k of the root."""
    if k < 0:
        raise ValueError("k must be >= 0")
    order, _ = _bfs(rg.graph, rg.root, max_depth=k)
    return _induced_rooted(rg.graph, order, rg.root)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def write_edgelist(g: Graph | RootedGraph, path) -> None:
    """Edge-list text format: header "n <count> root <index|none>", then "u v" lines."""
    graph = g.graph if isinstance(g, RootedGraph) else g
    root = str(g.root) if isinstance(g, RootedGraph) else "none"
    with open(path, "w") as fh:
        fh.write(f"n {graph.vertex_count} root {root}\n")
        for u, v in graph.edges():
            fh.write(f"{u} {v}\n")


def read_edgelist(path) -> Graph | RootedGraph:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "n" or header[2] != "root":
            raise ValueError("bad edge-list header")
        n = int(header[1])
        edges = [tuple(int(x) for x in line.split()) for line in fh if line.strip()]
    g = Graph.from_edges(n, edges)
    if header[3] == "none":
        return g
    return RootedGraph(g, int(header[3]))


def validate_max_degree_growth(degrees, n: int, delta: float = 0.01) -> bool:
    """Check max degree stays below n**(1/4 - delta); advisory for duality runs."""
    deg = np.asarray(degrees)
    return bool(deg.size == 0 or deg.max() < n ** (0.25 - delta))
