"""Time-varying communication graphs and doubly stochastic mixing matrices.

Graphs are directed: an edge ``(i, j)`` means node ``i`` receives from node
``j``, so a mixing matrix may place weight on entry ``(i, j)``.  Every
constructor in this module produces doubly stochastic matrices, and matrix
sequences are replayable: the snapshot for iteration ``k`` is a pure function
of the sequence seed and ``k``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

STOCHASTIC_TOL = 1e-12

# fixed stream tags so different sequence kinds sharing a seed stay decorrelated
_GEOMETRIC_TAG = 101
_MIXING_TAG = 211


def averaging_matrix(n: int) -> np.ndarray:
    """Rank-one matrix ``ee^T / n`` mapping any vector to its mean."""
    return np.full((n, n), 1.0 / n)


def centering_matrix(n: int) -> np.ndarray:
    """Projector ``I - ee^T / n`` that removes the mean component."""
    return np.eye(n) - 1.0 / n


@dataclass(frozen=True)
class Digraph:
    """Directed graph on nodes ``0..n-1`` with implicit self-loops.

    ``edges`` holds ordered pairs ``(i, j)`` with ``i != j``; the pair means
    node ``j`` sends to node ``i``.  Self-loops are never stored explicitly.
    """

    n: int
    edges: frozenset

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        normalized = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError("self-loops are implicit, do not list them")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            normalized.add((i, j))
        object.__setattr__(self, "edges", frozenset(normalized))

    @classmethod
    def _trusted(cls, n: int, edges: frozenset) -> "Digraph":
        # caller guarantees in-range int pairs without self-loops
        g = object.__new__(cls)
        object.__setattr__(g, "n", n)
        object.__setattr__(g, "edges", edges)
        return g

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def is_symmetric(self) -> bool:
        return all((j, i) in self.edges for i, j in self.edges)

    def adjacency(self) -> np.ndarray:
        """Boolean off-diagonal adjacency, ``adj[i, j]`` true iff (i, j) is an edge."""
        adj = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = True
        return adj

    def undirected_pairs(self) -> list[tuple[int, int]]:
        """Sorted unordered pairs {i, j} that appear in at least one direction."""
        return sorted({(min(i, j), max(i, j)) for i, j in self.edges})

    def is_connected(self) -> bool:
        """Connectivity of the underlying undirected graph (BFS)."""
        if self.n == 1:
            return True
        neighbors: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            neighbors[i].append(j)
            neighbors[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w in neighbors[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n


@dataclass(frozen=True)
class ConsensusMatrix:
    """A doubly stochastic mixing matrix tied to the graph whose sparsity it respects.

    Validation runs on construction: row and column sums within ``1e-12`` of
    one, entries nonnegative, and zero off-diagonal weight wherever the graph
    has no edge.  The entry array is copied and frozen.
    """

    entries: np.ndarray
    graph: Digraph

    def __post_init__(self) -> None:
        w = np.array(self.entries, dtype=float)
        n = self.graph.n
        if w.shape != (n, n):
            raise ValueError(f"expected a {n}x{n} matrix, got {w.shape}")
        if not np.isfinite(w).all():
            raise ValueError("mixing matrix has non-finite entries")
        if w.min() < -1e-15:
            raise ValueError("mixing matrix has negative entries")
        w = np.maximum(w, 0.0)
        if np.abs(w.sum(axis=1) - 1.0).max() > STOCHASTIC_TOL:
            raise ValueError("row sums deviate from one beyond tolerance")
        if np.abs(w.sum(axis=0) - 1.0).max() > STOCHASTIC_TOL:
            raise ValueError("column sums deviate from one beyond tolerance")
        off = ~np.eye(n, dtype=bool)
        allowed = self.graph.adjacency()
        if np.any(w[off & ~allowed] != 0.0):
            raise ValueError("nonzero weight on a pair that is not an edge")
        w.setflags(write=False)
        object.__setattr__(self, "entries", w)

    @classmethod
    def _trusted(cls, entries: np.ndarray, graph: Digraph) -> "ConsensusMatrix":
        # caller guarantees a frozen array that already passes validation
        w = object.__new__(cls)
        object.__setattr__(w, "entries", entries)
        object.__setattr__(w, "graph", graph)
        return w

    @property
    def n(self) -> int:
        return self.graph.n


def complete_digraph(n: int) -> Digraph:
    return Digraph(n, frozenset((i, j) for i in range(n) for j in range(n) if i != j))


def directed_ring(n: int) -> Digraph:
    """Cycle where node i receives from node (i + 1) mod n."""
    if n < 2:
        raise ValueError("a directed ring needs at least two nodes")
    return Digraph(n, frozenset((i, (i + 1) % n) for i in range(n)))


def random_geometric_graph(n: int, radius: float, rng: np.random.Generator) -> Digraph:
    """Symmetric geometric graph on the unit square.

    Positions are drawn as ``rng.random((n, 2))``; nodes within ``radius``
    (Euclidean, inclusive) are joined in both directions.
    """
    if n < 2:
        raise ValueError("need at least two nodes")
    if radius <= 0:
        raise ValueError("radius must be positive")
    pos = rng.random((n, 2))
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    edges = set()
    for i in range(n):
        for j in range(n):
            if i != j and dist[i, j] <= radius:
                edges.add((i, j))
    return Digraph(n, frozenset(edges))


def connected_geometric_graph(
    n: int, radius: float, seed: int, max_attempts: int = 100
) -> tuple[Digraph, int]:
    """Regenerate geometric graphs until one is connected.

    Returns the graph together with the accepted attempt index so the draw can
    be replayed exactly.
    """
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        g = random_geometric_graph(n, radius, rng)
        if g.is_connected():
            return g, attempt
    raise RuntimeError(
        f"no connected geometric graph in {max_attempts} attempts "
        f"(n={n}, radius={radius:g})"
    )


def drop_edges(g: Digraph, p: float, rng: np.random.Generator) -> Digraph:
    """Remove each undirected pair with probability ``p``, both directions at once.

    Requires a symmetric input graph so that snapshots stay symmetric.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("drop probability must lie in [0, 1]")
    if not g.is_symmetric:
        raise ValueError("edge dropout is defined for symmetric graphs")
    pairs = g.undirected_pairs()
    draws = rng.random(len(pairs))
    kept = set()
    for (i, j), x in zip(pairs, draws):
        if x >= p:
            kept.add((i, j))
            kept.add((j, i))
    return Digraph(g.n, frozenset(kept))


def metropolis_weights(g: Digraph) -> ConsensusMatrix:
    """Metropolis rule ``w_ij = 1 / (1 + max(deg_i, deg_j))`` on a symmetric graph.

    The diagonal absorbs whatever is left, which keeps the matrix symmetric and
    doubly stochastic for any degree profile.
    """
    if not g.is_symmetric:
        raise ValueError("Metropolis weights need a symmetric graph")
    adj = g.adjacency()
    deg = adj.sum(axis=1)
    denom = 1.0 + np.maximum.outer(deg, deg)
    w = np.where(adj, 1.0 / denom, 0.0)
    np.fill_diagonal(w, 0.0)
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return ConsensusMatrix(w, g)


def theta_mixing(n: int, theta: float) -> ConsensusMatrix:
    """Convex combination ``(1 - theta) I + theta ee^T / n`` of identity and averaging."""
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    w = (1.0 - theta) * np.eye(n) + theta * averaging_matrix(n)
    return ConsensusMatrix(w, complete_digraph(n))


def ring_mixing(n: int, weight: float = 0.5) -> ConsensusMatrix:
    """Doubly stochastic matrix on a directed ring: ``(1 - c) I + c P``.

    ``P`` is the cyclic permutation sending node i the value of node i+1, so
    the sparsity pattern of the ring is respected exactly.
    """
    if not 0.0 < weight < 1.0:
        raise ValueError("ring weight must lie in (0, 1)")
    g = directed_ring(n)
    w = (1.0 - weight) * np.eye(n)
    for i in range(n):
        w[i, (i + 1) % n] = weight
    return ConsensusMatrix(w, g)


class NetworkSequence:
    """Iteration-indexed stream of mixing matrices.

    Snapshots come from a factory that is a pure function of the iteration
    index, so replaying a sequence built with the same seed yields bitwise
    identical matrices.  Every delivered snapshot is a validated
    :class:`ConsensusMatrix`.
    """

    def __init__(
        self,
        n: int,
        factory: Callable[[int], ConsensusMatrix],
        seed: int | None = None,
        description: str = "",
    ) -> None:
        self.n = n
        self.seed = seed
        self.description = description
        self._factory = factory

    def matrix_at(self, k: int) -> ConsensusMatrix:
        if k < 0:
            raise ValueError("iteration index must be nonnegative")
        w = self._factory(k)
        if w.n != self.n:
            raise ValueError("factory produced a matrix of the wrong size")
        return w

    def checksum(self, count: int = 32) -> str:
        """SHA-256 over the first ``count`` snapshots, for fairness audits."""
        h = hashlib.sha256()
        for k in range(count):
            h.update(np.ascontiguousarray(self.matrix_at(k).entries).tobytes())
        return h.hexdigest()

    @classmethod
    def recorded(cls, matrices: Sequence[ConsensusMatrix]) -> "NetworkSequence":
        mats = list(matrices)
        if not mats:
            raise ValueError("recorded sequence needs at least one snapshot")

        def factory(k: int) -> ConsensusMatrix:
            if k >= len(mats):
                raise IndexError(f"recorded sequence has {len(mats)} snapshots")
            return mats[k]

        return cls(mats[0].n, factory, description="recorded")

    @classmethod
    def static(cls, matrix: ConsensusMatrix) -> "NetworkSequence":
        return cls(matrix.n, lambda k: matrix, description="static")

    @classmethod
    def geometric_dropout(
        cls, base: Digraph, p: float, seed: int
    ) -> "NetworkSequence":
        """Per-iteration edge dropout on a fixed base graph, Metropolis weights per snapshot."""
        if not 0.0 <= p <= 1.0:
            raise ValueError("drop probability must lie in [0, 1]")
        if not base.is_symmetric:
            raise ValueError("dropout sequences need a symmetric base graph")
        n = base.n
        pairs = base.undirected_pairs()
        pi = np.fromiter((i for i, _ in pairs), dtype=np.intp, count=len(pairs))
        pj = np.fromiter((j for _, j in pairs), dtype=np.intp, count=len(pairs))

        def factory(k: int) -> ConsensusMatrix:
            # inlined drop_edges + metropolis_weights with identical draw order
            # and arithmetic; snapshots are valid by construction and a long
            # run builds tens of thousands of them, so re-validation is the
            # simulation's dominant cost
            rng = np.random.default_rng([seed, k, _GEOMETRIC_TAG])
            keep = rng.random(len(pairs)) >= p
            ki = pi[keep]
            kj = pj[keep]
            adj = np.zeros((n, n), dtype=bool)
            adj[ki, kj] = True
            adj[kj, ki] = True
            deg = adj.sum(axis=1)
            denom = 1.0 + np.maximum.outer(deg, deg)
            w = np.where(adj, 1.0 / denom, 0.0)
            np.fill_diagonal(w, 0.0)
            np.fill_diagonal(w, 1.0 - w.sum(axis=1))
            w.setflags(write=False)
            one_way = list(zip(ki.tolist(), kj.tolist()))
            edges = frozenset(one_way + [(b, a) for a, b in one_way])
            return ConsensusMatrix._trusted(w, Digraph._trusted(n, edges))

        return cls(base.n, factory, seed=seed, description=f"geometric dropout p={p:g}")

    @classmethod
    def ring(cls, n: int, weight: float = 0.5) -> "NetworkSequence":
        return cls.static(ring_mixing(n, weight))

    @classmethod
    def mixing(cls, n: int, theta: float) -> "NetworkSequence":
        return cls.static(theta_mixing(n, theta))

    @classmethod
    def mixing_from_sequence(cls, n: int, thetas: Sequence[float]) -> "NetworkSequence":
        """Identity/averaging mixtures driven by an explicit theta sequence."""
        arr = [float(t) for t in thetas]
        if not arr:
            raise ValueError("theta sequence must be nonempty")

        def factory(k: int) -> ConsensusMatrix:
            if k >= len(arr):
                raise IndexError(f"theta sequence has {len(arr)} entries")
            return theta_mixing(n, arr[k])

        return cls(n, factory, description="mixing recorded thetas")

    @classmethod
    def mixing_uniform(
        cls, n: int, low: float, high: float, seed: int
    ) -> "NetworkSequence":
        """Identity/averaging mixtures with theta_k drawn uniformly from [low, high)."""
        if not 0.0 < low < high <= 1.0:
            raise ValueError("need 0 < low < high <= 1")

        def factory(k: int) -> ConsensusMatrix:
            rng = np.random.default_rng([seed, k, _MIXING_TAG])
            return theta_mixing(n, rng.uniform(low, high))

        return cls(n, factory, seed=seed, description=f"mixing U[{low:g},{high:g})")


def window_product(seq: NetworkSequence, k: int, m: int) -> np.ndarray:
    """Ordered product of the ``m`` snapshots ending at index ``k``.

    The newest matrix multiplies from the left; ``m = 0`` gives the identity.
    """
    if m < 0:
        raise ValueError("window length must be nonnegative")
    if k < m - 1:
        raise ValueError("window reaches before the start of the sequence")
    out = np.eye(seq.n)
    for t in range(m):
        out = out @ seq.matrix_at(k - t).entries
    return out


@dataclass(frozen=True)
class WindowAnalysis:
    """Per-window contraction factors of a matrix sequence.

    ``nus[i]`` is the operator norm of the centered window product ending at
    index ``m - 1 + i``; geometric averaging over windows requires
    ``nu_sup < 1``.
    """

    m: int
    nus: np.ndarray
    nu_sup: float

    @property
    def satisfies_contraction(self) -> bool:
        return self.nu_sup < 1.0


def window_contraction(seq: NetworkSequence, horizon: int, m: int) -> WindowAnalysis:
    """Measure how strongly length-``m`` windows contract disagreement.

    For each complete window ending at ``k`` in ``[m-1, horizon-1]`` this
    computes the largest singular value of ``J W_window J`` where ``J`` centers
    vectors; products of stochastic matrices over directed graphs need not be
    symmetric, so the operator norm is the meaningful size measure.
    """
    if m < 1:
        raise ValueError("window length must be at least one")
    if horizon < m:
        raise ValueError("horizon shorter than one window")
    j = centering_matrix(seq.n)
    nus = []
    for k in range(m - 1, horizon):
        prod = window_product(seq, k, m)
        nus.append(np.linalg.norm(j @ prod @ j, 2))
    nus_arr = np.asarray(nus)
    return WindowAnalysis(m=m, nus=nus_arr, nu_sup=float(nus_arr.max()))


def edge_list_text(w: ConsensusMatrix) -> str:
    """Serialize a snapshot as ``i j w_ij`` lines with 17 significant digits."""
    lines = []
    n = w.n
    for i in range(n):
        for j in range(n):
            if w.entries[i, j] != 0.0:
                lines.append(f"{i} {j} {w.entries[i, j]:.17g}")
    return "\n".join(lines) + "\n"


def parse_edge_list_text(text: str, n: int) -> np.ndarray:
    """Rebuild the dense matrix from :func:`edge_list_text` output."""
    w = np.zeros((n, n))
    for line in text.strip().splitlines():
        i_s, j_s, v_s = line.split()
        w[int(i_s), int(j_s)] = float(v_s)
    return w
