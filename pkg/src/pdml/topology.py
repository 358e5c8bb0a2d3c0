"""Server communication graph and the matrices the ADMM recursion is built on.

The block matrices follow the usual consensus-ADMM construction: every
undirected link ``(i, l)`` contributes the two ordered pairs ``(i, l)`` and
``(l, i)``; ``A1`` selects the first endpoint and ``A2`` the second. From
them

    L+ = 1/2 (A1 + A2)^T (A1 + A2)   (signless Laplacian, kron I_d)
    L- = 1/2 (A1 - A2)^T (A1 - A2)   (graph Laplacian, kron I_d)
    Q  = (L- / 2)^(1/2)
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DisconnectedGraph, InfeasibleEdgeCount, InvalidEdge, NumericalFailure, ParseError

# eigenvalues below ZERO_EIG_RTOL * largest are treated as exact zeros
ZERO_EIG_RTOL = 1e-9


@dataclass(frozen=True)
class Graph:
    """Undirected, connected, simple graph on servers ``0..n-1``.

    Build instances with :func:`build_graph`, which validates the edge list.
    Edges are stored as sorted ``(i, l)`` pairs with ``i < l``.
    """

    n: int
    edges: tuple[tuple[int, int], ...]

    @property
    def E(self) -> int:
        return len(self.edges)

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, l in self.edges:
            nbrs[i].append(l)
            nbrs[l].append(i)
        return tuple(tuple(sorted(x)) for x in nbrs)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(x) for x in self.neighbors], dtype=int)

    @cached_property
    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for i, l in self.edges:
            A[i, l] = A[l, i] = 1.0
        return A

    def laplacian(self) -> np.ndarray:
        """Standard graph Laplacian ``D - A`` (n x n)."""
        return np.diag(self.degrees.astype(float)) - self.adjacency

    def signless_laplacian(self) -> np.ndarray:
        """Signless Laplacian ``D + A`` (n x n)."""
        return np.diag(self.degrees.astype(float)) + self.adjacency


def _is_connected(n, edges):
    nbrs = [[] for _ in range(n)]
    for i, l in edges:
        nbrs[i].append(l)
        nbrs[l].append(i)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == n


def build_graph(n: int, edges) -> Graph:
    """Validate ``edges`` and return a :class:`Graph`.

    Raises
    ------
    InvalidEdge
        On a self-loop, a duplicate (in either orientation) or an endpoint
        outside ``[0, n)``.
    DisconnectedGraph
        If some server cannot be reached from server 0.
    """
    if n < 2:
        raise InvalidEdge(f"need at least 2 servers, got n={n}")
    canon = set()
    for pair in edges:
        i, l = (int(v) for v in pair)
        if not (0 <= i < n and 0 <= l < n):
            raise InvalidEdge(f"edge ({i}, {l}) has an endpoint outside [0, {n})")
        if i == l:
            raise InvalidEdge(f"self-loop at server {i}")
        key = (min(i, l), max(i, l))
        if key in canon:
            raise InvalidEdge(f"duplicate edge {key}")
        canon.add(key)
    ordered = tuple(sorted(canon))
    if not _is_connected(n, ordered):
        raise DisconnectedGraph(f"graph with n={n} and {len(ordered)} edges is not connected")
    return Graph(n=n, edges=ordered)


def _prufer_tree(n, rng):
    if n == 2:
        return [(0, 1)]
    seq = rng.integers(0, n, size=n - 2).tolist()
    degree = [1] * n
    for v in seq:
        degree[v] += 1
    edges = []
    for v in seq:
        leaf = min(u for u in range(n) if degree[u] == 1)
        edges.append((leaf, v))
        degree[leaf] -= 1
        degree[v] -= 1
    u, w = (x for x in range(n) if degree[x] == 1)
    edges.append((u, w))
    return edges


def random_connected_graph(n: int, E: int, seed: int) -> Graph:
    """Random spanning tree (uniform Prüfer sequence) plus ``E - n + 1`` extra links.

    The result depends only on ``(n, E, seed)``.
    """
    max_edges = n * (n - 1) // 2
    if n < 2 or E < n - 1 or E > max_edges:
        raise InfeasibleEdgeCount(f"E={E} not in [{n - 1}, {max_edges}] for n={n}")
    rng = np.random.default_rng(seed)
    tree = {(min(i, l), max(i, l)) for i, l in _prufer_tree(n, rng)}
    spare = [(i, l) for i in range(n) for l in range(i + 1, n) if (i, l) not in tree]
    extra = E - len(tree)
    if extra:
        picks = rng.choice(len(spare), size=extra, replace=False)
        tree.update(spare[k] for k in sorted(picks))
    return build_graph(n, tree)


def ordered_pairs(g: Graph) -> list[tuple[int, int]]:
    """The 2E ordered links, forward then reverse for each stored edge."""
    out = []
    for i, l in g.edges:
        out.append((i, l))
        out.append((l, i))
    return out


def incidence_matrices(g: Graph, d: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Block matrices ``A1, A2`` of shape ``(2E d, n d)``."""
    pairs = ordered_pairs(g)
    A1 = np.zeros((len(pairs), g.n))
    A2 = np.zeros((len(pairs), g.n))
    for m, (i, l) in enumerate(pairs):
        A1[m, i] = 1.0
        A2[m, l] = 1.0
    eye = np.eye(d)
    return np.kron(A1, eye), np.kron(A2, eye)


def laplacians_from_incidence(A1: np.ndarray, A2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(L+, L-)`` assembled literally from the block incidence matrices."""
    S = A1 + A2
    Dm = A1 - A2
    return 0.5 * S.T @ S, 0.5 * Dm.T @ Dm


def lplus(g: Graph, d: int = 1) -> np.ndarray:
    return np.kron(g.signless_laplacian(), np.eye(d))


def lminus(g: Graph, d: int = 1) -> np.ndarray:
    return np.kron(g.laplacian(), np.eye(d))


def lbar(g: Graph, d: int = 1) -> np.ndarray:
    """``(L+ + L-) / 2``, i.e. the degree matrix kron I_d."""
    return np.kron(np.diag(g.degrees.astype(float)), np.eye(d))


def q_matrix(g: Graph, d: int = 1) -> np.ndarray:
    """Symmetric square root of ``L- / 2``."""
    vals, vecs = _eigh(g.laplacian() / 2.0)
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    return np.kron(root, np.eye(d))


def _eigh(M):
    try:
        return np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalFailure(str(exc)) from exc


def nonzero_extremes(M: np.ndarray) -> tuple[float, float]:
    """Largest and smallest nonzero eigenvalue of a symmetric PSD matrix."""
    vals = _eigh(M)[0]
    top = np.max(np.abs(vals))
    nz = vals[np.abs(vals) >= ZERO_EIG_RTOL * top]
    if nz.size == 0:
        raise NumericalFailure("matrix has no nonzero eigenvalue")
    return float(nz.max()), float(nz.min())


@dataclass(frozen=True)
class SpectralProfile:
    """Extreme nonzero eigenvalues of L+, L-, Q and L-bar.

    Values do not depend on ``d``; the block structure only repeats each
    eigenvalue ``d`` times.
    """

    d: int
    sigma_max_Lplus: float
    sigma_min_Lplus: float
    sigma_max_Lminus: float
    sigma_min_Lminus: float
    sigma_max_Q: float
    sigma_min_Q: float
    sigma_max_Lbar: float


def spectral_profile(g: Graph, d: int = 1) -> SpectralProfile:
    pmax, pmin = nonzero_extremes(g.signless_laplacian())
    mmax, mmin = nonzero_extremes(g.laplacian())
    bmax, _ = nonzero_extremes(np.diag(g.degrees.astype(float)))
    return SpectralProfile(
        d=d,
        sigma_max_Lplus=pmax,
        sigma_min_Lplus=pmin,
        sigma_max_Lminus=mmax,
        sigma_min_Lminus=mmin,
        sigma_max_Q=float(np.sqrt(mmax / 2.0)),
        sigma_min_Q=float(np.sqrt(mmin / 2.0)),
        sigma_max_Lbar=bmax,
    )


def format_edge_list(g: Graph, header: str | None = None) -> str:
    lines = []
    if header:
        lines.extend("# " + h for h in header.splitlines())
    lines.append(f"{g.n} {g.E}")
    lines.extend(f"{i} {l}" for i, l in g.edges)
    return "\n".join(lines) + "\n"


def write_edge_list(g: Graph, path, header: str | None = None) -> None:
    """Write ``"n E"`` then one ``"i j"`` line per link. ``#`` lines are comments."""
    Path(path).write_text(format_edge_list(g, header))


def parse_edge_list(text: str) -> Graph:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected two integers, got {line!r}", lineno)
        try:
            rows.append((lineno, int(parts[0]), int(parts[1])))
        except ValueError:
            raise ParseError(f"expected two integers, got {line!r}", lineno) from None
    if not rows:
        raise ParseError("empty edge list")
    _, n, E = rows[0]
    edges = [(i, l) for _, i, l in rows[1:]]
    if len(edges) != E:
        raise ParseError(f"header announces {E} edges but {len(edges)} follow", rows[0][0])
    return build_graph(n, edges)


def read_edge_list(path) -> Graph:
    return parse_edge_list(Path(path).read_text())
