"""Network graph objects.

A network of ``n`` agents coupled along ``m`` undirected edges is represented
by a :class:`GraphTopology` with two fixed enumerations: edges are numbered by
their position in the input edge list, and each vertex enumerates its
neighbours in ascending vertex order.  The enumerations induce the stacking of
the ``2m`` per-link signal coordinates: vertex ``i`` owns rows
``s(i-1)+1 .. s(i)``, where ``s`` is the running degree offset.

On top of the topology the module builds

* the routing permutation ``P``, incidence matrix ``B``, Laplacian
  ``L = B B'`` of the 1-regular link-level graph, and the replication matrix
  ``T`` (:class:`SubsystemMatrices`);
* overlapping edge partitions with all derived index sets and coupling
  weights (:class:`EdgePartition`);
* per-element localized selectors and rank-1 Laplacian terms together with
  the embedding permutation (:class:`LocalizedMatrices`).

All objects are immutable after construction and safe to share across
workers.  Vertex ids, edge ids and partition-element ids are 1-based
everywhere, matching the conventions of the model file.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    Assumption2ViolatedError,
    BadEdgeIdError,
    EmptyElementError,
    NotConnectedError,
    NotCoveringError,
    TopologyError,
)

__all__ = [
    "GraphTopology",
    "SubsystemMatrices",
    "EdgePartition",
    "LocalizedMatrices",
    "build_topology",
    "build_subsystem_matrices",
    "build_partition",
    "localized_matrices",
]


def _frozen_array(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GraphTopology:
    """Simple connected graph with fixed edge and neighbour enumerations.

    Attributes
    ----------
    n : int
        Number of vertices (agents); vertices are ``1..n``.
    edges : tuple of (int, int)
        Edge ``k`` (1-based) is ``edges[k-1]``, stored as ``(min, max)``.
        The position fixes the edge enumeration.
    neighbours : tuple of tuple of int
        ``neighbours[i-1]`` lists the neighbours of vertex ``i`` in ascending
        order; the position (1-based) is the local link index of that
        neighbour at vertex ``i``.
    degrees : tuple of int
        ``degrees[i-1]`` is the vertex degree ``m_i``.
    offsets : tuple of int
        Running degree sums ``s(0)=0, s(i)=m_1+...+m_i``; vertex ``i`` owns
        stacked rows ``s(i-1)+1 .. s(i)`` of the ``2m`` link coordinates.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    neighbours: tuple[tuple[int, ...], ...]
    degrees: tuple[int, ...]
    offsets: tuple[int, ...]

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def two_m(self) -> int:
        return 2 * len(self.edges)

    def local_index(self, i: int, j: int) -> int:
        """1-based position of neighbour ``j`` in vertex ``i``'s enumeration."""
        return self.neighbours[i - 1].index(j) + 1

    def row(self, i: int, k: int) -> int:
        """1-based stacked row of vertex ``i``'s local link ``k``."""
        return self.offsets[i - 1] + k

    def vertex_rows(self, i: int) -> range:
        """0-based row slice of vertex ``i`` in the ``2m`` stacking."""
        return range(self.offsets[i - 1], self.offsets[i])

    def edge_id(self, i: int, j: int) -> int:
        """1-based id of edge ``{i, j}``."""
        key = (min(i, j), max(i, j))
        try:
            return self.edges.index(key) + 1
        except ValueError:
            raise KeyError(f"no edge {{{i},{j}}}") from None

    def incident_edge_ids(self, i: int) -> tuple[int, ...]:
        """Ids of the edges incident to vertex ``i``."""
        return tuple(self.edge_id(i, j) for j in self.neighbours[i - 1])

    def adjacent_edge_ids(self, k: int) -> frozenset[int]:
        """Ids of the edges sharing a vertex with edge ``k``, excluding ``k``."""
        i, j = self.edges[k - 1]
        out = set(self.incident_edge_ids(i)) | set(self.incident_edge_ids(j))
        out.discard(k)
        return frozenset(out)


def _check_connected(n: int, adjacency: Sequence[set[int]]) -> bool:
    seen = {1}
    stack = [1]
    while stack:
        v = stack.pop()
        for w in adjacency[v - 1]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == n


def build_topology(n: int, edge_list: Iterable[Sequence[int]]) -> GraphTopology:
    """Validate and enumerate a simple connected graph.

    Edges keep their input order; neighbour lists are sorted ascending.  Both
    choices are deterministic so every derived matrix is reproducible
    byte-for-byte.

    Raises
    ------
    TopologyError
        On ``n < 2``, vertex ids outside ``1..n``, self-loops, duplicate
        edges, or a disconnected graph.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise TopologyError(f"need an integer vertex count n >= 2, got {n!r}")
    n = int(n)

    edges: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for pos, pair in enumerate(edge_list, start=1):
        if len(pair) != 2:
            raise TopologyError(f"edge #{pos}: expected a vertex pair, got {pair!r}")
        i, j = int(pair[0]), int(pair[1])
        if not (1 <= i <= n and 1 <= j <= n):
            raise TopologyError(f"edge #{pos}: vertex ids must lie in 1..{n}")
        if i == j:
            raise TopologyError(f"edge #{pos}: self-loop at vertex {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise TopologyError(f"edge #{pos}: duplicate edge {{{key[0]},{key[1]}}}")
        seen.add(key)
        edges.append(key)
    if not edges:
        raise TopologyError("edge list is empty")

    adjacency: list[set[int]] = [set() for _ in range(n)]
    for i, j in edges:
        adjacency[i - 1].add(j)
        adjacency[j - 1].add(i)
    if not _check_connected(n, adjacency):
        raise TopologyError("graph is not connected")

    neighbours = tuple(tuple(sorted(adjacency[i])) for i in range(n))
    degrees = tuple(len(nb) for nb in neighbours)
    offsets = (0, *np.cumsum(degrees).tolist())
    return GraphTopology(
        n=n,
        edges=tuple(edges),
        neighbours=neighbours,
        degrees=degrees,
        offsets=offsets,
    )


@dataclass(frozen=True)
class SubsystemMatrices:
    """Integer matrices of the 1-regular link-level graph.

    ``P`` routes each link coordinate to its opposite endpoint,
    ``B`` is the signed incidence matrix (+1 at the min-vertex row, -1 at the
    max-vertex row of each edge), ``L = B B'`` and ``P = I - L`` hold exactly,
    and ``T`` replicates each agent output onto its links.
    """

    P: np.ndarray  # (2m, 2m)
    B: np.ndarray  # (2m, m)
    L: np.ndarray  # (2m, 2m)
    T: np.ndarray  # (2m, n)

    def edge_laplacian(self, k: int) -> np.ndarray:
        """Rank-1 Laplacian term of edge ``k`` (1-based)."""
        b = self.B[:, k - 1]
        return np.outer(b, b)


def build_subsystem_matrices(topology: GraphTopology) -> SubsystemMatrices:
    """Build ``P``, ``B``, ``L`` and ``T`` for a topology.

    Row ``s(i-1)+k`` of ``P`` carries a single 1 in column
    ``s(j-1) + position of i at j``, where ``j`` is vertex ``i``'s ``k``-th
    neighbour; this makes ``P`` symmetric and involutive.
    """
    two_m = topology.two_m
    P = np.zeros((two_m, two_m), dtype=np.int64)
    for i in range(1, topology.n + 1):
        for k, j in enumerate(topology.neighbours[i - 1], start=1):
            r = topology.row(i, k)
            q = topology.row(j, topology.local_index(j, i))
            P[r - 1, q - 1] = 1

    B = np.zeros((two_m, topology.m), dtype=np.int64)
    for k, (i, j) in enumerate(topology.edges, start=1):
        r = topology.row(i, topology.local_index(i, j))
        s = topology.row(j, topology.local_index(j, i))
        B[r - 1, k - 1] = 1
        B[s - 1, k - 1] = -1

    L = B @ B.T
    T = np.zeros((two_m, topology.n), dtype=np.int64)
    for i in range(1, topology.n + 1):
        T[topology.offsets[i - 1]:topology.offsets[i], i - 1] = 1

    return SubsystemMatrices(
        P=_frozen_array(P), B=_frozen_array(B), L=_frozen_array(L), T=_frozen_array(T)
    )


@dataclass(frozen=True)
class EdgePartition:
    """Localized edge partition with derived index sets and coupling weights.

    ``sets[p-1]`` is the edge-id set of element ``p``.  Derived data:

    * ``vertex_sets[p-1]`` -- vertices touched by element ``p``, ascending;
    * ``vertex_membership[i-1]`` -- elements containing vertex ``i``;
    * ``edge_membership[k-1]`` -- elements containing edge ``k``;
    * ``adjacent_edges[k-1]`` -- edges sharing a vertex with edge ``k``;
    * ``shared_membership[(k, l)]`` -- elements containing both ``k`` and an
      adjacent ``l``.

    Coupling weights are exact rationals: the weight attached to a vertex,
    edge, or adjacent edge pair is one over the number of elements containing
    it, so each family sums to one over the containing elements.
    """

    topology: GraphTopology
    sets: tuple[frozenset[int], ...]
    vertex_sets: tuple[tuple[int, ...], ...]
    vertex_membership: tuple[frozenset[int], ...]
    edge_membership: tuple[frozenset[int], ...]
    adjacent_edges: tuple[frozenset[int], ...]
    shared_membership: Mapping[tuple[int, int], frozenset[int]]
    admissible: bool
    diagnostics: tuple[str, ...]

    @property
    def c(self) -> int:
        return len(self.sets)

    # weights -----------------------------------------------------------

    def vertex_weight(self, i: int) -> Fraction:
        """Weight of vertex ``i`` in each element containing it."""
        return Fraction(1, len(self.vertex_membership[i - 1]))

    def edge_weight(self, k: int) -> Fraction:
        """Weight of edge ``k`` in each element containing it."""
        return Fraction(1, len(self.edge_membership[k - 1]))

    def pair_weight(self, k: int, l: int) -> Fraction:
        """Weight of the adjacent pair ``(k, l)`` in each element containing both."""
        key = (min(k, l), max(k, l))
        return Fraction(1, len(self.shared_membership[key]))


def build_partition(
    topology: GraphTopology,
    sets: Iterable[Iterable[int]],
    require_admissible: bool = True,
) -> EdgePartition:
    """Build an edge partition and all derived index sets.

    Admissibility has three parts, each reported with the offending element
    or edge: every element's edge-induced sub-graph must be connected, the
    elements must jointly cover the edge set, and for every edge its adjacent
    edges must be covered by the elements containing it (so every adjacent
    pair lives inside at least one element).

    With ``require_admissible=True`` (default) the first violation raises;
    otherwise the partition is returned with ``admissible=False`` and the
    findings in ``diagnostics``.

    Raises
    ------
    EmptyElementError, BadEdgeIdError
        Always raised; the input is structurally unusable.
    NotConnectedError, NotCoveringError, Assumption2ViolatedError
        Raised only when ``require_admissible`` is set.
    """
    m = topology.m
    norm_sets: list[frozenset[int]] = []
    for p, ids in enumerate(sets, start=1):
        ids = frozenset(int(k) for k in ids)
        if not ids:
            raise EmptyElementError(p)
        for k in sorted(ids):
            if not (1 <= k <= m):
                raise BadEdgeIdError(p, k, m)
        norm_sets.append(ids)
    if not norm_sets:
        raise EmptyElementError(0)

    vertex_sets = []
    for ids in norm_sets:
        verts: set[int] = set()
        for k in ids:
            verts.update(topology.edges[k - 1])
        vertex_sets.append(tuple(sorted(verts)))

    c = len(norm_sets)
    vertex_membership = tuple(
        frozenset(p for p in range(1, c + 1) if i in vertex_sets[p - 1])
        for i in range(1, topology.n + 1)
    )
    edge_membership = tuple(
        frozenset(p for p in range(1, c + 1) if k in norm_sets[p - 1])
        for k in range(1, m + 1)
    )
    adjacent = tuple(topology.adjacent_edge_ids(k) for k in range(1, m + 1))

    shared: dict[tuple[int, int], frozenset[int]] = {}
    for k in range(1, m + 1):
        for l in adjacent[k - 1]:
            key = (min(k, l), max(k, l))
            if key in shared:
                continue
            both = frozenset(
                p for p in edge_membership[k - 1] if l in norm_sets[p - 1]
            )
            if both:
                shared[key] = both

    diagnostics: list[str] = []
    first_error: Exception | None = None

    for p, ids in enumerate(norm_sets, start=1):
        if not _element_connected(topology, ids):
            diagnostics.append(f"element {p}: edge-induced sub-graph not connected")
            first_error = first_error or NotConnectedError(p)

    missing = tuple(k for k in range(1, m + 1) if not edge_membership[k - 1])
    if missing:
        diagnostics.append(f"edges not covered: {list(missing)}")
        first_error = first_error or NotCoveringError(missing)

    if not missing:
        for k in range(1, m + 1):
            covered: set[int] = set()
            for p in edge_membership[k - 1]:
                covered.update(norm_sets[p - 1] - {k})
            uncovered = tuple(sorted(adjacent[k - 1] - covered))
            if uncovered:
                diagnostics.append(
                    f"edge {k}: adjacent edges {list(uncovered)} uncovered"
                )
                first_error = first_error or Assumption2ViolatedError(k, uncovered)

    if first_error is not None and require_admissible:
        raise first_error

    return EdgePartition(
        topology=topology,
        sets=tuple(norm_sets),
        vertex_sets=tuple(vertex_sets),
        vertex_membership=vertex_membership,
        edge_membership=edge_membership,
        adjacent_edges=adjacent,
        shared_membership=MappingProxyType(shared),
        admissible=first_error is None,
        diagnostics=tuple(diagnostics),
    )


def _element_connected(topology: GraphTopology, edge_ids: frozenset[int]) -> bool:
    verts: set[int] = set()
    adj: dict[int, set[int]] = {}
    for k in edge_ids:
        i, j = topology.edges[k - 1]
        verts.update((i, j))
        adj.setdefault(i, set()).add(j)
        adj.setdefault(j, set()).add(i)
    start = next(iter(verts))
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen == verts


@dataclass(frozen=True)
class LocalizedMatrices:
    """Localized selectors of one partition element.

    ``rows`` lists (0-based) the global link coordinates owned by the
    element's vertices, in natural vertex order; ``B_hat`` collects the
    corresponding sub-columns of the incidence matrix for the element's
    edges; ``Omega`` is the permutation that moves those coordinates to the
    top, so conjugating any edge term of the element by ``Omega`` lands it in
    the leading ``m_hat`` block.
    """

    element: int
    m_hat: int
    edge_ids: tuple[int, ...]
    rows: tuple[int, ...]
    B_hat: np.ndarray  # (m_hat, |edge_ids|), columns follow ``edge_ids``
    Omega: np.ndarray  # (2m, 2m) permutation

    def column(self, k: int) -> np.ndarray:
        """Signed selector of edge ``k`` (1-based global id)."""
        return self.B_hat[:, self.edge_ids.index(k)]

    def edge_laplacian(self, k: int) -> np.ndarray:
        """Localized rank-1 Laplacian term of edge ``k``."""
        b = self.column(k)
        return np.outer(b, b)

    def laplacian(self) -> np.ndarray:
        """Sum of the element's localized edge terms."""
        return self.B_hat @ self.B_hat.T


def localized_matrices(
    topology: GraphTopology, partition: EdgePartition, p: int
) -> LocalizedMatrices:
    """Localized matrices of partition element ``p`` (1-based)."""
    if not (1 <= p <= partition.c):
        raise IndexError(f"element index {p} out of range 1..{partition.c}")
    subsystem = build_subsystem_matrices(topology)

    rows: list[int] = []
    for i in partition.vertex_sets[p - 1]:
        rows.extend(topology.vertex_rows(i))
    m_hat = len(rows)

    edge_ids = tuple(sorted(partition.sets[p - 1]))
    B_hat = subsystem.B[np.ix_(rows, [k - 1 for k in edge_ids])]

    two_m = topology.two_m
    rest = [r for r in range(two_m) if r not in set(rows)]
    order = rows + rest
    Omega = np.zeros((two_m, two_m), dtype=np.int64)
    Omega[np.arange(two_m), order] = 1

    return LocalizedMatrices(
        element=p,
        m_hat=m_hat,
        edge_ids=edge_ids,
        rows=tuple(rows),
        B_hat=_frozen_array(B_hat),
        Omega=_frozen_array(Omega),
    )
