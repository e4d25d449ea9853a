"""Graph data model: validation, permutations, atomic types, a brute-force
isomorphism oracle, and built-in non-isomorphic test pairs.

Graphs here are undirected, node-labeled, without self-loops and without
isolated nodes. Node indexing is 0-based and index order is the fixed node
ordering that every downstream enumeration relies on. The module is plain
Python on purpose: instances stay small (tuple enumeration elsewhere grows
as n^k) and the hot loops live in :mod:`wlsim.refine`.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

from .errors import (
    DUPLICATE_EDGE,
    INVALID_SCHEMA,
    ISOLATED_NODE,
    NODE_INDEX_OUT_OF_RANGE,
    NON_BIJECTIVE,
    NON_SYMMETRIC,
    SELF_LOOP,
    SIZE_LIMIT,
    UNKNOWN_PAIR,
    LimitError,
    ValidationError,
)

#: Hard cap for the exhaustive isomorphism search (factorial blow-up).
BRUTE_FORCE_MAX_NODES = 9

_GRAPH_KEYS = {"num_nodes", "edges", "labels", "edge_labels"}


def _natural(value: object, what: str) -> int:
    """Coerce-check a JSON-ish value as a non-negative integer."""
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ValidationError(
            INVALID_SCHEMA, f"{what} must be a non-negative integer, got {value!r}"
        )
    return value


@dataclass(frozen=True)
class Graph:
    """Undirected node-labeled graph.

    Parameters
    ----------
    num_nodes:
        Number of nodes; indices run over ``[0, num_nodes)``.
    edges:
        Iterable of unordered pairs. Stored sorted as ``(u, v)`` with
        ``u < v``, so two graphs with the same edge set compare equal no
        matter how the edges were spelled.
    labels:
        Optional per-node natural numbers; defaults to all zeros.
    edge_labels:
        Optional per-edge natural numbers, parallel to ``edges`` as passed
        in; reordered together with the edges during normalization.

    Raises
    ------
    ValidationError
        With code ``SELF_LOOP``, ``ISOLATED_NODE``, ``DUPLICATE_EDGE``,
        ``NODE_INDEX_OUT_OF_RANGE``, or ``INVALID_SCHEMA`` depending on
        which invariant the input breaks.
    """

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    labels: tuple[int, ...] | None = None
    edge_labels: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        n = self.num_nodes
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise ValidationError(
                INVALID_SCHEMA, f"num_nodes must be a positive integer, got {n!r}"
            )

        seen: set[tuple[int, int]] = set()
        ordered: list[tuple[int, int]] = []
        for raw in self.edges:
            try:
                pair = tuple(raw)
            except TypeError:
                raise ValidationError(INVALID_SCHEMA, f"edge {raw!r} is not a pair") from None
            if len(pair) != 2:
                raise ValidationError(INVALID_SCHEMA, f"edge {raw!r} is not a pair")
            u = _natural(pair[0], "edge endpoint")
            v = _natural(pair[1], "edge endpoint")
            if u == v:
                raise ValidationError(SELF_LOOP, f"self-loop at node {u}")
            if u >= n or v >= n:
                raise ValidationError(
                    NODE_INDEX_OUT_OF_RANGE,
                    f"edge ({u}, {v}) references a node outside [0, {n})",
                )
            key = (u, v) if u < v else (v, u)
            if key in seen:
                raise ValidationError(
                    DUPLICATE_EDGE, f"edge ({key[0]}, {key[1]}) appears more than once"
                )
            seen.add(key)
            ordered.append(key)

        if self.edge_labels is not None:
            marks = tuple(_natural(x, "edge label") for x in self.edge_labels)
            if len(marks) != len(ordered):
                raise ValidationError(
                    INVALID_SCHEMA,
                    f"edge_labels has length {len(marks)} but there are {len(ordered)} edges",
                )
            joint = sorted(zip(ordered, marks))
            object.__setattr__(self, "edges", tuple(e for e, _ in joint))
            object.__setattr__(self, "edge_labels", tuple(m for _, m in joint))
        else:
            object.__setattr__(self, "edges", tuple(sorted(ordered)))

        if self.labels is None:
            object.__setattr__(self, "labels", (0,) * n)
        else:
            lab = tuple(_natural(x, "node label") for x in self.labels)
            if len(lab) != n:
                raise ValidationError(
                    INVALID_SCHEMA,
                    f"labels has length {len(lab)} but num_nodes is {n}",
                )
            object.__setattr__(self, "labels", lab)

        degree = [0] * n
        for u, v in self.edges:
            degree[u] += 1
            degree[v] += 1
        for v, d in enumerate(degree):
            if d == 0:
                raise ValidationError(ISOLATED_NODE, f"node {v} has no incident edge")

    @cached_property
    def neighbor_sets(self) -> tuple[frozenset[int], ...]:
        """Neighbor set of every node, indexed by node."""
        sets: list[set[int]] = [set() for _ in range(self.num_nodes)]
        for u, v in self.edges:
            sets[u].add(v)
            sets[v].add(u)
        return tuple(frozenset(s) for s in sets)

    @cached_property
    def _edge_label_map(self) -> dict[tuple[int, int], int]:
        if self.edge_labels is None:
            return {}
        return dict(zip(self.edges, self.edge_labels))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degree(self, v: int) -> int:
        self._check_node(v)
        return len(self.neighbor_sets[v])

    def has_edge(self, u: int, v: int) -> bool:
        self._check_node(u)
        self._check_node(v)
        return v in self.neighbor_sets[u]

    def edge_label(self, u: int, v: int) -> int:
        """Label of the edge {u, v}, defaulting to 0 when no labels were given."""
        if not self.has_edge(u, v):
            raise ValueError(f"no edge between {u} and {v}")
        key = (u, v) if u < v else (v, u)
        return self._edge_label_map.get(key, 0)

    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        """Dense 0/1 adjacency matrix in node-index order."""
        rows = []
        for u in range(self.num_nodes):
            nb = self.neighbor_sets[u]
            rows.append(tuple(1 if v in nb else 0 for v in range(self.num_nodes)))
        return tuple(rows)

    def _check_node(self, v: int) -> None:
        if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v < self.num_nodes:
            raise ValidationError(
                NODE_INDEX_OUT_OF_RANGE,
                f"node index {v!r} outside [0, {self.num_nodes})",
            )


@dataclass(frozen=True)
class AtomicTypeMatrix:
    """Pairwise relation pattern of a node tuple.

    ``entries[i][j]`` is 1 when the i-th and j-th tuple positions hold
    adjacent nodes, 2 when they hold the same node, and 3 otherwise. The
    diagonal is forced to 2 and the matrix is symmetric because the
    underlying graphs are undirected.
    """

    k: int
    entries: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if isinstance(self.k, bool) or not isinstance(self.k, int) or self.k < 1:
            raise ValidationError(INVALID_SCHEMA, f"order must be a positive integer, got {self.k!r}")
        rows = tuple(tuple(row) for row in self.entries)
        if len(rows) != self.k or any(len(row) != self.k for row in rows):
            raise ValidationError(INVALID_SCHEMA, f"entries must form a {self.k}x{self.k} matrix")
        for i, row in enumerate(rows):
            for j, val in enumerate(row):
                if val not in (1, 2, 3):
                    raise ValidationError(
                        INVALID_SCHEMA, f"entry ({i}, {j}) is {val!r}, expected 1, 2, or 3"
                    )
                if i == j and val != 2:
                    raise ValidationError(INVALID_SCHEMA, f"diagonal entry ({i}, {i}) must be 2")
                if rows[j][i] != val:
                    raise ValidationError(
                        NON_SYMMETRIC, f"entries ({i}, {j}) and ({j}, {i}) disagree"
                    )
        object.__setattr__(self, "entries", rows)


def atomic_type(graph: Graph, tup: Sequence[int]) -> AtomicTypeMatrix:
    """Atomic type of a node tuple: the k x k equality/adjacency pattern.

    The result depends only on which positions coincide and which are
    adjacent, never on the node identities themselves, which is what makes
    it a sound initial color for tuple refinement.
    """
    k = len(tup)
    if k < 1:
        raise ValidationError(INVALID_SCHEMA, "tuple must have at least one position")
    for v in tup:
        graph._check_node(v)
    nbs = graph.neighbor_sets
    rows = []
    for vi in tup:
        row = []
        for vj in tup:
            if vi == vj:
                row.append(2)
            elif vj in nbs[vi]:
                row.append(1)
            else:
                row.append(3)
        rows.append(tuple(row))
    return AtomicTypeMatrix(k, tuple(rows))


def apply_permutation(graph: Graph, perm: Sequence[int]) -> Graph:
    """Relabel nodes by a bijection, giving an isomorphic graph.

    ``perm[v]`` is the new index of node ``v``; node labels travel with
    their nodes and edge labels with their edges.
    """
    n = graph.num_nodes
    p = tuple(perm)
    if len(p) != n or any(isinstance(x, bool) or not isinstance(x, int) for x in p) or sorted(p) != list(range(n)):
        raise ValidationError(
            NON_BIJECTIVE, f"perm must be a bijection on [0, {n}), got {p!r}"
        )
    new_edges = [(p[u], p[v]) for u, v in graph.edges]
    new_labels = [0] * n
    for v, mark in enumerate(graph.labels):
        new_labels[p[v]] = mark
    return Graph(n, tuple(new_edges), tuple(new_labels), graph.edge_labels)


def are_isomorphic_bruteforce(g: Graph, h: Graph) -> bool:
    """Exhaustive isomorphism test, the ground truth for soundness checks.

    Searches over bijections with degree and label pruning, so it is exact
    but only usable for small graphs.

    Raises
    ------
    LimitError
        With code ``SIZE_LIMIT`` when either graph has more than
        ``BRUTE_FORCE_MAX_NODES`` nodes.
    """
    if g.num_nodes > BRUTE_FORCE_MAX_NODES or h.num_nodes > BRUTE_FORCE_MAX_NODES:
        raise LimitError(
            SIZE_LIMIT,
            f"brute-force search is capped at {BRUTE_FORCE_MAX_NODES} nodes",
        )
    n = g.num_nodes
    if n != h.num_nodes or g.num_edges != h.num_edges:
        return False
    sig_g = sorted((g.labels[v], g.degree(v)) for v in range(n))
    sig_h = sorted((h.labels[v], h.degree(v)) for v in range(n))
    if sig_g != sig_h:
        return False

    def mark(graph: Graph, u: int, v: int) -> int | None:
        if v in graph.neighbor_sets[u]:
            return graph.edge_label(u, v)
        return None

    # Most-constrained-first: mapping high-degree nodes early prunes fastest.
    order = sorted(range(n), key=lambda v: (-g.degree(v), v))
    image = [-1] * n
    used = [False] * n

    def extend(idx: int) -> bool:
        if idx == n:
            return True
        v = order[idx]
        for w in range(n):
            if used[w] or g.labels[v] != h.labels[w] or g.degree(v) != h.degree(w):
                continue
            if all(mark(g, v, u) == mark(h, w, image[u]) for u in order[:idx]):
                image[v] = w
                used[w] = True
                if extend(idx + 1):
                    return True
                image[v] = -1
                used[w] = False
        return False

    return extend(0)


# The 16-node pair below is stored as explicit edge lists so that a slip in
# some on-the-fly construction can never silently change what the expressivity
# tests exercise. Both lists come from the standard definitions (tests
# re-derive them): the rook graph puts i and j adjacent iff they share a row
# or column of a 4x4 grid (i // 4 == j // 4 or i % 4 == j % 4), and the other
# graph is the Cayley graph of Z4 x Z4 with connection set
# {(1,0), (3,0), (0,1), (0,3), (1,1), (3,3)}. Both are 6-regular with every
# adjacent and non-adjacent pair sharing exactly two common neighbors, yet
# they are non-isomorphic: the neighborhood of any rook node induces two
# triangles, while its counterpart induces a single 6-cycle.
_ROOK_4X4_EDGES: tuple[tuple[int, int], ...] = (
    (0, 1), (0, 2), (0, 3), (0, 4), (0, 8), (0, 12), (1, 2), (1, 3), (1, 5),
    (1, 9), (1, 13), (2, 3), (2, 6), (2, 10), (2, 14), (3, 7), (3, 11),
    (3, 15), (4, 5), (4, 6), (4, 7), (4, 8), (4, 12), (5, 6), (5, 7), (5, 9),
    (5, 13), (6, 7), (6, 10), (6, 14), (7, 11), (7, 15), (8, 9), (8, 10),
    (8, 11), (8, 12), (9, 10), (9, 11), (9, 13), (10, 11), (10, 14), (11, 15),
    (12, 13), (12, 14), (12, 15), (13, 14), (13, 15), (14, 15),
)

_SHRIKHANDE_EDGES: tuple[tuple[int, int], ...] = (
    (0, 1), (0, 3), (0, 4), (0, 5), (0, 12), (0, 15), (1, 2), (1, 5), (1, 6),
    (1, 12), (1, 13), (2, 3), (2, 6), (2, 7), (2, 13), (2, 14), (3, 4),
    (3, 7), (3, 14), (3, 15), (4, 5), (4, 7), (4, 8), (4, 9), (5, 6), (5, 9),
    (5, 10), (6, 7), (6, 10), (6, 11), (7, 8), (7, 11), (8, 9), (8, 11),
    (8, 12), (8, 13), (9, 10), (9, 13), (9, 14), (10, 11), (10, 14), (10, 15),
    (11, 12), (11, 15), (12, 13), (12, 15), (13, 14), (14, 15),
)

BUILTIN_PAIR_NAMES = ("c6_vs_2c3", "k33_vs_prism", "shrikhande_vs_rook")


def builtin_pair(name: str) -> tuple[Graph, Graph]:
    """Named non-isomorphic graph pairs used as expressivity probes.

    ``c6_vs_2c3`` is the 6-cycle against two disjoint triangles (the classic
    pair that plain color refinement cannot tell apart), ``k33_vs_prism``
    is the complete bipartite K3,3 against the triangular prism, and
    ``shrikhande_vs_rook`` is a strongly regular 16-node pair that needs
    more than pairwise refinement to separate.
    """
    if name == "c6_vs_2c3":
        cycle = Graph(6, tuple((i, (i + 1) % 6) for i in range(6)))
        triangles = Graph(6, ((0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)))
        return cycle, triangles
    if name == "k33_vs_prism":
        bipartite = Graph(6, tuple((i, j) for i in range(3) for j in range(3, 6)))
        prism = Graph(
            6, ((0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (0, 3), (1, 4), (2, 5))
        )
        return bipartite, prism
    if name == "shrikhande_vs_rook":
        return Graph(16, _SHRIKHANDE_EDGES), Graph(16, _ROOK_4X4_EDGES)
    raise ValidationError(
        UNKNOWN_PAIR,
        f"unknown pair {name!r}, expected one of {', '.join(BUILTIN_PAIR_NAMES)}",
    )


def graph_from_dict(doc: object) -> Graph:
    """Build a validated Graph from an already-parsed JSON document."""
    if not isinstance(doc, dict):
        raise ValidationError(INVALID_SCHEMA, "graph document must be a JSON object")
    unknown = set(doc) - _GRAPH_KEYS
    if unknown:
        raise ValidationError(INVALID_SCHEMA, f"unknown keys: {sorted(unknown)}")
    for key in ("num_nodes", "edges"):
        if key not in doc:
            raise ValidationError(INVALID_SCHEMA, f"missing required key {key!r}")
    edges = doc["edges"]
    if not isinstance(edges, (list, tuple)):
        raise ValidationError(INVALID_SCHEMA, "edges must be an array of pairs")
    labels = doc.get("labels")
    if labels is not None and not isinstance(labels, (list, tuple)):
        raise ValidationError(INVALID_SCHEMA, "labels must be an array of integers")
    edge_labels = doc.get("edge_labels")
    if edge_labels is not None and not isinstance(edge_labels, (list, tuple)):
        raise ValidationError(INVALID_SCHEMA, "edge_labels must be an array of integers")
    return Graph(
        doc["num_nodes"],
        tuple(edges),
        tuple(labels) if labels is not None else None,
        tuple(edge_labels) if edge_labels is not None else None,
    )


def load_graph(text: str) -> Graph:
    """Parse a graph JSON document.

    The schema is an object with ``num_nodes`` and ``edges`` plus optional
    ``labels`` and ``edge_labels`` arrays; anything else is rejected with
    code ``INVALID_SCHEMA``, and the structural rules (no self-loops, no
    isolated nodes, no duplicate edges, indices in range) each fail with
    their own code.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(INVALID_SCHEMA, f"not valid JSON: {exc}") from exc
    return graph_from_dict(doc)


def graph_to_dict(graph: Graph) -> dict:
    """Inverse of :func:`graph_from_dict`, omitting redundant defaults."""
    doc: dict = {
        "num_nodes": graph.num_nodes,
        "edges": [[u, v] for u, v in graph.edges],
    }
    if any(graph.labels):
        doc["labels"] = list(graph.labels)
    if graph.edge_labels is not None:
        doc["edge_labels"] = list(graph.edge_labels)
    return doc


def random_graph(
    rng,
    num_nodes: int,
    edge_prob: float = 0.5,
    label_count: int = 1,
    connected: bool = False,
) -> Graph:
    """Sample a valid random graph (used by tests and the benchmark runner).

    Isolated nodes are repaired by attaching them to a random other node, so
    every draw satisfies the model invariants. With ``connected=True`` a
    random spanning tree is merged in first.
    """
    if num_nodes < 2:
        raise ValidationError(INVALID_SCHEMA, "need at least two nodes for a valid graph")
    edges = {
        (u, v)
        for u, v in itertools.combinations(range(num_nodes), 2)
        if rng.random() < edge_prob
    }
    if connected:
        nodes = list(range(num_nodes))
        rng.shuffle(nodes)
        for a, b in zip(nodes, nodes[1:]):
            edges.add((min(a, b), max(a, b)))
    else:
        degree = [0] * num_nodes
        for u, v in edges:
            degree[u] += 1
            degree[v] += 1
        for v in range(num_nodes):
            if degree[v] == 0:
                w = rng.choice([u for u in range(num_nodes) if u != v])
                edges.add((min(v, w), max(v, w)))
                degree[v] += 1
                degree[w] += 1
    labels = tuple(rng.randrange(label_count) for _ in range(num_nodes))
    return Graph(num_nodes, tuple(sorted(edges)), labels)
