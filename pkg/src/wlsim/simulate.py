"""Closed-form attention layers that replay tuple color refinement.

The forward pass in this module is ordinary multi-head softmax attention.
What is unusual is where the weights come from: given a graph, every query,
key, value, and output projection is written down in closed form from
eigenfactorizations of the adjacency matrix and the Laplacian, so that each
head's attention matrix approaches a row-normalized adjacency pattern
between node tuples as the temperature grows.  A designed, exact
feed-forward map then de-normalizes the attended averages back into integer
neighbor-color counts and relabels the rows.  Iterating the layer
reproduces, class for class, the refinement computed by the multiset engine
in ``refine``.

``simulate_and_compare`` runs three implementations side by side: the
constructed transformer, the hash-based engine, and an exact fixed-point
digit encoding (``gnn_reference_step``) that aggregates neighbor colors with
base-``m`` arithmetic.  The three never share intermediate state; agreement
of their partitions at every iteration is the point of the exercise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .digits import DigitVector, add, code_of, shift
from .errors import (
    INVALID_SCHEMA,
    MEMORY_LIMIT,
    SHAPE_MISMATCH,
    SPACE_MISMATCH,
    VARIANT_MISMATCH,
    ZERO_ROW,
    LimitError,
    ValidationError,
)
from .graphs import Graph
from .refine import (
    DEFAULT_MEMORY_LIMIT,
    VARIANTS,
    Coloring,
    TupleSpace,
    enumerate_tuples,
    initial_coloring,
    refine_step,
    refine_to_stable,
)
from .spectral import eigh, laplacian

__all__ = [
    "DEFAULT_TEMPERATURE",
    "ROUNDING_SLACK_LIMIT",
    "AttentionHead",
    "LayerWeights",
    "ConstructedWeights",
    "IndicatorResult",
    "SimReport",
    "softmax_rows",
    "transformer_layer",
    "generalized_adjacency",
    "weighted_indicator",
    "initial_tokens",
    "construct_1wl_weights",
    "construct_kgt_weights",
    "gnn_reference_step",
    "simulate_and_compare",
    "attention_error_curve",
]

DEFAULT_TEMPERATURE = 60.0

# Recovered neighbor counts must sit strictly closer than this to an integer
# before they are rounded; the margin is the quantitative witness that the
# attention approximation is tight enough to be read back exactly.
ROUNDING_SLACK_LIMIT = 0.4

def _variant_scalars(variant: str, n: int) -> tuple[float, float]:
    """Output-projection scalars (alpha, beta) for the two head groups.

    Plain counting adds the adjacent and non-adjacent counts back together,
    so the scalars are equal.  The adjacency-aware rule packs the two counts
    into one integer as ``adjacent + (n + 1) * non_adjacent``; both counts
    are at most ``n``, so the packing is injective.  The local rules drop
    the non-adjacent group entirely.
    """
    if variant == "kwl":
        return 1.0, 1.0
    if variant == "delta_kwl":
        return 1.0, float(n + 1)
    return 1.0, 0.0


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction so large scores cannot overflow."""
    scores = np.asarray(scores, dtype=float)
    shifted = scores - scores.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class AttentionHead:
    """Projection triple for one attention head."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray


@dataclass(frozen=True, eq=False)
class LayerWeights:
    """One layer: heads, output projection, and the designed exact map.

    ``ffn`` stands in for the feed-forward block.  It receives the residual
    sum ``X + concat(heads) @ w_o`` and may change the row width (the
    constructions re-encode colors one-hot against a fresh palette each
    layer).  ``None`` means identity.
    """

    heads: tuple[AttentionHead, ...]
    w_o: np.ndarray
    ffn: Callable[[np.ndarray], np.ndarray] | None = None


@dataclass(frozen=True, eq=False)
class ConstructedWeights:
    """Per-layer weights produced by one of the builders."""

    layers: tuple[LayerWeights, ...]
    temperature: float
    head_count: int
    k: int
    variant: str

    def __post_init__(self) -> None:
        expected = 1 if self.k == 1 else 2 * self.k
        if self.head_count != expected:
            raise ValidationError(
                INVALID_SCHEMA,
                f"k={self.k} construction uses {expected} heads, got {self.head_count}",
            )
        for i, layer in enumerate(self.layers):
            if len(layer.heads) != self.head_count:
                raise ValidationError(
                    INVALID_SCHEMA,
                    f"layer {i} has {len(layer.heads)} heads, expected {self.head_count}",
                )


def _as_rows(x) -> np.ndarray:
    rows = getattr(x, "rows", x)
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(SHAPE_MISMATCH, f"token matrix must be 2-d, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError(INVALID_SCHEMA, "token matrix contains non-finite entries")
    return arr


def transformer_layer(x, weights: LayerWeights, return_attention: bool = False):
    """Run one multi-head attention layer with residual and exact FFN.

    Parameters
    ----------
    x : array-like or TokenMatrix
        Token rows, one per node or tuple.
    weights : LayerWeights
        Head projections, output projection, and optional exact map.
    return_attention : bool
        When true, also return each head's post-softmax attention matrix.

    Returns
    -------
    np.ndarray or (np.ndarray, tuple[np.ndarray, ...])
        ``ffn(x + [h_1 ... h_M] w_o)``; attention matrices if requested.
    """
    arr = _as_rows(x)
    d = arr.shape[1]
    outputs = []
    attentions = []
    for idx, head in enumerate(weights.heads):
        w_q, w_k, w_v = head.w_q, head.w_k, head.w_v
        if w_q.ndim != 2 or w_k.ndim != 2 or w_v.ndim != 2:
            raise ValidationError(SHAPE_MISMATCH, f"head {idx} projections must be 2-d")
        if w_q.shape[0] != d or w_k.shape[0] != d or w_v.shape[0] != d:
            raise ValidationError(
                SHAPE_MISMATCH,
                f"head {idx} expects input width {w_q.shape[0]}, token width is {d}",
            )
        if w_q.shape[1] != w_k.shape[1]:
            raise ValidationError(
                SHAPE_MISMATCH,
                f"head {idx} query width {w_q.shape[1]} != key width {w_k.shape[1]}",
            )
        d_k = w_q.shape[1]
        scores = (arr @ w_q) @ (arr @ w_k).T / math.sqrt(d_k)
        att = softmax_rows(scores)
        outputs.append(att @ (arr @ w_v))
        if return_attention:
            attentions.append(att)
    concat = np.hstack(outputs)
    w_o = weights.w_o
    if w_o.shape != (concat.shape[1], d):
        raise ValidationError(
            SHAPE_MISMATCH,
            f"output projection is {w_o.shape}, expected {(concat.shape[1], d)}",
        )
    combined = arr + concat @ w_o
    out = combined if weights.ffn is None else weights.ffn(combined)
    if return_attention:
        return out, tuple(attentions)
    return out


def generalized_adjacency(
    graph: Graph,
    k: int,
    j: int,
    gamma: int,
    space: TupleSpace | None = None,
    memory_limit: int = DEFAULT_MEMORY_LIMIT,
) -> np.ndarray:
    """Adjacency between k-tuples that differ in the j-th position.

    Entry ``(i, l)`` is 1 when tuple ``l`` arises from tuple ``i`` by
    substituting some node ``w`` at position ``j``, with ``w`` adjacent to
    the replaced node for ``gamma = +1`` and non-adjacent (the node itself
    included, as there are no self-loops) for ``gamma = -1``.  Computed by
    brute force over every candidate ``w``.

    Parameters
    ----------
    graph : Graph
    k : int
        Tuple order; ``j`` is 1-based and at most ``k``.
    gamma : int
        Either +1 or -1.
    space : TupleSpace, optional
        Restricted tuple domain; substitutions leaving it are skipped.
        Defaults to the full order-``k`` space.

    Returns
    -------
    np.ndarray
        Dense 0/1 matrix over the tuple ordering of ``space``.
    """
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise ValidationError(INVALID_SCHEMA, f"k must be a positive integer, got {k!r}")
    if isinstance(j, bool) or not isinstance(j, int) or not 1 <= j <= k:
        raise ValidationError(INVALID_SCHEMA, f"position j must be in 1..{k}, got {j!r}")
    if gamma not in (-1, 1):
        raise ValidationError(INVALID_SCHEMA, f"gamma must be +1 or -1, got {gamma!r}")
    if space is None:
        space = enumerate_tuples(graph, k, k, memory_limit=memory_limit)
    else:
        if space.k != k:
            raise ValidationError(SPACE_MISMATCH, f"space has order {space.k}, expected {k}")
        if space.num_nodes != graph.num_nodes:
            raise ValidationError(
                SPACE_MISMATCH,
                f"space was built over {space.num_nodes} nodes, graph has {graph.num_nodes}",
            )
    t = len(space.tuples)
    if t * t > memory_limit:
        raise LimitError(
            MEMORY_LIMIT, f"dense {t}x{t} tuple adjacency exceeds the cap of {memory_limit}"
        )
    n = graph.num_nodes
    nbs = graph.neighbor_sets
    index_of = space.index_of
    mat = np.zeros((t, t))
    for i, tup in enumerate(space.tuples):
        adjacent = nbs[tup[j - 1]]
        head, tail = tup[: j - 1], tup[j:]
        for w in range(n):
            if (w in adjacent) != (gamma == 1):
                continue
            target = index_of.get(head + (w,) + tail)
            if target is not None:
                mat[i, target] = 1.0
    return mat


@dataclass(frozen=True, eq=False)
class IndicatorResult:
    """Row-normalized binary matrix plus the rows that could not be normalized."""

    matrix: np.ndarray
    zero_rows: tuple[int, ...]

    @property
    def flag(self) -> str | None:
        return ZERO_ROW if self.zero_rows else None


def weighted_indicator(binary: np.ndarray) -> IndicatorResult:
    """Divide each row of a 0/1 matrix by its row sum.

    All-zero rows are left as zeros and reported in ``zero_rows`` rather
    than raising; downstream comparisons decide what to do with them.
    """
    mat = np.asarray(binary, dtype=float)
    if mat.ndim != 2:
        raise ValidationError(SHAPE_MISMATCH, f"expected a 2-d matrix, got shape {mat.shape}")
    if not np.logical_or(mat == 0.0, mat == 1.0).all():
        raise ValidationError(INVALID_SCHEMA, "indicator input must contain only 0 and 1")
    sums = mat.sum(axis=1)
    zero_rows = tuple(int(i) for i in np.flatnonzero(sums == 0))
    safe = np.where(sums == 0, 1.0, sums)
    return IndicatorResult(mat / safe[:, None], zero_rows)


# ---------------------------------------------------------------------------
# Shared spectral ingredients for the weight builders.


@dataclass(frozen=True, eq=False)
class _SpectralParts:
    node_part: np.ndarray  # orthonormal rows, V V^T = I
    adj_part: np.ndarray  # V_A |lam|^(1/2); with the sign matrix recovers A
    signs: np.ndarray


def _spectral_parts(graph: Graph) -> _SpectralParts:
    adj = np.asarray(graph.adjacency(), dtype=float)
    dec_a = eigh(adj, source="adjacency")
    lam = dec_a.eigenvalues
    signs = np.where(lam >= 0.0, 1.0, -1.0)
    adj_part = dec_a.eigenvectors * np.sqrt(np.abs(lam))
    dec_l = eigh(laplacian(graph), source="laplacian")
    return _SpectralParts(node_part=dec_l.eigenvectors, adj_part=adj_part, signs=signs)


def _dense_row_ids(rows: np.ndarray) -> tuple[int, ...]:
    """First-occurrence dense ids over exact integer-valued rows."""
    ints = np.rint(rows).astype(np.int64)
    table: dict[bytes, int] = {}
    ids = []
    for row in ints:
        key = row.tobytes()
        got = table.get(key)
        if got is None:
            got = len(table)
            table[key] = got
        ids.append(got)
    return tuple(ids)


def _check_rounding(values: np.ndarray, trace: dict) -> np.ndarray:
    slack = float(np.abs(values - np.rint(values)).max()) if values.size else 0.0
    trace["slack"] = max(trace["slack"], slack)
    if slack >= ROUNDING_SLACK_LIMIT:
        raise AssertionError(
            f"count-recovery slack {slack:.6f} reached the limit {ROUNDING_SLACK_LIMIT}; "
            "the attention approximation is too loose to round"
        )
    return np.rint(values)


# ---------------------------------------------------------------------------
# Order-1 construction: one head, adjacency-shaped attention.


def _token_rows_1(graph: Graph, classes: Sequence[int], parts: _SpectralParts) -> np.ndarray:
    n = graph.num_nodes
    c = max(classes) + 1
    x = np.zeros((n, 2 * c + 2 + n))
    for v, cls in enumerate(classes):
        x[v, cls] = 1.0
    x[:, 2 * c] = [graph.degree(v) for v in range(n)]
    x[:, 2 * c + 2 :] = parts.adj_part
    return x


def _build_1wl_layer(
    graph: Graph, classes: Sequence[int], parts: _SpectralParts, b: float, trace: dict
) -> LayerWeights:
    n = graph.num_nodes
    c = max(classes) + 1
    d = 2 * c + 2 + n
    pe = 2 * c + 2

    w_q = np.zeros((d, n))
    w_q[pe:, :] = b * math.sqrt(n) * np.diag(parts.signs)
    w_k = np.zeros((d, n))
    w_k[pe:, :] = np.eye(n)
    w_v = np.zeros((d, d))
    w_v[0:c, c : 2 * c] = np.eye(c)

    def ffn(xt: np.ndarray) -> np.ndarray:
        # Double, de-normalize by degree, and round: even numbers are the
        # neighbor counts, the odd +1 from the residual one-hot marks the
        # row's own class, so one integer vector carries both.
        counts = _check_rounding(xt[:, c : 2 * c] * 2.0 * xt[:, 2 * c : 2 * c + 1], trace)
        combined = xt[:, 0:c] + counts
        new_classes = _dense_row_ids(combined)
        trace["classes"] = new_classes
        return _token_rows_1(graph, new_classes, parts)

    return LayerWeights(heads=(AttentionHead(w_q, w_k, w_v),), w_o=np.eye(d), ffn=ffn)


# ---------------------------------------------------------------------------
# Order-k construction: 2k heads over the generalized tuple adjacencies.


@dataclass(frozen=True, eq=False)
class _KLayout:
    c: int
    k: int
    n: int

    @property
    def width(self) -> int:
        return self.c * (2 * self.k + 1) + 2 * self.k + 2 * self.n * self.k

    def alpha(self, j: int) -> slice:
        return slice(self.c * (j + 1), self.c * (j + 2))

    def beta(self, j: int) -> slice:
        return slice(self.c * (self.k + 1 + j), self.c * (self.k + 2 + j))

    @property
    def deg0(self) -> int:
        return self.c * (2 * self.k + 1)

    def pe_node(self, j: int) -> slice:
        base = self.deg0 + 2 * self.k + 2 * self.n * j
        return slice(base, base + self.n)

    def pe_adj(self, j: int) -> slice:
        base = self.deg0 + 2 * self.k + 2 * self.n * j + self.n
        return slice(base, base + self.n)


def _token_rows_k(
    space: TupleSpace,
    classes: Sequence[int],
    parts: _SpectralParts,
    degblock: np.ndarray,
) -> np.ndarray:
    lay = _KLayout(c=max(classes) + 1, k=space.k, n=space.num_nodes)
    x = np.zeros((len(space.tuples), lay.width))
    for i, cls in enumerate(classes):
        x[i, cls] = 1.0
    x[:, lay.deg0 : lay.deg0 + 2 * lay.k] = degblock
    for j in range(lay.k):
        component = [tup[j] for tup in space.tuples]
        x[:, lay.pe_node(j)] = parts.node_part[component]
        x[:, lay.pe_adj(j)] = parts.adj_part[component]
    return x


def _build_kgt_layer(
    space: TupleSpace,
    variant: str,
    classes: Sequence[int],
    parts: _SpectralParts,
    degblock: np.ndarray,
    b: float,
    trace: dict,
) -> LayerWeights:
    k, n = space.k, space.num_nodes
    lay = _KLayout(c=max(classes) + 1, k=k, n=n)
    c, d = lay.c, lay.width
    d_k = k * n
    inner = 2.0 * n + 2.0
    alpha, beta = _variant_scalars(variant, n)

    heads = []
    for gamma in (1, -1):
        for j in range(k):
            w_q = np.zeros((d, d_k))
            w_k = np.zeros((d, d_k))
            for o in range(k):
                slot = slice(o * n, (o + 1) * n)
                if o == j:
                    w_q[lay.pe_adj(o), slot] = gamma * b * math.sqrt(d_k) * np.diag(parts.signs)
                    w_k[lay.pe_adj(o), slot] = np.eye(n)
                else:
                    w_q[lay.pe_node(o), slot] = b * inner * math.sqrt(d_k) * np.eye(n)
                    w_k[lay.pe_node(o), slot] = np.eye(n)
            w_v = np.zeros((d, c))
            w_v[0:c, :] = np.eye(c)
            heads.append(AttentionHead(w_q, w_k, w_v))

    w_o = np.zeros((2 * k * c, d))
    for j in range(k):
        rows_a = slice(j * c, (j + 1) * c)
        rows_b = slice((k + j) * c, (k + j + 1) * c)
        w_o[rows_a, lay.alpha(j)] = alpha * np.eye(c)
        w_o[rows_b, lay.beta(j)] = beta * np.eye(c)

    def ffn(xt: np.ndarray) -> np.ndarray:
        # De-normalize each count block by its own degree, round, and merge
        # the two groups per position. The alpha/beta scalars already applied
        # by w_o make the merge faithful to the variant: a plain sum of both
        # counts, an injective base-(n+1) packing, or the adjacent part only.
        pieces = [xt[:, 0:c]]
        for j in range(k):
            d_adj = xt[:, lay.deg0 + 2 * j : lay.deg0 + 2 * j + 1]
            d_non = xt[:, lay.deg0 + 2 * j + 1 : lay.deg0 + 2 * j + 2]
            counts_a = _check_rounding(xt[:, lay.alpha(j)] * d_adj, trace)
            counts_b = _check_rounding(xt[:, lay.beta(j)] * d_non, trace)
            pieces.append(counts_a + counts_b)
        combined = np.hstack(pieces)
        new_classes = _dense_row_ids(combined)
        trace["classes"] = new_classes
        return _token_rows_k(space, new_classes, parts, degblock)

    return LayerWeights(heads=tuple(heads), w_o=w_o, ffn=ffn)


# ---------------------------------------------------------------------------
# Drivers.


@dataclass(frozen=True, eq=False)
class _DriveRecord:
    space: TupleSpace
    weights: ConstructedWeights
    partitions: tuple[tuple[int, ...], ...]
    attention_errors: tuple[tuple[float, ...], ...]
    slack_max: float


def _check_temperature(b) -> float:
    if isinstance(b, bool) or not isinstance(b, (int, float)) or not b > 0:
        raise ValidationError(INVALID_SCHEMA, f"temperature must be positive, got {b!r}")
    return float(b)


def _check_layers(t_layers, minimum: int) -> int:
    if isinstance(t_layers, bool) or not isinstance(t_layers, int) or t_layers < minimum:
        raise ValidationError(
            INVALID_SCHEMA, f"layer count must be an integer >= {minimum}, got {t_layers!r}"
        )
    return t_layers


def _normalize_partition(ids: Sequence[int]) -> tuple[int, ...]:
    table: dict[int, int] = {}
    out = []
    for i in ids:
        got = table.get(i)
        if got is None:
            got = len(table)
            table[i] = got
        out.append(got)
    return tuple(out)


def _masked_error(att: np.ndarray, target: IndicatorResult) -> float:
    """Frobenius distance on the rows that have a target at all.

    Rows flagged ZERO_ROW have no admissible attention pattern (softmax rows
    always sum to one); the designed FFN neutralizes them by multiplying
    with a zero count, so they are excluded from the measurement.
    """
    keep = np.ones(att.shape[0], dtype=bool)
    for i in target.zero_rows:
        keep[i] = False
    return float(np.linalg.norm(att[keep] - target.matrix[keep]))


def _drive_1wl(graph: Graph, t_layers: int, b: float) -> _DriveRecord:
    space = enumerate_tuples(graph, 1, 1)
    parts = _spectral_parts(graph)
    target = weighted_indicator(np.asarray(graph.adjacency(), dtype=float))
    classes = _normalize_partition(initial_coloring(graph, space).colors)
    partitions = [classes]
    x = _token_rows_1(graph, classes, parts)
    layers = []
    errors = []
    slack_max = 0.0
    for _ in range(t_layers):
        trace = {"slack": 0.0, "classes": ()}
        layer = _build_1wl_layer(graph, classes, parts, b, trace)
        x, atts = transformer_layer(x, layer, return_attention=True)
        layers.append(layer)
        errors.append((_masked_error(atts[0], target),))
        slack_max = max(slack_max, trace["slack"])
        classes = _normalize_partition(trace["classes"])
        partitions.append(classes)
    weights = ConstructedWeights(
        layers=tuple(layers), temperature=b, head_count=1, k=1, variant="kwl"
    )
    return _DriveRecord(space, weights, tuple(partitions), tuple(errors), slack_max)


def _drive_kgt(
    graph: Graph,
    k: int,
    s: int,
    variant: str,
    t_layers: int,
    b: float,
    memory_limit: int,
) -> _DriveRecord:
    space = enumerate_tuples(graph, k, s, memory_limit=memory_limit)
    parts = _spectral_parts(graph)
    gen = {
        (j, gamma): generalized_adjacency(
            graph, k, j, gamma, space=space, memory_limit=memory_limit
        )
        for gamma in (1, -1)
        for j in range(1, k + 1)
    }
    targets = {key: weighted_indicator(mat) for key, mat in gen.items()}
    degblock = np.zeros((len(space.tuples), 2 * k))
    for j in range(1, k + 1):
        degblock[:, 2 * (j - 1)] = gen[(j, 1)].sum(axis=1)
        degblock[:, 2 * (j - 1) + 1] = gen[(j, -1)].sum(axis=1)
    # Heads are ordered adjacent-first, matching the builder's loop.
    head_keys = [(j, 1) for j in range(1, k + 1)] + [(j, -1) for j in range(1, k + 1)]

    classes = _normalize_partition(initial_coloring(graph, space).colors)
    partitions = [classes]
    x = _token_rows_k(space, classes, parts, degblock)
    layers = []
    errors = []
    slack_max = 0.0
    for _ in range(t_layers):
        trace = {"slack": 0.0, "classes": ()}
        layer = _build_kgt_layer(space, variant, classes, parts, degblock, b, trace)
        x, atts = transformer_layer(x, layer, return_attention=True)
        layers.append(layer)
        errors.append(
            tuple(_masked_error(att, targets[key]) for att, key in zip(atts, head_keys))
        )
        slack_max = max(slack_max, trace["slack"])
        classes = _normalize_partition(trace["classes"])
        partitions.append(classes)
    weights = ConstructedWeights(
        layers=tuple(layers), temperature=b, head_count=2 * k, k=k, variant=variant
    )
    return _DriveRecord(space, weights, tuple(partitions), tuple(errors), slack_max)


def initial_tokens(
    graph: Graph,
    k: int = 1,
    s: int | None = None,
    memory_limit: int = DEFAULT_MEMORY_LIMIT,
) -> np.ndarray:
    """Layer-0 token rows in the layout the constructed weights expect.

    Rows hold a one-hot of the initial tuple class, zeroed count scratch,
    the de-normalization degrees, and the spectral identification blocks.
    Feed the result to ``transformer_layer`` with the first layer of a
    ``ConstructedWeights`` to replay the construction by hand.
    """
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise ValidationError(INVALID_SCHEMA, f"tuple order k must be a positive integer, got {k!r}")
    if s is None:
        s = k
    parts = _spectral_parts(graph)
    if k == 1:
        space = enumerate_tuples(graph, 1, 1, memory_limit=memory_limit)
        classes = _normalize_partition(initial_coloring(graph, space).colors)
        return _token_rows_1(graph, classes, parts)
    space = enumerate_tuples(graph, k, s, memory_limit=memory_limit)
    degblock = np.zeros((len(space.tuples), 2 * k))
    for j in range(1, k + 1):
        degblock[:, 2 * (j - 1)] = generalized_adjacency(
            graph, k, j, 1, space=space, memory_limit=memory_limit
        ).sum(axis=1)
        degblock[:, 2 * (j - 1) + 1] = generalized_adjacency(
            graph, k, j, -1, space=space, memory_limit=memory_limit
        ).sum(axis=1)
    classes = _normalize_partition(initial_coloring(graph, space).colors)
    return _token_rows_k(space, classes, parts, degblock)


def construct_1wl_weights(
    graph: Graph, t_layers: int, b: float = DEFAULT_TEMPERATURE
) -> ConstructedWeights:
    """Closed-form single-head layers that replay classic color refinement.

    Each layer's score matrix is the graph adjacency scaled by ``b``, built
    from the signed eigenfactorization carried in the token rows, so its
    softmax approaches the degree-normalized adjacency.  The value path
    copies the one-hot color block into a scratch area and the designed FFN
    turns the attended averages back into integer neighbor counts.

    Parameters
    ----------
    graph : Graph
    t_layers : int
        Number of layers to construct (at least 1).
    b : float
        Softmax temperature, folded into the query projection.

    Returns
    -------
    ConstructedWeights
    """
    t_layers = _check_layers(t_layers, 1)
    b = _check_temperature(b)
    return _drive_1wl(graph, t_layers, b).weights


def construct_kgt_weights(
    graph: Graph,
    k: int,
    variant: str,
    t_layers: int,
    b: float = DEFAULT_TEMPERATURE,
    memory_limit: int = DEFAULT_MEMORY_LIMIT,
) -> ConstructedWeights:
    """Closed-form 2k-head layers that replay order-k tuple refinement.

    Head ``(j, +1)`` attends to tuples reached by substituting an adjacent
    node at position ``j``, head ``(j, -1)`` to non-adjacent substitutions.
    The output projection scales the two groups by the variant's (alpha,
    beta) pair: equal for plain counting, distinct and nonzero when the
    adjacency split must stay visible, beta zero for the local rule.

    Parameters
    ----------
    graph : Graph
    k : int
        Tuple order, at least 2.
    variant : str
        One of ``kwl``, ``delta_kwl``, ``delta_klwl``.
    t_layers : int
    b : float

    Returns
    -------
    ConstructedWeights
    """
    if isinstance(k, bool) or not isinstance(k, int) or k < 2:
        raise ValidationError(INVALID_SCHEMA, f"tuple order k must be an integer >= 2, got {k!r}")
    if variant not in VARIANTS:
        raise ValidationError(
            INVALID_SCHEMA, f"unknown variant {variant!r}, expected one of {', '.join(VARIANTS)}"
        )
    if variant == "ks_lwl":
        raise ValidationError(
            VARIANT_MISMATCH,
            "the restricted-space rule is driven through simulate_and_compare with s < k",
        )
    t_layers = _check_layers(t_layers, 1)
    b = _check_temperature(b)
    return _drive_kgt(graph, k, k, variant, t_layers, b, memory_limit).weights


def gnn_reference_step(colors: Coloring, graph: Graph, k: int, variant: str) -> Coloring:
    """One refinement round computed with exact base-m digit arithmetic.

    Every color is coded as a fixed-point digit vector ``m^-(c+1)`` with
    ``m = n + 1``, so digit-wise sums count multisets without collision.
    Per-position contributions are shifted into disjoint digit ranges, the
    adjacent and non-adjacent groups into separate ranges when the variant
    distinguishes them.  The resulting vectors are relabeled densely.

    Parameters
    ----------
    colors : Coloring
        Current coloring; its space fixes the tuple ordering.
    graph : Graph
    k : int
        Must match the space's order.
    variant : str
        Any of the engine's refinement rules.

    Returns
    -------
    Coloring
        The refined coloring with ``iteration`` advanced by one.
    """
    if variant not in VARIANTS:
        raise ValidationError(
            INVALID_SCHEMA, f"unknown variant {variant!r}, expected one of {', '.join(VARIANTS)}"
        )
    space = colors.space
    if space.k != k:
        raise ValidationError(SPACE_MISMATCH, f"coloring has order {space.k}, expected {k}")
    if variant != "ks_lwl" and space.s != space.k:
        raise ValidationError(
            VARIANT_MISMATCH,
            f"variant {variant!r} needs the unrestricted tuple space, got s={space.s}",
        )
    if space.num_nodes != graph.num_nodes:
        raise ValidationError(
            SPACE_MISMATCH,
            f"coloring was built over {space.num_nodes} nodes, graph has {graph.num_nodes}",
        )
    n = graph.num_nodes
    m = n + 1
    assert m - 1 >= n, "digit base cannot hold the largest neighbor multiset"
    big_n = len(space.tuples)
    nbs = graph.neighbor_sets
    codes = {c: code_of(c + 1, m) for c in set(colors.colors)}

    def coded(idx: int, offset: int) -> DigitVector:
        return shift(codes[colors.colors[idx]], offset)

    vectors = []
    if k == 1 and variant == "kwl":
        for v in range(n):
            total = codes[colors.colors[v]]
            for w in nbs[v]:
                total = add(total, coded(w, big_n))
            vectors.append(total)
    elif variant == "ks_lwl":
        index_of = space.index_of
        for i, tup in enumerate(space.tuples):
            total = codes[colors.colors[i]]
            for j in range(k):
                for w in nbs[tup[j]]:
                    idx = index_of.get(tup[:j] + (w,) + tup[j + 1 :])
                    if idx is not None:
                        total = add(total, coded(idx, big_n * (j + 1)))
            vectors.append(total)
    else:
        strides = space.strides
        for i, tup in enumerate(space.tuples):
            total = codes[colors.colors[i]]
            for j in range(k):
                base = i - tup[j] * strides[j]
                neighbors = nbs[tup[j]]
                for w in range(n):
                    if variant == "kwl":
                        offset = big_n * (j + 1)
                    elif variant == "delta_kwl":
                        offset = big_n * (2 * j + 1) if w in neighbors else big_n * (2 * j + 2)
                    else:  # delta_klwl
                        if w not in neighbors:
                            continue
                        offset = big_n * (j + 1)
                    total = add(total, coded(base + w * strides[j], offset))
            vectors.append(total)

    table: dict[DigitVector, int] = {}
    ids = []
    for vec in vectors:
        got = table.get(vec)
        if got is None:
            got = len(table)
            table[vec] = got
        ids.append(got)
    return Coloring(space, tuple(ids), colors.iteration + 1)


@dataclass(frozen=True, eq=False)
class SimReport:
    """Side-by-side record of the three refinement implementations."""

    k: int
    s: int
    variant: str
    layers: int
    transformer_partitions: tuple[tuple[int, ...], ...]
    wl_partitions: tuple[tuple[int, ...], ...]
    oracle_partitions: tuple[tuple[int, ...], ...]
    partition_equal_per_layer: tuple[bool, ...]
    attention_errors: tuple[tuple[float, ...], ...]
    max_attention_error: float
    rounding_slack_max: float

    @property
    def all_equal(self) -> bool:
        return all(self.partition_equal_per_layer)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "s": self.s,
            "variant": self.variant,
            "layers": self.layers,
            "partition_equal_per_layer": list(self.partition_equal_per_layer),
            "max_attention_error": self.max_attention_error,
            "rounding_slack_max": self.rounding_slack_max,
        }


def simulate_and_compare(
    graph: Graph,
    k: int,
    s: int,
    variant: str,
    t_layers: int | None = None,
    b: float = DEFAULT_TEMPERATURE,
    memory_limit: int = DEFAULT_MEMORY_LIMIT,
) -> SimReport:
    """Run the constructed transformer, the engine, and the digit oracle.

    The three implementations are advanced in lockstep over the same tuple
    ordering and their partitions are compared after every round, the shared
    initial coloring included.  When ``t_layers`` is ``None`` the engine's
    stable point is found first and one extra round is run past it, so the
    report also witnesses the fixed point.

    Parameters
    ----------
    graph : Graph
    k, s : int
        Tuple order and component bound; ``s < k`` requires the ``ks_lwl``
        variant, whose heads skip substitutions leaving the space.
    variant : str
    t_layers : int, optional
        Number of rounds; defaults to stabilization plus one.
    b : float
        Softmax temperature of the constructed layers.

    Returns
    -------
    SimReport
    """
    if variant not in VARIANTS:
        raise ValidationError(
            INVALID_SCHEMA, f"unknown variant {variant!r}, expected one of {', '.join(VARIANTS)}"
        )
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise ValidationError(INVALID_SCHEMA, f"tuple order k must be a positive integer, got {k!r}")
    if isinstance(s, bool) or not isinstance(s, int) or not 1 <= s <= k:
        raise ValidationError(INVALID_SCHEMA, f"component bound s must lie in 1..{k}, got {s!r}")
    if s < k and variant != "ks_lwl":
        raise ValidationError(
            VARIANT_MISMATCH,
            f"variant {variant!r} needs the unrestricted tuple space; use ks_lwl for s < k",
        )
    if k == 1 and variant != "kwl":
        raise ValidationError(
            VARIANT_MISMATCH,
            f"the order-1 construction implements plain refinement only, got {variant!r}",
        )
    b = _check_temperature(b)
    if t_layers is None:
        stable = refine_to_stable(graph, k, s, variant, memory_limit=memory_limit)
        t_layers = len(stable)
    t_layers = _check_layers(t_layers, 0)

    if t_layers == 0:
        space = enumerate_tuples(graph, k, s, memory_limit=memory_limit)
        init = _normalize_partition(initial_coloring(graph, space).colors)
        return SimReport(
            k=k,
            s=s,
            variant=variant,
            layers=0,
            transformer_partitions=(init,),
            wl_partitions=(init,),
            oracle_partitions=(init,),
            partition_equal_per_layer=(True,),
            attention_errors=(),
            max_attention_error=0.0,
            rounding_slack_max=0.0,
        )

    if k == 1:
        record = _drive_1wl(graph, t_layers, b)
    else:
        record = _drive_kgt(graph, k, s, variant, t_layers, b, memory_limit)

    engine = initial_coloring(graph, record.space)
    oracle = engine
    wl_partitions = [_normalize_partition(engine.colors)]
    oracle_partitions = [_normalize_partition(oracle.colors)]
    for _ in range(t_layers):
        engine = refine_step(graph, record.space, engine, variant)
        oracle = gnn_reference_step(oracle, graph, k, variant)
        wl_partitions.append(_normalize_partition(engine.colors))
        oracle_partitions.append(_normalize_partition(oracle.colors))

    sim_partitions = record.partitions[: t_layers + 1]
    equal = tuple(
        sim_partitions[t] == wl_partitions[t] == oracle_partitions[t]
        for t in range(t_layers + 1)
    )
    flat_errors = [e for layer in record.attention_errors[:t_layers] for e in layer]
    return SimReport(
        k=k,
        s=s,
        variant=variant,
        layers=t_layers,
        transformer_partitions=tuple(sim_partitions),
        wl_partitions=tuple(wl_partitions),
        oracle_partitions=tuple(oracle_partitions),
        partition_equal_per_layer=equal,
        attention_errors=record.attention_errors[:t_layers],
        max_attention_error=max(flat_errors) if flat_errors else 0.0,
        rounding_slack_max=record.slack_max,
    )


def attention_error_curve(
    graph: Graph, temperatures: Sequence[float] = (20.0, 40.0, 60.0)
) -> tuple[float, ...]:
    """Frobenius distance of adjacency-shaped attention from its target.

    Uses one fixed eigenfactorization of the adjacency matrix and sweeps the
    softmax temperature, returning the distance of ``softmax(b * scores)``
    from the degree-normalized adjacency for each ``b``.  The curve is the
    quantitative face of the temperature argument: a larger ``b`` sharpens
    the row maxima until only the eigenfactorization's round-off is left.
    """
    parts = _spectral_parts(graph)
    scores = (parts.adj_part * parts.signs) @ parts.adj_part.T
    target = weighted_indicator(np.asarray(graph.adjacency(), dtype=float)).matrix
    out = []
    for b in temperatures:
        b = _check_temperature(b)
        out.append(float(np.linalg.norm(softmax_rows(b * scores) - target)))
    return tuple(out)
