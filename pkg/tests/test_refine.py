"""Color refinement over tuples: enumeration, the four update rules, and
the pair-distinguishing harness."""

import itertools
import random
from collections import Counter

import pytest

from wlsim.errors import (
    INVALID_SCHEMA,
    ITERATION_LIMIT,
    MEMORY_LIMIT,
    SPACE_MISMATCH,
    VARIANT_MISMATCH,
    LimitError,
    ValidationError,
)
from wlsim.graphs import Graph, apply_permutation, builtin_pair, random_graph
from wlsim.refine import (
    Coloring,
    distinguish,
    enumerate_tuples,
    initial_coloring,
    refine_step,
    refine_to_stable,
    refines,
    run_to_dict,
)

ALL_VARIANTS = (("kwl", 1, 1), ("kwl", 2, 2), ("delta_kwl", 2, 2), ("delta_klwl", 2, 2), ("ks_lwl", 2, 1))


def classic_refinement(graph):
    """Independent 1-WL oracle: dict-based, no engine code.

    Returns the stable partition as a tuple of dense ids in node order.
    """
    colors = {v: graph.labels[v] for v in range(graph.num_nodes)}
    while True:
        keys = {
            v: (colors[v], tuple(sorted(colors[w] for w in graph.neighbor_sets[v])))
            for v in range(graph.num_nodes)
        }
        table = {}
        nxt = {}
        for v in range(graph.num_nodes):
            nxt[v] = table.setdefault(keys[v], len(table))
        if partition_of(list(nxt.values())) == partition_of(list(colors.values())):
            return tuple(nxt[v] for v in range(graph.num_nodes))
        colors = nxt


def partition_of(colors):
    groups = {}
    for i, c in enumerate(colors):
        groups.setdefault(c, []).append(i)
    return frozenset(tuple(g) for g in groups.values())


def components_of(graph, nodes):
    nodes = set(nodes)
    seen = set()
    count = 0
    for start in nodes:
        if start in seen:
            continue
        count += 1
        stack = [start]
        seen.add(start)
        while stack:
            v = stack.pop()
            for w in graph.neighbor_sets[v]:
                if w in nodes and w not in seen:
                    seen.add(w)
                    stack.append(w)
    return count


# --------------------------------------------------------- enumerate_tuples


def test_full_space_is_row_major():
    g = Graph(2, [(0, 1)])
    space = enumerate_tuples(g, 2, 2)
    assert space.tuples == ((0, 0), (0, 1), (1, 0), (1, 1))


def test_k1_space_is_the_node_list(c6):
    assert enumerate_tuples(c6, 1, 1).tuples == tuple((v,) for v in range(6))


def test_restricted_space_drops_disconnected_tuples(k3, p3):
    assert len(enumerate_tuples(k3, 2, 1).tuples) == 9
    space = enumerate_tuples(p3, 2, 1)
    assert len(space.tuples) == 7
    assert (0, 2) not in space.index_of
    assert (2, 0) not in space.index_of


def test_restricted_space_agrees_with_component_counting(graph_samples):
    for g in graph_samples(7, 10, 2, 5):
        space = enumerate_tuples(g, 2, 1)
        expected = [
            tup
            for tup in itertools.product(range(g.num_nodes), repeat=2)
            if components_of(g, set(tup)) <= 1
        ]
        assert list(space.tuples) == expected


def test_tuple_space_memory_cap(c6):
    with pytest.raises(LimitError) as exc:
        enumerate_tuples(c6, 9, 9)
    assert exc.value.code == MEMORY_LIMIT


@pytest.mark.parametrize("k,s", [(0, 0), (2, 3), (1, 0)])
def test_order_bounds_are_validated(p3, k, s):
    with pytest.raises(ValidationError) as exc:
        enumerate_tuples(p3, k, s)
    assert exc.value.code == INVALID_SCHEMA


# --------------------------------------------------------- initial_coloring


def test_unlabeled_cycle_starts_monochrome(c6):
    space = enumerate_tuples(c6, 1, 1)
    assert set(initial_coloring(c6, space).colors) == {0}


def test_k3_pairs_start_with_two_colors(k3):
    space = enumerate_tuples(k3, 2, 2)
    coloring = initial_coloring(k3, space)
    assert len(set(coloring.colors)) == 2


def test_p3_pairs_start_with_three_colors(p3):
    space = enumerate_tuples(p3, 2, 2)
    coloring = initial_coloring(p3, space)
    assert len(set(coloring.colors)) == 3
    # canonical ids appear in first-occurrence order
    assert coloring.colors[0] == 0


def test_node_labels_enter_initial_colors():
    g = Graph(3, [(0, 1), (1, 2)], labels=(5, 5, 9))
    coloring = initial_coloring(g, enumerate_tuples(g, 1, 1))
    assert coloring.colors[0] == coloring.colors[1] != coloring.colors[2]


# -------------------------------------------------------------- refine_step


def test_regular_graph_stays_monochrome(c6):
    space = enumerate_tuples(c6, 1, 1)
    after = refine_step(c6, space, initial_coloring(c6, space), "kwl")
    assert set(after.colors) == {0}


def test_p3_splits_by_degree(p3):
    space = enumerate_tuples(p3, 1, 1)
    after = refine_step(p3, space, initial_coloring(p3, space), "kwl")
    assert after.colors[0] == after.colors[2] != after.colors[1]


def test_stable_coloring_is_a_fixed_point(graph_samples):
    for g in graph_samples(41, 8, 2, 6):
        for variant, k, s in ALL_VARIANTS:
            space = enumerate_tuples(g, k, s)
            stable = refine_to_stable(g, k, s, variant)[-1]
            again = refine_step(g, space, stable, variant)
            assert partition_of(again.colors) == partition_of(stable.colors)


def test_variant_space_mismatch():
    g = Graph(4, [(0, 1), (1, 2), (2, 3)])
    space = enumerate_tuples(g, 2, 1)
    with pytest.raises(ValidationError) as exc:
        refine_step(g, space, initial_coloring(g, space), "kwl")
    assert exc.value.code == VARIANT_MISMATCH


def test_unknown_variant_rejected(p3):
    space = enumerate_tuples(p3, 1, 1)
    with pytest.raises(ValidationError) as exc:
        refine_step(p3, space, initial_coloring(p3, space), "wl2")
    assert exc.value.code == INVALID_SCHEMA


# --------------------------------------------------------- refine_to_stable


def test_single_edge_is_stable_immediately(single_edge):
    run = refine_to_stable(single_edge, 1, 1, "kwl")
    assert len(run) == 1
    assert set(run[0].colors) == {0}


def test_p3_stabilizes_after_one_round(p3):
    run = refine_to_stable(p3, 1, 1, "kwl")
    assert len(run) == 2
    assert len(set(run[-1].colors)) == 2


def test_c6_pair_space_regression(c6):
    # regression value frozen on first run: the initial 3-way split by
    # atomic type is already stable for plain pairwise refinement
    run = refine_to_stable(c6, 2, 2, "kwl")
    assert len(run) == 1
    assert len(set(run[-1].colors)) == 3


def test_monotone_refinement_along_the_run(graph_samples):
    for g in graph_samples(43, 10, 2, 7):
        run = refine_to_stable(g, 2, 2, "delta_kwl")
        for earlier, later in zip(run, run[1:]):
            assert refines(later, earlier)
            assert not refines(earlier, later) or partition_of(earlier.colors) == partition_of(
                later.colors
            )


def test_iteration_cap_guards_bugs(p3):
    with pytest.raises(LimitError) as exc:
        refine_to_stable(p3, 1, 1, "kwl", max_iterations=0)
    assert exc.value.code == ITERATION_LIMIT


def test_stable_partition_matches_classic_oracle(graph_samples):
    for g in graph_samples(47, 40, 2, 8, label_count=2):
        stable = refine_to_stable(g, 1, 1, "kwl")[-1]
        assert partition_of(stable.colors) == partition_of(classic_refinement(g))


def test_runs_are_deterministic(c6):
    a = refine_to_stable(c6, 2, 2, "delta_kwl")
    b = refine_to_stable(c6, 2, 2, "delta_kwl")
    assert [c.colors for c in a] == [c.colors for c in b]


# --------------------------------------------------------------- refines


def test_refines_is_reflexive(p3):
    c = initial_coloring(p3, enumerate_tuples(p3, 1, 1))
    assert refines(c, c)


def test_one_step_refines_its_input(graph_samples):
    for g in graph_samples(53, 10, 2, 6):
        space = enumerate_tuples(g, 2, 2)
        c = initial_coloring(g, space)
        assert refines(refine_step(g, space, c, "kwl"), c)


def test_refines_requires_one_space(p3, single_edge):
    a = initial_coloring(p3, enumerate_tuples(p3, 1, 1))
    b = initial_coloring(single_edge, enumerate_tuples(single_edge, 1, 1))
    with pytest.raises(ValidationError) as exc:
        refines(a, b)
    assert exc.value.code == SPACE_MISMATCH


def test_delta_refines_plain_per_iteration(graph_samples):
    for g in graph_samples(59, 15, 2, 6):
        plain = refine_to_stable(g, 2, 2, "kwl")
        delta = refine_to_stable(g, 2, 2, "delta_kwl")
        rounds = max(len(plain), len(delta))
        for t in range(rounds):
            a = delta[min(t, len(delta) - 1)]
            b = plain[min(t, len(plain) - 1)]
            assert refines(a, b)


def test_local_one_one_equals_classic(graph_samples):
    for g in graph_samples(61, 25, 2, 8, connected=True):
        local = refine_to_stable(g, 1, 1, "ks_lwl")[-1]
        plain = refine_to_stable(g, 1, 1, "kwl")[-1]
        assert partition_of(local.colors) == partition_of(plain.colors)


# ------------------------------------------------------------- distinguish


def joint_histogram_oracle(g, h, k):
    """Throwaway plain pairwise-refinement oracle for distinguish, sharing
    one relabeling table across both graphs. Kept deliberately naive."""

    def initial(graph):
        space = list(itertools.product(range(graph.num_nodes), repeat=k))
        keys = []
        for tup in space:
            keys.append(
                (
                    tuple(graph.labels[v] for v in tup),
                    tuple(
                        2 if tup[i] == tup[j] else 1 if graph.has_edge(tup[i], tup[j]) else 3
                        for i in range(k)
                        for j in range(k)
                    ),
                )
            )
        return space, keys

    def step(graph, space, colors):
        index = {tup: i for i, tup in enumerate(space)}
        keys = []
        for i, tup in enumerate(space):
            rows = []
            for j in range(k):
                row = []
                for w in range(graph.num_nodes):
                    swapped = tup[:j] + (w,) + tup[j + 1 :]
                    row.append(colors[index[swapped]])
                rows.append(tuple(sorted(row)))
            keys.append((colors[i], tuple(rows)))
        return keys

    spaces = {}
    keys = {}
    for name, graph in (("g", g), ("h", h)):
        spaces[name], keys[name] = initial(graph)
    for iteration in range(20):
        table = {}
        colors = {
            name: [table.setdefault(key, len(table)) for key in keys[name]] for name in ("g", "h")
        }
        if Counter(colors["g"]) != Counter(colors["h"]):
            return True, iteration
        keys = {name: step(graph, spaces[name], colors[name]) for name, graph in (("g", g), ("h", h))}
        new_table = {}
        new_colors = {
            name: [new_table.setdefault(key, len(new_table)) for key in keys[name]]
            for name in ("g", "h")
        }
        stable = all(
            partition_of(new_colors[name]) == partition_of(colors[name]) for name in ("g", "h")
        )
        keys = {
            name: [(c,) for c in new_colors[name]] for name in ("g", "h")
        }
        if stable:
            return False, None
    raise AssertionError("oracle did not stabilize")


def test_permuted_copies_are_never_distinguished(graph_samples, shuffled):
    for i, g in enumerate(graph_samples(67, 20, 2, 7, label_count=2)):
        h = apply_permutation(g, shuffled(200 + i, g.num_nodes))
        for variant, k, s in ALL_VARIANTS:
            assert not distinguish(g, h, variant, k, s).distinguished


FROZEN_VERDICTS = [
    # verdicts below were derived from the naive joint oracle above (plain
    # rule) and hand refinement (local/adjacency rules) before the engine
    # existed, then frozen
    ("c6_vs_2c3", "kwl", 1, 1, False, None),
    ("c6_vs_2c3", "kwl", 2, 2, False, None),
    ("c6_vs_2c3", "delta_kwl", 2, 2, True, 1),
    ("c6_vs_2c3", "delta_klwl", 2, 2, True, 1),
    ("c6_vs_2c3", "ks_lwl", 2, 1, True, 1),
    ("k33_vs_prism", "kwl", 1, 1, False, None),
    ("k33_vs_prism", "kwl", 2, 2, False, None),
    ("k33_vs_prism", "delta_kwl", 2, 2, True, 1),
    ("k33_vs_prism", "delta_klwl", 2, 2, True, 1),
    ("k33_vs_prism", "ks_lwl", 2, 1, True, 1),
    ("shrikhande_vs_rook", "kwl", 2, 2, False, None),
    ("shrikhande_vs_rook", "delta_kwl", 2, 2, False, None),
    ("shrikhande_vs_rook", "delta_klwl", 2, 2, False, None),
    ("shrikhande_vs_rook", "ks_lwl", 2, 1, False, None),
    ("shrikhande_vs_rook", "delta_kwl", 3, 3, True, 1),
]


@pytest.mark.parametrize("pair,variant,k,s,want,at", FROZEN_VERDICTS)
def test_distinguish_verdict_matrix(pair, variant, k, s, want, at):
    g, h = builtin_pair(pair)
    res = distinguish(g, h, variant, k, s)
    assert res.distinguished is want
    assert res.at_iteration == at


def test_plain_pairwise_verdicts_match_the_naive_oracle():
    for pair in ("c6_vs_2c3", "k33_vs_prism"):
        g, h = builtin_pair(pair)
        want, at = joint_histogram_oracle(g, h, 2)
        res = distinguish(g, h, "kwl", 2, 2)
        assert (res.distinguished, res.at_iteration) == (want, at)


def test_oracle_and_engine_agree_on_random_pairs(graph_samples):
    graphs = graph_samples(71, 12, 2, 4)
    rng = random.Random(73)
    for _ in range(8):
        g, h = rng.sample(graphs, 2)
        if g.num_nodes != h.num_nodes:
            continue
        want, _ = joint_histogram_oracle(g, h, 2)
        assert distinguish(g, h, "kwl", 2, 2).distinguished is want


# -------------------------------------------------------------- run_to_dict


def test_run_serialization_shape(p3):
    run = refine_to_stable(p3, 1, 1, "kwl")
    doc = run_to_dict(run, "kwl")
    assert doc == {
        "k": 1,
        "s": 1,
        "variant": "kwl",
        "iterations": 2,
        "colors_per_iteration": [[0, 0, 0], [0, 1, 0]],
        "histograms": [[3], [2, 1]],
    }
