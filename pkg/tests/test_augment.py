import numpy as np
import pytest
from scipy import stats

from graphcssl.augment import (ALTERATIONS, AlterationOp, AugmentConfig, OpKind, candidates,
                               edge_deletion, edge_insertion, format_trace, graph_rng,
                               insertion_candidates, is_applicable, node_deletion,
                               node_insertion, parse_trace, replay, sample_augmentation)
from graphcssl.errors import AugmentationExhausted, InvalidArgument, NotApplicable
from graphcssl.graph import LabeledGraph, connected, make_graph

from conftest import fig1_graph, fuzz_augmentations, random_graph

TRIANGLE = make_graph(3, [(0, 1), (1, 2), (0, 2)])


class TestFigureOne:
    def test_edge_deletion(self):
        assert edge_deletion(fig1_graph(), (1, 3)).edges == {(1, 2), (1, 4), (3, 4)}

    def test_node_deletion(self):
        g = node_deletion(fig1_graph(), 4)
        # nodes {1,2,3} become {0,1,2}; edges (1,2),(1,3) become (0,1),(0,2)
        assert g.nodes == (0, 1, 2)
        assert g.edges == {(0, 1), (0, 2)}
        assert g.features.tolist() == np.eye(4)[:3].tolist()

    def test_edge_insertion(self):
        g = edge_insertion(fig1_graph(), 2, 3)
        assert g.edges == {(1, 2), (1, 3), (1, 4), (3, 4), (2, 3)}

    def test_node_insertion(self):
        g = node_insertion(fig1_graph(), {1, 3, 4})
        assert g.nodes == (1, 2, 3, 4, 5)
        assert g.edges == {(1, 2), (1, 5), (3, 5), (4, 5)}
        assert np.allclose(g.feature_of(5), np.eye(4)[[0, 2, 3]].mean(axis=0))


class TestOperations:
    def test_triangle_edge_deletion_gives_path(self):
        g = edge_deletion(TRIANGLE, (0, 2))
        assert sorted(g.degree(u) for u in g.nodes) == [1, 1, 2]

    def test_absent_edge(self):
        with pytest.raises(InvalidArgument):
            edge_deletion(fig1_graph(), (2, 3))

    def test_star_center_deletion(self):
        star = make_graph(5, [(0, i) for i in range(1, 5)])
        g = node_deletion(star, 0)
        assert g.num_nodes == 4 and g.num_edges == 0

    def test_last_node(self):
        with pytest.raises(NotApplicable):
            node_deletion(make_graph(1, []), 0)

    def test_unknown_node(self):
        with pytest.raises(InvalidArgument):
            node_deletion(fig1_graph(), 0)

    def test_path_insertion_closes_triangle(self):
        g = edge_insertion(make_graph(3, [(0, 1), (1, 2)]), 0, 2)
        assert g.edges == TRIANGLE.edges

    def test_insertion_on_adjacent_pair(self):
        with pytest.raises(NotApplicable):
            edge_insertion(fig1_graph(), 1, 2)

    def test_insertion_on_disconnected_pair(self):
        with pytest.raises(NotApplicable):
            edge_insertion(make_graph(4, [(0, 1), (2, 3)]), 0, 3)

    def test_two_clique_subdivides(self):
        g = node_insertion(make_graph(2, [(0, 1)]), {0, 1})
        assert g.edges == {(0, 2), (1, 2)}

    def test_non_clique(self):
        with pytest.raises(InvalidArgument):
            node_insertion(fig1_graph(), {1, 2, 3})

    def test_singleton_clique(self):
        with pytest.raises(InvalidArgument):
            node_insertion(fig1_graph(), {1})

    def test_label_untouched(self):
        g = fig1_graph()
        for out in (edge_deletion(g, (1, 2)), node_deletion(g, 2), edge_insertion(g, 2, 4),
                    node_insertion(g, {3, 4})):
            assert (out.label, out.graph_id) == (g.label, g.graph_id)

    @pytest.mark.parametrize("seed", range(8))
    def test_insertion_candidates_brute_force(self, seed):
        g = random_graph(np.random.default_rng(seed), 12, p=0.15)
        brute = [(u, v) for u in g.nodes for v in g.nodes
                 if u < v and (u, v) not in g.edges and connected(g, u, v)]
        assert insertion_candidates(g) == brute
        assert is_applicable(g, OpKind.EDGE_INSERTION) == bool(brute)

    def test_insertion_candidates_sparse_ids(self):
        g = LabeledGraph((10, 2, 7), frozenset({(2, 10), (7, 10)}))
        assert insertion_candidates(g) == [(2, 7)]

    def test_guards(self):
        single = make_graph(1, [])
        assert not any(is_applicable(single, k) for k in ALTERATIONS)
        edgeless = make_graph(3, [])
        assert [is_applicable(edgeless, k) for k in ALTERATIONS] == [False, True, False, False]
        assert not is_applicable(TRIANGLE, OpKind.EDGE_INSERTION)

    def test_node_insertion_prefers_triangles(self):
        ops = candidates(fig1_graph(), OpKind.NODE_INSERTION)
        assert [op.args for op in ops] == [(1, 3, 4)]
        path = make_graph(3, [(0, 1), (1, 2)])
        assert [op.args for op in candidates(path, OpKind.NODE_INSERTION)] == [(0, 1), (1, 2)]


class TestSampler:
    def test_uniform_edge_deletion(self):
        cfg = AugmentConfig(op_whitelist=(OpKind.EDGE_DELETION,))
        rng = np.random.default_rng(2024)
        counts = {}
        for _ in range(10_000):
            (op,) = sample_augmentation(TRIANGLE, cfg, rng).trace
            counts[op.args] = counts.get(op.args, 0) + 1
        assert len(counts) == 3
        chi2 = stats.chisquare(list(counts.values())).statistic
        assert chi2 < stats.chi2.ppf(0.99, df=2)

    def test_type_first_uniform(self):
        # path 0-1-2: EdgeDeletion (2 operands), NodeDeletion (3), EdgeInsertion (1), NodeInsertion (2)
        g = make_graph(3, [(0, 1), (1, 2)])
        rng = np.random.default_rng(7)
        counts = dict.fromkeys(ALTERATIONS, 0)
        for _ in range(8000):
            counts[sample_augmentation(g, AugmentConfig(), rng).trace[0].kind] += 1
        chi2 = stats.chisquare(list(counts.values())).statistic
        assert chi2 < stats.chi2.ppf(0.99, df=3)

    def test_figure_two_style_sequence(self):
        g = make_graph(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (1, 4)], label=1)
        trace = [AlterationOp(OpKind.EDGE_DELETION, (1, 4)),
                 AlterationOp(OpKind.NODE_DELETION, (5,)),
                 AlterationOp(OpKind.EDGE_INSERTION, (0, 2))]
        out = replay(g, trace)
        assert (out.num_nodes, out.num_edges) == (5, 5)
        cfg = AugmentConfig(num_steps=3)
        assert len(sample_augmentation(g, cfg, np.random.default_rng(0)).trace) == 3

    def test_deterministic(self):
        g = random_graph(np.random.default_rng(3), 15)
        cfg = AugmentConfig(num_steps=3)
        a = sample_augmentation(g, cfg, graph_rng(1, g.graph_id, 4))
        b = sample_augmentation(g, cfg, graph_rng(1, g.graph_id, 4))
        assert a == b

    def test_streams_differ(self):
        g = random_graph(np.random.default_rng(3), 15)
        cfg = AugmentConfig(num_steps=3)
        traces = {sample_augmentation(g, cfg, graph_rng(0, 0, e)).trace for e in range(20)}
        assert len(traces) > 10

    def test_exhaustion_pads_with_noops(self):
        cfg = AugmentConfig(num_steps=3, op_whitelist=(OpKind.EDGE_DELETION,))
        aug = sample_augmentation(make_graph(3, [(0, 1)]), cfg, np.random.default_rng(0))
        assert [op.kind for op in aug.trace] == [OpKind.EDGE_DELETION] + [OpKind.NO_OP] * 2
        assert aug.exhausted and aug.graph.num_edges == 0

    def test_strict_raises(self):
        cfg = AugmentConfig(op_whitelist=(OpKind.EDGE_INSERTION,))
        with pytest.raises(AugmentationExhausted):
            sample_augmentation(TRIANGLE, cfg, np.random.default_rng(0), strict=True)

    def test_empty_graph(self):
        with pytest.raises(InvalidArgument):
            sample_augmentation(make_graph(0, []), AugmentConfig(), np.random.default_rng(0))

    def test_whitelist_contract(self):
        cfg = AugmentConfig(num_steps=3, op_whitelist=("NodeInsertion",))
        rng = np.random.default_rng(5)
        for i in range(200):
            g = random_graph(rng, int(rng.integers(3, 12)), graph_id=i)
            kinds = {op.kind for op in sample_augmentation(g, cfg, rng).trace}
            assert kinds <= {OpKind.NODE_INSERTION, OpKind.NO_OP}

    def test_all_kinds_appear(self):
        rng = np.random.default_rng(11)
        seen = set()
        for i in range(1000):
            g = random_graph(rng, int(rng.integers(3, 15)), graph_id=i)
            seen.update(op.kind for op in sample_augmentation(g, AugmentConfig(), rng).trace)
        assert seen >= set(ALTERATIONS)

    @pytest.mark.parametrize("kwargs", [{"num_steps": 0}, {"op_whitelist": ()},
                                        {"op_whitelist": ("NoOp",)}])
    def test_bad_config(self, kwargs):
        with pytest.raises(InvalidArgument):
            AugmentConfig(**kwargs)


class TestTrace:
    def test_format(self):
        trace = [AlterationOp(OpKind.EDGE_DELETION, (1, 3)),
                 AlterationOp(OpKind.NODE_INSERTION, (1, 3, 4)), AlterationOp(OpKind.NO_OP)]
        text = format_trace(trace)
        assert text == "EdgeDeletion(1,3)\nNodeInsertion(1,3,4)\nNoOp()\n"
        assert parse_trace(text) == trace

    def test_parse_error(self):
        with pytest.raises(InvalidArgument):
            parse_trace("EdgeDeletion 1 3\n")

    def test_unknown_kind(self):
        with pytest.raises(InvalidArgument):
            parse_trace("Rewire(1,2)\n")


def test_fuzz_small():
    failures, seen, _ = fuzz_augmentations(600, seed=99)
    assert failures == []
    assert seen >= set(ALTERATIONS)
