import itertools

import numpy as np
import pytest

from bigg import (
    Graph,
    GraphSet,
    fit_node_count,
    gen_erdos_renyi,
    gen_grid,
    gen_lobster,
    load_graphs,
    reorder,
    save_graphs,
)
from bigg.graphs import FileFormatError, GraphValidationError, core_numbers
from bigg.metrics import is_lobster


class TestGraphInvariants:
    def test_rows_must_increase(self):
        with pytest.raises(GraphValidationError):
            Graph(3, ((), (1,), (2, 1)))

    def test_lower_triangular_enforced(self):
        with pytest.raises(GraphValidationError):
            Graph(3, ((), (3,), ()))

    def test_row_one_empty(self):
        with pytest.raises(GraphValidationError):
            Graph(2, ((2,), ()))

    def test_edge_count_matches_rows(self):
        g = gen_grid(3, 4)
        assert g.m == sum(len(r) for r in g.rows)

    def test_from_edges_normalizes_direction(self):
        g = Graph.from_edges(3, [(1, 2), (3, 1)])
        assert g.rows == ((), (1,), (1,))


class TestGenerators:
    def test_grid_2x2_is_cycle(self):
        g = gen_grid(2, 2)
        assert (g.n, g.m) == (4, 4)
        assert sorted(g.degrees()) == [2, 2, 2, 2]

    def test_grid_1x5_is_path(self):
        g = gen_grid(1, 5)
        assert (g.n, g.m) == (5, 4)

    def test_grid_19x19_size(self):
        g = gen_grid(19, 19)
        assert (g.n, g.m) == (361, 684)

    def test_grid_degree_bounds(self):
        for r, c in [(2, 2), (3, 5), (6, 4)]:
            degs = set(gen_grid(r, c).degrees())
            assert degs <= {2, 3, 4}

    def test_er_extremes(self):
        assert gen_erdos_renyi(6, 0.0, 1).m == 0
        assert gen_erdos_renyi(6, 1.0, 1).m == 15

    def test_er_mean_edge_count(self):
        # binomial oracle: mean C(500,2) p, sd of the mean over the seeds
        n, p, seeds = 500, 0.01, 1000
        pairs = n * (n - 1) // 2
        mean = np.mean([gen_erdos_renyi(n, p, s).m for s in range(seeds)])
        sd_mean = np.sqrt(pairs * p * (1 - p) / seeds)
        assert abs(mean - pairs * p) < 3 * sd_mean

    def test_lobster_zero_probs_is_path(self):
        g = gen_lobster(10, 0.0, 0.0, 50, seed=3)
        degs = sorted(g.degrees())
        assert degs == [1, 1] + [2] * (g.n - 2)

    def test_lobster_always_lobster(self):
        for seed in range(50):
            g = gen_lobster(12, 0.7, 0.7, 100, seed=seed)
            assert is_lobster(g)

    def test_lobster_respects_max_nodes(self):
        for seed in range(20):
            assert gen_lobster(200, 1.0, 1.0, 100, seed=seed).n <= 100


class TestReorder:
    def test_default_is_identity(self):
        g = Graph.from_edges(3, [(2, 1), (3, 2)])
        assert reorder(g, "default").rows == g.rows

    def test_bfs_star_center_first(self):
        # star with center 3 over nodes 1..4; BFS relabels center to 1
        g = Graph.from_edges(4, [(3, 1), (3, 2), (4, 3)])
        out = reorder(g, "bfs")
        assert out.rows == ((), (1,), (1,), (1,))

    def test_triangle_automorphic(self):
        g = Graph.from_edges(3, [(2, 1), (3, 1), (3, 2)])
        for kind in ("bfs", "dfs", "kcore", "degree_asc", "degree_desc"):
            assert reorder(g, kind).rows == g.rows

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            reorder(gen_grid(2, 2), "spectral")

    def test_degree_multiset_preserved(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            g = gen_erdos_renyi(12, 0.3, rng)
            for kind in ("bfs", "dfs", "kcore", "degree_asc", "degree_desc"):
                assert sorted(reorder(g, kind).degrees()) == sorted(g.degrees())

    def test_isomorphism_small_graphs(self):
        # brute-force permutation search certifies the relabeled graph
        rng = np.random.default_rng(1)
        for _ in range(5):
            g = gen_erdos_renyi(6, 0.4, rng)
            edges = {frozenset(e) for e in g.edges()}
            for kind in ("bfs", "dfs", "kcore"):
                out = reorder(g, kind)
                out_edges = {frozenset(e) for e in out.edges()}
                found = any(
                    {frozenset((perm[u - 1], perm[v - 1])) for u, v in g.edges()}
                    == out_edges
                    for perm in itertools.permutations(range(1, 7))
                )
                assert found, f"{kind} did not produce an isomorphic graph"

    def test_degree_orderings_sorted(self):
        g = gen_lobster(10, 0.5, 0.5, 40, seed=2)
        asc = reorder(g, "degree_asc").degrees()
        # relabeled degrees appear in nondecreasing order
        assert all(asc[i] <= asc[i + 1] for i in range(len(asc) - 1))
        desc = reorder(g, "degree_desc").degrees()
        assert all(desc[i] >= desc[i + 1] for i in range(len(desc) - 1))

    def test_kcore_orders_by_core(self):
        # triangle with a pendant: pendant has core 1, triangle has core 2
        g = Graph.from_edges(4, [(2, 1), (3, 1), (3, 2), (4, 3)])
        assert core_numbers(g) == [2, 2, 2, 1]
        out = reorder(g, "kcore")
        # first relabeled node is the pendant (lowest core)
        assert sorted(out.degrees()) == sorted(g.degrees())
        assert out.degrees()[0] == 1


class TestNodeCountSampler:
    def test_point_mass(self):
        sampler = fit_node_count(GraphSet((gen_grid(19, 19),)))
        rng = np.random.default_rng(0)
        assert all(sampler.sample(rng) == 361 for _ in range(20))
        assert sampler.log_prob(361) == 0.0

    def test_two_point_frequencies(self):
        gs = GraphSet((gen_grid(10, 10), gen_grid(10, 20)))
        sampler = fit_node_count(gs)
        rng = np.random.default_rng(1)
        draws = np.array([sampler.sample(rng) for _ in range(10_000)])
        assert abs((draws == 100).mean() - 0.5) < 0.02

    def test_three_to_one(self):
        gs = GraphSet(tuple([gen_grid(10, 10)] * 3 + [gen_grid(10, 20)]))
        sampler = fit_node_count(gs)
        rng = np.random.default_rng(2)
        draws = np.array([sampler.sample(rng) for _ in range(10_000)])
        assert abs((draws == 100).mean() - 0.75) < 0.02
        assert np.isclose(sampler.log_prob(100), np.log(0.75))

    def test_unseen_is_minus_inf(self):
        sampler = fit_node_count(GraphSet((gen_grid(2, 2),)))
        assert sampler.log_prob(9) == float("-inf")

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            fit_node_count(GraphSet(()))


class TestFileFormat:
    def test_triangle_roundtrip(self, tmp_path):
        path = tmp_path / "tri.txt"
        path.write_text("3 3\n2 1\n3 1\n3 2\n")
        gs = load_graphs(path)
        assert gs.graphs[0].rows == ((), (1,), (1, 2))

    def test_empty_graph_file(self, tmp_path):
        path = tmp_path / "iso.txt"
        path.write_text("3 0\n")
        assert load_graphs(path).graphs[0].m == 0

    def test_save_load_byte_identical(self, tmp_path):
        gs = GraphSet((gen_grid(3, 3), gen_lobster(6, 0.5, 0.5, 20, 1)))
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        save_graphs(gs, p1)
        save_graphs(load_graphs(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_comments_ignored(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("# a comment\n2 1\n# another\n2 1\n")
        assert load_graphs(path).graphs[0].m == 1

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("3\n")
        with pytest.raises(FileFormatError, match="line 1"):
            load_graphs(path)

    def test_out_of_range_edge(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("3 1\n4 1\n")
        with pytest.raises(FileFormatError, match="line 2"):
            load_graphs(path)

    def test_duplicate_edge(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("3 2\n2 1\n2 1\n")
        with pytest.raises(FileFormatError, match="line 3"):
            load_graphs(path)

    def test_upper_triangle_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("3 1\n1 2\n")
        with pytest.raises(FileFormatError, match="line 2"):
            load_graphs(path)

    def test_edge_count_mismatch(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("3 2\n2 1\n")
        with pytest.raises(FileFormatError):
            load_graphs(path)
