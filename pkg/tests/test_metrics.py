import itertools
import math

import numpy as np
import pytest

from bigg import (
    Graph,
    extract,
    gen_grid,
    gen_lobster,
    is_lobster,
    lobster_error_rate,
    mmd,
    orbit_counts,
    reorder,
)
from bigg.metrics import (
    clustering_coefficients,
    degree_histogram,
    normalized_laplacian,
    orbit_mean,
    spectral_histogram,
)


# ---------------------------------------------------------------------------
# independent orbit oracle: brute-force subsets classified by isomorphism
# ---------------------------------------------------------------------------
#
# Canonical graphlets on labeled vertices 0..k-1 with declared node orbits.
_CANONICAL = [
    ({(0, 1), (1, 2)}, {0: 1, 1: 2, 2: 1}),                                  # P3
    ({(0, 1), (0, 2), (1, 2)}, {0: 3, 1: 3, 2: 3}),                          # K3
    ({(0, 1), (1, 2), (2, 3)}, {0: 4, 1: 5, 2: 5, 3: 4}),                    # P4
    ({(0, 1), (0, 2), (0, 3)}, {0: 7, 1: 6, 2: 6, 3: 6}),                    # star
    ({(0, 1), (1, 2), (2, 3), (0, 3)}, {0: 8, 1: 8, 2: 8, 3: 8}),            # C4
    ({(0, 1), (0, 2), (1, 2), (2, 3)}, {0: 10, 1: 10, 2: 11, 3: 9}),         # paw
    ({(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)}, {0: 12, 1: 13, 2: 13, 3: 12}),  # diamond
    (set(itertools.combinations(range(4), 2)), {0: 14, 1: 14, 2: 14, 3: 14}),  # K4
]


def _oracle_orbits(g):
    adj = [set() for _ in range(g.n + 1)]
    for u, v in g.edges():
        adj[u].add(v)
        adj[v].add(u)
    counts = np.zeros((g.n, 15))
    for u in range(1, g.n + 1):
        counts[u - 1, 0] = len(adj[u])
    for k in (3, 4):
        for sub in itertools.combinations(range(1, g.n + 1), k):
            edges = {
                (a, b)
                for a, b in itertools.combinations(sorted(sub), 2)
                if b in adj[a]
            }
            # connectivity by union of edges
            if not edges:
                continue
            comp = {sub[0]}
            grew = True
            while grew:
                grew = False
                for a, b in edges:
                    if (a in comp) != (b in comp):
                        comp |= {a, b}
                        grew = True
            if len(comp) != k:
                continue
            for canon_edges, roles in _CANONICAL:
                if len(canon_edges) != len(edges):
                    continue
                matched = False
                for perm in itertools.permutations(range(k)):
                    mapping = dict(zip(sub, perm))
                    if {
                        tuple(sorted((mapping[a], mapping[b]))) for a, b in edges
                    } == canon_edges:
                        for node in sub:
                            counts[node - 1, roles[mapping[node]]] += 1
                        matched = True
                        break
                if matched:
                    break
    return counts


def path_graph(n):
    return Graph.from_edges(n, [(i, i - 1) for i in range(2, n + 1)])


class TestExtractors:
    def test_star_degree_histogram(self):
        g = Graph.from_edges(4, [(2, 1), (3, 1), (4, 1)])
        assert np.allclose(degree_histogram(g), [0, 0.75, 0, 0.25])

    def test_triangle_clustering_all_one(self):
        g = Graph.from_edges(3, [(2, 1), (3, 1), (3, 2)])
        assert np.allclose(clustering_coefficients(g), 1.0)

    def test_low_degree_clustering_zero(self):
        assert np.allclose(clustering_coefficients(path_graph(3)), [0, 0, 0])

    def test_p3_spectrum(self):
        vals = np.linalg.eigvalsh(normalized_laplacian(path_graph(3)))
        assert np.allclose(vals, [0.0, 1.0, 2.0], atol=1e-12)

    def test_spectral_histogram_mass(self):
        hist = spectral_histogram(path_graph(3))
        assert hist.sum() == pytest.approx(1.0)
        assert hist[0] > 0 and hist[-1] > 0  # eigenvalues 0 and 2

    def test_spectral_cap_error(self):
        g = gen_grid(3, 3)
        with pytest.raises(ValueError, match="capped"):
            spectral_histogram(g, cap=5)

    def test_extract_dispatch_and_unknown(self):
        g = gen_grid(2, 2)
        for stat in ("degree", "clustering", "orbit", "spectral"):
            assert extract(stat, g).ndim == 1
        with pytest.raises(ValueError):
            extract("girth", g)

    @pytest.mark.parametrize("stat", ["degree", "clustering", "spectral"])
    def test_permutation_invariance(self, stat):
        g = gen_lobster(8, 0.6, 0.6, 30, seed=1)
        base = extract(stat, g)
        for kind in ("bfs", "dfs", "degree_desc"):
            assert np.allclose(base, extract(stat, reorder(g, kind)))


class TestOrbits:
    def test_triangle(self):
        g = Graph.from_edges(3, [(2, 1), (3, 1), (3, 2)])
        counts = orbit_counts(g)
        assert np.all(counts[:, 3] == 1)

    def test_p4_roles(self):
        counts = orbit_counts(path_graph(4))
        assert counts[0, 4] == 1 and counts[3, 4] == 1
        assert counts[1, 5] == 1 and counts[2, 5] == 1

    def test_c4_each_node_once(self):
        g = Graph.from_edges(4, [(2, 1), (3, 2), (4, 3), (4, 1)])
        assert np.all(orbit_counts(g)[:, 8] == 1)

    def test_edge_orbit_is_degree(self):
        g = gen_grid(3, 3)
        assert np.array_equal(orbit_counts(g)[:, 0], g.degrees())

    def test_matches_oracle_on_small_random_graphs(self):
        from bigg import gen_erdos_renyi

        rng = np.random.default_rng(0)
        for _ in range(12):
            g = gen_erdos_renyi(int(rng.integers(3, 8)), float(rng.uniform(0.2, 0.8)), rng)
            assert np.array_equal(orbit_counts(g), _oracle_orbits(g))

    def test_orbit_mean_shape(self):
        assert orbit_mean(gen_grid(3, 3)).shape == (15,)


class TestMmd:
    def test_identical_sets_zero(self):
        vecs = [np.array([0.2, 0.8]), np.array([0.5, 0.5])]
        assert mmd(vecs, list(vecs)) == 0.0

    def test_identical_singletons_zero(self):
        assert mmd([np.array([1.0, 0.0])], [np.array([1.0, 0.0])]) == 0.0

    def test_two_point_masses_closed_form(self):
        a = [np.array([1.0, 0.0])]
        b = [np.array([0.0, 1.0])]
        assert mmd(a, b, sigma=1.0) == pytest.approx(2 - 2 * math.exp(-0.5), abs=1e-12)

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        A = [rng.random(5) for _ in range(4)]
        B = [rng.random(5) for _ in range(6)]
        assert mmd(A, B) == pytest.approx(mmd(B, A))

    def test_ragged_lengths_padded(self):
        assert mmd([np.array([1.0])], [np.array([1.0, 0.0])]) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mmd([], [np.array([1.0])])

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            A = [rng.random(4) for _ in range(3)]
            B = [rng.random(4) for _ in range(3)]
            assert mmd(A, B) >= 0.0


class TestLobster:
    def test_path_is_lobster(self):
        assert is_lobster(path_graph(6))

    def test_single_node(self):
        assert is_lobster(Graph(1, ((),)))

    def test_star_with_chain_pendant(self):
        # star plus a 2-chain hanging off the center
        g = Graph.from_edges(6, [(2, 1), (3, 1), (4, 1), (5, 1), (6, 5)])
        assert is_lobster(g)

    def test_cycle_not_lobster(self):
        g = Graph.from_edges(4, [(2, 1), (3, 2), (4, 3), (4, 1)])
        assert not is_lobster(g)

    def test_k4_not_lobster(self):
        g = Graph.from_edges(4, list((b, a) for a, b in itertools.combinations(range(1, 5), 2)))
        assert not is_lobster(g)

    def test_disconnected_not_lobster(self):
        assert not is_lobster(Graph(4, ((), (1,), (), ())))

    def test_three_level_tree_not_lobster(self):
        # a spider with legs of length 3 survives two prunes with degree 3
        legs = []
        nxt = 2
        for _ in range(3):
            legs += [(nxt, 1), (nxt + 1, nxt), (nxt + 2, nxt + 1)]
            nxt += 3
        g = Graph.from_edges(10, legs)
        assert not is_lobster(g)

    def test_generator_outputs_all_lobster(self):
        graphs = [gen_lobster(10, 0.6, 0.6, 60, seed=s) for s in range(30)]
        assert lobster_error_rate(graphs) == 0.0

    def test_error_rate_counts_failures(self):
        good = path_graph(4)
        bad = Graph.from_edges(4, [(2, 1), (3, 2), (4, 3), (4, 1)])
        assert lobster_error_rate([good, bad]) == 0.5
