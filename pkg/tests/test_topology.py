import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ising_ep.ising import IsingProblem, energy, ground_state_bruteforce
from ising_ep.networks import ConvArchitecture
from ising_ep.topology import (
    CELL,
    H,
    V,
    ConvLayout,
    Embedding,
    EmbeddingError,
    build_chimera,
    build_conv_embedding,
    embed_problem,
    embed_state,
    unembed,
)


def conv_setup(chain_strength=2.0):
    graph = build_chimera(3, 3)
    return graph, build_conv_embedding(ConvArchitecture(chain_strength=chain_strength), graph)


class TestChimera:
    @pytest.mark.parametrize("rows,cols,spins,edges", [(1, 1, 8, 16), (2, 1, 16, 36), (2, 2, 32, 80)])
    def test_counts(self, rows, cols, spins, edges):
        g = build_chimera(rows, cols)
        assert g.n_spins == spins and len(g.edges) == edges

    def test_degree_at_most_six(self):
        g = build_chimera(3, 3)
        assert max(len(g.neighbors(a)) for a in range(g.n_spins)) == 6

    def test_intra_cell_edges_are_bipartite(self):
        g = build_chimera(2, 2)
        for a, b in g.edges:
            cell_a, cell_b = a // (2 * CELL), b // (2 * CELL)
            if cell_a == cell_b:
                assert (a // CELL) % 2 != (b // CELL) % 2

    def test_site_indexing(self):
        g = build_chimera(2, 3)
        assert g.site(0, 0, H, 0) == 0 and g.site(0, 0, V, 0) == 4 and g.site(1, 0, H, 0) == 24
        with pytest.raises(IndexError):
            g.site(2, 0, H, 0)

    def test_horizontal_links_left_right_vertical_up_down(self):
        g = build_chimera(2, 2)
        assert g.has_edge(g.site(0, 0, H, 1), g.site(0, 1, H, 1))
        assert g.has_edge(g.site(0, 0, V, 2), g.site(1, 0, V, 2))
        assert not g.has_edge(g.site(0, 0, H, 1), g.site(1, 0, H, 1))

    def test_invalid_size(self):
        with pytest.raises(ValueError):
            build_chimera(0, 2)


class TestEmbedding:
    def test_identity_embedding_reproduces_problem(self):
        g = build_chimera(1, 1)
        logical = IsingProblem.from_dict(8, {(4, 0): 0.5, (7, 3): -1.0}, np.linspace(-1, 1, 8))
        phys = embed_problem(logical, Embedding({i: (i,) for i in range(8)}), g)
        assert phys.couplings == logical.couplings and np.array_equal(phys.biases, logical.biases)

    def test_two_site_chain_ground_states(self):
        g = build_chimera(1, 1)
        emb = Embedding({0: (0, 4)}, chain_strength=1.0)
        phys = embed_problem(IsingProblem.from_dict(1), emb, g)
        assert phys.couplings == {(4, 0): -1.0}
        pair = IsingProblem.from_dict(2, {(1, 0): -1.0})
        for s in ([-1, -1], [1, 1]):
            assert energy(pair, s) == -1.0
        assert energy(pair, [1, -1]) == 1.0

    def test_overlapping_chains_rejected(self):
        with pytest.raises(EmbeddingError):
            Embedding({0: (0, 4), 1: (4,)}).validate(build_chimera(1, 1))

    def test_disconnected_chain_rejected(self):
        with pytest.raises(EmbeddingError):
            Embedding({0: (0, 1)}).validate(build_chimera(1, 1))

    def test_missing_edge_rejected(self):
        emb = Embedding({0: (0,), 1: (1,)})
        with pytest.raises(EmbeddingError):
            embed_problem(IsingProblem.from_dict(2, {(1, 0): 1.0}), emb, build_chimera(1, 1))

    @pytest.mark.parametrize("chains", [{1: (0,)}, {0: ()}])
    def test_bad_chain_maps(self, chains):
        with pytest.raises(EmbeddingError):
            Embedding(chains)

    def test_zero_strength_rejected(self):
        with pytest.raises(EmbeddingError):
            Embedding({0: (0,)}, chain_strength=0.0)

    def test_text_round_trip(self):
        _, emb = conv_setup()
        text = emb.dumps()
        assert text.splitlines()[0] == "0: [0]"
        assert Embedding.loads(text, 2.0) == emb

    @pytest.mark.parametrize("chain,expected", [((1, 1, 1), 1), ((1, -1), 1), ((-1, 1), -1), ((-1, -1, 1), -1)])
    def test_majority_vote(self, chain, expected):
        emb = Embedding({0: tuple(range(len(chain)))})
        assert unembed(np.array(chain), emb).tolist() == [expected]

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_embed_unembed_round_trip(self, seed):
        graph, emb = conv_setup()
        s = np.random.default_rng(seed).choice([-1, 1], emb.n_logical)
        assert np.array_equal(unembed(embed_state(s, emb, graph.n_spins), emb), s)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_strong_chains_do_not_break(self, seed):
        # logical path 0-1-2 on a 2x1 block, chains of length 2..3, 7 physical spins
        rng = np.random.default_rng(seed)
        g = build_chimera(2, 1)
        emb_sites = {0: (0, 4), 1: (5, 1), 2: (13, 9, 8)}
        compact = sorted(s for c in emb_sites.values() for s in c)
        J = {(1, 0): rng.uniform(-1, 1), (2, 1): rng.uniform(-1, 1)}
        h = rng.uniform(-1, 1, 3)
        strength = 2 * sum(abs(v) for v in J.values()) + np.abs(h).max()
        phys = embed_problem(IsingProblem.from_dict(3, J, h), Embedding(emb_sites, strength), g)
        # restrict to the used sites so brute force stays small
        index = {s: k for k, s in enumerate(compact)}
        sub = IsingProblem.from_dict(
            len(compact),
            {(index[a], index[b]): w for (a, b), w in phys.couplings.items()},
            phys.biases[compact],
        )
        gs = ground_state_bruteforce(sub).state
        full = np.ones(g.n_spins, dtype=np.int8)
        full[compact] = gs
        for chain in emb_sites.values():
            assert len(set(full[list(chain)].tolist())) == 1

    def test_unembed_of_chain_ground_state_is_logical_ground_state(self):
        g = build_chimera(2, 1)
        logical = IsingProblem.from_dict(3, {(1, 0): -0.6, (2, 1): 0.4}, [0.3, -0.2, 0.1])
        emb = Embedding({0: (0, 4), 1: (5, 1), 2: (13, 9, 8)}, chain_strength=3.0)
        phys = embed_problem(logical, emb, g)
        used = [0, 1, 4, 5, 8, 9, 13]
        index = {s: k for k, s in enumerate(used)}
        sub = IsingProblem.from_dict(7, {(index[a], index[b]): w for (a, b), w in phys.couplings.items()},
                                     phys.biases[used])
        full = np.ones(g.n_spins, dtype=np.int8)
        full[used] = ground_state_bruteforce(sub).state
        assert np.array_equal(unembed(full, emb), ground_state_bruteforce(logical).state)


class TestConvEmbedding:
    def test_every_neuron_mapped_and_only_pools_chained(self):
        _, emb = conv_setup()
        layout = ConvLayout()
        assert emb.n_logical == layout.n_logical == 40
        multi = {i for i, c in emb.chains.items() if len(c) > 1}
        assert multi == set(layout.pool.tolist())

    def test_spins_per_neuron(self):
        _, emb = conv_setup()
        assert emb.spins_per_neuron() <= 1.7
        assert emb.n_sites() == 56

    def test_structural_invariants(self):
        graph, emb = conv_setup()
        emb.validate(graph)
        layout = ConvLayout()
        for p in range(4):
            for f in range(4):
                c = emb.chains[int(layout.conv[p, f])][0]
                assert any(graph.has_edge(c, s) for s in emb.chains[int(layout.pool[f])])
                for k in range(4):
                    assert graph.has_edge(c, emb.chains[int(layout.inputs[p, k])][0])
        for f in range(4):
            for o in range(4):
                assert any(graph.has_edge(a, emb.chains[int(layout.outputs[o])][0])
                           for a in emb.chains[int(layout.pool[f])])

    def test_chain_couplings_use_strength(self):
        graph, emb = conv_setup(chain_strength=2.0)
        layout = ConvLayout()
        logical = IsingProblem.from_dict(layout.n_logical)
        phys = embed_problem(logical, emb, graph)
        chain_sites = set(emb.chains[int(layout.pool[0])])
        chain_edges = [w for (a, b), w in phys.couplings.items() if a in chain_sites and b in chain_sites]
        assert chain_edges and all(w == -2.0 for w in chain_edges)

    def test_physical_edges_subset_of_graph(self):
        graph, emb = conv_setup()
        rng = np.random.default_rng(0)
        layout = ConvLayout()
        J = {(int(layout.conv[p, f]), int(layout.inputs[p, k])): rng.uniform(-1, 1)
             for p in range(4) for f in range(4) for k in range(4)}
        phys = embed_problem(IsingProblem.from_dict(layout.n_logical, J), emb, graph)
        assert all(graph.has_edge(a, b) for a, b in phys.couplings)

    def test_graph_too_small(self):
        with pytest.raises(EmbeddingError):
            build_conv_embedding(ConvArchitecture(), build_chimera(2, 3))
