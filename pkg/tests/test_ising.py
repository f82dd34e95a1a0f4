import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ising_ep.ising import (
    DimensionError,
    IsingProblem,
    ProblemSizeError,
    apply_nudge,
    clip_parameters,
    dumps_problem,
    energies,
    energy,
    enumerate_states,
    ground_state_bruteforce,
    loads_problem,
)
from oracles import argmin_state, nudge_cost, random_problem


@st.composite
def problems(draw, max_n=10, with_bias=True):
    n = draw(st.integers(1, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    p = random_problem(rng, n)
    if not with_bias:
        p = p.replace(biases=np.zeros(n))
    return p


class TestProblem:
    def test_keys_are_normalized_and_sorted(self):
        p = IsingProblem.from_dict(3, {(0, 2): 1.0, (1, 0): -0.5})
        assert p.edges.tolist() == [[1, 0], [2, 0]]
        assert p.couplings == {(1, 0): -0.5, (2, 0): 1.0}

    def test_self_coupling_rejected(self):
        with pytest.raises(ValueError):
            IsingProblem(2, [[1, 1]], [1.0], [0, 0])

    def test_symmetric_duplicate_rejected(self):
        with pytest.raises(ValueError):
            IsingProblem.from_dict(2, {(0, 1): 1.0, (1, 0): 2.0})

    def test_lower_key_order_rejected(self):
        with pytest.raises(ValueError):
            IsingProblem(2, [[0, 1]], [1.0], [0, 0])

    def test_arrays_are_read_only(self):
        p = IsingProblem.from_dict(2, {(1, 0): 1.0}, [0.0, 0.0])
        with pytest.raises(ValueError):
            p.biases[0] = 3.0

    def test_dense_round_trip(self):
        p = random_problem(np.random.default_rng(1), 6)
        q = IsingProblem.from_dense(p.dense_couplings(), p.biases)
        assert q.couplings == p.couplings

    def test_max_abs_parameter(self):
        p = IsingProblem.from_dict(2, {(1, 0): -1.5}, [0.5, 1.0])
        assert p.max_abs_parameter() == 1.5


class TestEnergy:
    def test_single_bias(self):
        assert energy(IsingProblem.from_dict(1, {}, [1.0]), [1]) == 1.0

    def test_antiparallel_pair(self):
        assert energy(IsingProblem.from_dict(2, {(1, 0): 1.0}), [1, -1]) == -1.0

    def test_three_spin_hand_value(self):
        p = IsingProblem.from_dict(3, {(1, 0): 0.5, (2, 1): -0.5}, [0.1, 0.0, -0.1])
        assert energy(p, [1, 1, 1]) == pytest.approx(0.0, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            energy(IsingProblem.from_dict(2), [1])

    def test_non_spin_values_rejected(self):
        with pytest.raises(ValueError):
            energy(IsingProblem.from_dict(2), [1, 0])

    @given(problems())
    @settings(max_examples=50, deadline=None)
    def test_batch_matches_scalar(self, p):
        S = enumerate_states(p.n_spins)[:64]
        assert np.allclose(energies(p, S), [energy(p, s) for s in S])

    @given(problems(max_n=16, with_bias=False), st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_global_flip_symmetry_without_bias(self, p, seed):
        s = np.random.default_rng(seed).choice([-1, 1], p.n_spins)
        assert energy(p, s) == pytest.approx(energy(p, -s), abs=1e-12)


class TestNudge:
    def test_bias_shift(self):
        p = IsingProblem.from_dict(2, {}, [0.0, 0.5])
        assert apply_nudge(p, [1], [1], 2.0).biases[1] == -1.5

    def test_other_parameters_untouched(self):
        p = random_problem(np.random.default_rng(3), 5)
        q = apply_nudge(p, [3, 4], [1, -1], 1.0)
        assert q.couplings == p.couplings
        assert np.array_equal(q.biases[:3], p.biases[:3])

    def test_not_clipped(self):
        p = IsingProblem.from_dict(1, {}, [-3.0])
        assert apply_nudge(p, [0], [1], 5.0).biases[0] == -8.0

    @pytest.mark.parametrize("beta", [0.0, -1.0])
    def test_beta_must_be_positive(self, beta):
        with pytest.raises(ValueError):
            apply_nudge(IsingProblem.from_dict(1), [0], [1], beta)

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            apply_nudge(IsingProblem.from_dict(2), [2], [1], 1.0)

    def test_target_must_be_spin(self):
        with pytest.raises(ValueError):
            apply_nudge(IsingProblem.from_dict(2), [1], [0], 1.0)

    def test_vanishing_beta_keeps_ground_state(self):
        p = random_problem(np.random.default_rng(4), 8)
        g = ground_state_bruteforce(p).state
        q = apply_nudge(p, [6, 7], [1, 1], 1e-12)
        assert np.array_equal(ground_state_bruteforce(q).state, g)

    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
    def test_four_spin_chain_equivalence(self, beta):
        p = IsingProblem.from_dict(4, {(1, 0): 0.7, (2, 1): -0.4, (3, 2): 0.9}, [0.2, -0.1, 0.3, -0.6])
        out, t = np.array([2, 3]), np.array([1, -1])
        direct = argmin_state(p, nudge_cost(out, t, beta / 2))
        assert np.array_equal(direct, ground_state_bruteforce(apply_nudge(p, out, t, beta)).state)

    @given(problems(max_n=12), st.sampled_from([0.25, 1.0, 4.0]), st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_cost_form_equivalence(self, p, beta, seed):
        rng = np.random.default_rng(seed)
        out = np.sort(rng.choice(p.n_spins, int(rng.integers(1, p.n_spins + 1)), replace=False))
        t = rng.choice([-1, 1], out.size)
        direct = argmin_state(p, nudge_cost(out, t, beta / 2))
        assert np.array_equal(direct, ground_state_bruteforce(apply_nudge(p, out, t, beta)).state)


class TestBruteForce:
    def test_single_spin(self):
        g = ground_state_bruteforce(IsingProblem.from_dict(1, {}, [2.0]))
        assert g.state.tolist() == [-1] and g.energy == -2.0

    def test_ferromagnetic_pair_tie_break(self):
        g = ground_state_bruteforce(IsingProblem.from_dict(2, {(1, 0): -1.0}))
        assert g.state.tolist() == [-1, -1] and g.energy == -1.0

    def test_seed7_twelve_spins(self):
        p = random_problem(np.random.default_rng(7), 12)
        g = ground_state_bruteforce(p)
        assert g.energy == pytest.approx(energies(p, enumerate_states(12)).min(), abs=1e-12)
        assert g.energy == pytest.approx(energy(p, g.state), abs=1e-9)

    def test_chunked_search_agrees(self):
        p = random_problem(np.random.default_rng(8), 10)
        a, b = ground_state_bruteforce(p), ground_state_bruteforce(p, chunk=37)
        assert np.array_equal(a.state, b.state)

    def test_chunked_tie_break(self):
        p = IsingProblem.from_dict(9, {(k + 1, k): -1.0 for k in range(8)})
        assert ground_state_bruteforce(p, chunk=5).state.tolist() == [-1] * 9

    def test_size_limit(self):
        with pytest.raises(ProblemSizeError):
            ground_state_bruteforce(IsingProblem.from_dict(25))

    def test_enumeration_order(self):
        assert enumerate_states(2).tolist() == [[-1, -1], [-1, 1], [1, -1], [1, 1]]


class TestClip:
    def test_coupling_clipped(self):
        p = IsingProblem.from_dict(2, {(1, 0): 2.5})
        assert clip_parameters(p).weights[0] == 2.0

    def test_bias_clipped(self):
        assert clip_parameters(IsingProblem.from_dict(1, {}, [-5.0])).biases[0] == -4.0

    def test_in_range_is_identity(self):
        p = IsingProblem.from_dict(2, {(1, 0): 1.0}, [0.5, -0.5])
        assert clip_parameters(p) is p

    @given(problems(), st.floats(0.1, 3.0))
    @settings(max_examples=50, deadline=None)
    def test_idempotent_and_in_range(self, p, scale):
        big = p.replace(weights=p.weights * 10 * scale, biases=p.biases * 10 * scale)
        once = clip_parameters(big)
        assert clip_parameters(once) is once
        assert np.all((once.weights >= -2) & (once.weights <= 2))
        assert np.all((once.biases >= -4) & (once.biases <= 4))


class TestTextFormat:
    @given(problems())
    @settings(max_examples=30, deadline=None)
    def test_round_trip(self, p):
        q = loads_problem(dumps_problem(p))
        assert q.couplings == p.couplings
        assert np.array_equal(q.biases, p.biases)

    def test_layout(self):
        text = dumps_problem(IsingProblem.from_dict(2, {(1, 0): -1.0}, [0.5, 0.0]))
        assert text.splitlines() == ["ising 2", "h 0 0.5", "h 1 0.0", "J 1 0 -1.0"]

    @pytest.mark.parametrize("bad", ["h 0 1.0\n", "ising 2\nJ 0 1 1.0\n", "ising 2\nX 1\n", "ising 2\nJ 1 0\n"])
    def test_malformed(self, bad):
        with pytest.raises(ValueError):
            loads_problem(bad)
