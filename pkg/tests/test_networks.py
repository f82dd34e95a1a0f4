import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ising_ep.ising import energy
from ising_ep.networks import (
    ConvArchitecture,
    ConvParameters,
    DetArchitecture,
    DetParameters,
    FcArchitecture,
    FcParameters,
    build_conv_problem,
    build_fc_problem,
    compute_input_bias,
    copy_params,
    load_checkpoint,
    readout,
    save_checkpoint,
    target_spins,
)
from ising_ep.topology import unembed


def small_fc(**kw):
    return FcArchitecture(n_inputs=6, n_hidden=5, n_classes=3, spins_per_class=2, **kw)


class TestInputBias:
    def test_zero_input_gives_bias(self):
        arch = small_fc()
        p = FcParameters.init(arch, np.random.default_rng(0))
        p.h_bias_hidden[:] = np.arange(5)
        assert np.array_equal(compute_input_bias(np.zeros(6), p, arch), np.arange(5))

    def test_identity_weights(self):
        arch = FcArchitecture(n_inputs=4, n_hidden=4, n_classes=1, spins_per_class=1)
        p = FcParameters(np.eye(4), np.zeros(4), np.zeros((4, 1)), np.zeros(1))
        assert compute_input_bias(np.eye(4)[2], p, arch).tolist() == [0, 0, 0.5, 0]

    def test_default_scales(self):
        arch = FcArchitecture()
        assert (arch.input_scale, arch.chip_scale, arch.n_outputs) == (0.5, 0.25, 40)

    def test_dimension_mismatch(self):
        arch = small_fc()
        with pytest.raises(ValueError):
            compute_input_bias(np.zeros(7), FcParameters.zeros(arch), arch)


class TestFcProblem:
    def test_full_size_problem(self):
        arch = FcArchitecture()
        p = FcParameters.init(arch, np.random.default_rng(0))
        problem, hidden, outputs = build_fc_problem(arch, p, np.zeros(784))
        assert problem.n_spins == 160 and len(problem.weights) == 120 * 40
        assert hidden.tolist() == list(range(120)) and outputs.tolist() == list(range(120, 160))

    def test_bipartite(self):
        arch = small_fc()
        problem, hidden, outputs = build_fc_problem(arch, FcParameters.init(arch, np.random.default_rng(1)), np.ones(6))
        for a, b in problem.edges:
            assert (a in outputs) != (b in outputs)

    def test_zero_parameters_flat_landscape(self):
        arch = small_fc()
        problem, _, _ = build_fc_problem(arch, FcParameters.zeros(arch), np.random.default_rng(2).random(6))
        assert not problem.weights.any() and not problem.biases.any()
        rng = np.random.default_rng(3)
        assert energy(problem, rng.choice([-1, 1], problem.n_spins)) == 0.0

    def test_chip_scale_applied(self):
        arch = small_fc()
        p = FcParameters.zeros(arch)
        p.J_hidden_output[2, 3] = 1.0
        problem, _, _ = build_fc_problem(arch, p, np.zeros(6))
        assert problem.couplings[(5 + 3, 2)] == 0.25

    def test_out_of_range_is_clipped(self):
        arch = small_fc()
        p = FcParameters.zeros(arch)
        p.J_hidden_output[0, 0] = 100.0
        p.h_bias_hidden[1] = -100.0
        problem, _, _ = build_fc_problem(arch, p, np.zeros(6))
        assert problem.couplings[(5, 0)] == 2.0 and problem.biases[1] == -4.0

    @given(st.floats(0.05, 2.0), st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_scaling_commutes(self, s, seed):
        rng = np.random.default_rng(seed)
        arch = small_fc(chip_scale=s, input_scale=s)
        p = FcParameters.init(arch, rng)
        x = rng.random(6)
        unit = small_fc(chip_scale=1.0, input_scale=1.0)
        q = FcParameters(s * p.W_input, p.h_bias_hidden, s * p.J_hidden_output, s * p.h_bias_output)
        a, _, _ = build_fc_problem(arch, p, x)
        b, _, _ = build_fc_problem(unit, q, x)
        assert np.array_equal(a.edges, b.edges)
        assert np.allclose(a.weights, b.weights, rtol=0, atol=1e-15)
        assert np.allclose(a.biases, b.biases, rtol=0, atol=1e-15)


class TestConvProblem:
    def setup_method(self):
        self.arch = ConvArchitecture()
        self.params = ConvParameters.init(self.arch, np.random.default_rng(0))
        self.pixels = np.array([1, -1, -1, -1, 1, -1, -1, -1, 1])

    def test_input_biases(self):
        cp = build_conv_problem(self.arch, self.params, self.pixels)
        h = cp.logical.biases[cp.layout.inputs]
        assert h[0].tolist() == [4.0, -4.0, -4.0, 4.0]  # top-left patch
        assert np.all(np.abs(h) == 4.0)

    def test_zero_filters_decouple_inputs(self):
        p = ConvParameters(np.zeros((4, 2, 2)), self.params.W_class, self.params.biases)
        cp = build_conv_problem(self.arch, p, self.pixels)
        inputs = set(cp.layout.inputs.ravel().tolist())
        assert all(w == 0 for (a, b), w in cp.logical.couplings.items() if b in inputs or a in inputs)

    def test_weight_sharing(self):
        cp = build_conv_problem(self.arch, self.params, self.pixels)
        L, J = cp.layout, cp.logical.couplings
        blocks = [[[J[(int(L.conv[p, f]), int(L.inputs[p, k]))] for k in range(4)] for f in range(4)] for p in range(4)]
        assert all(b == blocks[0] for b in blocks)
        assert np.allclose(blocks[0], 0.1 * self.params.filters.reshape(4, 4))

    def test_pool_couplings(self):
        cp = build_conv_problem(self.arch, self.params, self.pixels)
        L = cp.layout
        for p in range(4):
            for f in range(4):
                assert cp.logical.couplings[(int(L.pool[f]), int(L.conv[p, f]))] == -0.25

    def test_physical_embedding(self):
        cp = build_conv_problem(self.arch, self.params, self.pixels)
        assert cp.physical.n_spins == 72
        assert len(cp.output_sites) == 4
        s = np.random.default_rng(1).choice([-1, 1], 40)
        from ising_ep.topology import embed_state
        assert np.array_equal(unembed(embed_state(s, cp.embedding, 72), cp.embedding), s)

    def test_non_binary_pixels_rejected(self):
        with pytest.raises(ValueError):
            build_conv_problem(self.arch, self.params, np.zeros(9))

    def test_unsupported_layout(self):
        with pytest.raises(ValueError):
            ConvArchitecture(kernel=3)


class TestReadout:
    def test_winner(self):
        assert readout([1, 1, 1, 1] + [-1] * 36, 10, 4) == 0

    def test_tie_goes_to_lowest(self):
        assert readout([1] * 40, 10, 4) == 0
        assert readout([-1, -1, 1, -1, 1, -1], 3, 2) == 1

    def test_size_checked(self):
        with pytest.raises(ValueError):
            readout([1, 1, 1], 2, 2)

    def test_targets(self):
        assert target_spins(0, 2, 2).tolist() == [1, 1, -1, -1]
        assert np.flatnonzero(target_spins(9, 10, 4) == 1).tolist() == [36, 37, 38, 39]
        with pytest.raises(ValueError):
            target_spins(2, 2, 2)

    @pytest.mark.parametrize("n_classes,spc", [(2, 2), (10, 4), (3, 1)])
    def test_readout_inverts_targets(self, n_classes, spc):
        for c in range(n_classes):
            assert readout(target_spins(c, n_classes, spc), n_classes, spc) == c


class TestCheckpoint:
    @pytest.mark.parametrize(
        "arch,cls",
        [(small_fc(), FcParameters), (ConvArchitecture(), ConvParameters),
         (DetArchitecture(n_inputs=5, n_hidden=3, n_classes=2, spins_per_class=2), DetParameters)],
    )
    def test_round_trip(self, tmp_path, arch, cls):
        params = cls.init(arch, np.random.default_rng(4))
        save_checkpoint(tmp_path / "c.npz", arch, params, epoch=3, seed=7)
        arch2, params2, header = load_checkpoint(tmp_path / "c.npz")
        assert arch2 == arch and header["epoch"] == 3 and header["seed"] == 7
        for name in vars(params):
            assert np.array_equal(getattr(params, name), getattr(params2, name))

    def test_unreadable(self, tmp_path):
        (tmp_path / "c.npz").write_text("nope")
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "c.npz")

    def test_copy_is_deep(self):
        arch = small_fc()
        p = FcParameters.init(arch, np.random.default_rng(5))
        q = copy_params(p)
        q.W_input[0, 0] += 1
        assert p.W_input[0, 0] != q.W_input[0, 0]


class TestInit:
    def test_seeded_and_bounded(self):
        arch = FcArchitecture()
        a = FcParameters.init(arch, np.random.default_rng(0))
        b = FcParameters.init(arch, np.random.default_rng(0))
        assert np.array_equal(a.W_input, b.W_input)
        assert np.abs(a.W_input).max() <= 1 / np.sqrt(784)
        assert np.abs(a.J_hidden_output).max() <= 1 / np.sqrt(120)
        assert not a.h_bias_hidden.any()
