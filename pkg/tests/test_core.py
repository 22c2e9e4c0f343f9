"""Composite-system linear algebra: embeddings, traces, evolution, entropies."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhx.core import (
    DensityMatrix,
    HermitianOperator,
    SubsystemLayout,
    UnitaryOperator,
    apply,
    dephase,
    embed,
    evolve,
    expectation,
    mutual_information,
    partial_trace,
    spectral_norm,
    tensor,
    trace_norm,
    von_neumann_entropy,
)

from conftest import ptrace_oracle, random_density, shannon_oracle

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


def dm(data, dims) -> DensityMatrix:
    return DensityMatrix(SubsystemLayout(dims), data)


def herm(data, dims) -> HermitianOperator:
    return HermitianOperator(SubsystemLayout(dims), data)


class TestLayout:
    def test_total_dim_is_product(self):
        assert SubsystemLayout((3, 2, 2, 2)).total_dim == 24

    @pytest.mark.parametrize("dims", [(), (1,), (3, 1)])
    def test_rejects_degenerate_dims(self, dims):
        with pytest.raises(ValueError):
            SubsystemLayout(dims)

    def test_reduced_keeps_order(self):
        assert SubsystemLayout((3, 2, 2, 2)).reduced((0, 3)).dims == (3, 2)


class TestValidation:
    def test_density_matrix_rejects_nonhermitian(self):
        bad = np.array([[0.5, 0.1], [0.3, 0.5]], dtype=complex)
        with pytest.raises(ValueError, match="Hermitian"):
            dm(bad, (2,))

    def test_density_matrix_rejects_wrong_trace(self):
        with pytest.raises(ValueError, match="trace"):
            dm(np.diag([0.6, 0.6]), (2,))

    def test_density_matrix_rejects_negative_eigenvalue(self):
        with pytest.raises(ValueError, match="eigenvalue"):
            dm(np.diag([1.5, -0.5]), (2,))

    def test_unitary_rejects_nonunitary(self):
        with pytest.raises(ValueError, match="unitary"):
            UnitaryOperator(SubsystemLayout((2,)), np.diag([1.0, 0.5]))

    def test_arrays_are_frozen(self):
        rho = dm(np.diag([0.5, 0.5]), (2,))
        with pytest.raises(ValueError):
            rho.data[0, 0] = 1.0


class TestEmbed:
    def test_identity_embeds_to_identity(self):
        op = herm(np.eye(2), (2,))
        out = embed(op, 1, SubsystemLayout((3, 2)))
        assert np.allclose(out.data, np.eye(6), atol=1e-14)

    def test_trace_multiplies_by_traced_out_dims(self):
        op = herm(np.diag([0.0, 1.0]), (2,))
        out = embed(op, 1, SubsystemLayout((2, 2)))
        assert np.trace(out.data).real == pytest.approx(2.0, abs=1e-14)

    def test_sigma_x_squares_to_identity(self):
        # oracle: direct 4x4 multiplication
        out = embed(herm(SX, (2,)), 0, SubsystemLayout((2, 2)))
        assert np.allclose(out.data @ out.data, np.eye(4), atol=1e-14)

    def test_embedding_respects_site_order(self):
        # a non-symmetric two-site operator embedded at swapped sites
        op_data = np.kron(np.diag([1.0, 2.0]), np.diag([3.0, 4.0]))
        layout = SubsystemLayout((2, 2))
        forward = embed(herm(op_data, (2, 2)), (0, 1), layout)
        swapped = embed(herm(op_data, (2, 2)), (1, 0), layout)
        assert np.allclose(forward.data, op_data, atol=1e-14)
        assert np.allclose(
            swapped.data, np.kron(np.diag([3.0, 4.0]), np.diag([1.0, 2.0])), atol=1e-14
        )

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="dimension"):
            embed(herm(np.eye(2), (2,)), 0, SubsystemLayout((3, 2)))

    def test_duplicate_sites_rejected(self):
        op = herm(np.eye(4), (2, 2))
        with pytest.raises(ValueError, match="duplicate"):
            embed(op, (1, 1), SubsystemLayout((2, 2)))


class TestPartialTrace:
    def test_product_state_reduction(self):
        rho_a = dm(np.diag([0.3, 0.7]), (2,))
        rho_b = dm(np.diag([0.1, 0.2, 0.7]), (3,))
        joint = tensor(rho_a, rho_b)
        assert np.allclose(partial_trace(joint, 0).data, rho_a.data, atol=1e-14)
        assert np.allclose(partial_trace(joint, 1).data, rho_b.data, atol=1e-14)

    def test_bell_state_reduces_to_maximally_mixed(self):
        v = np.zeros(4, dtype=complex)
        v[0] = v[3] = 1.0 / math.sqrt(2.0)
        bell = dm(np.outer(v, v.conj()), (2, 2))
        red = partial_trace(bell, 0)
        assert np.allclose(red.data, np.eye(2) / 2.0, atol=1e-14)

    def test_matches_loop_oracle_after_evolution(self, rng):
        dims = (3, 2, 2)
        layout = SubsystemLayout(dims)
        rho = dm(random_density(rng, 12), dims)
        h = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
        h = (h + h.conj().T) / 2.0
        evolved = apply(evolve(HermitianOperator(layout, h), 0.7), rho)
        for keep in [(0,), (1,), (0, 2), (1, 2)]:
            expected = ptrace_oracle(evolved.data, dims, keep)
            got = partial_trace(evolved, keep).data
            assert np.abs(got - expected).max() < 1e-13

    def test_empty_keep_rejected(self):
        rho = dm(np.eye(4) / 4.0, (2, 2))
        with pytest.raises(ValueError, match="nonempty"):
            partial_trace(rho, ())

    def test_invalid_index_rejected(self):
        rho = dm(np.eye(4) / 4.0, (2, 2))
        with pytest.raises(ValueError, match="out of range"):
            partial_trace(rho, (2,))


class TestEvolve:
    def test_zero_duration_is_identity(self):
        u = evolve(herm(SX, (2,)), 0.0)
        assert np.allclose(u.data, np.eye(2), atol=1e-14)

    def test_rabi_rotation_closed_form(self):
        # oracle: populations under exp(-i sx t) follow sin^2(t)
        ground = dm(np.diag([1.0, 0.0]), (2,))
        u = evolve(herm(SX, (2,)), math.pi / 2.0)
        once = apply(u, ground)
        assert once.populations[1] == pytest.approx(math.sin(math.pi / 2.0) ** 2, abs=1e-12)
        twice = apply(u, once)
        assert twice.populations[1] == pytest.approx(math.sin(math.pi) ** 2, abs=1e-12)

    def test_inverse_duration_gives_identity(self, rng):
        h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        op = herm((h + h.conj().T) / 2.0, (2, 2))
        u_fwd = evolve(op, 1.3)
        u_bwd = evolve(op, -1.3)
        assert np.abs(u_fwd.data @ u_bwd.data - np.eye(4)).max() < 1e-12

    def test_unitary_for_large_actions(self):
        # |t| * spectral_norm(H) up to 1e3
        op = herm(np.diag([0.0, 1.0, 4.0]), (3,))
        u = evolve(op, 250.0)
        assert np.abs(u.data.conj().T @ u.data - np.eye(3)).max() < 1e-10


class TestApply:
    def test_identity_leaves_state(self, rng):
        rho = dm(random_density(rng, 4), (2, 2))
        u = UnitaryOperator(SubsystemLayout((2, 2)), np.eye(4))
        assert np.allclose(apply(u, rho).data, rho.data, atol=1e-14)

    def test_layout_mismatch_rejected(self, rng):
        rho = dm(random_density(rng, 4), (2, 2))
        u = UnitaryOperator(SubsystemLayout((4,)), np.eye(4))
        with pytest.raises(ValueError, match="layout"):
            apply(u, rho)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), t=st.floats(-5.0, 5.0))
    def test_preserves_invariants_and_entropy(self, seed, t):
        gen = np.random.default_rng(seed)
        rho = dm(random_density(gen, 6), (3, 2))
        h = gen.normal(size=(6, 6)) + 1j * gen.normal(size=(6, 6))
        u = evolve(herm((h + h.conj().T) / 2.0, (3, 2)), t)
        out = apply(u, rho)  # constructor re-validates all state invariants
        assert abs(np.trace(out.data).real - 1.0) < 1e-12
        assert abs(von_neumann_entropy(out) - von_neumann_entropy(rho)) < 1e-10


class TestEntropy:
    def test_pure_state_entropy_zero(self):
        assert von_neumann_entropy(dm(np.diag([1.0, 0.0]), (2,))) == pytest.approx(0.0, abs=1e-12)

    def test_maximally_mixed_qubit(self):
        val = von_neumann_entropy(dm(np.eye(2) / 2.0, (2,)))
        assert val == pytest.approx(math.log(2.0), abs=1e-12)

    def test_matches_scalar_oracle(self):
        probs = (0.2689, 0.7311)
        val = von_neumann_entropy(dm(np.diag(probs), (2,)))
        assert val == pytest.approx(shannon_oracle(probs), abs=1e-12)

    def test_clamps_solver_noise(self):
        rho = dm(np.diag([1.0 + 5e-11, -5e-11]), (2,))
        assert von_neumann_entropy(rho) == pytest.approx(0.0, abs=1e-9)


class TestMutualInformation:
    def test_product_state_zero(self):
        joint = tensor(dm(np.diag([0.3, 0.7]), (2,)), dm(np.diag([0.4, 0.6]), (2,)))
        assert abs(mutual_information(joint, ((0,), (1,)))) < 1e-12

    def test_bell_state_maximal(self):
        v = np.zeros(4, dtype=complex)
        v[0] = v[3] = 1.0 / math.sqrt(2.0)
        bell = dm(np.outer(v, v.conj()), (2, 2))
        assert mutual_information(bell, ((0,), (1,))) == pytest.approx(2.0 * math.log(2.0), abs=1e-10)

    def test_overlapping_partition_rejected(self, rng):
        rho = dm(random_density(rng, 4), (2, 2))
        with pytest.raises(ValueError, match="overlap"):
            mutual_information(rho, ((0, 1), (1,)))

    def test_incomplete_partition_rejected(self, rng):
        rho = dm(random_density(rng, 8), (2, 2, 2))
        with pytest.raises(ValueError, match="cover"):
            mutual_information(rho, ((0,), (1,)))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_nonnegative_on_random_states(self, seed):
        gen = np.random.default_rng(seed)
        rho = dm(random_density(gen, 6), (3, 2))
        assert mutual_information(rho, ((0,), (1,))) >= -1e-10


class TestDephase:
    def test_diagonal_state_unchanged(self):
        rho = dm(np.diag([0.2, 0.3, 0.5]), (3,))
        assert np.allclose(dephase(rho).data, rho.data, atol=1e-15)

    def test_plus_state_becomes_mixed(self):
        plus = dm(np.full((2, 2), 0.5), (2,))
        assert np.allclose(dephase(plus).data, np.eye(2) / 2.0, atol=1e-15)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_projection_properties(self, seed):
        gen = np.random.default_rng(seed)
        rho = dm(random_density(gen, 6), (3, 2))
        once = dephase(rho)
        twice = dephase(once)
        assert np.allclose(once.data, twice.data, atol=1e-15)
        assert abs(np.trace(once.data).real - 1.0) < 1e-12
        assert von_neumann_entropy(once) >= von_neumann_entropy(rho) - 1e-12


class TestSpectralNormExpectation:
    def test_identity_norm(self):
        assert spectral_norm(herm(np.eye(5), (5,))) == pytest.approx(1.0, abs=1e-14)

    def test_offdiagonal_block_norm(self):
        # oracle: 2x2 block eigenvalues are +-eps
        eps = 0.37
        op = np.zeros((4, 4), dtype=complex)
        op[1, 2] = op[2, 1] = eps
        assert spectral_norm(herm(op, (2, 2))) == pytest.approx(eps, abs=1e-14)

    def test_diagonal_engine_norm(self):
        op = herm(np.diag([0.0, 1.0, 4.0]), (3,))
        assert spectral_norm(op) == pytest.approx(4.0, abs=1e-14)

    def test_expectation_of_identity(self, rng):
        rho = dm(random_density(rng, 3), (3,))
        assert expectation(rho, herm(np.eye(3), (3,))) == pytest.approx(1.0, abs=1e-12)

    def test_expectation_diagonal_contraction(self):
        rho = dm(np.diag([0.25, 0.75]), (2,))
        op = herm(np.diag([0.0, 2.0]), (2,))
        assert expectation(rho, op) == pytest.approx(1.5, abs=1e-14)

    def test_expectation_thermal_gibbs_factor(self):
        # oracle: e^{-1} / (1 + e^{-1})
        p = math.exp(-1.0) / (1.0 + math.exp(-1.0))
        rho = dm(np.diag([1.0 - p, p]), (2,))
        op = herm(np.diag([0.0, 1.0]), (2,))
        assert expectation(rho, op) == pytest.approx(p, abs=1e-12)


class TestTensorHelpers:
    def test_tensor_then_trace_roundtrip(self, rng):
        a = dm(random_density(rng, 2), (2,))
        b = dm(random_density(rng, 3), (3,))
        joint = tensor(a, b)
        assert np.abs(partial_trace(joint, 0).data - a.data).max() < 1e-14
        assert np.abs(partial_trace(joint, 1).data - b.data).max() < 1e-14

    def test_trace_norm_of_hermitian(self):
        m = np.diag([0.5, -0.25, 0.25])
        assert trace_norm(m) == pytest.approx(1.0, abs=1e-14)
