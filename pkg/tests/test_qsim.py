"""Tests for the density-matrix core."""

from pathlib import Path

import numpy as np
import pytest

from smolin_qss.errors import CapacityError, DomainError, LabelError, ValidationError
from smolin_qss.qsim import (
    CNOT,
    CZ,
    MEASURABLE,
    BellIndex,
    DensityMatrix,
    Pauli,
    apply_unitary,
    basis_state,
    bell_distribution,
    dump_matrix,
    expectation,
    is_unitary,
    maximally_mixed,
    measure_bell,
    measure_pauli,
    min_eigenvalue,
    outcome_distribution,
    parse_matrix,
    partial_trace,
    partial_transpose,
    permute_qubits,
    tensor_product,
    trace_distance,
)

GOLDEN = Path(__file__).parent / "golden"


class TestDensityMatrix:
    def test_rejects_non_square(self):
        with pytest.raises(ValidationError):
            DensityMatrix(np.zeros((2, 4)), ("a",))

    def test_rejects_duplicate_labels(self):
        with pytest.raises(LabelError):
            DensityMatrix(np.eye(4) / 4, ("a", "a"))

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(LabelError):
            DensityMatrix(np.eye(4) / 4, ("a",))

    def test_rejects_nan(self):
        m = np.eye(2) / 2
        m[0, 1] = np.nan
        with pytest.raises(ValidationError):
            DensityMatrix(m, ("a",))

    def test_matrix_is_read_only(self):
        rho = maximally_mixed(("a",))
        with pytest.raises(ValueError):
            rho.matrix[0, 0] = 1

    @pytest.mark.parametrize(
        "matrix",
        [
            np.array([[0.5, 0.5], [0.0, 0.5]]),  # not Hermitian
            np.eye(2),  # trace 2
            np.diag([1.5, -0.5]),  # negative eigenvalue
        ],
    )
    def test_check_rejects_unphysical(self, matrix):
        rho = DensityMatrix(matrix, ("a",))
        assert not rho.is_valid()
        with pytest.raises(ValidationError):
            rho.check()

    def test_random_state_is_valid(self, make_density):
        rho = make_density(("a", "b", "c"))
        assert rho.is_valid()
        assert rho.num_qubits == 3
        assert rho.dim == 8
        assert rho.purity() <= 1 + 1e-12


class TestPauli:
    def test_eigenbasis_columns_are_eigenvectors(self):
        for obs in MEASURABLE:
            basis = obs.eigenbasis
            np.testing.assert_allclose(obs.matrix @ basis[:, 0], basis[:, 0], atol=1e-14)
            np.testing.assert_allclose(obs.matrix @ basis[:, 1], -basis[:, 1], atol=1e-14)
            assert is_unitary(basis)

    def test_projectors_resolve_identity(self):
        for obs in MEASURABLE:
            np.testing.assert_allclose(obs.projector(0) + obs.projector(1), np.eye(2), atol=1e-14)

    def test_identity_is_not_measurable(self):
        with pytest.raises(ValidationError):
            Pauli.I.projector(0)

    def test_parse(self):
        assert Pauli.parse("x") is Pauli.X
        assert Pauli.parse("sigma_z") is Pauli.Z
        with pytest.raises(ValidationError):
            Pauli.parse("W")

    def test_gates_are_unitary(self):
        for u in (Pauli.X.matrix, Pauli.Y.matrix, Pauli.Z.matrix, CNOT, CZ):
            np.testing.assert_allclose(u @ u.conj().T, np.eye(u.shape[0]), atol=1e-12)


class TestOperations:
    def test_tensor_product_overlap(self):
        with pytest.raises(LabelError):
            tensor_product(maximally_mixed(("a",)), maximally_mixed(("a",)))

    def test_tensor_product_cap(self):
        a = maximally_mixed(("a", "b", "c"))
        b = maximally_mixed(("d", "e", "f"))
        with pytest.raises(CapacityError):
            tensor_product(a, b, cap=5)
        assert tensor_product(a, b, cap=6).labels == ("a", "b", "c", "d", "e", "f")

    def test_apply_x_flips(self):
        out = apply_unitary(basis_state("0", ("a",)), Pauli.X.matrix, ("a",))
        np.testing.assert_allclose(out.matrix, basis_state("1", ("a",)).matrix, atol=1e-14)

    def test_cnot_on_second_label_order(self):
        # control is the first target even when it is the later label
        state = basis_state("01", ("t", "c"))
        out = apply_unitary(state, CNOT, ("c", "t"))
        np.testing.assert_allclose(out.matrix, basis_state("11", ("t", "c")).matrix, atol=1e-14)

    def test_apply_rejects_non_unitary(self):
        with pytest.raises(ValidationError):
            apply_unitary(basis_state("0", ("a",)), np.diag([1, 2]), ("a",))

    def test_apply_rejects_wrong_shape(self):
        with pytest.raises(ValidationError):
            apply_unitary(basis_state("00", ("a", "b")), Pauli.X.matrix, ("a", "b"))

    def test_apply_rejects_unknown_label(self):
        with pytest.raises(LabelError):
            apply_unitary(basis_state("0", ("a",)), Pauli.X.matrix, ("z",))

    def test_partial_trace_of_product(self, make_density):
        a = make_density(("a",))
        b = make_density(("b", "c"))
        joint = tensor_product(a, b)
        np.testing.assert_allclose(partial_trace(joint, {"a"}).matrix, b.matrix, atol=1e-12)
        np.testing.assert_allclose(partial_trace(joint, {"b", "c"}).matrix, a.matrix, atol=1e-12)

    def test_partial_trace_keeps_order(self, make_density):
        rho = make_density(("a", "b", "c"))
        assert partial_trace(rho, {"b"}).labels == ("a", "c")
        assert partial_trace(rho, {"b"}).trace() == pytest.approx(1.0, abs=1e-12)

    def test_partial_trace_everything(self):
        with pytest.raises(DomainError):
            partial_trace(maximally_mixed(("a", "b")), {"a", "b"})

    def test_partial_trace_unknown(self):
        with pytest.raises(LabelError):
            partial_trace(maximally_mixed(("a",)), {"q"})

    def test_partial_transpose_involution(self, make_density):
        rho = make_density(("a", "b", "c"))
        once = DensityMatrix(partial_transpose(rho, ("a", "c")), rho.labels)
        np.testing.assert_allclose(partial_transpose(once, ("a", "c")), rho.matrix, atol=1e-12)

    def test_partial_transpose_of_bell_pair(self):
        phi = DensityMatrix.from_vector(BellIndex.PHI_PLUS.vector, ("a", "b"))
        assert min_eigenvalue(partial_transpose(phi, ("a",))) == pytest.approx(-0.5, abs=1e-12)

    def test_permute_swaps_factors(self, make_density):
        a = make_density(("a",))
        b = make_density(("b",))
        swapped = permute_qubits(tensor_product(a, b), ("b", "a"))
        np.testing.assert_allclose(swapped.matrix, tensor_product(b, a).matrix, atol=1e-14)

    def test_permute_rejects_non_permutation(self):
        with pytest.raises(LabelError):
            permute_qubits(maximally_mixed(("a", "b")), ("a", "c"))

    def test_trace_distance(self, make_density):
        zero, one = basis_state("0", ("a",)), basis_state("1", ("a",))
        assert trace_distance(zero, one) == pytest.approx(1.0, abs=1e-12)
        rho = make_density(("a", "b"))
        assert trace_distance(rho, permute_qubits(rho, ("b", "a"))) == pytest.approx(0.0, abs=1e-12)

    def test_trace_distance_label_mismatch(self):
        with pytest.raises(LabelError):
            trace_distance(maximally_mixed(("a",)), maximally_mixed(("b",)))

    def test_min_eigenvalue_needs_hermitian(self):
        with pytest.raises(ValidationError):
            min_eigenvalue(np.array([[0, 1], [0, 0]]))

    def test_expectation(self):
        plus = DensityMatrix.from_vector([1, 1], ("a",))
        assert expectation(plus, Pauli.X.matrix, ("a",)) == pytest.approx(1.0)
        assert expectation(plus, Pauli.Z.matrix, ("a",)) == pytest.approx(0.0, abs=1e-14)


class TestMeasurement:
    def test_branches_are_normalized(self, make_density):
        rho = make_density(("a", "b"))
        for obs in MEASURABLE:
            branches = outcome_distribution(rho, "b", obs)
            assert sum(b.probability for b in branches) == pytest.approx(1.0, abs=1e-10)

    def test_branches_recombine_to_dephased_input(self, make_density):
        rho = make_density(("a", "b"))
        for obs in MEASURABLE:
            mixed = sum(b.probability * b.state.matrix for b in outcome_distribution(rho, "a", obs))
            p0 = np.kron(obs.projector(0), np.eye(2))
            p1 = np.kron(obs.projector(1), np.eye(2))
            dephased = p0 @ rho.matrix @ p0 + p1 @ rho.matrix @ p1
            np.testing.assert_allclose(mixed, dephased, atol=1e-12)

    def test_deterministic_outcomes(self, rng):
        outcome, post = measure_pauli(basis_state("1", ("a",)), "a", Pauli.Z, rng)
        assert outcome.bit == 1
        assert outcome.eigenvalue == -1
        assert outcome.probability == pytest.approx(1.0)
        plus_i = DensityMatrix.from_vector([1, 1j], ("a",))
        assert measure_pauli(plus_i, "a", Pauli.Y, rng)[0].bit == 0

    def test_null_branch_has_no_state(self):
        zero, one = outcome_distribution(basis_state("0", ("a",)), "a", Pauli.Z)
        assert one.probability == 0.0
        assert one.state is None

    def test_unbiased_sampling(self, rng):
        zero = basis_state("0", ("a",))
        bits = [measure_pauli(zero, "a", Pauli.X, rng)[0].bit for _ in range(2000)]
        assert np.mean(bits) == pytest.approx(0.5, abs=0.05)

    def test_bell_measurement_of_bell_state(self, rng):
        for idx in BellIndex:
            pair = DensityMatrix.from_vector(idx.vector, ("a", "b"))
            probs = {b.outcome: b.probability for b in bell_distribution(pair, "a", "b")}
            assert probs[idx] == pytest.approx(1.0, abs=1e-12)
            assert measure_bell(pair, "a", "b", rng)[0] is idx

    def test_bell_measurement_needs_two_qubits(self):
        with pytest.raises(LabelError):
            bell_distribution(maximally_mixed(("a", "b")), "a", "a")


class TestDump:
    def test_golden_basis_state(self):
        text = dump_matrix(basis_state("01", ("a", "b")).matrix)
        assert text == (GOLDEN / "basis_01.txt").read_text()

    def test_parse_reads_dump(self, make_density):
        rho = make_density(("a",))
        np.testing.assert_array_equal(parse_matrix(dump_matrix(rho.matrix)), rho.matrix)

    def test_parse_rejects_bad_header(self):
        with pytest.raises(ValidationError):
            parse_matrix("size=2\n0 0,0 0\n0 0,0 0\n")

    def test_parse_rejects_short_row(self):
        with pytest.raises(ValidationError):
            parse_matrix("dim=2\n0 0,0 0\n0 0\n")
