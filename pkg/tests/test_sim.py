import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from aimspa.model import build_hamiltonian, sample_params
from aimspa.pauli import PauliSum
from aimspa.sim import (Circuit, Gate, apply, basis_state, circuit_unitary, compile_gate, evolve,
                        expectation, export_amplitudes, import_amplitudes, measure_qubit,
                        outcome_probability, project, run_circuit, sample, zero_state)
from helpers import random_state

angles = st.floats(-2 * np.pi, 2 * np.pi, allow_nan=False)
PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)


def equal_up_to_phase(a, b, tol=1e-12):
    k = np.argmax(np.abs(b))
    phase = a.flat[k] / b.flat[k]
    return abs(abs(phase) - 1) < tol and np.allclose(a, phase * b, atol=tol)


class TestGates:
    def test_x_flips(self):
        assert np.allclose(apply(zero_state(1), Gate("X", (0,))), basis_state(1, 1))

    @given(angles)
    def test_givens_subspace_rotation(self, t):
        # a=0, b=1 -> qubit 1 set; index 2
        psi = apply(basis_state(0b10, 2), Gate("Givens", (0, 1), t))
        assert psi[0b10] == pytest.approx(np.cos(t))
        assert psi[0b01] == pytest.approx(np.sin(t))
        for idx in (0b00, 0b11):
            assert np.allclose(apply(basis_state(idx, 2), Gate("Givens", (0, 1), t)), basis_state(idx, 2))

    @given(angles)
    def test_zz_phase(self, t):
        psi = apply(zero_state(2), Gate("ZZ", (0, 1), t))
        assert psi[0] == pytest.approx(np.exp(-0.5j * t))
        zz = PauliSum.from_string("Z0 Z1").to_dense()
        assert np.allclose(Gate("ZZ", (0, 1), t).matrix(), expm(-0.5j * t * zz))

    def test_givens_readout_identity(self):
        G = Gate("Givens", (0, 1), -np.pi / 4).matrix()
        # matrix index MSB is qubit 0, so Z on qubit 0 is Z (x) I in this basis
        Z, I = np.diag([1.0, -1.0]), np.eye(2)
        X, Y = np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]])
        lhs = G.conj().T @ ((np.kron(Z, I) - np.kron(I, Z)) / 2) @ G
        assert np.allclose(lhs, (np.kron(X, X) + np.kron(Y, Y)) / 2)

    @given(st.integers(0, 2**32 - 1), st.sampled_from(["Rz", "Rx", "Givens", "ZZ", "H", "S", "Sdg",
                                                        "CNOT", "CZ", "Toffoli"]))
    def test_unitary_gates_preserve_norm(self, seed, kind):
        rng = np.random.default_rng(seed)
        psi = random_state(4, rng)
        arity = {"Givens": 2, "ZZ": 2, "CNOT": 2, "CZ": 2, "Toffoli": 3}.get(kind, 1)
        qubits = tuple(rng.permutation(4)[:arity])
        out = apply(psi, Gate(kind, qubits, rng.uniform(-3, 3)))
        assert np.linalg.norm(out) == pytest.approx(1, abs=1e-12)

    def test_toffoli_target_is_last(self):
        psi = apply(basis_state([1, 1, 0]), Gate("Toffoli", (0, 1, 2)))
        assert np.allclose(psi, basis_state([1, 1, 1]))
        psi = apply(basis_state([1, 0, 0]), Gate("Toffoli", (0, 1, 2)))
        assert np.allclose(psi, basis_state([1, 0, 0]))

    def test_controlled_pauli(self):
        g = Gate("CPauli", (2,), payload=((0, "X"), (1, "Z")))
        assert np.allclose(apply(basis_state([0, 1, 0]), g), basis_state([0, 1, 0]))
        assert np.allclose(apply(basis_state([0, 1, 1]), g), -basis_state([1, 1, 1]))

    def test_operand_errors(self):
        with pytest.raises(IndexError):
            apply(zero_state(2), Gate("X", (2,)))
        with pytest.raises(ValueError):
            Gate("CNOT", (1, 1))
        with pytest.raises(ValueError):
            Gate("Bogus", (0,))
        with pytest.raises(IndexError):
            Circuit(2, [Gate("CNOT", (0, 3))])


class TestProjectionAndMeasurement:
    def test_project_examples(self):
        out, norm = project(basis_state(1, 1), 0, 0)
        assert out is None and norm == 0
        out, norm = project(PLUS, 0, 0)
        assert np.allclose(out, [1, 0]) and norm == pytest.approx(1 / np.sqrt(2))

    @given(st.integers(0, 2**32 - 1), st.integers(0, 3))
    def test_branch_norms_match_born_rule(self, seed, q):
        psi = random_state(4, np.random.default_rng(seed))
        n0 = project(psi, q, 0)[1]
        n1 = project(psi, q, 1)[1]
        assert n0**2 + n1**2 == pytest.approx(1, abs=1e-12)
        assert n1**2 == pytest.approx(outcome_probability(psi, q, 1), abs=1e-14)

    def test_measure_definite(self):
        outcome, post, prob = measure_qubit(basis_state(1, 1), 0, np.random.default_rng(0))
        assert (outcome, prob) == (1, 1.0)
        assert np.allclose(post, basis_state(1, 1))

    def test_measure_plus_statistics(self):
        rng = np.random.default_rng(1)
        ones = 0
        for _ in range(10_000):
            outcome, post, prob = measure_qubit(PLUS, 0, rng)
            ones += outcome
            assert prob == pytest.approx(0.5)
        assert np.linalg.norm(post) == pytest.approx(1, abs=1e-12)
        chi2 = (ones - 5000) ** 2 / 5000 + (5000 - ones) ** 2 / 5000
        assert chi2 < 10.83  # p = 0.001, one degree of freedom

    def test_corrupt_state(self):
        with pytest.raises(ValueError):
            measure_qubit(np.zeros(2, dtype=complex), 0, np.random.default_rng(0))

    def test_run_circuit_records(self):
        circ = Circuit(2, [Gate("H", (0,)), Gate("Project", (0,), 1), Gate("H", (1,)),
                           Gate("Measure", (1,))])
        psi, rec = run_circuit(circ, rng=np.random.default_rng(3))
        assert rec.survival == pytest.approx(0.5)
        assert len(rec.outcomes) == 1
        assert np.linalg.norm(psi) == pytest.approx(1)
        psi, rec = run_circuit(Circuit(1, [Gate("Project", (0,), 1)]))
        assert psi is None and rec.survival == 0.0
        with pytest.raises(ValueError):
            run_circuit(Circuit(1, [Gate("Measure", (0,))]))


class TestExpectationAndEvolution:
    def test_expectation_examples(self):
        assert expectation(zero_state(3), PauliSum.from_string("Z1", 1.0, 3)) == pytest.approx(1)
        psi = random_state(3, np.random.default_rng(0))
        assert expectation(psi, PauliSum.identity(3)) == pytest.approx(1)
        with pytest.raises(ValueError):
            expectation(zero_state(2), PauliSum.from_string("Z3", 1.0, 4))

    def test_hermitian_expectation_is_real(self, small_params):
        H = build_hamiltonian(small_params)
        psi = random_state(H.n_qubits, np.random.default_rng(2))
        assert abs(expectation(psi, H).imag) < 1e-12

    def test_evolve_examples(self):
        psi = random_state(2, np.random.default_rng(0))
        h = PauliSum.from_string("X0 Z1", 0.7, 2) + PauliSum.from_string("Y1", 0.3, 2)
        assert np.allclose(evolve(psi, h, 0.0), psi)
        t = 0.83
        out = evolve(zero_state(1), PauliSum.from_string("Z0"), t)
        assert np.allclose(out, np.exp(-1j * t) * zero_state(1), atol=1e-10)
        back = evolve(evolve(psi, h, 1.7), h, -1.7)
        assert np.linalg.norm(back - psi) < 1e-9

    @pytest.mark.parametrize("t", [0.1, 1.0, 7.5])
    def test_evolve_unitary_and_conserves_energy(self, small_params, t):
        H = build_hamiltonian(small_params)
        psi = random_state(H.n_qubits, np.random.default_rng(5))
        out = evolve(psi, H, t)
        assert np.linalg.norm(out) == pytest.approx(1, abs=1e-10)
        assert expectation(out, H).real == pytest.approx(expectation(psi, H).real, abs=1e-9)
        assert np.linalg.norm(out - expm(-1j * t * H.to_dense()) @ psi) < 1e-10

    def test_evolve_on_low_qubits_with_ancilla(self):
        h = PauliSum.from_string("X0", 1.0, 1)
        psi = np.kron(PLUS, random_state(1, np.random.default_rng(4)))
        out = evolve(psi, h, 0.4)
        ref = np.kron(np.eye(2), np.cos(0.4) * np.eye(2) - 1j * np.sin(0.4) * np.array([[0, 1], [1, 0]])) @ psi
        assert np.allclose(out, ref)

    def test_evolve_guards(self):
        with pytest.raises(ValueError):
            evolve(zero_state(1), PauliSum.from_string("Z0"), np.inf)
        with pytest.raises(ValueError):
            evolve(zero_state(1), PauliSum.from_string("Z0", 1j), 1.0)


class TestSampling:
    def test_all_zero(self):
        assert sample(zero_state(3), 100, np.random.default_rng(0)) == {"000": 100}

    def test_plus_within_five_sigma(self):
        counts = sample(PLUS, 10_000, np.random.default_rng(1))
        assert abs(counts.get("1", 0) - 5000) < 5 * 50

    def test_total_variation(self):
        rng = np.random.default_rng(2)
        psi = random_state(4, rng)
        counts = sample(psi, 100_000, rng)
        emp = np.zeros(16)
        for bits, c in counts.items():
            emp[int(bits[::-1], 2)] = c / 100_000
        assert 0.5 * np.abs(emp - np.abs(psi) ** 2).sum() < 0.02


class TestCompilation:
    @pytest.mark.parametrize("kind", ["ZZ", "Givens"])
    def test_matches_gate_matrix(self, kind):
        rng = np.random.default_rng(7)
        for t in rng.uniform(-np.pi, np.pi, 100):
            g = Gate(kind, (0, 1), t)
            compiled = circuit_unitary(compile_gate(g), 2)
            assert equal_up_to_phase(compiled, circuit_unitary([g], 2))
            assert all(c.kind in {"CNOT", "Rz", "Rx", "S", "Sdg"} for c in compile_gate(g))
            assert sum(c.kind == "CNOT" for c in compile_gate(g)) == 2

    def test_givens_zero_is_identity(self):
        assert equal_up_to_phase(circuit_unitary(compile_gate(Gate("Givens", (0, 1), 0.0)), 2), np.eye(4))

    def test_unsupported(self):
        with pytest.raises(ValueError):
            compile_gate(Gate("CNOT", (0, 1)))


class TestSerialization:
    def test_circuit_json_round_trip(self):
        h = build_hamiltonian(sample_params(0, 1, 1))
        circ = Circuit(5, [Gate("X", (0,)), Gate("Givens", (0, 1), 0.3), Gate("Project", (4,), 0),
                           Gate("CPauli", (4,), payload=((0, "Z"), (2, "X"))), Gate("Evolve", (), -1.5, h)])
        again = Circuit.from_json(circ.to_json())
        psi = random_state(5, np.random.default_rng(0))
        a, _ = run_circuit(circ, psi)
        b, _ = run_circuit(again, psi)
        assert np.array_equal(a, b)

    def test_amplitude_export(self, tmp_path):
        psi = random_state(3, np.random.default_rng(1))
        path = tmp_path / "amps.bin"
        export_amplitudes(psi, path)
        assert path.stat().st_size == 16 * 8
        raw = np.frombuffer(path.read_bytes(), dtype="<f8")
        assert raw[0] == psi[0].real and raw[1] == psi[0].imag
        assert np.array_equal(import_amplitudes(path), psi)
