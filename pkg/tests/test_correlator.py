import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aimspa.correlator import (CorrelatorSpec, FermionOp, control_zero_branch, correlator_fast,
                               correlator_gate_level, damped_fourier, dense_correlator,
                               greater_lesser_retarded, hadamard_circuit, hadamard_gate_level,
                               norm_chain, renormalized_apply, retarded_series, series_to_csv)
from aimspa.greens import retarded_gf_exact
from aimspa.model import build_hamiltonian, exact_diagonalize, jw_ladder, sample_params
from aimspa.sim import zero_state
from helpers import random_state


def random_spec(rng, n_qubits, m, t_max=3.0):
    ops = [(int(rng.integers(n_qubits)), bool(rng.integers(2)), float(rng.uniform(0, t_max)))
           for _ in range(m)]
    return CorrelatorSpec(ops)


@pytest.fixture(scope="module")
def four_qubit():
    p = sample_params(6, 1, 1)
    ed = exact_diagonalize(p)
    return p, build_hamiltonian(p), ed.ground_state


class TestSpec:
    def test_tuple_coercion_and_json(self):
        spec = CorrelatorSpec(((0, True, 0.0), (1, False, 1.5)))
        assert spec.m == 2 and spec.final_time == 1.5
        assert spec.ops[0] == FermionOp(0, True, 0.0)
        assert CorrelatorSpec.from_json(spec.to_json()) == spec
        assert json.loads(spec.to_json())["ops"][1] == {"orbital": 1, "dagger": False, "t": 1.5}

    def test_validation(self):
        with pytest.raises(ValueError):
            FermionOp(0, True, float("nan"))
        with pytest.raises(ValueError):
            FermionOp(-1, True)


class TestRenormalizedApply:
    def test_vacuum(self):
        out, norm = renormalized_apply(zero_state(3), 1, True)
        assert norm == 1 and np.allclose(out, np.eye(8)[0b010])
        assert renormalized_apply(zero_state(3), 1, False)[0] is None

    @given(st.integers(0, 2**32 - 1), st.integers(0, 3), st.booleans())
    def test_matches_ladder_operator(self, seed, orbital, dagger):
        psi = random_state(4, np.random.default_rng(seed))
        out, norm = renormalized_apply(psi, orbital, dagger)
        ref = jw_ladder(orbital, dagger, 4).to_dense() @ psi
        assert np.allclose(out * norm, ref, atol=1e-12)


class TestNormChain:
    def test_single_creation_norm(self, four_qubit):
        _, H, gs = four_qubit
        z = float(np.sum((1 - 2 * (np.arange(16) & 1)) * np.abs(gs) ** 2))
        norms, _, aborted = norm_chain(gs, CorrelatorSpec(((0, True, 0.0),)), H)
        assert aborted is None
        assert norms[0] == pytest.approx(np.sqrt((1 + z) / 2), abs=1e-12)

    def test_full_state_aborts(self, four_qubit):
        _, H, _ = four_qubit
        full = np.zeros(16, dtype=complex)
        full[-1] = 1
        norms, state, aborted = norm_chain(full, CorrelatorSpec(((2, True, 0.3), (0, False, 1.0))), H)
        assert aborted == 1 and state is None
        assert correlator_fast(full, CorrelatorSpec(((2, True, 0.3),)), H).value == 0

    def test_norm_product_matches_dense(self, four_qubit):
        _, H, gs = four_qubit
        rng = np.random.default_rng(0)
        w, V = np.linalg.eigh(H.to_dense())
        for _ in range(10):
            spec = random_spec(rng, 4, 3)
            norms, _, aborted = norm_chain(gs, spec, H)
            vec, t_prev = gs.copy(), 0.0
            for op in spec.ops:
                vec = (V * np.exp(-1j * w * (op.t - t_prev))) @ (V.conj().T @ vec)
                vec = jw_ladder(op.orbital, op.dagger, 4).to_dense() @ vec
                t_prev = op.t
            if aborted is None:
                assert np.prod(norms) == pytest.approx(np.linalg.norm(vec), abs=1e-10)
            else:
                assert np.linalg.norm(vec) < 1e-7


class TestFastCorrelator:
    def test_single_mode(self, single_mode):
        H = build_hamiltonian(single_mode)
        vac = zero_state(2)
        for t, expected in ((0.0, -1j), (np.pi, 1j), (0.7, -1j * np.exp(-0.7j))):
            gg, gl, _ = greater_lesser_retarded(vac, H, 0, [t])
            assert gg[0] == pytest.approx(expected, abs=1e-12)
            assert gl[0] == 0

    def test_nilpotent(self, four_qubit):
        _, H, gs = four_qubit
        res = correlator_fast(gs, CorrelatorSpec(((1, False, 0.0), (1, False, 0.0))), H)
        assert res.value == 0 and res.aborted_at == 2

    def test_identity_spec(self, four_qubit):
        _, H, gs = four_qubit
        assert correlator_fast(gs, CorrelatorSpec(), H).value == pytest.approx(1)

    @settings(max_examples=25)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3, 4]))
    def test_matches_dense_oracle(self, four_qubit, seed, m):
        _, H, gs = four_qubit
        spec = random_spec(np.random.default_rng(seed), 4, m)
        res = correlator_fast(gs, spec, H)
        assert abs(res.value - dense_correlator(gs, spec, H)) < 1e-10
        if res.aborted_at is None:
            assert res.value == pytest.approx(res.g_tilde * np.prod(res.norms), abs=1e-14)
            assert res.phase_error < 1e-9

    def test_phase_error_reported_for_non_eigenstates(self, four_qubit):
        _, H, _ = four_qubit
        psi = random_state(4, np.random.default_rng(3))
        res = correlator_fast(psi, CorrelatorSpec(((0, True, 0.0), (0, False, 2.0))), H)
        assert abs(res.value - dense_correlator(psi, CorrelatorSpec(((0, True, 0.0), (0, False, 2.0))), H)) < 1e-10
        assert res.phase_error > 1e-6


class TestGateLevel:
    def test_identity(self, four_qubit):
        _, H, gs = four_qubit
        assert hadamard_gate_level(gs, CorrelatorSpec(), H).estimate == pytest.approx(1)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_fast(self, four_qubit, seed):
        _, H, gs = four_qubit
        rng = np.random.default_rng(seed)
        spec = random_spec(rng, 4, 2)
        fast = correlator_fast(gs, spec, H)
        gate = correlator_gate_level(gs, spec, H)
        assert abs(gate.value - fast.value) < 1e-10

    def test_gate_counts(self, four_qubit):
        _, H, _ = four_qubit
        _, counts = hadamard_circuit(CorrelatorSpec(((3, True, 0.0), (0, False, 1.0))), H, 4)
        assert counts == {"toffoli_equivalent": 3, "cnot": 2, "controlled_projector": 2}

    def test_control_zero_branch_restores_state(self, four_qubit):
        _, H, gs = four_qubit
        spec = CorrelatorSpec(((1, True, 0.4), (3, False, 1.3), (2, True, 2.0)))
        out = control_zero_branch(gs, spec, H)
        assert 1 - abs(np.vdot(gs, out)) ** 2 < 1e-10

    def test_shot_estimate_within_five_sigma(self, four_qubit):
        _, H, gs = four_qubit
        spec = CorrelatorSpec(((0, True, 0.0), (0, False, 1.0)))
        exact = correlator_fast(gs, spec, H).value.real
        res = hadamard_gate_level(gs, spec, H, "real", shots=100_000, rng=np.random.default_rng(0))
        assert res.sigma > 0
        assert abs(res.estimate - exact) < 5 * res.sigma

    def test_bad_part(self, four_qubit):
        _, H, gs = four_qubit
        with pytest.raises(ValueError):
            hadamard_gate_level(gs, CorrelatorSpec(), H, part="phase")

    def test_blocked_branch(self, four_qubit):
        # the control's |0> branch always survives, so a blocked string just reads 0
        _, H, _ = four_qubit
        full = np.zeros(16, dtype=complex)
        full[-1] = 1
        res = hadamard_gate_level(full, CorrelatorSpec(((0, True, 0.0),)), H)
        assert res.survival == pytest.approx(0.5) and res.estimate == pytest.approx(0, abs=1e-15)
        assert correlator_gate_level(full, CorrelatorSpec(((0, True, 0.0),)), H).value == 0


class TestSeries:
    def test_anticommutator_at_zero(self, four_qubit):
        _, H, gs = four_qubit
        for orbital in range(4):
            gg, gl, gr = greater_lesser_retarded(gs, H, orbital, [0.0])
            assert gg[0] - gl[0] == pytest.approx(-1j, abs=1e-12)
            assert gr[0] == gg[0] - gl[0]

    def test_spectral_fast_path(self, four_qubit):
        _, H, gs = four_qubit
        times = np.linspace(0, 5, 11)
        _, _, gr = greater_lesser_retarded(gs, H, 0, times)
        assert np.allclose(retarded_series(gs, H, 0, times), gr, atol=1e-10)

    def test_gate_level_series(self, four_qubit):
        _, H, gs = four_qubit
        times = [0.0, 0.8]
        fast = greater_lesser_retarded(gs, H, 1, times)
        gate = greater_lesser_retarded(gs, H, 1, times, gate_level=True)
        for a, b in zip(fast, gate):
            assert np.allclose(a, b, atol=1e-10)

    def test_fourier_matches_frequency_domain(self, four_qubit):
        p, H, gs = four_qubit
        times = np.arange(0, 400.0001, 0.02)
        omega = np.arange(-20, 20.0001, 0.05)
        gw = damped_fourier(times, retarded_series(gs, H, 0, times), omega, 0.1)
        ref = retarded_gf_exact(p, 0, omega, 0.1).values
        assert np.linalg.norm(gw - ref) / np.linalg.norm(ref) < 0.02

    def test_csv(self, tmp_path):
        text = series_to_csv([0.0, 0.5], [1j, 2.0], tmp_path / "s.csv")
        assert text == "t,re,im\n0.0,0.0,1.0\n0.5,2.0,0.0\n"
