"""Time-domain multi-point fermionic correlators.

A correlator ``<f_m(t_m) ... f_1(t_1)>`` with ``f(t) = e^{iHt} f e^{-iHt}``
is factorized into a chain of projection norms times an overlap ``G~``
between the ground state and the normalized operator string. Operator lists
are stored in application order: ``ops[0]`` is ``f_1``, which acts first.

Two evaluation routes are provided: direct statevector algebra
(:func:`correlator_fast`) and a literal ancilla circuit with deferred
measurement and post-selection (:func:`hadamard_gate_level`).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .model import jw_ladder
from .pauli import PauliSum
from .sim import (ZERO_BRANCH_TOL, Circuit, Gate, evolve, n_qubits_of, outcome_probability,
                  run_circuit)

SURVIVAL_TOL = 1e-12


@dataclass(frozen=True)
class FermionOp:
    orbital: int
    dagger: bool
    t: float = 0.0

    def __post_init__(self):
        if self.orbital < 0:
            raise ValueError("orbital index must be non-negative")
        if not np.isfinite(self.t):
            raise ValueError("operator time must be finite")


@dataclass(frozen=True)
class CorrelatorSpec:
    """Operator string in application order; an empty string is the identity."""

    ops: tuple[FermionOp, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(
            op if isinstance(op, FermionOp) else FermionOp(int(op[0]), bool(op[1]), float(op[2]))
            for op in self.ops))

    @property
    def m(self) -> int:
        return len(self.ops)

    @property
    def final_time(self) -> float:
        return self.ops[-1].t if self.ops else 0.0

    def to_json(self) -> str:
        return json.dumps({"ops": [{"orbital": o.orbital, "dagger": o.dagger, "t": o.t} for o in self.ops]})

    @classmethod
    def from_json(cls, text: str) -> CorrelatorSpec:
        doc = json.loads(text)
        return cls(tuple(FermionOp(int(o["orbital"]), bool(o["dagger"]), float(o["t"])) for o in doc["ops"]))


@dataclass
class CorrelatorResult:
    value: complex
    g_tilde: complex
    norms: list = field(default_factory=list)
    aborted_at: int | None = None
    mode: str = "fast"
    phase_error: float = 0.0


def renormalized_apply(state: np.ndarray, orbital: int, dagger: bool):
    """``(f~|state>, ||f|state>||)``; a vanishing norm returns ``(None, norm)``.

    ``f~ = Z_(<orbital) X_orbital P_orbital`` with the projector onto ``|0>``
    for a creation operator and onto ``|1>`` for an annihilation operator.
    """
    state = np.asarray(state, dtype=complex)
    n = n_qubits_of(state)
    if not 0 <= orbital < n:
        raise IndexError(f"orbital {orbital} out of range")
    idx = np.arange(len(state))
    bit = (idx >> orbital) & 1
    kept = np.where(bit == (0 if dagger else 1), state, 0)
    norm = float(np.linalg.norm(kept))
    if norm < ZERO_BRANCH_TOL:
        return None, norm
    sign = 1 - 2 * (np.bitwise_count(idx & ((1 << orbital) - 1)) & 1).astype(np.int64)
    out = np.zeros_like(state)
    out[idx ^ (1 << orbital)] = sign * kept
    return out / norm, norm


def norm_chain(gs: np.ndarray, spec: CorrelatorSpec, h: PauliSum):
    """Evolve and renormalize through ``spec``: ``(norms, final_state, aborted_at)``.

    ``aborted_at`` is the 1-based position of the first vanishing branch; the
    norms list then ends with that (sub-threshold) norm.
    """
    psi = np.asarray(gs, dtype=complex)
    norms = []
    t_prev = 0.0
    for j, op in enumerate(spec.ops, start=1):
        psi = evolve(psi, h, op.t - t_prev)
        t_prev = op.t
        psi, nrm = renormalized_apply(psi, op.orbital, op.dagger)
        norms.append(nrm)
        if psi is None:
            return norms, None, j
    return norms, psi, None


def correlator_fast(gs: np.ndarray, spec: CorrelatorSpec, h: PauliSum) -> CorrelatorResult:
    """Statevector evaluation of the factorized correlator.

    ``G~ = <gs| e^{iH t_m} |psi~>`` uses exact evolution of ``gs``. The
    ``phase_error`` field compares the full value with the one obtained from
    the scalar phase ``e^{i E t_m}``, ``E = <gs|H|gs>``; it vanishes for exact
    eigenstates.
    """
    gs = np.asarray(gs, dtype=complex)
    norms, psi, aborted = norm_chain(gs, spec, h)
    if aborted is not None:
        return CorrelatorResult(0j, 0j, norms, aborted, "fast")
    tm = spec.final_time
    g_tilde = complex(np.vdot(evolve(gs, h, tm), psi))
    scale = float(np.prod(norms)) if norms else 1.0
    energy = float(h.expectation(gs).real)
    approx = np.exp(1j * energy * tm) * np.vdot(gs, psi)
    return CorrelatorResult(g_tilde * scale, g_tilde, norms, None, "fast",
                            float(abs(g_tilde - approx) * scale))


def dense_correlator(gs: np.ndarray, spec: CorrelatorSpec, h: PauliSum) -> complex:
    """Product of dense Heisenberg-picture operators (small-system oracle)."""
    n = n_qubits_of(gs)
    w, V = np.linalg.eigh(h.to_dense(n))

    def heis(op):
        f = jw_ladder(op.orbital, op.dagger, n).to_dense()
        U = (V * np.exp(-1j * w * op.t)) @ V.conj().T
        return U.conj().T @ f @ U

    vec = np.asarray(gs, dtype=complex)
    for op in spec.ops:
        vec = heis(op) @ vec
    return complex(np.vdot(gs, vec))


@dataclass
class GateLevelResult:
    estimate: float
    survival: float
    p0: float
    p1: float
    sigma: float
    circuit: Circuit
    gate_counts: dict
    shots: int | None = None


def hadamard_circuit(spec: CorrelatorSpec, h: PauliSum, n_system: int, part: str = "real",
                     hadamards: bool = True):
    """Modified Hadamard test on ``n_system + 2`` qubits (control, projector ancilla).

    Evolutions are uncontrolled; each fermion operator is applied on the
    control's ``|1>`` branch as ``orbital`` controlled-Z gates, one CNOT and a
    controlled projector (a Toffoli onto the ancilla, which is post-selected
    on ``|0>``). A final ``e^{+iHt_m}`` returns the ``|0>`` branch to the
    input state.
    """
    if part not in ("real", "imag"):
        raise ValueError("part must be 'real' or 'imag'")
    ctrl, anc = n_system, n_system + 1
    c = Circuit(n_system + 2)
    counts = {"toffoli_equivalent": 0, "cnot": 0, "controlled_projector": 0}
    if hadamards:
        c.append(Gate("H", (ctrl,)))
    t_prev = 0.0
    for op in spec.ops:
        if not op.orbital < n_system:
            raise IndexError(f"orbital {op.orbital} out of range")
        if op.t != t_prev:
            c.append(Gate("Evolve", tuple(range(n_system)), op.t - t_prev, h))
        t_prev = op.t
        # flag the disallowed occupation on the ancilla, then discard it
        flip = not op.dagger
        if flip:
            c.append(Gate("X", (op.orbital,)))
        c.append(Gate("Toffoli", (ctrl, op.orbital, anc)))
        if flip:
            c.append(Gate("X", (op.orbital,)))
        c.append(Gate("Project", (anc,), 0))
        counts["controlled_projector"] += 1
        for nu in range(op.orbital):
            c.append(Gate("CPauli", (ctrl,), payload=((nu, "Z"),)))
            counts["toffoli_equivalent"] += 1
        c.append(Gate("CNOT", (ctrl, op.orbital)))
        counts["cnot"] += 1
    if spec.final_time != 0:
        c.append(Gate("Evolve", tuple(range(n_system)), -spec.final_time, h))
    if hadamards:
        if part == "imag":
            c.append(Gate("Sdg", (ctrl,)))
        c.append(Gate("H", (ctrl,)))
    return c, counts


def _prepare(gs_prep) -> np.ndarray:
    if isinstance(gs_prep, Circuit):
        psi, _ = run_circuit(gs_prep)
        return psi
    return np.asarray(gs_prep, dtype=complex)


def _with_ancillas(psi: np.ndarray) -> np.ndarray:
    # ancillas are the two highest qubits, both in |0>
    out = np.zeros(4 * len(psi), dtype=complex)
    out[: len(psi)] = psi
    return out


def hadamard_gate_level(gs_prep, spec: CorrelatorSpec, h: PauliSum, part: str = "real",
                        shots: int | None = None,
                        rng: np.random.Generator | None = None) -> GateLevelResult:
    """Estimate ``Re`` or ``Im`` of the full correlator from the ancilla circuit.

    estimate = (P0|kept - P1|kept) x survival, i.e. ``(n0 - n1) / shots`` when
    sampling. Without ``shots`` exact outcome probabilities are used.
    """
    psi = _prepare(gs_prep)
    n = n_qubits_of(psi)
    circ, counts = hadamard_circuit(spec, h, n, part)
    out, rec = run_circuit(circ, _with_ancillas(psi))
    survival = rec.survival
    if out is None or survival < SURVIVAL_TOL:
        raise RuntimeError(f"post-selection survival {survival:.2e} below {SURVIVAL_TOL}")
    p0 = outcome_probability(out, n, 0)
    p1 = outcome_probability(out, n, 1)
    q0, q1 = survival * p0, survival * p1
    if shots is None:
        est = q0 - q1
    else:
        rng = np.random.default_rng() if rng is None else rng
        k = rng.multinomial(int(shots), [max(1.0 - q0 - q1, 0.0), q0, q1])
        est = (k[1] - k[2]) / shots
    var = (q0 + q1) - (q0 - q1) ** 2
    sigma = float(np.sqrt(max(var, 0.0) / shots)) if shots else 0.0
    return GateLevelResult(float(est), float(survival), float(p0), float(p1), sigma, circ, counts, shots)


def correlator_gate_level(gs_prep, spec: CorrelatorSpec, h: PauliSum, shots: int | None = None,
                          rng: np.random.Generator | None = None) -> CorrelatorResult:
    """Complex correlator from the real- and imaginary-part circuits."""
    psi = _prepare(gs_prep)
    norms, _, aborted = norm_chain(psi, spec, h)
    if aborted is not None:
        return CorrelatorResult(0j, 0j, norms, aborted, "gate_level")
    re = hadamard_gate_level(psi, spec, h, "real", shots, rng).estimate
    im = hadamard_gate_level(psi, spec, h, "imag", shots, rng).estimate
    value = complex(re, im)
    scale = float(np.prod(norms)) if norms else 1.0
    return CorrelatorResult(value, value / scale, norms, None, "gate_level")


def control_zero_branch(gs_prep, spec: CorrelatorSpec, h: PauliSum) -> np.ndarray:
    """System state left by the Hadamard-test body when the control stays ``|0>``."""
    psi = _prepare(gs_prep)
    n = n_qubits_of(psi)
    circ, _ = hadamard_circuit(spec, h, n, hadamards=False)
    out, _ = run_circuit(circ, _with_ancillas(psi))
    return out[: len(psi)]


def greater_lesser_retarded(gs: np.ndarray, h: PauliSum, orbital: int, times, *,
                            gate_level: bool = False):
    """``(G>, G<, G^R)`` on ``times`` for one orbital.

    ``G>(t) = -i <c(t) c^dag(0)>``, ``G<(t) = i <c^dag(0) c(t)>`` and
    ``G^R = Theta(t) (G> - G<)`` with ``Theta(0) = 1``.
    """
    times = np.asarray(times, dtype=float)
    run = correlator_gate_level if gate_level else correlator_fast
    gg = np.empty(len(times), dtype=complex)
    gl = np.empty(len(times), dtype=complex)
    for k, t in enumerate(times):
        gg[k] = -1j * run(gs, CorrelatorSpec(((orbital, True, 0.0), (orbital, False, t))), h).value
        gl[k] = 1j * run(gs, CorrelatorSpec(((orbital, False, t), (orbital, True, 0.0))), h).value
    gr = np.where(times >= 0, gg - gl, 0)
    return gg, gl, gr


def retarded_series(gs: np.ndarray, h: PauliSum, orbital: int, times) -> np.ndarray:
    """``G^R(t)`` from one spectral decomposition; ``gs`` must be an eigenstate of ``h``."""
    gs = np.asarray(gs, dtype=complex)
    n = n_qubits_of(gs)
    w, V = np.linalg.eigh(h.to_dense(n))
    cdag = jw_ladder(orbital, True, n).to_dense()
    e0 = float(np.vdot(gs, h.to_dense(n) @ gs).real)
    times = np.asarray(times, dtype=float)
    # <c(t) c^dag> + <c^dag c(t)> written in the eigenbasis of H
    a = V.conj().T @ (cdag @ gs)
    b = V.conj().T @ (cdag.conj().T @ gs)
    G = np.exp(1j * np.outer(times, e0 - w)) @ np.abs(a) ** 2
    L = np.exp(1j * np.outer(times, w - e0)) @ np.abs(b) ** 2
    return np.where(times >= 0, -1j * (G + L), 0)


def damped_fourier(times, values, omega, eta: float) -> np.ndarray:
    """``int dt e^{i omega t} e^{-eta t} G(t)`` by the trapezoid rule."""
    times = np.asarray(times, dtype=float)
    kernel = np.exp(1j * np.outer(omega, times) - eta * times)
    return np.trapezoid(kernel * values, times, axis=1)


def series_to_csv(times, values, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "re", "im"])
    for t, v in zip(times, values):
        w.writerow([repr(float(t)), repr(float(np.real(v))), repr(float(np.imag(v)))])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
