"""Noiseless statevector engine.

States are plain complex ``numpy`` vectors of length ``2**n``; qubit ``q`` is
bit ``q`` of the basis index. For multi-qubit gate matrices the first listed
operand is the most significant bit of the matrix index, so for
``Givens`` on ``(a, b)`` the label ``|01>`` means ``a=0, b=1``.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from math import cos, sin, sqrt

import numpy as np
import scipy.linalg as sla
from scipy.sparse.csgraph import connected_components

from .pauli import PauliSum, _check_key

ZERO_BRANCH_TOL = 1e-8
CORRUPT_TOL = 1e-14
EVOLVE_MAX_QUBITS = 16

UNITARY_KINDS = {"X", "H", "S", "Sdg", "Rz", "Rx", "Givens", "ZZ", "CNOT", "CZ", "Toffoli",
                 "CPauli", "Evolve"}
KINDS = UNITARY_KINDS | {"Project", "Measure"}
_ARITY = {"X": 1, "H": 1, "S": 1, "Sdg": 1, "Rz": 1, "Rx": 1, "Givens": 2, "ZZ": 2,
          "CNOT": 2, "CZ": 2, "Toffoli": 3, "Project": 1, "Measure": 1}

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / sqrt(2)
_S = np.diag([1, 1j])
_SDG = np.diag([1, -1j])


@dataclass(frozen=True)
class Gate:
    """One circuit instruction.

    ``CPauli`` applies the Pauli string ``payload`` (a factor tuple) on the
    target register when ``qubits[0]`` is 1. ``Evolve`` applies
    ``exp(-i param * payload)`` for a :class:`PauliSum` payload acting on the
    low qubits. ``Project`` keeps the ``int(param)`` branch of ``qubits[0]``.
    """

    kind: str
    qubits: tuple[int, ...]
    param: float | None = None
    payload: object = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        arity = _ARITY.get(self.kind)
        if arity is not None and len(self.qubits) != arity:
            raise ValueError(f"{self.kind} takes {arity} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"repeated operand in {self.kind}{self.qubits}")
        if self.kind == "CPauli":
            key = _check_key(self.payload)
            if self.qubits[0] in dict(key):
                raise ValueError("CPauli control overlaps its target string")
            object.__setattr__(self, "payload", key)

    @property
    def is_unitary(self) -> bool:
        return self.kind in UNITARY_KINDS

    def support(self) -> tuple[int, ...]:
        if self.kind == "CPauli":
            return self.qubits + tuple(q for q, _ in self.payload)
        if self.kind == "Evolve":
            return tuple(range(self.payload.n_qubits))
        return self.qubits

    def matrix(self) -> np.ndarray:
        """Dense matrix on ``qubits`` (not available for CPauli/Evolve/non-unitary)."""
        k, t = self.kind, self.param
        if k == "X":
            return _X
        if k == "H":
            return _H
        if k == "S":
            return _S
        if k == "Sdg":
            return _SDG
        if k == "Rz":
            return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])
        if k == "Rx":
            c, s = cos(t / 2), sin(t / 2)
            return np.array([[c, -1j * s], [-1j * s, c]])
        if k == "Givens":
            c, s = cos(t), sin(t)
            return np.array([[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1]], dtype=complex)
        if k == "ZZ":
            a, b = np.exp(-0.5j * t), np.exp(0.5j * t)
            return np.diag([a, b, b, a])
        if k == "CNOT":
            return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
        if k == "CZ":
            return np.diag([1, 1, 1, -1]).astype(complex)
        if k == "Toffoli":
            m = np.eye(8, dtype=complex)
            m[[6, 7]] = m[[7, 6]]
            return m
        raise ValueError(f"{k} has no fixed matrix")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "qubits": list(self.qubits)}
        if self.param is not None:
            d["param"] = float(self.param)
        if self.kind == "CPauli":
            d["pauli"] = " ".join(f"{p}{q}" for q, p in self.payload)
        elif self.kind == "Evolve":
            d["hamiltonian"] = self.payload.to_json()
            d["n_qubits"] = self.payload.n_qubits
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Gate:
        payload = None
        if d["kind"] == "CPauli":
            payload = tuple((int(tok[1:]), tok[0]) for tok in d["pauli"].split())
        elif d["kind"] == "Evolve":
            terms = {}
            for t in d["hamiltonian"]:
                key = () if t["factors"] == "I" else tuple((int(tok[1:]), tok[0]) for tok in t["factors"].split())
                terms[key] = complex(*t["coeff"])
            payload = PauliSum(terms, d["n_qubits"])
        return cls(d["kind"], tuple(d["qubits"]), d.get("param"), payload)


@dataclass
class Circuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def __post_init__(self):
        for g in self.gates:
            self._check(g)

    def _check(self, g: Gate):
        for q in g.support():
            if not 0 <= q < self.n_qubits:
                raise IndexError(f"{g.kind} operand {q} out of range for {self.n_qubits} qubits")

    def append(self, gate: Gate) -> Circuit:
        self._check(gate)
        self.gates.append(gate)
        return self

    def extend(self, gates) -> Circuit:
        for g in gates:
            self.append(g)
        return self

    def __len__(self):
        return len(self.gates)

    def count(self) -> Counter:
        return Counter(g.kind for g in self.gates)

    def to_json(self) -> str:
        return json.dumps({"n_qubits": self.n_qubits, "gates": [g.to_dict() for g in self.gates]})

    @classmethod
    def from_json(cls, text: str) -> Circuit:
        d = json.loads(text)
        return cls(d["n_qubits"], [Gate.from_dict(g) for g in d["gates"]])


@dataclass
class RunRecord:
    outcomes: list[int] = field(default_factory=list)
    branch_norms: list[float] = field(default_factory=list)
    survival: float = 1.0


def n_qubits_of(state: np.ndarray) -> int:
    n = int(state.shape[0]).bit_length() - 1
    if state.ndim != 1 or (1 << n) != state.shape[0]:
        raise ValueError(f"state length {state.shape} is not a power of two")
    return n


def zero_state(n_qubits: int) -> np.ndarray:
    psi = np.zeros(1 << n_qubits, dtype=complex)
    psi[0] = 1.0
    return psi


def basis_state(bits, n_qubits: int | None = None) -> np.ndarray:
    """Basis state from an integer index or a qubit-ordered bit string/list."""
    if isinstance(bits, (int, np.integer)):
        idx = int(bits)
    else:
        bits = [int(b) for b in bits]
        n_qubits = len(bits) if n_qubits is None else n_qubits
        idx = sum(b << q for q, b in enumerate(bits))
    psi = np.zeros(1 << n_qubits, dtype=complex)
    psi[idx] = 1.0
    return psi


def _apply_matrix(state: np.ndarray, mat: np.ndarray, qubits) -> np.ndarray:
    n = n_qubits_of(state)
    k = len(qubits)
    axes = [n - 1 - q for q in qubits]
    t = np.moveaxis(state.reshape([2] * n), axes, range(k))
    shape = t.shape
    t = (mat @ t.reshape(1 << k, -1)).reshape(shape)
    return np.moveaxis(t, range(k), axes).reshape(-1)


def _apply_cpauli(state: np.ndarray, control: int, key) -> np.ndarray:
    P = PauliSum({key: 1.0})
    idx = np.arange(state.shape[0])
    on = (idx >> control) & 1 == 1
    moved = P.apply(state)
    return np.where(on, moved, state)


def apply(state: np.ndarray, gate: Gate) -> np.ndarray:
    """Apply a unitary gate and return the new state (input untouched)."""
    n = n_qubits_of(state)
    for q in gate.support():
        if not 0 <= q < n:
            raise IndexError(f"{gate.kind} operand {q} out of range for {n} qubits")
    if gate.kind == "Evolve":
        return evolve(state, gate.payload, gate.param)
    if gate.kind == "CPauli":
        return _apply_cpauli(state, gate.qubits[0], gate.payload)
    if not gate.is_unitary:
        raise ValueError(f"{gate.kind} is not unitary; use project/measure_qubit")
    return _apply_matrix(np.asarray(state, dtype=complex), gate.matrix(), gate.qubits)


def _bit_mask(n: int, q: int, outcome: int) -> np.ndarray:
    idx = np.arange(1 << n)
    return ((idx >> q) & 1) == outcome


def outcome_probability(state: np.ndarray, q: int, outcome: int) -> float:
    n = n_qubits_of(state)
    return float(np.sum(np.abs(state[_bit_mask(n, q, outcome)]) ** 2))


def project(state: np.ndarray, q: int, outcome: int):
    """Project qubit ``q`` onto ``|outcome>``.

    Returns ``(normalized_state, norm)`` where ``norm**2`` is the branch
    probability, or ``(None, norm)`` for a zero branch (``norm < 1e-8``).
    """
    n = n_qubits_of(state)
    if not 0 <= q < n:
        raise IndexError(f"qubit {q} out of range")
    out = np.where(_bit_mask(n, q, int(outcome)), state, 0)
    norm = float(np.linalg.norm(out))
    if norm < ZERO_BRANCH_TOL:
        return None, norm
    return out / norm, norm


def measure_qubit(state: np.ndarray, q: int, rng: np.random.Generator):
    """Born-rule measurement of qubit ``q``: ``(outcome, post_state, prob)``."""
    p1 = outcome_probability(state, q, 1)
    p0 = outcome_probability(state, q, 0)
    if p0 < CORRUPT_TOL and p1 < CORRUPT_TOL:
        raise ValueError("both measurement outcomes have vanishing probability")
    outcome = int(rng.random() < p1 / (p0 + p1))
    post, _ = project(state, q, outcome)
    return outcome, post, (p1 if outcome else p0)


def expectation(state: np.ndarray, obs: PauliSum) -> complex:
    n = n_qubits_of(state)
    if obs.n_qubits > n:
        raise ValueError(f"{obs.n_qubits}-qubit observable on a {n}-qubit state")
    return obs.expectation(state)


class Propagator:
    """Cached eigendecomposition of a Hermitian :class:`PauliSum`.

    The matrix is split into its connected blocks (charge-spin sectors for the
    impurity model) and each block is diagonalized densely.
    """

    def __init__(self, h: PauliSum):
        if h.n_qubits > EVOLVE_MAX_QUBITS:
            raise ValueError(f"time evolution limited to {EVOLVE_MAX_QUBITS} qubits")
        if not h.is_hermitian():
            raise ValueError("evolution generator must be Hermitian")
        self.n_qubits = h.n_qubits
        dim = 1 << h.n_qubits
        M = h.to_sparse().tocsr()
        n_comp, labels = connected_components(abs(M) > 0, directed=False)
        self.blocks = []
        dense_V = np.zeros((dim, dim), dtype=complex) if dim <= 1024 else None
        energies = np.zeros(dim)
        for c in range(n_comp):
            idx = np.flatnonzero(labels == c)
            w, v = sla.eigh(M[idx][:, idx].toarray())
            self.blocks.append((idx, w, v))
            if dense_V is not None:
                dense_V[np.ix_(idx, idx)] = v
                energies[idx] = w
        self.dense = (energies, dense_V) if dense_V is not None else None

    def apply(self, state: np.ndarray, t: float) -> np.ndarray:
        dim = 1 << self.n_qubits
        rows = np.asarray(state, dtype=complex).reshape(-1, dim)
        if self.dense is not None:
            w, V = self.dense
            out = ((rows @ V.conj()) * np.exp(-1j * w * t)) @ V.T
        else:
            out = np.empty_like(rows)
            for idx, w, v in self.blocks:
                out[:, idx] = ((rows[:, idx] @ v.conj()) * np.exp(-1j * w * t)) @ v.T
        return out.reshape(-1)


@lru_cache(maxsize=64)
def propagator(h: PauliSum) -> Propagator:
    return Propagator(h)


def evolve(state: np.ndarray, h: PauliSum, t: float) -> np.ndarray:
    """``exp(-i h t)|state>``; ``h`` acts on the low ``h.n_qubits`` qubits."""
    if not np.isfinite(t):
        raise ValueError("evolution time must be finite")
    n = n_qubits_of(state)
    if h.n_qubits > n:
        raise ValueError("Hamiltonian acts on more qubits than the state has")
    if t == 0:
        return np.array(state, dtype=complex)
    return propagator(h).apply(state, t)


def probabilities(state: np.ndarray) -> np.ndarray:
    p = np.abs(state) ** 2
    return p / p.sum()


def bitstring(index: int, n_qubits: int) -> str:
    """Qubit-ordered bit string: character ``q`` is the bit of qubit ``q``."""
    return "".join(str((index >> q) & 1) for q in range(n_qubits))


def sample(state: np.ndarray, shots: int, rng: np.random.Generator) -> dict[str, int]:
    """Multinomial readout of all qubits; keys are qubit-ordered bit strings."""
    n = n_qubits_of(state)
    counts = rng.multinomial(shots, probabilities(state))
    return {bitstring(i, n): int(c) for i, c in enumerate(counts) if c}


def sample_indices(state: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Per-shot basis indices (in draw order)."""
    return rng.choice(state.shape[0], size=shots, p=probabilities(state))


def compile_gate(gate: Gate) -> list[Gate]:
    """Lower ``ZZ``/``Givens`` to CNOT plus single-qubit rotations.

    ``ZZ(t) = CNOT . Rz(t) . CNOT``; ``Givens(t)`` uses a two-CNOT template
    conjugated by ``Rx(pi/2)`` and ``S`` layers, exact up to global phase.
    """
    a, b = gate.qubits[:2]
    t = gate.param
    if gate.kind == "ZZ":
        return [Gate("CNOT", (a, b)), Gate("Rz", (b,), t), Gate("CNOT", (a, b))]
    if gate.kind == "Givens":
        # exp(i t (XX+YY)/2) in the Rx(pi/2) frame, then an S-frame turns it real
        return [
            Gate("S", (a,)),
            Gate("Rx", (a,), np.pi / 2), Gate("Rx", (b,), np.pi / 2),
            Gate("CNOT", (a, b)),
            Gate("Rx", (a,), -t), Gate("Rz", (b,), -t),
            Gate("CNOT", (a, b)),
            Gate("Rx", (a,), -np.pi / 2), Gate("Rx", (b,), -np.pi / 2),
            Gate("Sdg", (a,)),
        ]
    raise ValueError(f"compile_gate supports Givens and ZZ, not {gate.kind}")


def run_circuit(circuit: Circuit, state: np.ndarray | None = None,
                rng: np.random.Generator | None = None):
    """Execute ``circuit``; returns ``(state, RunRecord)``.

    ``Project`` gates renormalize and multiply their branch probability into
    ``record.survival``; a zero branch returns ``(None, record)`` with zero
    survival. ``Measure`` gates need ``rng``.
    """
    psi = zero_state(circuit.n_qubits) if state is None else np.array(state, dtype=complex)
    if n_qubits_of(psi) != circuit.n_qubits:
        raise ValueError("initial state does not match circuit width")
    rec = RunRecord()
    for g in circuit.gates:
        if g.kind == "Project":
            psi, norm = project(psi, g.qubits[0], int(g.param))
            rec.branch_norms.append(norm)
            rec.survival *= norm ** 2
            if psi is None:
                rec.survival = 0.0
                return None, rec
        elif g.kind == "Measure":
            if rng is None:
                raise ValueError("Measure gates need an rng")
            outcome, psi, _ = measure_qubit(psi, g.qubits[0], rng)
            rec.outcomes.append(outcome)
        else:
            psi = apply(psi, g)
    return psi, rec


def circuit_unitary(gates, n_qubits: int) -> np.ndarray:
    """Dense unitary of a gate list (columns are images of basis states)."""
    dim = 1 << n_qubits
    U = np.empty((dim, dim), dtype=complex)
    for i in range(dim):
        psi = basis_state(i, n_qubits)
        for g in gates:
            psi = apply(psi, g)
        U[:, i] = psi
    return U


def export_amplitudes(state: np.ndarray, path) -> None:
    """Write amplitudes as little-endian (re, im) float64 pairs."""
    with open(path, "wb") as fh:
        fh.write(np.asarray(state, dtype="<c16").tobytes())


def import_amplitudes(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return np.frombuffer(fh.read(), dtype="<c16").astype(complex)
