"""Pauli-string algebra on little-endian qubit registers.

A Pauli string is stored as a sorted tuple of ``(qubit, letter)`` pairs with
letters in ``"XYZ"``; the identity is the empty tuple. Qubit ``q`` is bit ``q``
of the computational-basis index.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

COEFF_TOL = 1e-14

_PRODUCT = {
    ("X", "X"): (1, None), ("Y", "Y"): (1, None), ("Z", "Z"): (1, None),
    ("X", "Y"): (1j, "Z"), ("Y", "X"): (-1j, "Z"),
    ("Y", "Z"): (1j, "X"), ("Z", "Y"): (-1j, "X"),
    ("Z", "X"): (1j, "Y"), ("X", "Z"): (-1j, "Y"),
}

PauliKey = tuple[tuple[int, str], ...]


def _check_key(factors) -> PauliKey:
    if isinstance(factors, Mapping):
        items = list(factors.items())
    else:
        items = list(factors)
    seen = set()
    for q, p in items:
        if p not in ("X", "Y", "Z"):
            raise ValueError(f"unknown Pauli letter {p!r}")
        if q < 0:
            raise ValueError(f"negative qubit index {q}")
        if q in seen:
            raise ValueError(f"qubit {q} appears twice in a Pauli string")
        seen.add(q)
    return tuple(sorted((int(q), p) for q, p in items))


def _mul_keys(a: PauliKey, b: PauliKey) -> tuple[complex, PauliKey]:
    phase = 1 + 0j
    out = dict(a)
    for q, p in b:
        if q in out:
            ph, r = _PRODUCT[(out[q], p)]
            phase *= ph
            if r is None:
                del out[q]
            else:
                out[q] = r
        else:
            out[q] = p
    return phase, tuple(sorted(out.items()))


def _masks(key: PauliKey) -> tuple[int, int, int]:
    x = z = 0
    n_y = 0
    for q, p in key:
        if p in ("X", "Y"):
            x |= 1 << q
        if p in ("Z", "Y"):
            z |= 1 << q
        if p == "Y":
            n_y += 1
    return x, z, n_y


@dataclass(frozen=True)
class PauliTerm:
    coeff: complex
    factors: PauliKey

    def __post_init__(self):
        object.__setattr__(self, "factors", _check_key(self.factors))
        object.__setattr__(self, "coeff", complex(self.coeff))

    @property
    def is_identity(self) -> bool:
        return not self.factors

    @property
    def is_diagonal(self) -> bool:
        return all(p == "Z" for _, p in self.factors)

    def __str__(self):
        s = " ".join(f"{p}{q}" for q, p in self.factors) or "I"
        return f"({self.coeff:.6g}) {s}"


class PauliSum:
    """Canonical weighted sum of Pauli strings.

    Like terms are merged and terms with ``|coeff| <= 1e-14`` dropped on
    construction, so two equal operators always compare equal.
    """

    def __init__(self, terms: Mapping[PauliKey, complex] | Iterable[PauliTerm] = (),
                 n_qubits: int | None = None):
        acc: dict[PauliKey, complex] = {}
        if isinstance(terms, Mapping):
            items = ((_check_key(k), complex(v)) for k, v in terms.items())
        else:
            items = ((t.factors, t.coeff) for t in terms)
        for k, v in items:
            acc[k] = acc.get(k, 0j) + v
        self._terms = {k: acc[k] for k in sorted(acc, key=_sort_key) if abs(acc[k]) > COEFF_TOL}
        top = max((q for k in self._terms for q, _ in k), default=-1) + 1
        if n_qubits is None:
            n_qubits = top
        elif n_qubits < top:
            raise ValueError(f"n_qubits={n_qubits} too small for terms acting on qubit {top - 1}")
        self.n_qubits = int(n_qubits)

    # construction helpers
    @classmethod
    def identity(cls, n_qubits: int, coeff: complex = 1.0) -> PauliSum:
        return cls({(): coeff}, n_qubits)

    @classmethod
    def single(cls, factors, coeff: complex = 1.0, n_qubits: int | None = None) -> PauliSum:
        return cls({_check_key(factors): coeff}, n_qubits)

    @classmethod
    def from_string(cls, label: str, coeff: complex = 1.0, n_qubits: int | None = None) -> PauliSum:
        """``"X0 Z2"`` style label; ``"I"`` or ``""`` is the identity."""
        factors = []
        for tok in label.split():
            if tok == "I":
                continue
            factors.append((int(tok[1:]), tok[0]))
        return cls.single(factors, coeff, n_qubits)

    # mapping-like access
    @property
    def terms(self) -> list[PauliTerm]:
        return [PauliTerm(v, k) for k, v in self._terms.items()]

    def items(self):
        return self._terms.items()

    def coefficient(self, factors) -> complex:
        return self._terms.get(_check_key(factors), 0j)

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self.terms)

    def __eq__(self, other):
        if not isinstance(other, PauliSum):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(tuple(self._terms.items()))

    def __repr__(self):
        body = " + ".join(str(t) for t in self.terms) or "0"
        return f"PauliSum[{self.n_qubits}]({body})"

    def allclose(self, other: PauliSum, atol: float = 1e-12) -> bool:
        keys = set(self._terms) | set(other._terms)
        return all(abs(self._terms.get(k, 0) - other._terms.get(k, 0)) <= atol for k in keys)

    # algebra
    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = PauliSum.identity(self.n_qubits, other)
        acc = dict(self._terms)
        for k, v in other._terms.items():
            acc[k] = acc.get(k, 0j) + v
        return PauliSum(acc, max(self.n_qubits, other.n_qubits))

    __radd__ = __add__

    def __neg__(self):
        return PauliSum({k: -v for k, v in self._terms.items()}, self.n_qubits)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return PauliSum({k: v * other for k, v in self._terms.items()}, self.n_qubits)
        if not isinstance(other, PauliSum):
            return NotImplemented
        acc: dict[PauliKey, complex] = {}
        for ka, va in self._terms.items():
            for kb, vb in other._terms.items():
                ph, k = _mul_keys(ka, kb)
                acc[k] = acc.get(k, 0j) + ph * va * vb
        return PauliSum(acc, max(self.n_qubits, other.n_qubits))

    def __rmul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return self * other
        return NotImplemented

    __matmul__ = __mul__

    def adjoint(self) -> PauliSum:
        return PauliSum({k: np.conj(v) for k, v in self._terms.items()}, self.n_qubits)

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return all(abs(v.imag) <= atol for v in self._terms.values())

    def commutator(self, other: PauliSum) -> PauliSum:
        return self * other - other * self

    def with_n_qubits(self, n_qubits: int) -> PauliSum:
        return PauliSum(self._terms, n_qubits)

    # numerics
    @cached_property
    def _compiled(self):
        xs, zs, phases = [], [], []
        for k, v in self._terms.items():
            x, z, n_y = _masks(k)
            xs.append(x)
            zs.append(z)
            phases.append(v * (1j ** n_y))
        return np.array(xs, dtype=np.int64), np.array(zs, dtype=np.int64), np.array(phases)

    def apply(self, state: np.ndarray) -> np.ndarray:
        """Return ``O|state>`` without building a matrix.

        ``state`` may carry extra high qubits beyond ``n_qubits``; the
        operator then acts on the low register.
        """
        state = np.asarray(state)
        dim = state.shape[0]
        if dim < (1 << self.n_qubits):
            raise ValueError(f"state of dimension {dim} too small for {self.n_qubits}-qubit operator")
        idx = np.arange(dim, dtype=np.int64)
        out = np.zeros(dim, dtype=complex)
        xs, zs, phases = self._compiled
        for x, z, ph in zip(xs, zs, phases):
            sign = 1 - 2 * (np.bitwise_count(idx & z) & 1).astype(np.int8)
            out[idx ^ x] += ph * sign * state
        return out

    def expectation(self, state: np.ndarray) -> complex:
        state = np.asarray(state)
        return complex(np.vdot(state, self.apply(state)))

    def to_sparse(self, n_qubits: int | None = None) -> sp.csr_matrix:
        n = self.n_qubits if n_qubits is None else n_qubits
        dim = 1 << n
        idx = np.arange(dim, dtype=np.int64)
        rows, cols, vals = [], [], []
        xs, zs, phases = self._compiled
        for x, z, ph in zip(xs, zs, phases):
            sign = 1 - 2 * (np.bitwise_count(idx & z) & 1).astype(np.int8)
            rows.append(idx ^ x)
            cols.append(idx)
            vals.append(ph * sign)
        if not rows:
            return sp.csr_matrix((dim, dim), dtype=complex)
        m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(dim, dim))
        return m.tocsr()

    def to_dense(self, n_qubits: int | None = None) -> np.ndarray:
        return self.to_sparse(n_qubits).toarray()

    def to_json(self) -> list[dict]:
        return [{"coeff": [v.real, v.imag], "factors": "".join(f"{p}{q} " for q, p in k).strip() or "I"}
                for k, v in self._terms.items()]


def _sort_key(k: PauliKey):
    return (len(k), k)
