"""Anderson impurity model: parameters, Jordan-Wigner image, sectors, ED oracle.

Orbital layout on ``Nq = 2 * (n_imp + n_bath)`` qubits: site ``s`` (impurities
first, then bath sites) has its spin-up orbital on qubit ``s`` and its
spin-down orbital on qubit ``s + Nq // 2``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .pauli import PauliSum

DEGENERACY_TOL = 1e-9
ED_MAX_QUBITS = 16
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class AimParams:
    """Hamiltonian parameters (eV) of an ``n_imp``-impurity, ``n_bath``-bath AIM."""

    h: np.ndarray
    U: np.ndarray
    V: np.ndarray
    eps: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.h, dtype=float))
        U = np.atleast_1d(np.asarray(self.U, dtype=float))
        eps = np.atleast_1d(np.asarray(self.eps, dtype=float)) if np.size(self.eps) else np.zeros(0)
        V = np.asarray(self.V, dtype=float).reshape(h.shape[0], eps.shape[0])
        n_imp = h.shape[0]
        if n_imp < 1:
            raise ValueError("at least one impurity site is required")
        if h.shape != (n_imp, n_imp):
            raise ValueError(f"h must be square, got {h.shape}")
        if not np.allclose(h, h.T, atol=1e-12, rtol=0):
            raise ValueError("h must be symmetric")
        if U.shape != (n_imp,):
            raise ValueError(f"U must have length {n_imp}, got {U.shape}")
        for arr in (h, U, V, eps):
            arr.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "eps", eps)

    @property
    def n_imp(self) -> int:
        return self.h.shape[0]

    @property
    def n_bath(self) -> int:
        return self.eps.shape[0]

    @property
    def n_sites(self) -> int:
        return self.n_imp + self.n_bath

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_sites

    def __eq__(self, other):
        if not isinstance(other, AimParams):
            return NotImplemented
        return (self.seed == other.seed and all(
            np.array_equal(a, b) for a, b in
            ((self.h, other.h), (self.U, other.U), (self.V, other.V), (self.eps, other.eps))))

    def __hash__(self):
        return hash((self.seed, self.h.tobytes(), self.U.tobytes(), self.V.tobytes(), self.eps.tobytes()))

    def orbital(self, site: int, spin: str = "up") -> int:
        """Qubit index of ``site`` with ``spin`` in {"up", "down"}."""
        if not 0 <= site < self.n_sites:
            raise IndexError(f"site {site} out of range")
        return site if spin == "up" else site + self.n_sites

    def to_dict(self) -> dict:
        return {
            "n_imp": self.n_imp,
            "n_bath": self.n_bath,
            "h": self.h.tolist(),
            "U": self.U.tolist(),
            "V": self.V.tolist(),
            "eps": self.eps.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> AimParams:
        n_imp, n_bath = int(doc["n_imp"]), int(doc["n_bath"])
        V = np.asarray(doc["V"], dtype=float).reshape(n_imp, n_bath)
        p = cls(h=doc["h"], U=doc["U"], V=V, eps=np.asarray(doc["eps"], dtype=float).reshape(n_bath),
                seed=doc.get("seed"))
        if p.n_imp != n_imp or p.n_bath != n_bath:
            raise ValueError("declared site counts disagree with array shapes")
        return p

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text_or_path) -> AimParams:
        p = Path(str(text_or_path))
        text = p.read_text() if p.suffix == ".json" and p.exists() else str(text_or_path)
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, order=True)
class Sector:
    """Charge-spin label ``(N, Sz)`` with ``Sz = N_up - N_down`` (integer)."""

    n_total: int
    s_z: int

    def __post_init__(self):
        if (self.n_total + self.s_z) % 2:
            raise ValueError(f"N={self.n_total} and Sz={self.s_z} must have equal parity")
        if self.n_up < 0 or self.n_down < 0:
            raise ValueError(f"invalid sector (N={self.n_total}, Sz={self.s_z})")

    @property
    def n_up(self) -> int:
        return (self.n_total + self.s_z) // 2

    @property
    def n_down(self) -> int:
        return (self.n_total - self.s_z) // 2

    @classmethod
    def from_occupations(cls, n_up: int, n_down: int) -> Sector:
        return cls(n_up + n_down, n_up - n_down)

    def validate(self, n_qubits: int) -> Sector:
        half = n_qubits // 2
        if self.n_up > half or self.n_down > half:
            raise ValueError(f"sector {self} does not fit {n_qubits} qubits")
        return self

    def flipped(self) -> Sector:
        return Sector(self.n_total, -self.s_z)

    def shifted(self, branch: int, spin: str) -> Sector:
        """Sector reached by adding (branch=+1) or removing (-1) one ``spin`` electron."""
        ds = 1 if spin == "up" else -1
        return Sector(self.n_total + branch, self.s_z + branch * ds)

    def as_tuple(self) -> tuple[int, int]:
        return (self.n_total, self.s_z)

    def __str__(self):
        return f"(N={self.n_total}, Sz={self.s_z})"


@dataclass
class EdResult:
    ground_energy: float
    ground_state: np.ndarray
    ground_sector: Sector
    degenerate: bool
    gap: float
    sector_energies: dict = field(default_factory=dict)


def sample_params(seed: int, n_imp: int = 1, n_bath: int = 1) -> AimParams:
    """Draw a random AIM from the uniform ensemble used for the depth sweeps.

    Draw order from ``numpy.random.default_rng(seed)``: the full ``h`` matrix,
    ``U``, ``V``, ``eps``. ``h`` is symmetrized by copying its upper triangle
    onto the lower one, so every entry stays in [-5, 5].
    """
    if n_imp < 1 or n_bath < 1:
        raise ValueError("sample_params needs n_imp >= 1 and n_bath >= 1")
    rng = np.random.default_rng(seed)
    h = rng.uniform(-5.0, 5.0, size=(n_imp, n_imp))
    h = np.triu(h) + np.triu(h, 1).T
    U = rng.uniform(1.0, 10.0, size=n_imp)
    V = rng.uniform(-5.0, 5.0, size=(n_imp, n_bath))
    eps = rng.uniform(-5.0, 5.0, size=n_bath)
    return AimParams(h=h, U=U, V=V, eps=eps, seed=int(seed))


def jw_ladder(orbital: int, dagger: bool, n_qubits: int) -> PauliSum:
    """Jordan-Wigner image of ``c_orbital`` (or its adjoint when ``dagger``)."""
    if not 0 <= orbital < n_qubits:
        raise IndexError(f"orbital {orbital} out of range for {n_qubits} qubits")
    zs = [(q, "Z") for q in range(orbital)]
    sign = -0.5j if dagger else 0.5j
    return PauliSum({tuple(zs + [(orbital, "X")]): 0.5, tuple(zs + [(orbital, "Y")]): sign}, n_qubits)


def number_op(orbital: int, n_qubits: int) -> PauliSum:
    return PauliSum({(): 0.5, ((orbital, "Z"),): -0.5}, n_qubits)


def _hop(p: int, q: int, t: float, n_qubits: int) -> PauliSum:
    """``t (c_p^dag c_q + c_q^dag c_p)`` for p != q."""
    cp = jw_ladder(p, True, n_qubits) * jw_ladder(q, False, n_qubits)
    return (cp + cp.adjoint()) * t


def build_hamiltonian(params: AimParams) -> PauliSum:
    """Qubit Hamiltonian ``H_imp + H_hyb + H_bath`` including its identity offset."""
    return _build_hamiltonian_cached(params)


@lru_cache(maxsize=256)
def _build_hamiltonian_cached(params: AimParams) -> PauliSum:
    nq = params.n_qubits
    L = params.n_sites
    H = PauliSum({}, nq)
    for spin_off in (0, L):
        for i in range(params.n_imp):
            H = H + number_op(i + spin_off, nq) * params.h[i, i]
            for j in range(i + 1, params.n_imp):
                if params.h[i, j] != 0.0:
                    H = H + _hop(i + spin_off, j + spin_off, params.h[i, j], nq)
            for b in range(params.n_bath):
                if params.V[i, b] != 0.0:
                    H = H + _hop(i + spin_off, params.n_imp + b + spin_off, params.V[i, b], nq)
        for b in range(params.n_bath):
            H = H + number_op(params.n_imp + b + spin_off, nq) * params.eps[b]
    for i in range(params.n_imp):
        H = H + number_op(i, nq) * number_op(i + L, nq) * params.U[i]
    # coefficients are real for a Hermitian real-parameter model
    return PauliSum({k: complex(v.real) for k, v in H.items()}, nq)


def symmetry_ops(n_qubits: int) -> tuple[PauliSum, PauliSum]:
    """Total charge ``n+`` and spin-z ``n-`` (= N_up - N_down) operators."""
    if n_qubits % 2:
        raise ValueError("symmetry operators need an even qubit count")
    half = n_qubits // 2
    n_plus = PauliSum({}, n_qubits)
    n_minus = PauliSum({}, n_qubits)
    for q in range(n_qubits):
        n = number_op(q, n_qubits)
        n_plus = n_plus + n
        n_minus = n_minus + (n if q < half else -n)
    return n_plus, n_minus


def sector_dimension(sector: Sector, n_qubits: int) -> int:
    sector.validate(n_qubits)
    half = n_qubits // 2
    return math.comb(half, sector.n_up) * math.comb(half, sector.n_down)


def enumerate_sectors(n_qubits: int, unique_only: bool = False, include_trivial: bool = False) -> list[Sector]:
    """Charge-spin sectors of ``n_qubits``; trivial ``N in {0, Nq}`` only on request.

    With ``unique_only`` only the ``Sz >= 0`` member of each up/down mirror
    pair is kept.
    """
    if n_qubits % 2:
        raise ValueError("sector enumeration needs an even qubit count")
    half = n_qubits // 2
    lo, hi = (0, n_qubits) if include_trivial else (1, n_qubits - 1)
    out = []
    for n in range(lo, hi + 1):
        for n_up in range(max(0, n - half), min(n, half) + 1):
            s = Sector.from_occupations(n_up, n - n_up)
            if unique_only and s.s_z < 0:
                continue
            out.append(s)
    return out


@lru_cache(maxsize=512)
def sector_basis(sector: Sector, n_qubits: int) -> np.ndarray:
    """Sorted computational-basis indices spanning ``sector``."""
    sector.validate(n_qubits)
    half = n_qubits // 2
    idx = np.arange(1 << n_qubits, dtype=np.int64)
    up = np.bitwise_count(idx & ((1 << half) - 1))
    dn = np.bitwise_count(idx >> half)
    basis = idx[(up == sector.n_up) & (dn == sector.n_down)]
    basis.setflags(write=False)
    return basis


def sector_leakage(state: np.ndarray, sector: Sector) -> float:
    """Squared amplitude mass of ``state`` outside ``sector``."""
    n = int(np.log2(state.shape[0]))
    inside = np.sum(np.abs(state[sector_basis(sector, n)]) ** 2)
    return float(max(np.sum(np.abs(state) ** 2) - inside, 0.0))


def _sector_block(H: sp.csr_matrix, basis: np.ndarray) -> sp.csr_matrix:
    return H[basis][:, basis]


def _lowest_two(block: sp.csr_matrix) -> tuple[np.ndarray, np.ndarray]:
    dim = block.shape[0]
    if dim <= 2000:
        w, v = sla.eigh(block.toarray().real)
        return w[:2], v[:, :2]
    w, v = spla.eigsh(block.real.astype(float), k=2, which="SA", tol=1e-13)
    order = np.argsort(w)
    return w[order], v[:, order]


def _sector_priority(s: Sector) -> tuple:
    return (s.n_total, abs(s.s_z), -s.s_z)


def exact_diagonalize(params: AimParams) -> EdResult:
    """Sector-blocked exact diagonalization (all sectors, including N=0 and N=Nq)."""
    nq = params.n_qubits
    if nq > ED_MAX_QUBITS:
        raise ValueError(f"exact diagonalization limited to {ED_MAX_QUBITS} qubits, got {nq}")
    H = build_hamiltonian(params).to_sparse()
    lows: list[tuple[float, Sector, np.ndarray | None]] = []
    sector_energies = {}
    for s in enumerate_sectors(nq, include_trivial=True):
        basis = sector_basis(s, nq)
        w, v = _lowest_two(_sector_block(H, basis))
        sector_energies[s.as_tuple()] = float(w[0])
        lows.append((float(w[0]), s, basis, v[:, 0]))
        if len(w) > 1:
            lows.append((float(w[1]), s, None, None))
    lows.sort(key=lambda r: r[0])
    e0 = lows[0][0]
    gap = lows[1][0] - e0 if len(lows) > 1 else np.inf
    # deterministic choice among (near-)degenerate sector minima
    ties = [r for r in lows if r[2] is not None and r[0] - e0 < DEGENERACY_TOL]
    _, sector, basis, vec = min(ties, key=lambda r: _sector_priority(r[1]))
    psi = np.zeros(1 << nq, dtype=complex)
    vec = vec / np.linalg.norm(vec)
    # fix the global sign so the largest component is positive
    k = np.argmax(np.abs(vec))
    psi[basis] = vec * np.sign(vec[k])
    return EdResult(ground_energy=e0, ground_state=psi, ground_sector=sector,
                    degenerate=bool(gap < DEGENERACY_TOL), gap=float(gap),
                    sector_energies=sector_energies)


def full_spectrum(params: AimParams) -> tuple[np.ndarray, np.ndarray]:
    """Dense eigendecomposition of the full Hamiltonian (small systems only)."""
    H = build_hamiltonian(params).to_dense()
    return np.linalg.eigh(H)


def resolvent_reference(H_tilde, phi: np.ndarray, z: complex, e_gs: float = 0.0) -> complex:
    """``<phi|(z - H_tilde)^{-1}|phi>`` by a direct linear solve.

    ``H_tilde`` may be an :class:`AimParams` (then ``H - e_gs`` is used), a
    :class:`PauliSum` or a matrix.
    """
    if isinstance(H_tilde, AimParams):
        M = build_hamiltonian(H_tilde).to_sparse() - e_gs * sp.identity(1 << H_tilde.n_qubits)
    elif isinstance(H_tilde, PauliSum):
        M = H_tilde.to_sparse(int(np.log2(len(phi)))) - e_gs * sp.identity(len(phi))
    else:
        M = sp.csr_matrix(H_tilde) - e_gs * sp.identity(len(phi))
    A = (z * sp.identity(M.shape[0], dtype=complex) - M).tocsc()
    if A.shape[0] <= 1024:
        A = A.toarray()
        try:
            x = np.linalg.solve(A, phi)
        except np.linalg.LinAlgError as exc:
            raise ZeroDivisionError("z sits on an eigenvalue of H_tilde") from exc
    else:
        x = spla.spsolve(A, phi)
    if not np.all(np.isfinite(x)):
        raise ZeroDivisionError("z sits on an eigenvalue of H_tilde")
    return complex(np.vdot(phi, x))
