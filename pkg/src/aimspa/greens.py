"""Frequency-domain impurity Green's functions from Lanczos chains.

``G^R(z) = n_+ g_+(z) - n_- g_-(-z)`` where ``g_pm`` are diagonal resolvent
elements of ``H - E_GS`` in the one-particle-added/removed states and
``n_+ = ||c^dag|GS>||^2``, ``n_- = ||c|GS>||^2``. Chains store ``|b_n|``;
only ``b_n**2`` enters the continued fraction, so the sign is immaterial.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import least_squares

from .ansatz import SectorAnsatz, build_spa, build_topology
from .model import (AimParams, Sector, build_hamiltonian, exact_diagonalize, full_spectrum,
                    jw_ladder, sector_basis)
from .pauli import PauliSum
from .sim import ZERO_BRANCH_TOL, n_qubits_of

log = logging.getLogger(__name__)

B_TOL = 1e-8
BREAKDOWN_TOL = 1e-10
POLE_TOL = 1e-300
STAGNATION_TOL = 1e-6
DEFAULT_ETA = 0.1
BRANCHES = (1, -1)


def default_omega(lo: float = -20.0, hi: float = 20.0, step: float = 0.05) -> np.ndarray:
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n + 1)


@dataclass
class LanczosChain:
    a: list[float] = field(default_factory=list)
    b: list[float] = field(default_factory=list)
    termination: str = "max_dim"

    def __post_init__(self):
        if len(self.a) != len(self.b):
            raise ValueError("chain needs |a| == |b|")
        if self.b and self.b[0] != 0:
            raise ValueError("b_0 must be 0")

    def __len__(self):
        return len(self.a)

    def tridiagonal(self) -> np.ndarray:
        T = np.diag(np.asarray(self.a, dtype=float))
        off = np.asarray(self.b[1:], dtype=float)
        return T + np.diag(off, 1) + np.diag(off, -1)

    def to_dict(self) -> dict:
        return {"a": [float(x) for x in self.a], "b": [float(x) for x in self.b],
                "termination": self.termination}


def _operator(h, dim: int):
    if isinstance(h, PauliSum):
        return h.to_sparse(int(np.log2(dim))).tocsr()
    if sp.issparse(h):
        return h.tocsr()
    return np.asarray(h)


def classical_lanczos(h_tilde, phi: np.ndarray, max_n: int | None = None,
                      b_tol: float = B_TOL, keep_vectors: bool = False):
    """Lanczos tridiagonalization of ``h_tilde`` from ``phi``.

    Full reorthogonalization against all stored vectors. Stops once
    ``b_n < b_tol`` or the Krylov dimension (``max_n``, default the vector
    length) is reached. With ``keep_vectors`` returns ``(chain, vectors)``.
    """
    phi = np.asarray(phi, dtype=complex)
    if abs(np.linalg.norm(phi) - 1.0) > 1e-8:
        raise ValueError("phi must be normalized")
    H = _operator(h_tilde, len(phi))
    max_n = len(phi) if max_n is None else int(max_n)
    chain = LanczosChain()
    vecs = [phi]
    b_prev = 0.0
    chain.termination = "max_dim"
    while True:
        chi = vecs[-1]
        w = H @ chi
        a = float(np.vdot(chi, w).real)
        chain.a.append(a)
        chain.b.append(b_prev)
        if len(chain.a) >= max_n:
            break
        # three-term formula as a breakdown sentinel
        b2 = float(np.vdot(w, w).real) - a * a - b_prev * b_prev
        if b2 < -BREAKDOWN_TOL * max(1.0, a * a):
            raise ArithmeticError(f"Lanczos breakdown: b^2 = {b2:.3e}")
        w = w - a * chi - (b_prev * vecs[-2] if len(vecs) > 1 else 0)
        V = np.array(vecs)
        for _ in range(2):
            w = w - V.T @ (V.conj() @ w)
        b_prev = float(np.linalg.norm(w))
        if b_prev < b_tol:
            chain.termination = "b_tolerance"
            break
        vecs.append(w / b_prev)
    return (chain, vecs) if keep_vectors else chain


def continued_fraction(chain: LanczosChain, z):
    """``1/(z - a_0 - b_1^2/(z - a_1 - ...))`` evaluated from the deepest level up."""
    if not len(chain):
        raise ValueError("empty chain")
    z = np.asarray(z, dtype=complex)
    a = chain.a
    b2 = np.asarray(chain.b, dtype=float) ** 2
    g = z - a[-1]
    for n in range(len(a) - 1, 0, -1):
        if np.any(np.abs(g) < POLE_TOL):
            raise ZeroDivisionError("continued fraction hit a pole")
        g = z - a[n - 1] - b2[n] / g
    if np.any(np.abs(g) < POLE_TOL):
        raise ZeroDivisionError("continued fraction hit a pole")
    out = 1.0 / g
    return complex(out) if out.ndim == 0 else out


def initial_krylov(gs: np.ndarray, orbital: int, branch: int):
    """``(|phi_pm>, ||f|gs>||^2)`` with ``f = c^dag`` (+1) or ``c`` (-1).

    Realized as projection of the orbital onto ``|0>`` (``|1>``), the Z string
    and an X flip. The returned norm is ``(1 -+ <Z>)/2`` computed from the
    state; a zero branch returns ``(None, norm_sq)``.
    """
    if branch not in BRANCHES:
        raise ValueError("branch must be +1 or -1")
    gs = np.asarray(gs, dtype=complex)
    n = n_qubits_of(gs)
    idx = np.arange(1 << n)
    bit = (idx >> orbital) & 1
    zval = 1 - 2 * bit
    z_exp = float(np.sum(zval * np.abs(gs) ** 2))
    norm_sq = (1.0 + branch * z_exp) / 2.0
    if norm_sq < ZERO_BRANCH_TOL:
        return None, max(norm_sq, 0.0)
    keep = bit == (0 if branch == 1 else 1)
    projected = np.where(keep, gs, 0)
    string = 1 - 2 * (np.bitwise_count(idx & ((1 << orbital) - 1)) & 1).astype(np.int64)
    out = np.zeros_like(gs)
    out[idx ^ (1 << orbital)] = string * projected
    return out / np.linalg.norm(out), norm_sq


@dataclass
class GfSamples:
    omega: np.ndarray
    eta: float
    values: np.ndarray
    norm_plus: float
    norm_minus: float
    provenance: str = "exact"
    chains: dict = field(default_factory=dict)

    @property
    def z(self) -> np.ndarray:
        return self.omega + 1j * self.eta

    def spectral_weight(self) -> float:
        return float(-np.trapezoid(self.values.imag, self.omega) / np.pi)

    def header(self) -> dict:
        return {"eta": self.eta, "norm_plus": self.norm_plus, "norm_minus": self.norm_minus,
                "provenance": self.provenance,
                "omega": {"min": float(self.omega[0]), "max": float(self.omega[-1]),
                          "n": len(self.omega)},
                "chains": {k: c.to_dict() for k, c in self.chains.items()}}

    def to_json(self) -> str:
        return json.dumps(self.header(), indent=2)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["omega", "re", "im"])
        for o, g in zip(self.omega, self.values):
            w.writerow([repr(float(o)), repr(float(g.real)), repr(float(g.imag))])
        return _emit(buf.getvalue(), path)


def _emit(text: str, path) -> str:
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def overlay_csv(exact: GfSamples, variational: GfSamples, path=None) -> str:
    _check_grid(exact, variational)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["omega", "re_exact", "im_exact", "re_var", "im_var"])
    for o, g, v in zip(exact.omega, exact.values, variational.values):
        w.writerow([repr(float(x)) for x in (o, g.real, g.imag, v.real, v.imag)])
    return _emit(buf.getvalue(), path)


def assemble_gf(chains: dict, norms: dict, omega, eta: float, provenance: str) -> GfSamples:
    """``n_+ g_+(z) - n_- g_-(-z)`` at ``z = omega + i eta``; missing branches contribute 0."""
    omega = np.asarray(omega, dtype=float)
    z = omega + 1j * eta
    g = np.zeros(len(omega), dtype=complex)
    if chains.get(1) is not None:
        g += norms[1] * continued_fraction(chains[1], z)
    if chains.get(-1) is not None:
        g -= norms[-1] * continued_fraction(chains[-1], -z)
    return GfSamples(omega, eta, g, norms[1], norms[-1], provenance,
                     {("plus" if k == 1 else "minus"): c for k, c in chains.items() if c is not None})


def _ground(params: AimParams, gs, e_gs):
    if gs is None:
        ed = exact_diagonalize(params)
        return ed.ground_state, ed.ground_energy
    gs = np.asarray(gs, dtype=complex)
    if e_gs is None:
        e_gs = float(build_hamiltonian(params).expectation(gs).real)
    return gs, e_gs


def retarded_gf_exact(params: AimParams, orbital: int = 0, omega=None, eta: float = DEFAULT_ETA,
                      gs: np.ndarray | None = None, e_gs: float | None = None) -> GfSamples:
    """Retarded GF of ``orbital`` from classical Lanczos chains on ``H - E_GS``."""
    omega = default_omega() if omega is None else np.asarray(omega, dtype=float)
    if eta <= 0:
        raise ValueError("eta must be positive")
    gs, e_gs = _ground(params, gs, e_gs)
    nq = params.n_qubits
    Ht = build_hamiltonian(params).to_sparse() - e_gs * sp.identity(1 << nq, format="csr")
    chains, norms = {}, {}
    for br in BRANCHES:
        phi, nrm = initial_krylov(gs, orbital, br)
        norms[br] = nrm
        chains[br] = None if phi is None else classical_lanczos(Ht, phi)
    return assemble_gf(chains, norms, omega, eta, "exact")


def lehmann_gf(params: AimParams, orbital: int = 0, omega=None, eta: float = DEFAULT_ETA,
               gs: np.ndarray | None = None, e_gs: float | None = None) -> GfSamples:
    """Retarded GF from the full eigendecomposition (small-system oracle)."""
    omega = default_omega() if omega is None else np.asarray(omega, dtype=float)
    gs, e_gs = _ground(params, gs, e_gs)
    nq = params.n_qubits
    w, V = full_spectrum(params)
    cdag = jw_ladder(orbital, True, nq).to_dense()
    amp_p = V.conj().T @ (cdag @ gs)
    amp_m = V.conj().T @ (cdag.conj().T @ gs)
    z = omega[:, None] + 1j * eta
    g = (np.abs(amp_p) ** 2 / (z - (w - e_gs))).sum(1) + (np.abs(amp_m) ** 2 / (z + (w - e_gs))).sum(1)
    return GfSamples(omega, eta, g, float(np.sum(np.abs(amp_p) ** 2)),
                     float(np.sum(np.abs(amp_m) ** 2)), "lehmann")


def _check_grid(a: GfSamples, b: GfSamples):
    if a.omega.shape != b.omega.shape or not np.allclose(a.omega, b.omega) or a.eta != b.eta:
        raise ValueError("Green's functions sampled on different grids")


def relative_error(g_var: GfSamples, g_exact: GfSamples) -> float:
    """Discrete L2 ratio ``||G_var - G_exact|| / ||G_exact||`` over the shared grid."""
    _check_grid(g_var, g_exact)
    return float(np.linalg.norm(g_var.values - g_exact.values) / np.linalg.norm(g_exact.values))


@dataclass
class VariationalChainReport:
    chain: LanczosChain
    states: list
    costs: list
    failed_iterations: list
    drift: float
    norm_sq: float
    sector: Sector | None


def _state_sector(state: np.ndarray) -> Sector:
    n = n_qubits_of(state)
    half = n // 2
    idx = np.flatnonzero(np.abs(state) > 1e-10)
    up = np.bitwise_count(idx & ((1 << half) - 1))
    dn = np.bitwise_count(idx >> half)
    if np.ptp(up) or np.ptp(dn):
        raise ValueError("state is not a charge-spin eigenstate")
    return Sector.from_occupations(int(up[0]), int(dn[0]))


def variational_lanczos(params: AimParams, branch: int, orbital: int = 0, d: int | None = None,
                        lambdas=(1.0, 1.0, 1.0), rng: np.random.Generator | None = None, *,
                        gs: np.ndarray | None = None, e_gs: float | None = None,
                        mode: str = "square_nn", restarts: int = 4, max_n: int | None = None,
                        b_tol: float = B_TOL) -> VariationalChainReport:
    """Lanczos chain whose vectors ``|chi_n>`` are SPA states in the shifted sector.

    Each step targets ``|b_n|`` from the previous variational vectors and
    minimizes ``l1 (|<theta|H~|chi_{n-1}>| - |b_n|)^2 + l2 |<theta|chi_{n-1}>|^2
    + l3 |<theta|chi_{n-2}>|^2``. Parameters are warm-started from the
    previous step and then drawn uniformly from ``[-pi, pi]``. Iterations whose
    best cost stays above ``1e-6`` are recorded in ``failed_iterations``.
    """
    rng = np.random.default_rng() if rng is None else rng
    gs, e_gs = _ground(params, gs, e_gs)
    nq = params.n_qubits
    d = params.n_sites if d is None else d
    l1, l2, l3 = lambdas
    phi, norm_sq = initial_krylov(gs, orbital, branch)
    if phi is None:
        return VariationalChainReport(None, [], [], [], 0.0, norm_sq, None)
    sector = _state_sector(phi)
    spin = "up" if orbital < params.n_sites else "down"
    if sector != _state_sector(gs).shifted(branch, spin):
        raise ValueError("ground state and branch state sectors are inconsistent")
    basis = sector_basis(sector, nq)
    dim = len(basis)
    Hs = build_hamiltonian(params).to_sparse()[basis][:, basis].toarray().real - e_gs * np.eye(dim)
    max_n = dim if max_n is None else min(int(max_n), dim)

    spa = build_spa(build_topology(params.n_imp, params.n_bath, mode), d, sector)
    ans = SectorAnsatz(spa)
    chi = [phi[basis]]
    chain = LanczosChain([float(np.vdot(chi[0], Hs @ chi[0]).real)], [0.0], "max_dim")
    costs, failed = [0.0], []
    theta_prev = rng.uniform(-0.1, 0.1, spa.n_params)

    while len(chain) < max_n:
        prev = chi[-1]
        hprev = Hs @ prev
        b2 = float(np.vdot(hprev, hprev).real) - chain.a[-1] ** 2 - chain.b[-1] ** 2
        if b2 < -BREAKDOWN_TOL * max(1.0, chain.a[-1] ** 2):
            raise ArithmeticError(f"variational Lanczos breakdown: b^2 = {b2:.3e}")
        b_target = float(np.sqrt(max(b2, 0.0)))
        if b_target < b_tol:
            chain.termination = "b_tolerance"
            break
        vs = np.stack([hprev, prev, chi[-2] if len(chi) > 1 else np.zeros(dim)], axis=1)

        w = np.sqrt([l1, l2, l2, l3, l3])

        def residuals(theta):
            o = vs.conj().T @ ans.state(theta)
            return w * np.array([abs(o[0]) - b_target, o[1].real, o[1].imag, o[2].real, o[2].imag])

        def jacobian(theta):
            psi, J = ans.overlap_grads(theta, vs)
            o = vs.conj().T @ psi
            mag = max(abs(o[0]), 1e-300)
            rows = [(o[0].conj() * J[:, 0]).real / mag, J[:, 1].real, J[:, 1].imag,
                    J[:, 2].real, J[:, 2].imag]
            return w[:, None] * np.array(rows)

        # the cost is a sum of squares, so a Gauss-Newton type solver converges fast
        best_x, best_f = None, np.inf
        for k in range(max(restarts, 1)):
            x0 = theta_prev if k == 0 else rng.uniform(-np.pi, np.pi, spa.n_params)
            res = least_squares(residuals, x0, jac=jacobian, method="trf",
                                ftol=1e-15, xtol=1e-15, gtol=1e-15, max_nfev=400)
            f = float(np.sum(res.fun ** 2))
            if f < best_f:
                best_x, best_f = res.x, f
            if best_f < 1e-12:
                break
        n = len(chain)
        if best_f > STAGNATION_TOL:
            failed.append(n)
            log.info("variational Lanczos step %d stagnated at F=%.2e", n, best_f)
        theta_prev = best_x
        psi = ans.state(best_x)
        chi.append(psi)
        costs.append(float(best_f))
        chain.a.append(float(np.vdot(psi, Hs @ psi).real))
        chain.b.append(b_target)
    else:
        chain.termination = "max_dim" if max_n == dim else "max_iter"

    drift = 0.0
    for i in range(len(chi)):
        for j in range(i - 2):
            drift = max(drift, abs(np.vdot(chi[j], chi[i])))
    states = []
    for c in chi:
        full = np.zeros(1 << nq, dtype=complex)
        full[basis] = c
        states.append(full)
    return VariationalChainReport(chain, states, costs, failed, float(drift), norm_sq, sector)


def retarded_gf_variational(params: AimParams, orbital: int = 0, omega=None,
                            eta: float = DEFAULT_ETA, d: int | None = None,
                            rng: np.random.Generator | None = None, **kwargs):
    """``(GfSamples, reports)`` from variational chains on both branches."""
    omega = default_omega() if omega is None else np.asarray(omega, dtype=float)
    rng = np.random.default_rng() if rng is None else rng
    chains, norms, reports = {}, {}, {}
    for br in BRANCHES:
        rep = variational_lanczos(params, br, orbital, d, rng=rng, **kwargs)
        reports[br] = rep
        chains[br] = rep.chain
        norms[br] = rep.norm_sq
    return assemble_gf(chains, norms, omega, eta, "variational"), reports
