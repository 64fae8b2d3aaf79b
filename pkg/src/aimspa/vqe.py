"""Sector-constrained variational ground-state search."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from .ansatz import SectorAnsatz, build_spa, build_topology
from .model import (AimParams, EdResult, Sector, build_hamiltonian, enumerate_sectors,
                    exact_diagonalize, sector_basis)

log = logging.getLogger(__name__)

GTOL = 1e-8
MAXITER = 5000
INIT_SCALE = 0.1
TIE_TOL = 1e-10
DEGENERACY_TOL = 1e-9


@dataclass
class VqeResult:
    sector: Sector
    depth: int
    theta_star: np.ndarray
    energy: float
    nit: int
    n_fev: int
    overlap_error: float
    restarts_used: int
    success: bool = True
    state: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "sector": list(self.sector.as_tuple()),
            "depth": self.depth,
            "energy": self.energy,
            "nit": self.nit,
            "n_fev": self.n_fev,
            "overlap_error": self.overlap_error,
            "restarts_used": self.restarts_used,
            "success": self.success,
            "theta_star": self.theta_star.tolist(),
        }


@dataclass
class GroundSearchReport:
    results: dict
    winning_sector: Sector
    energy: float
    overlap_error: float
    depth: int
    converged: bool
    total_nit: int
    nit_normalized: float
    delta_trace: list = field(default_factory=list)
    nit_trace: list = field(default_factory=list)
    degenerate: bool = False
    ed_energy: float = float("nan")
    ed_sector: Sector | None = None
    n_params: int = 0

    @property
    def ground_state(self) -> np.ndarray:
        return self.results[self.winning_sector].state

    def to_dict(self) -> dict:
        return {
            "winning_sector": list(self.winning_sector.as_tuple()),
            "energy": self.energy,
            "overlap_error": self.overlap_error,
            "depth": self.depth,
            "converged": self.converged,
            "total_nit": self.total_nit,
            "nit_normalized": self.nit_normalized,
            "delta_trace": self.delta_trace,
            "nit_trace": self.nit_trace,
            "degenerate": self.degenerate,
            "ed_energy": self.ed_energy,
            "ed_sector": list(self.ed_sector.as_tuple()) if self.ed_sector else None,
            "n_params": self.n_params,
            "sectors": [r.to_dict() for _, r in sorted(self.results.items())],
        }


@lru_cache(maxsize=256)
def sector_hamiltonian(params: AimParams, sector: Sector) -> np.ndarray:
    """Dense real block of ``H`` on the sector basis."""
    basis = sector_basis(sector, params.n_qubits)
    H = build_hamiltonian(params).to_sparse()
    block = H[basis][:, basis].toarray().real
    block.setflags(write=False)
    return block


@lru_cache(maxsize=256)
def sector_ground_space(params: AimParams, sector: Sector) -> tuple[float, np.ndarray]:
    """Lowest eigenvalue and an orthonormal basis of its eigenspace."""
    w, v = sla.eigh(sector_hamiltonian(params, sector))
    k = int(np.sum(w - w[0] < DEGENERACY_TOL))
    return float(w[0]), v[:, :k]


def overlap_error(candidate: np.ndarray, reference: np.ndarray) -> float:
    """``1 - |<reference|candidate>|`` clipped to [0, 1]."""
    return float(min(max(1.0 - abs(np.vdot(reference, candidate)), 0.0), 1.0))


def _subspace_error(psi: np.ndarray, space: np.ndarray) -> float:
    return float(min(max(1.0 - np.linalg.norm(space.conj().T @ psi), 0.0), 1.0))


def minimize_sector(params: AimParams, sector: Sector, d: int, restarts: int = 5,
                    rng: np.random.Generator | None = None, *, mode: str = "square_nn",
                    init: np.ndarray | None = None, gtol: float = GTOL,
                    maxiter: int = MAXITER) -> VqeResult:
    """Minimize ``<H>`` over SPA parameters within one charge-spin sector.

    BFGS with exact reverse-mode gradients. ``init`` (e.g. a warm start from
    a shallower circuit) is tried first; remaining restarts draw parameters
    uniformly from ``[-0.1, 0.1]``. ``nit``/``n_fev`` are summed over restarts.
    ``overlap_error`` is measured against the sector's exact ground space.
    """
    if d < 1:
        raise ValueError("depth must be >= 1")
    if restarts < 1:
        raise ValueError("need at least one initialization")
    rng = np.random.default_rng() if rng is None else rng
    sector.validate(params.n_qubits)
    spa = build_spa(build_topology(params.n_imp, params.n_bath, mode), d, sector)
    ans = SectorAnsatz(spa)
    Hs = sector_hamiltonian(params, sector)
    _, gspace = sector_ground_space(params, sector)

    def fun(theta):
        psi, J = ans.overlap_grads(theta, Hs @ ans.state(theta))
        e = float(np.vdot(psi, Hs @ psi).real)
        return e, 2.0 * J[:, 0].real

    if ans.dim == 1:
        theta = np.zeros(spa.n_params)
        psi = ans.state(theta)
        return VqeResult(sector, d, theta, float(Hs[0, 0]), 0, 1, 0.0, 1, True, ans.full_state(theta))

    inits = []
    if init is not None:
        inits.append(np.asarray(init, dtype=float))
    while len(inits) < restarts:
        inits.append(rng.uniform(-INIT_SCALE, INIT_SCALE, spa.n_params))
    best = None
    nit = nfev = 0
    any_success = False
    for x0 in inits:
        res = minimize(fun, x0, jac=True, method="BFGS", options={"gtol": gtol, "maxiter": maxiter})
        nit += int(res.nit)
        nfev += int(res.nfev)
        # precision-loss stops at the noise floor count as converged
        ok = bool(res.success) or np.linalg.norm(res.jac, np.inf) < 1e-5
        any_success |= ok
        if best is None or res.fun < best.fun:
            best = res
    if not any_success:
        log.warning("BFGS did not converge in sector %s at depth %d", sector, d)
    theta = np.asarray(best.x)
    psi = ans.state(theta)
    return VqeResult(sector, d, theta, float(best.fun), nit, nfev, _subspace_error(psi, gspace),
                     len(inits), any_success, ans.full_state(theta))


def pick_sector(results: dict[Sector, VqeResult]) -> Sector:
    """Lowest-energy sector; near-ties go to the smallest ``(N, |Sz|)``."""
    e_min = min(r.energy for r in results.values())
    ties = [s for s, r in results.items() if r.energy - e_min <= TIE_TOL]
    return min(ties, key=lambda s: (s.n_total, abs(s.s_z), -s.s_z))


def normalized_iterations(report: GroundSearchReport | int, n_sites: int) -> float:
    """Total optimizer iterations divided by ``2 (n_sites + 1)**2``."""
    total = report.total_nit if isinstance(report, GroundSearchReport) else int(report)
    return total / (2.0 * (n_sites + 1) ** 2)


def ground_search(params: AimParams, delta_target: float = 1e-5, d_max: int = 8, *,
                  restarts: int = 5, rng: np.random.Generator | None = None,
                  mode: str = "square_nn", ed: EdResult | None = None,
                  sectors: list[Sector] | None = None) -> GroundSearchReport:
    """Depth sweep of the sector-wise minimization until ``delta <= delta_target``.

    Every unique sector (plus the one-state empty and full sectors) is
    minimized at each depth; parameters from depth ``d-1`` are padded with an
    identity layer and used as the first initialization at depth ``d``.
    ``total_nit`` accumulates over all sectors and depths visited.
    """
    rng = np.random.default_rng() if rng is None else rng
    ed = exact_diagonalize(params) if ed is None else ed
    nq = params.n_qubits
    if sectors is None:
        sectors = enumerate_sectors(nq, unique_only=True, include_trivial=True)
    results: dict[Sector, VqeResult] = {}
    delta_trace, nit_trace = [], []
    total = 0
    winner = None
    for d in range(1, d_max + 1):
        nit_d = 0
        for s in sectors:
            init = None
            if s in results:
                prev = results[s]
                per_layer = len(prev.theta_star) // prev.depth
                init = np.zeros(d * per_layer)
                init[: len(prev.theta_star)] = prev.theta_star
            r = minimize_sector(params, s, d, restarts, rng, mode=mode, init=init)
            results[s] = r
            nit_d += r.nit
        total += nit_d
        winner = pick_sector(results)
        delta = overlap_error(results[winner].state, ed.ground_state)
        delta_trace.append(delta)
        nit_trace.append(nit_d)
        log.info("seed=%s d=%d winner=%s delta=%.3e", params.seed, d, winner, delta)
        if delta <= delta_target:
            break
    else:
        log.info("seed=%s: delta target %.1e not reached by d_max=%d", params.seed, delta_target, d_max)
    best = results[winner]
    report = GroundSearchReport(
        results=results, winning_sector=winner, energy=best.energy, overlap_error=delta_trace[-1],
        depth=len(delta_trace), converged=delta_trace[-1] <= delta_target, total_nit=total,
        nit_normalized=0.0, delta_trace=delta_trace, nit_trace=nit_trace, degenerate=ed.degenerate,
        ed_energy=ed.ground_energy, ed_sector=ed.ground_sector, n_params=len(best.theta_star))
    report.nit_normalized = normalized_iterations(report, params.n_sites)
    return report
