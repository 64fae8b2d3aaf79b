"""Symmetry-preserving ansatz (SPA) on square-lattice qubit layouts.

Each layer applies Givens rotations on intra-register edges, ZZ phase
rotations on spin-up/spin-down rungs and one Rz per qubit. Parameter layout
per layer: ``[givens..., zz..., rz_0..rz_{Nq-1}]``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from math import floor, hypot

import numpy as np

from .model import Sector, sector_basis
from .sim import Circuit, Gate

MODES = ("square_nn", "square_nnn")
_RADIUS = {"square_nn": 1.0, "square_nnn": 2.0}
# bath slots around a single impurity at the origin, nearest first
_SLOTS = [(-1, 0), (1, 0), (0, 1), (-1, 1), (1, 1), (-2, 0), (2, 0), (0, 2)]


@dataclass(frozen=True)
class Node:
    qubit: int
    site: int
    spin: str
    role: str
    pos: tuple[int, int]


@dataclass(frozen=True)
class Topology:
    n_imp: int
    n_bath: int
    mode: str
    nodes: tuple[Node, ...]
    givens: tuple[tuple[int, int], ...]
    zz: tuple[tuple[int, int], ...]

    @property
    def n_qubits(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.givens) + len(self.zz)

    @property
    def register_size(self) -> int:
        return self.n_imp + self.n_bath

    def validate(self) -> Topology:
        spin = {n.qubit: n.spin for n in self.nodes}
        site = {n.qubit: n.site for n in self.nodes}
        for a, b in self.givens:
            if spin[a] != spin[b]:
                raise ValueError(f"Givens edge {(a, b)} crosses spin registers")
        for a, b in self.zz:
            if spin[a] == spin[b]:
                raise ValueError(f"ZZ edge {(a, b)} within one spin register")
            if site[a] != site[b]:
                raise ValueError(f"ZZ edge {(a, b)} joins different sites")
        for edges in (self.givens, self.zz):
            if len(set(edges)) != len(edges) or any(a >= b for a, b in edges):
                raise ValueError("edge list must be sorted, ordered and duplicate-free")
        return self

    def to_json(self) -> str:
        return json.dumps({
            "n_imp": self.n_imp, "n_bath": self.n_bath, "mode": self.mode,
            "nodes": [{"qubit": n.qubit, "site": n.site, "spin": n.spin, "role": n.role,
                       "pos": list(n.pos)} for n in self.nodes],
            "edges": [{"qubits": list(e), "gate": "Givens"} for e in self.givens]
            + [{"qubits": list(e), "gate": "ZZ"} for e in self.zz],
        }, indent=2)


def _positions(n_imp: int, n_bath: int) -> list[tuple[int, int]]:
    """Spin-up register coordinates, impurities first."""
    if n_imp == 1:
        if n_bath > len(_SLOTS):
            raise ValueError(f"no layout for {n_bath} bath sites around one impurity")
        return [(0, 0)] + _SLOTS[:n_bath]
    imps = [(x, 0) for x in range(n_imp)]
    width = max(n_imp, 1)
    baths = [(b % width, 1 + b // width) for b in range(n_bath)]
    return imps + baths


def build_topology(n_imp: int, n_bath: int, mode: str = "square_nn") -> Topology:
    """Qubit layout and gate edges for an ``n_imp + n_bath``-site model.

    The spin-up register sits on rows ``y >= 0`` and the spin-down register is
    its mirror image on rows ``y <= -1``. Givens edges join impurity-impurity
    and impurity-bath pairs within the mode's coupling radius; ZZ edges join
    the two spin copies of a site when they are within that radius.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if n_imp < 1 or n_bath < 0:
        raise ValueError("need n_imp >= 1 and n_bath >= 0")
    if n_imp > 1 and mode == "square_nn":
        raise ValueError("multi-impurity layouts need square_nnn connectivity")
    r = _RADIUS[mode]
    L = n_imp + n_bath
    up = _positions(n_imp, n_bath)
    nodes = []
    for spin, off in (("up", 0), ("down", L)):
        for s, (x, y) in enumerate(up):
            pos = (x, y) if spin == "up" else (x, -1 - y)
            nodes.append(Node(s + off, s, spin, "impurity" if s < n_imp else "bath", pos))
    pos = {n.qubit: n.pos for n in nodes}

    def near(a, b):
        (xa, ya), (xb, yb) = pos[a], pos[b]
        return hypot(xa - xb, ya - yb) <= r + 1e-9

    givens, zz = [], []
    for off in (0, L):
        for i in range(n_imp):
            for j in range(i + 1, L):
                if near(i + off, j + off):
                    givens.append((i + off, j + off))
    for s in range(L):
        if near(s, s + L):
            zz.append((s, s + L))
    topo = Topology(n_imp, n_bath, mode, tuple(nodes), tuple(sorted(givens)), tuple(sorted(zz)))
    _check_reachability(topo)
    return topo.validate()


def _check_reachability(topo: Topology):
    L = topo.register_size
    adj = {q: set() for q in range(topo.n_qubits)}
    for a, b in topo.givens:
        adj[a].add(b)
        adj[b].add(a)
    for off in (0, L):
        for i in range(topo.n_imp):
            seen, stack = {i + off}, [i + off]
            while stack:
                for nb in adj[stack.pop()] - seen:
                    seen.add(nb)
                    stack.append(nb)
            missing = set(range(off, off + L)) - seen
            if missing:
                raise ValueError(f"layout leaves qubits {sorted(missing)} unreachable from impurity {i}")


def initial_excitations(sector: Sector, register_size: int) -> tuple[list[int], list[int]]:
    """Evenly spaced occupied positions (register-local) for spin up and down."""

    def spread(k):
        if k > register_size:
            raise ValueError(f"{k} excitations do not fit a register of {register_size}")
        return [floor((i + 0.5) * register_size / k) for i in range(k)]

    return spread(sector.n_up), spread(sector.n_down)


@dataclass(frozen=True)
class SpaCircuit:
    topology: Topology
    depth: int
    sector: Sector

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("ansatz depth must be >= 1")
        self.sector.validate(self.topology.n_qubits)

    @property
    def n_qubits(self) -> int:
        return self.topology.n_qubits

    @property
    def params_per_layer(self) -> int:
        return self.topology.n_edges + self.n_qubits

    @property
    def n_params(self) -> int:
        return self.depth * self.params_per_layer

    @property
    def excitations(self) -> list[int]:
        L = self.topology.register_size
        up, dn = initial_excitations(self.sector, L)
        return up + [p + L for p in dn]

    def with_depth(self, depth: int) -> SpaCircuit:
        return SpaCircuit(self.topology, depth, self.sector)

    def pad(self, theta: np.ndarray, depth: int) -> np.ndarray:
        """Extend ``theta`` with zero (identity) layers up to ``depth``."""
        out = np.zeros(depth * self.params_per_layer)
        out[: len(theta)] = theta
        return out


def build_spa(topology: Topology, d: int, sector: Sector) -> SpaCircuit:
    return SpaCircuit(topology, d, sector)


def bind(spa: SpaCircuit, theta) -> Circuit:
    """Executable circuit preparing the trial state from ``|0...0>``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spa.n_params,):
        raise ValueError(f"expected {spa.n_params} parameters, got {theta.shape}")
    topo = spa.topology
    c = Circuit(spa.n_qubits, [Gate("X", (q,)) for q in spa.excitations])
    k = 0
    for _ in range(spa.depth):
        for e in topo.givens:
            c.append(Gate("Givens", e, theta[k]))
            k += 1
        for e in topo.zz:
            c.append(Gate("ZZ", e, theta[k]))
            k += 1
        for q in range(spa.n_qubits):
            c.append(Gate("Rz", (q,), theta[k]))
            k += 1
    return c


class SectorAnsatz:
    """SPA evaluated inside its charge-spin sector.

    Amplitudes live on the sector basis only, Givens rotations act on index
    pairs and each layer's ZZ/Rz phases are merged into one diagonal. Gives
    the same states as ``run_circuit(bind(spa, theta))`` restricted to the
    sector, and reverse-mode derivatives of overlaps ``<v|psi(theta)>``.
    """

    def __init__(self, spa: SpaCircuit):
        self.spa = spa
        n = spa.n_qubits
        self.basis = sector_basis(spa.sector, n)
        self.dim = len(self.basis)
        pos = {int(b): i for i, b in enumerate(self.basis)}
        start = sum(1 << q for q in spa.excitations)
        self.start = pos[start]
        self.pairs = []
        for a, b in spa.topology.givens:
            i01 = [i for i, s in enumerate(self.basis) if not (s >> a) & 1 and (s >> b) & 1]
            j10 = [pos[int(self.basis[i]) ^ ((1 << a) | (1 << b))] for i in i01]
            self.pairs.append((np.array(i01, dtype=int), np.array(j10, dtype=int)))
        z = 1 - 2 * ((self.basis[:, None] >> np.arange(n)) & 1)
        cols = [z[:, a] * z[:, b] for a, b in spa.topology.zz] + [z[:, q] for q in range(n)]
        self.zdiag = np.stack(cols, axis=1).astype(float)
        self.n_givens = len(spa.topology.givens)

    @property
    def n_params(self) -> int:
        return self.spa.n_params

    def _layers(self, theta):
        P = self.spa.params_per_layer
        for l in range(self.spa.depth):
            chunk = theta[l * P:(l + 1) * P]
            yield chunk[: self.n_givens], chunk[self.n_givens:]

    def state(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.start] = 1.0
        for g, dg in self._layers(theta):
            for (i, j), t in zip(self.pairs, g):
                c, s = np.cos(t), np.sin(t)
                a, b = psi[i], psi[j]
                psi[i], psi[j] = c * a - s * b, s * a + c * b
            psi *= np.exp(-0.5j * (self.zdiag @ dg))
        return psi

    def full_state(self, theta) -> np.ndarray:
        out = np.zeros(1 << self.spa.n_qubits, dtype=complex)
        out[self.basis] = self.state(theta)
        return out

    def overlap_grads(self, theta, vs: np.ndarray):
        """``psi`` and ``J[k, m] = <vs[:, m] | d psi / d theta_k>``."""
        theta = np.asarray(theta, dtype=float)
        psi = self.state(theta)
        lam = np.array(vs, dtype=complex).reshape(self.dim, -1)
        grads = np.zeros((self.n_params, lam.shape[1]), dtype=complex)
        P = self.spa.params_per_layer
        phi = psi.copy()
        for l in reversed(range(self.spa.depth)):
            chunk = theta[l * P:(l + 1) * P]
            g, dg = chunk[: self.n_givens], chunk[self.n_givens:]
            base = l * P
            grads[base + self.n_givens: base + P] = -0.5j * (self.zdiag.T @ (lam.conj() * phi[:, None]))
            ph = np.exp(0.5j * (self.zdiag @ dg))
            phi = phi * ph
            lam = lam * ph[:, None]
            for k in reversed(range(self.n_givens)):
                i, j = self.pairs[k]
                grads[base + k] = lam[i].conj().T @ (-phi[j]) + lam[j].conj().T @ phi[i]
                c, s = np.cos(g[k]), np.sin(g[k])
                a, b = phi[i], phi[j]
                phi[i], phi[j] = c * a + s * b, -s * a + c * b
                a, b = lam[i], lam[j]
                lam[i], lam[j] = c * a + s * b, -s * a + c * b
        return psi, grads
