"""Symmetry-preserving measurement plans and shot-based energy estimation.

Diagonal Hamiltonian terms are read from one computational-basis circuit.
A hopping term ``t/2 (X_a X_b + Y_a Y_b) Z_(a,b)`` is read after a
``Givens(-pi/4)`` on ``(a, b)``, where ``(Z_a - Z_b)/2`` on the rotated
bits equals ``(X_a X_b + Y_a Y_b)/2`` on the original state.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .model import AimParams, Sector, build_hamiltonian
from .pauli import PauliKey, PauliSum
from .sim import Circuit, Gate, apply, n_qubits_of, run_circuit

ROTATION_ANGLE = -np.pi / 4


@dataclass(frozen=True)
class HoppingTerm:
    pair: tuple[int, int]
    coeff: float
    keys: tuple[PauliKey, ...]

    @property
    def string(self) -> tuple[int, ...]:
        a, b = self.pair
        return tuple(range(a + 1, b))


@dataclass
class MeasCircuit:
    pairs: tuple[tuple[int, int], ...]
    diagonal: dict = field(default_factory=dict)
    hopping: list[HoppingTerm] = field(default_factory=list)

    def to_circuit(self, n_qubits: int) -> Circuit:
        c = Circuit(n_qubits, [Gate("Givens", p, ROTATION_ANGLE) for p in self.pairs])
        return c.extend(Gate("Measure", (q,)) for q in range(n_qubits))

    def rotate(self, state: np.ndarray) -> np.ndarray:
        for p in self.pairs:
            state = apply(state, Gate("Givens", p, ROTATION_ANGLE))
        return state

    def estimator(self, n_qubits: int) -> np.ndarray:
        """Per-outcome value of this circuit's summed term estimators."""
        idx = np.arange(1 << n_qubits)
        z = 1 - 2 * ((idx[:, None] >> np.arange(n_qubits)) & 1)
        f = np.zeros(len(idx))
        for key, c in self.diagonal.items():
            f += c * np.prod(z[:, [q for q, _ in key]], axis=1)
        for t in self.hopping:
            a, b = t.pair
            parity = np.prod(z[:, list(t.string)], axis=1) if t.string else 1
            f += t.coeff * 0.5 * (z[:, a] - z[:, b]) * parity
        return f

    def term_estimators(self, n_qubits: int) -> list[tuple[str, float, np.ndarray]]:
        idx = np.arange(1 << n_qubits)
        z = 1 - 2 * ((idx[:, None] >> np.arange(n_qubits)) & 1)
        rows = []
        for key, c in self.diagonal.items():
            rows.append((" ".join(f"Z{q}" for q, _ in key), c, np.prod(z[:, [q for q, _ in key]], axis=1)))
        for t in self.hopping:
            a, b = t.pair
            parity = np.prod(z[:, list(t.string)], axis=1) if t.string else 1
            label = f"(X{a} X{b} + Y{a} Y{b})/2" + "".join(f" Z{q}" for q in t.string)
            rows.append((label, t.coeff, 0.5 * (z[:, a] - z[:, b]) * parity))
        return rows


@dataclass
class MeasPlan:
    n_qubits: int
    circuits: list[MeasCircuit]
    offset: float
    term_map: dict

    def __len__(self):
        return len(self.circuits)

    def to_json(self) -> str:
        return json.dumps({
            "n_qubits": self.n_qubits,
            "offset": self.offset,
            "circuits": [{
                "rotated_pairs": [list(p) for p in c.pairs],
                "diagonal_terms": [{"z": [q for q, _ in k], "coeff": v} for k, v in c.diagonal.items()],
                "hopping_terms": [{"pair": list(t.pair), "coeff": t.coeff} for t in c.hopping],
            } for c in self.circuits],
        }, indent=2)


def _bipartite_colors(n_imp: int, n_bath: int) -> list[list[tuple[int, int]]]:
    k = max(n_imp, n_bath)
    classes = [[] for _ in range(k)]
    for i in range(n_imp):
        for b in range(n_bath):
            classes[(i + b) % k].append((i, b))
    return [c for c in classes if c]


def circle_colors(n: int) -> list[list[tuple[int, int]]]:
    """Proper edge coloring of the complete graph ``K_n`` by the circle method."""
    if n < 2:
        return []
    m = n if n % 2 == 0 else n + 1
    rounds = []
    for r in range(m - 1):
        edges = [(r, m - 1)]
        for k in range(1, m // 2):
            edges.append(((r + k) % (m - 1), (r - k) % (m - 1)))
        rounds.append([tuple(sorted(e)) for e in edges if max(e) < n])
    return [c for c in rounds if c]


def _crossing(p, q) -> bool:
    (a, b), (c, d) = sorted([p, q])
    return a < c < b < d


def _split_crossings(pairs: list[tuple[int, int]]) -> list[list[tuple[int, int]]]:
    # a Z-string may not contain exactly one qubit of another rotated pair
    groups: list[list[tuple[int, int]]] = []
    for p in pairs:
        for g in groups:
            if not any(_crossing(p, q) for q in g):
                g.append(p)
                break
        else:
            groups.append([p])
    return groups


def _hopping_terms(H: PauliSum) -> tuple[dict, dict, float]:
    diag, hop = {}, {}
    offset = 0.0
    for key, c in H.items():
        if abs(c.imag) > 1e-12:
            raise ValueError("measurement planning needs a real-coefficient Hamiltonian")
        if not key:
            offset += c.real
            continue
        xy = [(q, p) for q, p in key if p in "XY"]
        if not xy:
            diag[key] = c.real
            continue
        if len(xy) != 2 or xy[0][1] != xy[1][1]:
            raise ValueError(f"term {key} is not a hopping term")
        pair = (xy[0][0], xy[1][0])
        zs = tuple(q for q, p in key if p == "Z")
        if zs != tuple(range(pair[0] + 1, pair[1])):
            raise ValueError(f"term {key} has a non Jordan-Wigner Z string")
        hop.setdefault(pair, {})[xy[0][1]] = (key, c.real)
    return diag, hop, offset


def plan_measurements(params: AimParams | PauliSum, parallel: bool = False) -> MeasPlan:
    """Group the Hamiltonian's terms into symmetry-preserving readout circuits.

    Unparallelized: one Z-basis circuit plus one circuit per hopping pair.
    Parallelized: impurity-bath pairs are grouped by the round-robin edge
    coloring ``(i + b) mod max(n_imp, n_bath)``, impurity-impurity pairs by
    the circle method, and the spin-up/down copies share a circuit.
    """
    if isinstance(params, AimParams):
        H = build_hamiltonian(params)
        n_imp, n_bath, L = params.n_imp, params.n_bath, params.n_sites
    else:
        H = params
        n_imp = n_bath = None
        L = H.n_qubits // 2
    nq = H.n_qubits
    diag, hop, offset = _hopping_terms(H)

    terms = {}
    for pair, d in hop.items():
        if set(d) != {"X", "Y"} or abs(d["X"][1] - d["Y"][1]) > 1e-12:
            raise ValueError(f"hopping pair {pair} lacks matching XX and YY terms")
        terms[pair] = HoppingTerm(pair, 2.0 * d["X"][1], (d["X"][0], d["Y"][0]))

    if n_imp is not None:
        imp_bath = [(i, n_imp + b) for i in range(n_imp) for b in range(n_bath)]
        imp_imp = [(i, j) for i in range(n_imp) for j in range(i + 1, n_imp)]
        layout = [(s + off, t + off) for s, t in imp_bath + imp_imp for off in (0, L)]
    else:
        layout = sorted(terms)
    layout += [p for p in sorted(terms) if p not in layout]

    if not parallel or n_imp is None:
        groups = [[p] for p in layout]
    else:
        groups = []
        for cls in _bipartite_colors(n_imp, n_bath):
            groups.append([(i + off, n_imp + b + off) for i, b in cls for off in (0, L)])
        for cls in circle_colors(n_imp):
            groups.append([(i + off, j + off) for i, j in cls for off in (0, L)])
        covered = {p for g in groups for p in g}
        groups += [[p] for p in layout if p not in covered]
        groups = [sub for g in groups for sub in _split_crossings(sorted(g))]

    circuits = [MeasCircuit(pairs=(), diagonal=diag)]
    term_map = {k: 0 for k in diag}
    for g in groups:
        mc = MeasCircuit(pairs=tuple(g), hopping=[terms[p] for p in g if p in terms])
        circuits.append(mc)
        for t in mc.hopping:
            for k in t.keys:
                term_map[k] = len(circuits) - 1
    return MeasPlan(nq, circuits, offset, term_map)


def rotated_operator(pair: tuple[int, int], n_qubits: int | None = None) -> PauliSum:
    """``(X_a X_b + Y_a Y_b)/2`` times ``Z`` on every other qubit of the array."""
    a, b = pair
    if not a < b:
        raise ValueError("pair must satisfy a < b")
    n = b + 1 if n_qubits is None else n_qubits
    zs = [(q, "Z") for q in range(n) if q not in (a, b)]
    return PauliSum({tuple(sorted(zs + [(a, "X"), (b, "X")])): 0.5,
                     tuple(sorted(zs + [(a, "Y"), (b, "Y")])): 0.5}, n)


def register_weights(n_qubits: int) -> tuple[np.ndarray, np.ndarray]:
    half = n_qubits // 2
    idx = np.arange(1 << n_qubits)
    return np.bitwise_count(idx & ((1 << half) - 1)), np.bitwise_count(idx >> half)


def infer_sector(state: np.ndarray) -> Sector:
    """Most probable ``(N_up, N_down)`` of ``state``."""
    n = n_qubits_of(state)
    up, dn = register_weights(n)
    half = n // 2
    w = np.zeros((half + 1, half + 1))
    np.add.at(w, (up, dn), np.abs(state) ** 2)
    nu, nd = np.unravel_index(np.argmax(w), w.shape)
    return Sector.from_occupations(int(nu), int(nd))


@dataclass
class Estimate:
    energy: float
    kept_fraction: float
    variance: float
    rows: list


def _prepare(prep) -> np.ndarray:
    if isinstance(prep, Circuit):
        psi, _ = run_circuit(prep)
        return psi
    return np.asarray(prep, dtype=complex)


def estimate(prep, plan: MeasPlan, shots: int | None = None, post_select: bool = False,
             rng: np.random.Generator | None = None, sector: Sector | None = None) -> Estimate:
    """Energy estimate with per-term rows; ``shots=None`` uses exact probabilities."""
    psi = _prepare(prep)
    n = plan.n_qubits
    if post_select:
        sector = infer_sector(psi) if sector is None else sector
        up, dn = register_weights(n)
        keep = (up == sector.n_up) & (dn == sector.n_down)
    else:
        keep = np.ones(1 << n, dtype=bool)
    if shots is not None:
        rng = np.random.default_rng() if rng is None else rng
    energy, variance = plan.offset, 0.0
    total = kept = 0.0
    rows = [("I", plan.offset, plan.offset, 0.0, 1.0)]
    for mc in plan.circuits:
        if not mc.pairs and not mc.diagonal and not mc.hopping:
            continue
        probs = np.abs(mc.rotate(psi)) ** 2
        probs /= probs.sum()
        if shots is None:
            weights = probs * keep
            n_kept = weights.sum()
            frac = n_kept
            total += 1.0
        else:
            counts = rng.multinomial(shots, probs) * keep
            n_kept = counts.sum()
            frac = n_kept / shots
            weights = counts.astype(float)
            total += shots
        if n_kept == 0:
            raise RuntimeError("post-selection discarded every shot")
        kept += n_kept
        p_kept = weights / n_kept
        for label, c, f in mc.term_estimators(n):
            mean = float(p_kept @ f)
            var = float(p_kept @ (f - mean) ** 2)
            rows.append((label, c, c * mean, c * c * var / (shots or np.inf), frac))
        f = mc.estimator(n)
        mean = float(p_kept @ f)
        energy += mean
        if shots is not None:
            variance += float(p_kept @ (f - mean) ** 2) / n_kept
    return Estimate(energy, kept / total if total else 1.0, variance, rows)


def estimate_energy(prep, plan: MeasPlan, shots: int | None = None, post_select: bool = False,
                    rng: np.random.Generator | None = None, sector: Sector | None = None):
    """``(energy, kept_fraction)`` from the plan's readout circuits."""
    est = estimate(prep, plan, shots, post_select, rng, sector)
    return est.energy, est.kept_fraction


def shot_variance(state: np.ndarray, plan: MeasPlan, shots: int) -> float:
    """Variance of the ``shots``-per-circuit energy estimator from exact probabilities."""
    var = 0.0
    for mc in plan.circuits:
        probs = np.abs(mc.rotate(state)) ** 2
        probs /= probs.sum()
        f = mc.estimator(plan.n_qubits)
        var += float(probs @ (f - probs @ f) ** 2) / shots
    return var


def rows_to_csv(rows, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["term", "coefficient", "estimate", "variance", "kept_fraction"])
    for r in rows:
        w.writerow([r[0]] + [repr(float(x)) for x in r[1:]])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
