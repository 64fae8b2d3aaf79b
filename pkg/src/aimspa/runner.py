"""Seeded experiment orchestration with JSON/CSV outputs.

Layout: ``<out>/<task>/<n_imp>-<n_bath>/<seed>.json`` per seed and
``<out>/<task>/summary.csv`` per run. Every random stream derives from
``SeedSequence([master_seed, seed])`` so results do not depend on the number
of worker processes.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .correlator import CorrelatorSpec, correlator_fast, greater_lesser_retarded
from .greens import overlay_csv, relative_error, retarded_gf_exact, retarded_gf_variational
from .measure import estimate, plan_measurements, rows_to_csv
from .model import build_hamiltonian, enumerate_sectors, exact_diagonalize, sample_params
from .vqe import ground_search, minimize_sector, normalized_iterations, overlap_error, pick_sector

log = logging.getLogger(__name__)

TASKS = ("gen", "ed", "vqe", "sweep", "greens", "correlator", "measure-plan")
SWEEP_COLUMNS = ["sites", "seed", "delta", "d_star", "nit", "nit_normalized", "degenerate"]
EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class Grid:
    start: float
    stop: float
    step: float

    def validate(self, name: str):
        if not (math.isfinite(self.start) and math.isfinite(self.stop) and self.step > 0
                and self.stop > self.start):
            raise ConfigError(f"{name} grid must satisfy start < stop and step > 0")

    def values(self) -> np.ndarray:
        n = int(round((self.stop - self.start) / self.step))
        return self.start + self.step * np.arange(n + 1)


@dataclass
class ExperimentConfig:
    task: str = "sweep"
    n_imp: int = 1
    n_bath: int = 1
    seeds: list = field(default_factory=lambda: [0])
    master_seed: int = 0
    depth: int | None = None
    d_max: int = 8
    delta_targets: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4, 1e-5])
    restarts: int = 5
    mode: str = "square_nn"
    omega: Grid = field(default_factory=lambda: Grid(-20.0, 20.0, 0.05))
    times: Grid = field(default_factory=lambda: Grid(0.0, 10.0, 0.05))
    eta: float = 0.1
    orbital: int = 0
    shots: int | None = None
    post_select: bool = False
    parallel_plan: bool = True
    spec: list | None = None
    jobs: int = 1
    out: str = "results"

    @property
    def sites(self) -> int:
        return self.n_imp + self.n_bath

    @property
    def sites_label(self) -> str:
        return f"{self.n_imp}-{self.n_bath}"

    def validate(self) -> ExperimentConfig:
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}")
        if self.n_imp < 1 or self.n_bath < 1:
            raise ConfigError("need n_imp >= 1 and n_bath >= 1")
        if 2 * self.sites > 16:
            raise ConfigError("at most 16 qubits are supported")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be unique")
        if any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative integers")
        if not self.delta_targets or any(not 0 < d < 1 for d in self.delta_targets):
            raise ConfigError("delta targets must lie in (0, 1)")
        if self.depth is not None and self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.d_max < 1 or self.restarts < 1 or self.jobs < 1:
            raise ConfigError("d_max, restarts and jobs must be >= 1")
        if self.eta <= 0:
            raise ConfigError("eta must be positive")
        if self.shots is not None and self.shots < 1:
            raise ConfigError("shots must be positive")
        if not 0 <= self.orbital < 2 * self.sites:
            raise ConfigError("orbital out of range")
        self.omega.validate("omega")
        self.times.validate("time")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        doc = dict(doc)
        if "sites" in doc:
            doc["n_imp"], doc["n_bath"] = _parse_sites(doc.pop("sites"))
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for g in ("omega", "times"):
            if g in doc and not isinstance(doc[g], Grid):
                v = doc[g]
                doc[g] = Grid(*v) if isinstance(v, (list, tuple)) else Grid(**v)
        try:
            cfg = cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.seeds = [int(s) for s in cfg.seeds]
        cfg.delta_targets = sorted((float(d) for d in cfg.delta_targets), reverse=True)
        return cfg

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _parse_sites(value) -> tuple[int, int]:
    if isinstance(value, str):
        value = value.split(",")
    try:
        n_imp, n_bath = (int(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError("sites must be 'I,B'") from exc
    return n_imp, n_bath


def seed_rng(master_seed: int, seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(seed)]))


def _complex_pair(z) -> list[float]:
    return [float(np.real(z)), float(np.imag(z))]


def _write_series_csv(path: Path, columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _task_gen(cfg, seed, params, rng, seed_dir):
    row = {"sites": cfg.sites, "seed": seed, "n_imp": params.n_imp, "n_bath": params.n_bath}
    return {"params": params.to_dict()}, [row]


def _task_ed(cfg, seed, params, rng, seed_dir):
    ed = exact_diagonalize(params)
    doc = {"ground_energy": ed.ground_energy, "ground_sector": list(ed.ground_sector.as_tuple()),
           "degenerate": ed.degenerate, "gap": ed.gap,
           "sector_energies": [[k[0], k[1], v] for k, v in sorted(ed.sector_energies.items())]}
    row = {"sites": cfg.sites, "seed": seed, "ground_energy": ed.ground_energy,
           "n_total": ed.ground_sector.n_total, "s_z": ed.ground_sector.s_z,
           "gap": ed.gap, "degenerate": ed.degenerate}
    return doc, [row]


def _search(cfg, params, rng):
    target = min(cfg.delta_targets)
    return ground_search(params, target, cfg.d_max, restarts=cfg.restarts, rng=rng,
                         mode=cfg.mode)


def _task_vqe(cfg, seed, params, rng, seed_dir):
    if cfg.depth is None:
        rep = _search(cfg, params, rng)
        doc = rep.to_dict()
    else:
        ed = exact_diagonalize(params)
        results = {s: minimize_sector(params, s, cfg.depth, cfg.restarts, rng, mode=cfg.mode)
                   for s in enumerate_sectors(params.n_qubits, unique_only=True, include_trivial=True)}
        win = pick_sector(results)
        doc = {"winning_sector": list(win.as_tuple()), "energy": results[win].energy,
               "overlap_error": overlap_error(results[win].state, ed.ground_state),
               "depth": cfg.depth, "degenerate": ed.degenerate, "ed_energy": ed.ground_energy,
               "sectors": [r.to_dict() for _, r in sorted(results.items())]}
    row = {"sites": cfg.sites, "seed": seed, "depth": doc["depth"], "energy": doc["energy"],
           "overlap_error": doc["overlap_error"], "n_total": doc["winning_sector"][0],
           "s_z": doc["winning_sector"][1], "degenerate": doc["degenerate"]}
    return doc, [row]


def sweep_rows(report, sites: int, seed: int, targets) -> list[dict]:
    """First depth reaching each overlap target and the iterations spent up to it."""
    rows = []
    for target in targets:
        d_star, nit = None, None
        for d, delta in enumerate(report.delta_trace, start=1):
            if delta <= target:
                d_star, nit = d, int(sum(report.nit_trace[:d]))
                break
        rows.append({"sites": sites, "seed": seed, "delta": target,
                     "d_star": "" if d_star is None else d_star,
                     "nit": "" if nit is None else nit,
                     "nit_normalized": "" if nit is None else normalized_iterations(nit, sites),
                     "degenerate": report.degenerate})
    return rows


def _task_sweep(cfg, seed, params, rng, seed_dir):
    rep = _search(cfg, params, rng)
    rows = sweep_rows(rep, cfg.sites, seed, cfg.delta_targets)
    doc = rep.to_dict()
    doc["rows"] = rows
    doc["params_per_layer"] = rep.n_params // rep.depth
    return doc, rows


def _task_greens(cfg, seed, params, rng, seed_dir):
    omega = cfg.omega.values()
    exact = retarded_gf_exact(params, cfg.orbital, omega, cfg.eta)
    d = cfg.depth or cfg.sites
    var, reports = retarded_gf_variational(params, cfg.orbital, omega, cfg.eta, d=d, rng=rng,
                                           mode=cfg.mode)
    err = relative_error(var, exact)
    overlay_csv(exact, var, seed_dir / f"{seed}_gf.csv")
    failed = sum(len(r.failed_iterations) for r in reports.values())
    doc = {"eps_rel": err, "depth": d, "exact": exact.header(), "variational": var.header(),
           "failed_iterations": {str(k): r.failed_iterations for k, r in reports.items()},
           "drift": {str(k): r.drift for k, r in reports.items()},
           "degenerate": exact_diagonalize(params).degenerate,
           "grid": {"omega_min": float(omega[0]), "omega_max": float(omega[-1]),
                    "d_omega": cfg.omega.step, "eta": cfg.eta}}
    row = {"sites": cfg.sites, "seed": seed, "depth": d, "eps_rel": err,
           "spectral_weight": exact.spectral_weight(), "failed_iterations": failed,
           "degenerate": doc["degenerate"]}
    return doc, [row]


def _task_correlator(cfg, seed, params, rng, seed_dir):
    ed = exact_diagonalize(params)
    H = build_hamiltonian(params)
    times = cfg.times.values()
    gg, gl, gr = greater_lesser_retarded(ed.ground_state, H, cfg.orbital, times)
    _write_series_csv(seed_dir / f"{seed}_correlator.csv",
                      ["t", "re_greater", "im_greater", "re_lesser", "im_lesser", "re_retarded",
                       "im_retarded"],
                      [[repr(float(t))] + [repr(float(x)) for z in (a, b, c) for x in (z.real, z.imag)]
                       for t, a, b, c in zip(times, gg, gl, gr)])
    doc = {"orbital": cfg.orbital, "n_times": len(times), "retarded_t0": _complex_pair(gr[0]),
           "degenerate": ed.degenerate}
    if cfg.spec:
        res = correlator_fast(ed.ground_state, CorrelatorSpec(cfg.spec), H)
        doc["spec"] = {"value": _complex_pair(res.value), "g_tilde": _complex_pair(res.g_tilde),
                       "norms": res.norms, "aborted_at": res.aborted_at}
    row = {"sites": cfg.sites, "seed": seed, "orbital": cfg.orbital, "n_times": len(times),
           "re_retarded_t0": float(gr[0].real), "im_retarded_t0": float(gr[0].imag)}
    return doc, [row]


def _task_measure_plan(cfg, seed, params, rng, seed_dir):
    plan = plan_measurements(params, cfg.parallel_plan)
    ed = exact_diagonalize(params)
    est = estimate(ed.ground_state, plan, cfg.shots, cfg.post_select, rng)
    rows_to_csv(est.rows, seed_dir / f"{seed}_terms.csv")
    doc = {"plan": json.loads(plan.to_json()), "energy": est.energy,
           "exact_energy": ed.ground_energy, "kept_fraction": est.kept_fraction,
           "variance": est.variance, "shots": cfg.shots, "post_select": cfg.post_select}
    row = {"sites": cfg.sites, "seed": seed, "n_circuits": len(plan), "energy": est.energy,
           "exact_energy": ed.ground_energy, "kept_fraction": est.kept_fraction,
           "sigma": math.sqrt(est.variance)}
    return doc, [row]


_TASKS = {"gen": _task_gen, "ed": _task_ed, "vqe": _task_vqe, "sweep": _task_sweep,
          "greens": _task_greens, "correlator": _task_correlator,
          "measure-plan": _task_measure_plan}


def run_seed(cfg: ExperimentConfig, seed: int) -> dict:
    """Execute one seed; failures are returned, not raised."""
    seed_dir = Path(cfg.out) / cfg.task / cfg.sites_label
    seed_dir.mkdir(parents=True, exist_ok=True)
    path = seed_dir / f"{seed}.json"
    try:
        params = sample_params(seed, cfg.n_imp, cfg.n_bath)
        doc, rows = _TASKS[cfg.task](cfg, seed, params, seed_rng(cfg.master_seed, seed), seed_dir)
        doc = {"task": cfg.task, "seed": seed, "n_imp": cfg.n_imp, "n_bath": cfg.n_bath, **doc}
        status = {"seed": seed, "ok": True, "rows": rows}
    except Exception as exc:  # crash isolation: record and continue
        log.error("seed %d failed: %s", seed, exc)
        doc = {"task": cfg.task, "seed": seed, "error": repr(exc), "traceback": traceback.format_exc()}
        status = {"seed": seed, "ok": False, "rows": [], "error": repr(exc)}
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(doc, indent=2, default=_json_default))
    tmp.replace(path)
    return status


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _csv_text(rows: list[dict], columns=None) -> str:
    buf = io.StringIO()
    columns = columns or (list(rows[0]) if rows else [])
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    return buf.getvalue()


def run(cfg: ExperimentConfig) -> int:
    """Run ``cfg.task`` over all seeds; returns the process exit code."""
    cfg.validate()
    if cfg.jobs > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            statuses = list(pool.map(run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        statuses = [run_seed(cfg, s) for s in cfg.seeds]
    statuses.sort(key=lambda s: s["seed"])
    task_dir = Path(cfg.out) / cfg.task
    rows = [r for s in statuses for r in s["rows"]]
    columns = SWEEP_COLUMNS if cfg.task == "sweep" else None
    (task_dir / "summary.csv").write_text(_csv_text(rows, columns))
    failures = [{"seed": s["seed"], "error": s["error"]} for s in statuses if not s["ok"]]
    if failures:
        (task_dir / "failures.json").write_text(json.dumps(failures, indent=2))
    if cfg.task == "sweep" and rows:
        table = summarize_sweep(rows)
        (task_dir / "aggregate.csv").write_text(_csv_text(table))
    return EXIT_PARTIAL if failures else EXIT_OK


def power_law_fit(x, y) -> tuple[float, float]:
    """``(exponent, prefactor)`` of ``y = prefactor * x**exponent`` by a log-log line fit."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if len(x) < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs at least two positive points")
    slope, icpt = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(np.exp(icpt))


def summarize_sweep(rows: list[dict], params_per_layer: dict | None = None) -> list[dict]:
    """Seed statistics per (sites, delta): mean depth with its standard error and max depth.

    Degenerate seeds are excluded and counted; seeds that never reached the
    target are counted as unconverged.
    """
    if not rows:
        raise ValueError("no sweep rows to summarize")
    groups: dict = {}
    for r in rows:
        groups.setdefault((int(r["sites"]), float(r["delta"])), []).append(r)
    table = []
    for (sites, delta), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], -kv[0][1])):
        degenerate = [r for r in rs if _truthy(r["degenerate"])]
        usable = [r for r in rs if not _truthy(r["degenerate"]) and r["d_star"] not in ("", None)]
        unconverged = len(rs) - len(degenerate) - len(usable)
        d = np.array([float(r["d_star"]) for r in usable])
        nit = np.array([float(r["nit_normalized"]) for r in usable])
        row = {"sites": sites, "delta": delta, "n_seeds": len(rs), "n_usable": len(usable),
               "n_degenerate": len(degenerate), "n_unconverged": unconverged,
               "mean_d": float(d.mean()) if len(d) else float("nan"),
               "sem_d": float(d.std(ddof=1) / np.sqrt(len(d))) if len(d) > 1 else float("nan"),
               "max_d": float(d.max()) if len(d) else float("nan"),
               "mean_nit_normalized": float(nit.mean()) if len(nit) else float("nan")}
        if params_per_layer and sites in params_per_layer and len(d):
            row["mean_params"] = float(d.mean() * params_per_layer[sites])
        table.append(row)
    return table


def _truthy(v) -> bool:
    return v is True or str(v).lower() in ("true", "1")


def aggregate(results_dir) -> list[dict]:
    """Summary table from the per-seed sweep JSON files under ``results_dir``."""
    root = Path(results_dir)
    files = sorted(p for p in root.rglob("*.json") if p.stem.isdigit())
    rows, ppl = [], {}
    for p in files:
        doc = json.loads(p.read_text())
        if "rows" not in doc:
            continue
        rows.extend(doc["rows"])
        ppl[doc["n_imp"] + doc["n_bath"]] = doc.get("params_per_layer")
    if not rows:
        raise ValueError(f"no sweep results under {root}")
    return summarize_sweep(rows, {k: v for k, v in ppl.items() if v})
