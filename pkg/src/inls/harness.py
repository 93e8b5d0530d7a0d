"""Experiment orchestration: initial data, single runs, amplitude sweeps, records
and plot-ready output."""
from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from .classify import (PreconditionError, Undetermined, blowup_monitor, classify_run, classify_threshold,
                       trapping_monitor, verdict_from_dict, verdict_to_dict)
from .config import ExperimentConfig, from_values
from .diagnostics import (CSV_COLUMNS, DiagnosticsRecorder, central_difference, make_bump_weight,
                          make_quadratic_weight, read_series_csv)
from .evolve import BLOWUP_STATUSES, NUMERICAL_FAILURE, evolve
from .field import FieldState, GridSpec, make_singular_weight
from .groundstate import GroundStateProfile, VariationalConstants, compute_constants
from .model import ModelParams, ParameterError, TruncationError

log = logging.getLogger(__name__)

RECORDS_FILE = "records.jsonl"
FAILED = "failed"


def artifact_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# -- initial data --------------------------------------------------------------------

def _smoothstep5(t):
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10 - 15 * t + 6 * t**2)


def data_center(cfg: ExperimentConfig, grid: GridSpec) -> np.ndarray:
    """x0 plus the seeded random shift, if any."""
    dims = 1 if grid.radial else grid.dims
    x0 = np.zeros(dims) if not cfg["data.x0"] else np.array(cfg["data.x0"], float)
    rad = cfg["data.random_offset"]
    if rad > 0:
        rng = np.random.default_rng(cfg["seed"])
        d = rng.standard_normal(dims)
        x0 = x0 + d / np.linalg.norm(d) * rad * rng.random() ** (1 / dims)
    return x0


def sampled_W_cutoff(grid: GridSpec, cutoff: float, taper: float) -> np.ndarray:
    """Smooth radial cutoff: 1 for |x| <= (cutoff - taper)·L, 0 beyond cutoff·L."""
    r_out = cutoff * grid.L
    r_in = (cutoff - taper) * grid.L
    return 1 - _smoothstep5((grid.r - r_in) / (r_out - r_in))


def initial_data(cfg: ExperimentConfig, params: ModelParams | None = None, grid: GridSpec | None = None) -> FieldState:
    """Closed-form initial data sampled on the grid.

    gaussian / translated-gaussian: A exp(-|x-x0|²/(2w²))
    ring:                           A exp(-(|x-x0| - ρ)²/(2w²))
    sampled-W:                      A λ^{(2-b)/α} W(λ|x-x0|) χ(|x|), λ = 1/w, χ a smooth cutoff
    """
    params = params or cfg.model()
    grid = grid or cfg.grid()
    A, w = cfg["data.amplitude"], cfg["data.width"]
    x0 = data_center(cfg, grid)
    dist = np.sqrt(sum((x - c) ** 2 for x, c in zip(grid.coords(), x0)))
    fam = cfg["data.family"]
    if fam in ("gaussian", "translated-gaussian"):
        vals = A * np.exp(-dist**2 / (2 * w**2))
    elif fam == "ring":
        vals = A * np.exp(-(dist - cfg["data.ring_radius"]) ** 2 / (2 * w**2))
    elif fam == "sampled-W":
        lam = 1 / w
        prof = GroundStateProfile(max(params.N, 3), params.b)
        amp = lam ** ((2 - params.b) / params.alpha)
        vals = A * amp * prof.W(lam * dist) * sampled_W_cutoff(grid, cfg["data.cutoff"], cfg["data.taper"])
    else:
        raise ParameterError(f"harness: unknown data family {fam!r}")
    return FieldState(np.broadcast_to(vals, grid.shape).astype(np.complex128), grid, 0.0)


def make_virial_weight(cfg: ExperimentConfig, grid: GridSpec, kind: str | None = None):
    kind = kind or cfg["diag.virial_weight"]
    if kind == "quadratic":
        return make_quadratic_weight(cfg["diag.virial_R"], grid)
    if kind == "bump":
        return make_bump_weight(cfg["diag.virial_R"], grid)
    return None


# -- constants cache -----------------------------------------------------------------

def constants_for(params: ModelParams) -> VariationalConstants | None:
    """Variational constants for energy-critical parameters in the tabulated range,
    None otherwise.  Cached by (N, b) inside :func:`compute_constants`."""
    if not params.energy_critical:
        return None
    try:
        return compute_constants(params.N, params.b)
    except ParameterError:
        return None


# -- run records ---------------------------------------------------------------------

@dataclass
class RunRecord:
    config_hash: str
    config: dict
    constants: dict | None
    threshold: dict | None
    verdict: dict
    status: str
    reason: str
    monitors: dict
    thresholds: dict
    csv_path: str
    wall_time: float
    version: str
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls(**json.loads(text))

    @property
    def verdict_kind(self) -> str:
        return self.verdict["kind"]

    def run_verdict(self):
        return verdict_from_dict(self.verdict)


def read_records(path) -> list[RunRecord]:
    with open(path) as fh:
        return [RunRecord.from_json(line) for line in fh if line.strip()]


def append_record(record: RunRecord, out_dir) -> Path:
    path = Path(out_dir) / RECORDS_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        fh.write(record.to_json() + "\n")
    return path


def _consts_dict(consts: VariationalConstants | None) -> dict | None:
    if consts is None:
        return None
    return {"c": consts.c, "C1": consts.C1, "E_W": consts.E_W}


def run_experiment(cfg: ExperimentConfig, *, out_dir=None, persist: bool = True,
                   write_record: bool | None = None, consts: VariationalConstants | None = None) -> RunRecord:
    """Build data, evolve with diagnostics, classify and (optionally) persist the
    series CSV and the record line.

    Module errors end up in a record with status ``failed`` instead of propagating.
    """
    write_record = persist if write_record is None else write_record
    start = time.perf_counter()
    out = Path(out_dir if out_dir is not None else cfg["output.dir"])
    csv_path = out / f"{cfg['output.name']}-{cfg.hash[:12]}.csv"
    thr = cfg.thresholds()
    rec = RunRecord(config_hash=cfg.hash, config=cfg.as_strings(), constants=None, threshold=None,
                    verdict={}, status=FAILED, reason="", monitors={}, thresholds=thr.to_dict(),
                    csv_path=str(csv_path), wall_time=0.0, version=artifact_version())
    try:
        params = cfg.model()
        grid = cfg.grid()
        consts = consts if consts is not None else constants_for(params)
        rec.constants = _consts_dict(consts)
        u0 = initial_data(cfg, params, grid)
        ecfg = cfg.evolve_config()
        sw = make_singular_weight(grid, params.b, cfg["diag.epsilon"])
        recorder = DiagnosticsRecorder(params, grid, singular=sw, virial_weight=make_virial_weight(cfg, grid),
                                       proxy=cfg["diag.proxy"], dt=ecfg.dt)
        traj = evolve(u0, params, ecfg, probes=[recorder], weight=sw)
        series = recorder.columns()
        rec.status, rec.reason = traj.status, traj.reason
        rec.extra = {"steps": traj.steps, "halvings": traj.halvings, "dt_final": traj.dt_final}
        verdict = classify_run(series, traj.status, thr)
        rec.verdict = verdict_to_dict(verdict)
        if consts is not None:
            E0, K0 = float(series["energy"][0]), float(series["kinetic"][0])
            report = classify_threshold(E0, K0, consts, boundary_tol=cfg["classify.boundary_tol"])
            rec.threshold = report.to_dict()
            if params.focusing:
                rec.monitors = _monitors(series, report)
        if persist:
            out.mkdir(parents=True, exist_ok=True)
            csv_path.write_text(recorder.to_csv())
    except (ParameterError, TruncationError, ValueError, FloatingPointError, MemoryError) as exc:
        rec.status, rec.reason = FAILED, f"{type(exc).__name__}: {exc}"
        rec.verdict = verdict_to_dict(Undetermined(f"run failed: {exc}"))
    rec.wall_time = time.perf_counter() - start
    if write_record:
        append_record(rec, out)
    return rec


def _monitors(series, report) -> dict:
    out = {}
    for name, fn in (("trapping", trapping_monitor), ("blowup", blowup_monitor)):
        try:
            res = fn(series, report)
        except PreconditionError:
            continue
        out[name] = {"passed": res.passed, "tol": res.tol, "min_margin": float(np.min(res.margin)),
                     "energy_drift": res.energy_drift}
    return out


def exit_code(record: RunRecord) -> int:
    """0 success, 3 numerical failure, 4 blow-up halt (the record is still valid)."""
    if record.status in (FAILED, NUMERICAL_FAILURE):
        return 3
    if record.status in BLOWUP_STATUSES:
        return 4
    return 0


# -- sweeps --------------------------------------------------------------------------

SUMMARY_COLUMNS = ("A", "E0", "K0", "subthreshold", "verdict")


@dataclass
class SweepSummary:
    records: list
    amplitudes: list
    verdict_bracket: tuple | None      # (A_i, A_{i+1}) around the first BlowUp verdict
    threshold_bracket: tuple | None    # (A_i, A_{i+1}) around the first K0 >= c
    verdict_index: int | None
    threshold_index: int | None

    def rows(self) -> list[dict]:
        out = []
        for A, r in zip(self.amplitudes, self.records):
            th = r.threshold or {}
            out.append({"A": A, "E0": th.get("E0", math.nan), "K0": th.get("K0", math.nan),
                        "subthreshold": bool(th.get("subthreshold", False)), "verdict": r.verdict_kind})
        return out

    def to_csv(self) -> str:
        lines = [",".join(SUMMARY_COLUMNS)]
        for row in self.rows():
            lines.append(",".join([repr(float(row["A"])), repr(float(row["E0"])), repr(float(row["K0"])),
                                   str(row["subthreshold"]).lower(), row["verdict"]]))
        return "\n".join(lines) + "\n"

    @property
    def brackets_agree(self) -> bool | None:
        """True when both transitions exist and lie within one sweep step of each other."""
        if self.verdict_index is None or self.threshold_index is None:
            return None
        return abs(self.verdict_index - self.threshold_index) <= 1


def _sweep_worker(args):
    values, consts = args
    cfg = from_values(values)
    return run_experiment(cfg, persist=True, write_record=False, consts=consts)


def _first_index(flags) -> int | None:
    for i, f in enumerate(flags):
        if f:
            return i
    return None


def _bracket(amps, idx):
    if idx is None or idx == 0:
        return None
    return (amps[idx - 1], amps[idx])


def sweep_amplitude(cfg: ExperimentConfig, amplitudes, *, workers: int | None = None,
                    out_dir=None) -> SweepSummary:
    """One run per amplitude (independent, possibly concurrent), records written by
    this process only, plus a summary CSV ``<name>-sweep.csv``."""
    amps = sorted(float(a) for a in amplitudes)
    if not amps:
        raise ValueError("sweep needs at least one amplitude")
    out = Path(out_dir if out_dir is not None else cfg["output.dir"])
    params = cfg.model()
    consts = constants_for(params)
    jobs = [(dict(cfg.replace(**{"data.amplitude": A, "output.dir": str(out)}).values), consts) for A in amps]
    workers = workers or int(os.environ.get("INLS_WORKERS", "1"))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_sweep_worker, jobs))
    else:
        records = [_sweep_worker(j) for j in jobs]
    for r in records:
        append_record(r, out)
    blow = [r.verdict_kind == "BlowUp" for r in records]
    crossed = [r.threshold is not None and r.threshold["K0"] >= r.threshold["c"] for r in records]
    vi, ti = _first_index(blow), _first_index(crossed)
    summary = SweepSummary(records, amps, _bracket(amps, vi), _bracket(amps, ti), vi, ti)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{cfg['output.name']}-sweep.csv").write_text(summary.to_csv())
    return summary


# -- plot data -----------------------------------------------------------------------

def emit_plotdata(records, out_dir, sweep: SweepSummary | None = None) -> list[Path]:
    """gnuplot-readable whitespace-separated files: one time series per record and,
    for a sweep, a phase line sorted by amplitude."""
    records = list(records)
    if not records:
        raise ValueError("emit_plotdata needs at least one record")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in records:
        if not Path(r.csv_path).is_file():
            continue
        data = read_series_csv(r.csv_path)
        p = out / (Path(r.csv_path).stem + ".dat")
        rows = np.column_stack([data[c] for c in CSV_COLUMNS])
        with open(p, "w") as fh:
            fh.write("# " + " ".join(CSV_COLUMNS) + "\n")
            for row in rows:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        paths.append(p)
    if sweep is not None:
        codes = {"Scattering": 0, "GrowUp": 1, "Undetermined": 2, "BlowUp": 3}
        p = out / "sweep-phase.dat"
        with open(p, "w") as fh:
            fh.write("# A E0 K0 subthreshold verdict_code  (0 Scattering, 1 GrowUp, 2 Undetermined, 3 BlowUp)\n")
            for row in sorted(sweep.rows(), key=lambda d: d["A"]):
                fh.write(f"{row['A']!r} {row['E0']!r} {row['K0']!r} {int(row['subthreshold'])} "
                         f"{codes[row['verdict']]}\n")
        paths.append(p)
    return paths


# -- virial check --------------------------------------------------------------------

@dataclass
class VirialCheck:
    t: np.ndarray
    dMa_dt: np.ndarray        # central difference of M_a
    rhs: np.ndarray           # four-term virial right-hand side
    main: np.ndarray          # 8(K - μP)
    residual: float           # max |dMa/dt - rhs| over interior checkpoints
    shortcut_error: float     # max |rhs - main| / max|main|
    status: str


def virial_check(cfg: ExperimentConfig, *, kind: str | None = None) -> VirialCheck:
    """Evolve with a virial weight (quadratic by default) recorded at every checkpoint
    and compare the time derivative of M_a against the virial right-hand side."""
    params = cfg.model()
    grid = cfg.grid()
    if kind is None:
        kind = cfg["diag.virial_weight"] if cfg["diag.virial_weight"] != "none" else "quadratic"
    vw = make_virial_weight(cfg, grid, kind)
    ecfg = cfg.evolve_config()
    sw = make_singular_weight(grid, params.b, cfg["diag.epsilon"])
    rec = DiagnosticsRecorder(params, grid, singular=sw, virial_weight=vw, proxy=False, dt=ecfg.dt)
    traj = evolve(initial_data(cfg, params, grid), params, ecfg, probes=[rec], weight=sw)
    s = rec.columns()
    d = central_difference(s["t"], s["Ma"])
    main = 8 * (s["kinetic"] - params.mu * s["potential"])
    inner = slice(1, -1)
    residual = float(np.max(np.abs(d[inner] - s["virial_rhs"][inner]))) if len(d) > 2 else math.nan
    scale = float(np.max(np.abs(main))) or 1.0
    shortcut = float(np.max(np.abs(s["virial_rhs"] - main))) / scale
    return VirialCheck(s["t"], d, s["virial_rhs"], main, residual, shortcut, traj.status)
