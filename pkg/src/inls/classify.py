"""Threshold reports, trapping and blow-up monitors, and finite-horizon run verdicts.

Verdicts are numerical evidence from a finite run on a finite box.  The
decision thresholds live in :class:`VerdictThresholds` and are echoed into
every run record.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .diagnostics import CSV_COLUMNS
from .evolve import BLOWUP_STATUSES, COMPLETED
from .field import FieldState, gradient_sq_integral, make_singular_weight, weighted_potential_integral
from .groundstate import VariationalConstants, trapping_bound
from .model import ModelParams


class PreconditionError(ValueError):
    pass


class RateUndefinedError(ValueError):
    pass


# -- threshold report ----------------------------------------------------------------

BOUNDARY_TOL = 1e-3


@dataclass(frozen=True)
class ThresholdReport:
    E0: float
    K0: float
    c: float
    E_W: float
    subthreshold: bool
    superthreshold: bool
    boundary: bool
    y_star: float | None
    delta_margin: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdReport":
        return cls(**d)


def classify_threshold(E0: float, K0: float, consts: VariationalConstants, *,
                       boundary_tol: float = BOUNDARY_TOL) -> ThresholdReport:
    """Flags for given (E0, K0).  Within ``boundary_tol`` (relative) of E(W) or c
    the data is reported as threshold-boundary and neither flag is set."""
    c, E_W = consts.c, consts.E_W
    boundary = abs(E0 - E_W) <= boundary_tol * E_W or abs(K0 - c) <= boundary_tol * c
    below = E0 < E_W and not boundary
    y_star = None
    if 0 <= E0 <= E_W:
        y_star = trapping_bound(E0, consts)
    elif E0 > E_W and boundary and E0 <= E_W * (1 + boundary_tol):
        y_star = consts.c
    return ThresholdReport(E0=float(E0), K0=float(K0), c=float(c), E_W=float(E_W),
                           subthreshold=bool(below and K0 < c), superthreshold=bool(below and K0 >= c),
                           boundary=bool(boundary), y_star=None if y_star is None else float(y_star),
                           delta_margin=1 - math.sqrt(max(float(K0), 0.0) / c))


def threshold_report(u0: FieldState, consts: VariationalConstants, params: ModelParams, *,
                     boundary_tol: float = BOUNDARY_TOL, epsilon: float = 0.0) -> ThresholdReport:
    """E0 and K0 = ‖∇u0‖² measured on the grid, compared with E(W) and c."""
    sw = make_singular_weight(u0.grid, params.b, epsilon)
    K0 = gradient_sq_integral(u0)
    P0 = weighted_potential_integral(u0, sw, params.alpha)
    E0 = 0.5 * K0 - params.mu * P0 / (params.alpha + 2)
    return classify_threshold(E0, K0, consts, boundary_tol=boundary_tol)


# -- monitors ------------------------------------------------------------------------

@dataclass
class MonitorResult:
    passed: bool
    tol: float
    margin: np.ndarray     # positive where the monitored bound holds
    energy_drift: float


def _series(series) -> dict:
    missing = [c for c in ("t", "kinetic", "energy") if c not in series]
    if missing:
        raise KeyError(f"diagnostics series is missing columns: {missing}")
    return {k: np.asarray(v, float) for k, v in series.items()}


def _energy_drift(s: dict) -> float:
    E = s["energy"]
    return float(np.nanmax(np.abs(E - E[0]))) if E.size else 0.0


def trapping_monitor(series, report: ThresholdReport) -> MonitorResult:
    """Passes iff kinetic(t) <= y* + tol at every checkpoint,
    with tol = 10 × (observed energy drift) + 1% of y*."""
    if not (report.subthreshold or report.boundary) or report.y_star is None:
        raise PreconditionError("trapping monitor applies to subthreshold data only")
    s = _series(series)
    drift = _energy_drift(s)
    tol = 10 * drift + 0.01 * report.y_star
    margin = report.y_star + tol - s["kinetic"]
    return MonitorResult(bool(np.all(margin >= 0)), tol, margin, drift)


def blowup_monitor(series, report: ThresholdReport) -> MonitorResult:
    """Passes iff kinetic(t) >= c (1 - tol) at every checkpoint, with the relative
    tol = 10 × (observed energy drift)/c + 1%."""
    if not (report.superthreshold or report.boundary):
        raise PreconditionError("blow-up monitor applies to superthreshold data only")
    s = _series(series)
    drift = _energy_drift(s)
    tol = 10 * drift / report.c + 0.01
    margin = s["kinetic"] - report.c * (1 - tol)
    return MonitorResult(bool(np.all(margin >= 0)), tol, margin, drift)


# -- verdicts ------------------------------------------------------------------------

@dataclass(frozen=True)
class VerdictThresholds:
    kinetic_ratio: float = 10.0      # max/min kinetic for a bounded run
    snorm_decay: float = 10.0        # peak / last scattering-size window increment
    proxy_tail: float = 0.05         # proxy over the last half, relative to ‖u0‖_{Ḣ¹}
    growup_factor: float = 4.0       # final/initial kinetic for grow-up
    min_checkpoints: int = 5
    free_flow_tol: float = 1e-10     # proxy tail at which the run is a free evolution

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Scattering:
    snorm_final: float
    proxy_tail: float
    kind = "Scattering"


@dataclass(frozen=True)
class BlowUp:
    t_estimate: float
    kind = "BlowUp"


@dataclass(frozen=True)
class GrowUp:
    fitted_rate: float
    kind = "GrowUp"


@dataclass(frozen=True)
class Undetermined:
    reason: str
    kind = "Undetermined"


RunVerdict = Scattering | BlowUp | GrowUp | Undetermined
_VERDICTS = {cls.kind: cls for cls in (Scattering, BlowUp, GrowUp, Undetermined)}


def verdict_to_dict(v: RunVerdict) -> dict:
    return {"kind": v.kind, **asdict(v)}


def verdict_from_dict(d: dict) -> RunVerdict:
    d = dict(d)
    return _VERDICTS[d.pop("kind")](**d)


def classify_run(series, status: str = COMPLETED,
                 thresholds: VerdictThresholds = VerdictThresholds()) -> RunVerdict:
    """Verdict from a diagnostics series and the run's termination status.

    A pure function of its inputs.  ``series`` maps the CSV column names to arrays.
    """
    missing = [c for c in CSV_COLUMNS if c not in series]
    if missing:
        raise KeyError(f"diagnostics series is missing columns: {missing}")
    s = {k: np.asarray(series[k], float) for k in CSV_COLUMNS}
    t, K = s["t"], s["kinetic"]
    if status in BLOWUP_STATUSES:
        return BlowUp(float(t[-1]) if t.size else math.nan)
    if t.size < thresholds.min_checkpoints:
        return Undetermined(f"insufficient data: {t.size} checkpoints (< {thresholds.min_checkpoints})")
    if status != COMPLETED:
        return Undetermined(f"run ended with status {status!r}")

    snorm_final = float(s["snorm_cum"][-1])
    if not np.any(K > 0):
        return Scattering(snorm_final, 0.0)

    h1 = math.sqrt(K[0]) if K[0] > 0 else math.sqrt(K.max())
    half = t >= t[0] + 0.5 * (t[-1] - t[0])
    half[0] = False
    proxy = s["proxy"][half]
    tail = float(np.sum(proxy)) if proxy.size and np.isfinite(proxy).all() else math.nan
    if tail <= thresholds.free_flow_tol * h1:
        return Scattering(snorm_final, tail)

    reasons = []
    ratio = K.max() / K.min() if K.min() > 0 else math.inf
    bounded = ratio < thresholds.kinetic_ratio
    if not bounded:
        reasons.append(f"kinetic max/min = {ratio:.3g}")
    inc = np.diff(s["snorm_cum"])
    decayed = False
    if inc.size and np.isfinite(inc).all() and inc.max() > 0:
        decayed = inc.max() >= thresholds.snorm_decay * inc[-1]
        if not decayed:
            reasons.append(f"scattering-size increments decayed only {inc.max() / max(inc[-1], 1e-300):.3g}x")
    else:
        reasons.append("no scattering-size increments")
    small_tail = tail < thresholds.proxy_tail * h1
    if not small_tail:
        reasons.append(f"proxy tail {tail:.3g} >= {thresholds.proxy_tail} x {h1:.3g}")
    if bounded and decayed and small_tail:
        return Scattering(snorm_final, tail)

    rel = 1e-9 * K.max()
    if np.all(np.diff(K) >= -rel) and K[-1] >= thresholds.growup_factor * K[0]:
        sup = np.sqrt(np.maximum.accumulate(K))
        pos = t > 0
        rate = math.nan
        if pos.sum() >= 10:
            rate = float(np.polyfit(np.log(t[pos]), np.log(sup[pos]), 1)[0])
        return GrowUp(rate)
    return Undetermined("; ".join(reasons))


# -- grow-up rate --------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    fitted: float
    predicted: float


def predicted_growup_rate(N: int, alpha: float) -> float:
    """2/(Nα - 4), the lower growth exponent of sup ‖∇u‖ in the grow-up alternative."""
    d = N * alpha - 4
    if abs(d) < 1e-14:
        raise RateUndefinedError(f"grow-up rate is undefined when N·α = 4 (N={N}, α={alpha})")
    return 2 / d


def growup_rate_fit(T, sup_values, N: int, alpha: float) -> RateFit:
    """Least-squares slope of log(sup ‖∇u‖) against log T."""
    predicted = predicted_growup_rate(N, alpha)
    T = np.asarray(T, float)
    S = np.asarray(sup_values, float)
    if T.size != S.size or T.size < 10:
        raise ValueError("rate fit needs at least 10 (T, sup) samples of equal length")
    if np.any(T <= 0) or np.any(S <= 0):
        raise ValueError("rate fit needs positive T and sup values")
    slope = np.polyfit(np.log(T), np.log(S), 1)[0]
    return RateFit(float(slope), predicted)
