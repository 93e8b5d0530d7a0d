"""Symmetric (Strang) split-step integration of i u_t + Δu + μ|x|^{-b}|u|^α u = 0.

The linear flow is exact in Fourier space on Cartesian grids and Crank-Nicolson
on radial grids.  The nonlinear flow i u_t = -μ w |u|^α u keeps |u| fixed and is
solved exactly as a pointwise phase rotation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.linalg import solve_banded

from .field import (FieldState, GridSpec, NumericalFailure, SingularWeight, dealias, forward, inverse,
                    make_singular_weight, radial_laplacian_bands, write_snapshot)
from .model import ModelParams

log = logging.getLogger(__name__)

COMPLETED = "completed"
HALTED = "halted-by-probe"
BLOWUP_SUSPECTED = "blowup-suspected"
BLOWUP_OVERFLOW = "blowup-overflow"
NUMERICAL_FAILURE = "numerical-failure"
BLOWUP_STATUSES = (BLOWUP_SUSPECTED, BLOWUP_OVERFLOW)

OVERFLOW_GUARD = 1e150


class BlowUpOverflow(FloatingPointError):
    pass


@dataclass(frozen=True)
class Sponge:
    inner_fraction: float = 0.8
    strength: float = 1.0

    def __post_init__(self):
        if not 0 < self.inner_fraction < 1:
            raise ValueError("sponge inner radius fraction must lie in (0, 1)")
        if self.strength < 0:
            raise ValueError("sponge strength must be nonnegative")


@dataclass
class EvolveConfig:
    dt: float
    t_end: float
    sponge: Optional[Sponge] = None
    dt_control: bool = False
    growth_factor: float = 1.5
    max_halvings: int = 20
    checkpoint_stride: int = 10
    kinetic_cap_factor: float = 1e3
    sup_cap: float = 1e8
    nonlinear: bool = True
    strict_dealias: bool = False
    snapshot_dir: Optional[str] = None
    snapshot_every: int = 0  # in checkpoints; 0 disables

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"evolve: dt must be positive, got {self.dt}")
        if self.growth_factor <= 1:
            raise ValueError("evolve: growth factor γ must exceed 1")
        if self.checkpoint_stride < 1:
            raise ValueError("evolve: checkpoint stride must be >= 1")


class LinearPropagator:
    """e^{iτΔ} on the grid: exact Fourier multiplier, or Crank-Nicolson on radial grids."""

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self._phase_cache: dict[float, np.ndarray] = {}
        if grid.radial:
            self._bands = radial_laplacian_bands(grid)

    def phase(self, tau: float) -> np.ndarray:
        ph = self._phase_cache.get(tau)
        if ph is None:
            if len(self._phase_cache) > 2:
                self._phase_cache.clear()
            ph = np.exp(-1j * tau * self.grid.k2)
            self._phase_cache[tau] = ph
        return ph

    def apply(self, samples: np.ndarray, tau: float) -> np.ndarray:
        if tau == 0:
            return samples.copy()
        if self.grid.radial:
            return self._cn(samples, tau)
        return inverse(self.phase(tau) * forward(samples))

    def apply_with_kinetic(self, samples: np.ndarray, tau: float) -> tuple[np.ndarray, float]:
        """Propagate and also return ∫|∇u|² of the input (free from the FFT)."""
        g = self.grid
        if g.radial:
            from .field import gradient_sq_integral

            return self._cn(samples, tau), gradient_sq_integral(FieldState(samples, g))
        uh = forward(samples)
        kin = float(np.sum(g.k2_grad * (uh.real**2 + uh.imag**2)) * g.cell_volume / g.size)
        return inverse(self.phase(tau) * uh), kin

    def _cn(self, samples: np.ndarray, tau: float) -> np.ndarray:
        # (I - iτ/2 Δ) u+ = (I + iτ/2 Δ) u
        lower, diag, upper = self._bands
        z = 0.5j * tau
        lap = diag * samples
        lap[1:] += lower * samples[:-1]
        lap[:-1] += upper * samples[1:]
        rhs = samples + z * lap
        ab = np.zeros((3, samples.size), dtype=complex)
        ab[0, 1:] = -z * upper
        ab[1] = 1 - z * diag
        ab[2, :-1] = -z * lower
        return solve_banded((1, 1), ab, rhs)


def linear_substep(u: FieldState, tau: float, propagator: LinearPropagator | None = None) -> FieldState:
    """Exact free flow û(k) <- e^{-i|k|²τ} û(k) (Crank-Nicolson on radial grids)."""
    prop = propagator or LinearPropagator(u.grid)
    return FieldState(prop.apply(u.samples, tau), u.grid, u.time + tau)


def _rotate(samples: np.ndarray, w: np.ndarray, mu: int, alpha: float, tau: float,
            guard: float = OVERFLOW_GUARD) -> np.ndarray:
    a2 = samples.real**2 + samples.imag**2
    if a2.size and a2.max() > guard * guard:
        raise BlowUpOverflow(f"|u| exceeded overflow guard {guard:g}")
    amp = a2 if alpha == 2 else a2 ** (alpha / 2)
    return samples * np.exp((1j * mu * tau) * w * amp)


def nonlinear_substep(u: FieldState, w: SingularWeight | np.ndarray, params: ModelParams, tau: float,
                      *, strict: bool = False, overflow_guard: float = OVERFLOW_GUARD) -> FieldState:
    """u <- u · exp(i μ w |u|^α τ); |u| is unchanged pointwise."""
    wv = w.samples if isinstance(w, SingularWeight) else np.asarray(w)
    s = dealias(u.samples, u.grid) if strict and not u.grid.radial else u.samples
    return FieldState(_rotate(s, wv, params.mu, params.alpha, tau, overflow_guard), u.grid, u.time)


def strang_step(u: FieldState, w: SingularWeight, params: ModelParams, dt: float,
                propagator: LinearPropagator | None = None, *, nonlinear: bool = True,
                strict: bool = False) -> FieldState:
    """Half nonlinear, full linear, half nonlinear."""
    prop = propagator or LinearPropagator(u.grid)
    v = u
    if nonlinear:
        v = nonlinear_substep(v, w, params, dt / 2, strict=strict)
    v = FieldState(prop.apply(v.samples, dt), u.grid, u.time + dt)
    if nonlinear:
        v = nonlinear_substep(v, w, params, dt / 2, strict=strict)
    return v


def sponge_mask(grid: GridSpec, sponge: Sponge, dt: float) -> np.ndarray:
    """Smooth mask: 1 inside the inner radius, 1 - strength·dt at the box edge (per axis)."""
    depth = min(1.0, sponge.strength * dt)
    L = grid.L
    r_in = sponge.inner_fraction * L

    def profile(x):
        t = np.clip((np.abs(x) - r_in) / (L - r_in), 0.0, 1.0)
        s = t**3 * (10 - 15 * t + 6 * t**2)
        return 1.0 - depth * s

    mask = np.ones(grid.shape)
    for x in grid.coords():
        mask = mask * profile(x)
    return mask


def apply_sponge(u: FieldState, sponge: Sponge | None, dt: float, mask: np.ndarray | None = None) -> FieldState:
    if sponge is None or sponge.strength == 0:
        return u
    m = sponge_mask(u.grid, sponge, dt) if mask is None else mask
    return FieldState(u.samples * m, u.grid, u.time)


@dataclass
class StepInfo:
    step: int
    dt: float
    checkpoint: int
    final: bool = False


Probe = Callable[[FieldState, StepInfo], Optional[bool]]


@dataclass
class Trajectory:
    initial: FieldState
    final: FieldState
    status: str
    reason: str = ""
    steps: int = 0
    halvings: int = 0
    dt_final: float = 0.0
    t_end: float = 0.0
    probes: list = dc_field(default_factory=list)

    @property
    def reached_end(self) -> bool:
        return self.status == COMPLETED

    @property
    def blew_up(self) -> bool:
        return self.status in BLOWUP_STATUSES


def evolve(u0: FieldState, params: ModelParams, cfg: EvolveConfig, probes: Iterable[Probe] = (),
           weight: SingularWeight | None = None) -> Trajectory:
    """Advance ``u0`` from ``u0.time`` to ``cfg.t_end`` (backwards if t_end < u0.time).

    Probes are called at the initial state, every ``checkpoint_stride`` steps and
    at the final state; a probe returning True halts the run.
    """
    probes = list(probes)
    grid = u0.grid
    w = weight if weight is not None else make_singular_weight(grid, params.b)
    prop = LinearPropagator(grid)
    span = cfg.t_end - u0.time
    direction = 1.0 if span >= 0 else -1.0
    dt = cfg.dt
    steps_left = int(math.ceil(abs(span) / dt - 1e-9)) if span else 0
    tau = direction * (abs(span) / steps_left if steps_left else dt)

    traj = Trajectory(initial=u0, final=u0, status=COMPLETED, probes=probes, t_end=cfg.t_end)
    u = u0.copy().check_finite()
    t0 = u0.time
    step = 0
    checkpoint = 0
    snapdir = Path(cfg.snapshot_dir) if cfg.snapshot_dir else None
    if snapdir:
        snapdir.mkdir(parents=True, exist_ok=True)

    def call_probes(state, final=False):
        nonlocal checkpoint
        info = StepInfo(step, abs(tau), checkpoint, final)
        if snapdir and cfg.snapshot_every and checkpoint % cfg.snapshot_every == 0:
            write_snapshot(state, snapdir / f"snap_{checkpoint:06d}.bin")
        checkpoint += 1
        return any(bool(p(state, info)) for p in probes)

    if call_probes(u, final=steps_left == 0) or steps_left == 0:
        traj.final = u
        traj.status = COMPLETED if steps_left == 0 else HALTED
        traj.dt_final = abs(tau)
        return traj

    mask = sponge_mask(grid, cfg.sponge, abs(tau)) if cfg.sponge and cfg.sponge.strength else None
    kin0 = None
    kin_prev = None
    halvings = 0
    wv = w.samples
    mu, alpha = params.mu, params.alpha
    samples = u.samples
    t_base, n_done = t0, 0   # time = t_base + n_done * tau, rebased whenever tau changes

    try:
        while steps_left > 0:
            if cfg.nonlinear:
                s = dealias(samples, grid) if cfg.strict_dealias and not grid.radial else samples
                samples = _rotate(s, wv, mu, alpha, tau / 2)
            samples, kin = prop.apply_with_kinetic(samples, tau)
            if cfg.nonlinear:
                s = dealias(samples, grid) if cfg.strict_dealias and not grid.radial else samples
                samples = _rotate(s, wv, mu, alpha, tau / 2)
            if mask is not None:
                samples = samples * mask
            step += 1
            steps_left -= 1
            n_done += 1
            t = t_base + n_done * tau
            if not np.isfinite(kin):
                raise NumericalFailure(f"non-finite kinetic energy at t={t}")
            if kin0 is None:
                kin0 = kin
            peak = float(np.max(np.abs(samples)))
            if not math.isfinite(peak):
                raise NumericalFailure(f"non-finite samples at t={t}")
            halt = None
            if peak >= cfg.sup_cap:
                halt = f"sup|u|={peak:.3g} reached cap {cfg.sup_cap:g}"
            elif kin0 > 0 and kin >= cfg.kinetic_cap_factor * kin0:
                halt = f"kinetic {kin:.4g} reached {cfg.kinetic_cap_factor:g} x initial {kin0:.4g}"
            elif cfg.dt_control and kin_prev and kin >= cfg.growth_factor * kin_prev:
                if halvings >= cfg.max_halvings:
                    halt = f"kinetic still growing by >= {cfg.growth_factor} per step after {halvings} dt halvings"
                else:
                    halvings += 1
                    remaining = abs(cfg.t_end - t)
                    t_base, n_done = t, 0
                    tau /= 2
                    steps_left = int(math.ceil(remaining / abs(tau) - 1e-9))
                    if steps_left:
                        tau = direction * remaining / steps_left
                    if mask is not None:
                        mask = sponge_mask(grid, cfg.sponge, abs(tau))
                    log.debug("dt halved to %g at t=%g", abs(tau), t)
            kin_prev = kin
            u = FieldState(samples, grid, cfg.t_end if steps_left == 0 and halt is None else t)
            if halt is not None:
                traj.status, traj.reason = BLOWUP_SUSPECTED, halt
                call_probes(u, final=True)
                break
            if steps_left == 0:
                if call_probes(u, final=True):
                    traj.status = HALTED
                break
            if step % cfg.checkpoint_stride == 0 and call_probes(u):
                traj.status = HALTED
                break
    except BlowUpOverflow as exc:
        traj.status, traj.reason = BLOWUP_OVERFLOW, str(exc)
    except NumericalFailure as exc:
        traj.status, traj.reason = NUMERICAL_FAILURE, str(exc)
    traj.final = u
    traj.steps = step
    traj.halvings = halvings
    traj.dt_final = abs(tau)
    return traj


def radial_evolve(u0: FieldState, params: ModelParams, cfg: EvolveConfig, probes: Iterable[Probe] = (),
                  weight: SingularWeight | None = None) -> Trajectory:
    """Same contract as :func:`evolve` for radial profiles (Crank-Nicolson linear part).

    The first cell sits at r = h/2 where the weight is (h/2)^{-b}; the splitting
    is only accurate while dt·(h/2)^{-b}·sup|u|^α stays well below one, so fine
    radial grids need proportionally smaller steps.
    """
    if not u0.grid.radial:
        raise ValueError("radial_evolve needs a radial grid")
    if u0.grid.dims != params.N:
        raise ValueError("radial grid ambient dimension must equal the model N")
    return evolve(u0, params, cfg, probes, weight)
