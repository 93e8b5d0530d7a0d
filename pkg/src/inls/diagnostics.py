"""Functionals evaluated along a trajectory: conserved quantities, localized virial
weights and the virial identity, V_R, the scattering size and a scattering proxy."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial

from .evolve import LinearPropagator, StepInfo
from .field import (FieldState, GridSpec, SingularWeight, forward, gradient, gradient_sq_integral, integrate,
                    inverse, lp_norm, mass, make_singular_weight, radial_derivative, sup_abs,
                    weighted_potential_integral)
from .model import ModelParams

CSV_COLUMNS = ("t", "mass", "kinetic", "potential", "energy", "Ma", "virial_rhs", "VR", "snorm_cum",
               "sup_abs", "proxy")

QUADRATIC_PLATEAU = "quadratic-plateau"
COMPACT_BUMP = "compact-bump"


class WeightRegionError(ValueError):
    pass


# -- radial weight profiles -------------------------------------------------------

def _smoothstep5() -> Polynomial:
    return Polynomial([0, 0, 0, 10, -15, 6])


def _smoothstep7() -> Polynomial:
    return Polynomial([0, 0, 0, 0, 35, -84, 70, -20])


class RadialProfile:
    """φ on ρ >= 0 with φ' = slope·ρ on [0, 1] and polynomial pieces beyond.

    ``pieces`` lists (start, end, p) where φ'(ρ) = p(s) in the local variable
    s = (ρ - start)/(end - start) in [0, 1]; φ' vanishes after the last piece.
    """

    def __init__(self, slope: float, pieces: list[tuple[float, float, Polynomial]], *, plateau=None):
        self.slope = slope
        self.pieces = pieces
        self.support = pieces[-1][1]
        self._phi0 = []
        acc = slope / 2
        for lo, hi, p in pieces:
            self._phi0.append(acc)
            acc += (hi - lo) * (p.integ()(1.0) - p.integ()(0.0))
        self.plateau = acc if plateau is None else plateau

    def derivative(self, rho: np.ndarray, m: int) -> np.ndarray:
        """m-th derivative of φ at ρ (m = 0 gives φ itself)."""
        rho = np.asarray(rho, dtype=float)
        out = np.zeros_like(rho)
        inner = rho <= 1.0
        inner_vals = {0: self.slope * rho**2 / 2, 1: self.slope * rho, 2: self.slope + 0 * rho}
        out[inner] = inner_vals.get(m, 0 * rho)[inner]
        for (lo, hi, p), phi0 in zip(self.pieces, self._phi0):
            sel = (rho > lo) & (rho < hi)
            if not sel.any():
                continue
            width = hi - lo
            s = (rho[sel] - lo) / width
            if m == 0:
                out[sel] = phi0 + width * p.integ()(s)
            else:
                out[sel] = p.deriv(m - 1)(s) / width ** (m - 1)
        if m == 0:
            out[rho >= self.support] = self.plateau
        return out


def _local(poly: Polynomial, lo: float, hi: float) -> Polynomial:
    """Re-express poly(ρ) in s = (ρ - lo)/(hi - lo)."""
    return poly(Polynomial([lo, hi - lo]))


def plateau_profile() -> RadialProfile:
    """φ(ρ) = ρ² on [0, 1]; φ' = 2ρ(1 - S5(ρ - 1)) on [1, 2]; constant beyond."""
    s = Polynomial([0.0, 1.0])
    return RadialProfile(2.0, [(1.0, 2.0, 2 * (1 + s) * (1 - _smoothstep5()(s)))])


def bump_profile(drop: float = 1.0) -> RadialProfile:
    """φ(ρ) = ρ²/2 on [0, 1], φ ≡ 0 for ρ >= 10, C³ in between.

    φ' = ρ(1 - S7((ρ-1)/drop)) + β t⁴(1-t)⁴ with t = (ρ-1)/9, and β fixed by
    ∫_1^10 φ' = -1/2 so that φ(10) = 0.
    """
    rho = Polynomial([0.0, 1.0])
    fall = rho * (1 - _smoothstep7()((rho - 1) / drop))
    t = (rho - 1) / 9
    bump = t**4 * (1 - t) ** 4
    edge = 1.0 + drop
    fall_area = drop * _local(fall, 1.0, edge).integ()(1.0)
    bump_area = 9 * (Polynomial([0, 1]) ** 4 * (1 - Polynomial([0, 1])) ** 4).integ()(1.0)
    beta = (-0.5 - fall_area) / bump_area
    pieces = [(1.0, edge, _local(fall + beta * bump, 1.0, edge)),
              (edge, 10.0, _local(beta * bump, edge, 10.0))]
    return RadialProfile(1.0, pieces, plateau=0.0)


@dataclass
class VirialWeight:
    """a(x) = R² φ(|x|/R) sampled on a grid, with the derivative fields the virial needs."""

    kind: str
    R: float
    grid: GridSpec
    profile: RadialProfile

    @cached_property
    def _derivs(self):
        g, R = self.grid, self.R
        r = g.r
        rho = r / R
        d = [R ** (2 - m) * self.profile.derivative(rho, m) for m in range(5)]
        inner = rho <= 1.0
        s = self.profile.slope
        # exact values inside the quadratic region
        d[0] = np.where(inner, s * g.r2 / 2, d[0])
        d_over_r = np.where(inner, s, d[1] / r)
        return d, d_over_r

    @property
    def a(self) -> np.ndarray:
        return self._derivs[0][0]

    @property
    def a_prime(self) -> np.ndarray:
        return self._derivs[0][1]

    @property
    def a_second(self) -> np.ndarray:
        return self._derivs[0][2]

    @property
    def a_prime_over_r(self) -> np.ndarray:
        return self._derivs[1]

    @cached_property
    def laplacian(self) -> np.ndarray:
        """a_jj = a'' + (N-1) a'/r."""
        return self.a_second + (self.grid.N - 1) * self.a_prime_over_r

    @cached_property
    def bilaplacian(self) -> np.ndarray:
        """a_jjkk = Δ²a for the radial profile."""
        (a0, a1, a2, a3, a4), a1r = self._derivs
        N, r = self.grid.N, self.grid.r
        q = (a2 - a1r) / r                       # (a'' - a'/r)/r, zero in the quadratic region
        return a4 + (N - 1) * (a3 - 2 * q) / r + (N - 1) * (a3 + (N - 1) * q) / r

    @cached_property
    def x_dot_grad(self) -> np.ndarray:
        """x_j a_j = r a'(r)."""
        return self.grid.r2 * self.a_prime_over_r

    def grad(self) -> list[np.ndarray]:
        """a_j = (a'/r) x_j."""
        return [self.a_prime_over_r * x for x in self.grid.coords()]

    def hessian(self) -> list[list[np.ndarray]]:
        """a_jk = (a'/r) δ_jk + (a'' - a'/r) x_j x_k / r²."""
        xs = self.grid.coords()
        c = (self.a_second - self.a_prime_over_r) / self.grid.r2
        return [[(self.a_prime_over_r if j == k else 0) + c * xs[j] * xs[k] for k in range(len(xs))]
                for j in range(len(xs))]

    def check_invariants(self, tol: float = 1e-10) -> dict:
        """Sample-wise checks of the weight's defining properties."""
        g, R = self.grid, self.R
        r = g.r
        out = {}
        if self.kind == QUADRATIC_PLATEAU:
            inner = r <= R
            out["exact_inside"] = bool(np.all(self.a[inner] == g.r2[inner]))
            outer = r > 2 * R
            plateau = self.profile.plateau * R**2
            out["plateau_value"] = plateau
            out["constant_outside"] = bool(np.all(np.abs(self.a[outer] - plateau) <= tol * plateau))
            ann = (r > R) & (r <= 2 * R)
            scale = []
            for m in range(5):
                vals = np.abs(self._derivs[0][m][ann]) if ann.any() else np.zeros(1)
                scale.append(float(vals.max() / R ** (2 - m)))
            out["derivative_scaling"] = scale
            out["a_second_max"] = float(self.a_second.max())
            out["ok"] = out["exact_inside"] and out["constant_outside"] and out["a_second_max"] <= 2 + tol
        else:
            inner = r <= R
            out["exact_inside"] = bool(np.all(self.a[inner] == g.r2[inner] / 2))
            out["zero_outside"] = bool(np.all(self.a[r >= 10 * R] == 0.0))
            phi2 = self.a_second
            out["phi_second_max"] = float(phi2.max())
            out["phi_prime_over_rho_max"] = float(self.a_prime_over_r.max())
            out["phi_prime_min"] = float((self.a_prime / R).min())
            out["ok"] = (out["exact_inside"] and out["zero_outside"] and out["phi_second_max"] <= 1 + tol
                         and out["phi_prime_over_rho_max"] <= 1 + tol)
        return out


def _check_region(grid: GridSpec, outer: float):
    if not outer < grid.L:
        raise WeightRegionError(f"weight support radius {outer} is not strictly inside the box (L={grid.L})")


def make_quadratic_weight(R: float, grid: GridSpec) -> VirialWeight:
    """a = |x|² for |x| <= R, smooth descent of a' on [R, 2R], constant beyond."""
    _check_region(grid, 2 * R)
    return VirialWeight(QUADRATIC_PLATEAU, float(R), grid, plateau_profile())


def make_bump_weight(R: float, grid: GridSpec) -> VirialWeight:
    """a = R² φ(x/R) with φ = |x|²/2 for |x| <= 1 and φ = 0 for |x| >= 10."""
    _check_region(grid, 10 * R)
    w = VirialWeight(COMPACT_BUMP, float(R), grid, bump_profile())
    fine = np.linspace(0, 10, 200001)
    if w.profile.derivative(fine, 2).max() > 1 + 1e-10:
        raise WeightRegionError("bump profile violates φ'' <= 1")
    return w


# -- virial functionals -------------------------------------------------------------

def _grad_pieces(u: FieldState, w: VirialWeight):
    """(|∇u|², x·∇u) for Cartesian grids; (|u_r|², r u_r) on radial grids."""
    g = u.grid
    if g.radial:
        ur = radial_derivative(u.samples, g)
        return np.abs(ur) ** 2, g.r * ur
    uh = forward(u.samples)
    grad2 = np.zeros(g.shape)
    xdot = np.zeros(g.shape, dtype=complex)
    for x, k in zip(g.coords(), g.kcoords(zero_nyquist=True)):
        gj = inverse(1j * k * uh)
        grad2 += gj.real**2 + gj.imag**2
        xdot += x * gj
    return grad2, xdot


def virial_Ma(u: FieldState, w: VirialWeight) -> float:
    """M_a = 2 Im ∫ ū ∇u·∇a dx."""
    _, xdot = _grad_pieces(u, w)
    return 2 * integrate(np.imag(np.conj(u.samples) * xdot * w.a_prime_over_r), u.grid)


def virial_rhs(u: FieldState, w: VirialWeight, sw: SingularWeight, params: ModelParams) -> float:
    """dM_a/dt = ∫ 4 Re a_jk ū_j u_k - |u|² a_jjkk - μ(2 - 4/(α+2)) |x|^{-b}|u|^{α+2} a_jj
    - μ (4b/(α+2)) |x|^{-b-2} |u|^{α+2} x_j a_j."""
    g = u.grid
    grad2, xdot = _grad_pieces(u, w)
    a1r = w.a_prime_over_r
    # Re a_jk ū_j u_k = (a'/r)|∇u|² + (a'' - a'/r)|x·∇u|²/r²
    hess = a1r * grad2 + (w.a_second - a1r) * (xdot.real**2 + xdot.imag**2) / g.r2
    dens = np.abs(u.samples) ** 2
    nl = dens ** ((params.alpha + 2) / 2)
    al = params.alpha
    total = (4 * hess - dens * w.bilaplacian
             - params.mu * (2 - 4 / (al + 2)) * sw.samples * nl * w.laplacian
             - params.mu * (4 * params.b / (al + 2)) * sw.power(params.b + 2) * nl * w.x_dot_grad)
    return integrate(total, g)


def virial_main_term(u: FieldState, sw: SingularWeight, params: ModelParams) -> float:
    """8 ∫ |∇u|² - μ|x|^{-b}|u|^{α+2}, the value of dM_a/dt where a = |x|²."""
    return 8 * (gradient_sq_integral(u) - params.mu * weighted_potential_integral(u, sw, params.alpha))


def localized_variance(u: FieldState, w: VirialWeight) -> float:
    """V_R = ∫ a |u|² dx."""
    return integrate(w.a * np.abs(u.samples) ** 2, u.grid)


def second_difference(t, v) -> np.ndarray:
    """Central second derivative on a (possibly non-uniform) grid; NaN at the ends."""
    t = np.asarray(t, float)
    v = np.asarray(v, float)
    out = np.full_like(v, np.nan)
    if len(t) < 3:
        return out
    h0 = t[1:-1] - t[:-2]
    h1 = t[2:] - t[1:-1]
    out[1:-1] = 2 * (h0 * v[2:] - (h0 + h1) * v[1:-1] + h1 * v[:-2]) / (h0 * h1 * (h0 + h1))
    return out


def central_difference(t, v) -> np.ndarray:
    t = np.asarray(t, float)
    v = np.asarray(v, float)
    out = np.full_like(v, np.nan)
    if len(t) >= 3:
        out[1:-1] = (v[2:] - v[:-2]) / (t[2:] - t[:-2])
    return out


@dataclass
class VRSeries:
    t: np.ndarray
    VR: np.ndarray
    d2VR: np.ndarray
    main: np.ndarray          # 4(kinetic - P)
    bound_shape: np.ndarray   # R^{-b} kinetic^{Nα/4} + R^{-2}
    C_calibrated: float

    def bound(self, C: float | None = None) -> np.ndarray:
        C = self.C_calibrated if C is None else C
        return self.main + C * self.bound_shape


def V_R_series(t, VR, kinetic, potential, R: float, params: ModelParams) -> VRSeries:
    """V_R(t), its central second difference, and the right-hand side
    4(K - P) + C R^{-b} K^{Nα/4} + C R^{-2}, with C the smallest constant that
    makes the bound hold at every interior checkpoint (reported, not asserted)."""
    t = np.asarray(t, float)
    if len(t) < 3:
        raise ValueError("V_R series needs at least three checkpoints")
    VR = np.asarray(VR, float)
    K = np.asarray(kinetic, float)
    P = np.asarray(potential, float)
    d2 = second_difference(t, VR)
    main = 4 * (K - params.mu * P)
    shape = R ** (-params.b) * K ** (params.N * params.alpha / 4) + R ** (-2.0)
    excess = (d2 - main)[1:-1] / shape[1:-1]
    C = float(max(0.0, np.nanmax(excess))) if excess.size else 0.0
    return VRSeries(t, VR, d2, main, shape, C)


def snorm_exponent(N: int) -> float:
    if N <= 2:
        return math.nan
    return 2 * (N + 2) / (N - 2)


def snorm_density(u: FieldState) -> float:
    """∫ |u|^{2(N+2)/(N-2)} dx at one instant."""
    p = snorm_exponent(u.grid.N)
    if math.isnan(p):
        return math.nan
    return integrate(np.abs(u.samples) ** p, u.grid)


def snorm_accumulate(times, densities) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoid-rule cumulative ∫∫|u|^{2(N+2)/(N-2)} and the per-window increments."""
    t = np.asarray(times, float)
    d = np.asarray(densities, float)
    inc = np.zeros_like(d)
    if len(t) > 1:
        inc[1:] = 0.5 * (d[1:] + d[:-1]) * np.diff(t)
    return np.cumsum(inc), inc


def scattering_proxy(u1: FieldState, u2: FieldState, propagator: LinearPropagator | None = None) -> float:
    """‖e^{-i t2 Δ} u(t2) - e^{-i t1 Δ} u(t1)‖_{Ḣ¹}.

    Computed as ‖e^{-i(t2-t1)Δ} u(t2) - u(t1)‖_{Ḣ¹}, using that the free flow
    preserves the Ḣ¹ norm.
    """
    if u1.grid != u2.grid:
        raise ValueError("scattering proxy needs both fields on the same grid")
    if u1.time == u2.time:
        return float(gradient_sq_integral(FieldState(u2.samples - u1.samples, u1.grid)) ** 0.5)
    prop = propagator or LinearPropagator(u1.grid)
    pulled = _pullback(prop, u2.samples, u2.time - u1.time)
    return float(gradient_sq_integral(FieldState(pulled - u1.samples, u1.grid)) ** 0.5)


def _pullback(prop: LinearPropagator, samples, span: float, dt: float | None = None):
    if not prop.grid.radial:
        return prop.apply(samples, -span)
    # Crank-Nicolson pullback with the run's step so that free evolution is undone exactly
    steps = max(1, int(round(abs(span) / dt))) if dt else 1
    tau = -span / steps
    out = samples
    for _ in range(steps):
        out = prop.apply(out, tau)
    return out


def gn_functional(u: FieldState, N: int | None = None, alpha: float = 2.0) -> tuple[float, float]:
    """(‖u‖_{α+2}^{α+2}, ‖u‖_2^{(N+2-(N-2)(α+1))/2} ‖∇u‖_2^{Nα/2})."""
    N = u.grid.N if N is None else N
    e2 = (N + 2 - (N - 2) * (alpha + 1)) / 2
    if e2 < 0:
        raise ValueError(f"Gagliardo-Nirenberg L² exponent is negative ({e2}) for N={N}, alpha={alpha}")
    lhs = integrate(np.abs(u.samples) ** (alpha + 2), u.grid)
    rhs = mass(u) ** (e2 / 2) * gradient_sq_integral(u) ** (N * alpha / 4)
    return lhs, rhs


# -- per-checkpoint recording ----------------------------------------------------------

@dataclass
class DiagnosticsSample:
    t: float
    mass: float
    kinetic: float
    potential: float
    energy: float
    Ma: float
    virial_rhs: float
    VR: float
    snorm_cum: float
    sup_abs: float
    proxy: float = math.nan

    def row(self) -> list[float]:
        return [getattr(self, c) for c in CSV_COLUMNS]


class DiagnosticsRecorder:
    """Probe for :func:`inls.evolve.evolve` that records one sample per checkpoint."""

    def __init__(self, params: ModelParams, grid: GridSpec, *, singular: SingularWeight | None = None,
                 virial_weight: VirialWeight | None = None, virial: bool = True, proxy: bool = True,
                 dt: float | None = None):
        self.params = params
        self.grid = grid
        self.sw = singular if singular is not None else make_singular_weight(grid, params.b)
        self.vw = virial_weight
        self.virial = virial and virial_weight is not None
        self.proxy = proxy
        self.dt = dt
        self.samples: list[DiagnosticsSample] = []
        self._prev: FieldState | None = None
        self._prev_density = None
        self._snorm = 0.0
        self._prop = LinearPropagator(grid)

    def __call__(self, u: FieldState, info: StepInfo | None = None):
        self.samples.append(self.measure(u))
        return None

    def measure(self, u: FieldState) -> DiagnosticsSample:
        p = self.params
        K = gradient_sq_integral(u)
        P = weighted_potential_integral(u, self.sw, p.alpha)
        E = 0.5 * K - p.mu * P / (p.alpha + 2)
        dens = snorm_density(u)
        if self._prev is not None and not math.isnan(dens):
            self._snorm += 0.5 * (dens + self._prev_density) * (u.time - self._prev.time)
        if self.virial:
            Ma = virial_Ma(u, self.vw)
            rhs = virial_rhs(u, self.vw, self.sw, p)
            VR = localized_variance(u, self.vw)
        else:
            Ma = rhs = VR = math.nan
        proxy = 0.0
        if self.proxy and self._prev is not None:
            span = u.time - self._prev.time
            pulled = _pullback(self._prop, u.samples, span, self.dt)
            proxy = gradient_sq_integral(FieldState(pulled - self._prev.samples, u.grid)) ** 0.5
        elif not self.proxy:
            proxy = math.nan
        s = DiagnosticsSample(u.time, mass(u), K, P, E, Ma, rhs, VR,
                              self._snorm if not math.isnan(dens) else math.nan, sup_abs(u), proxy)
        self._prev = u.copy()
        self._prev_density = dens
        return s

    def columns(self) -> dict[str, np.ndarray]:
        return {c: np.array([getattr(s, c) for s in self.samples]) for c in CSV_COLUMNS}

    def to_csv(self) -> str:
        return series_to_csv(self.samples)


def _fmt(x: float) -> str:
    return repr(float(x))


def series_to_csv(samples) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for s in samples:
        buf.write(",".join(_fmt(v) for v in s.row()) + "\n")
    return buf.getvalue()


def read_series_csv(path_or_text) -> dict[str, np.ndarray]:
    text = path_or_text
    if not isinstance(text, str) or "\n" not in text:
        with open(path_or_text) as fh:
            text = fh.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    missing = [c for c in CSV_COLUMNS if c not in header]
    if missing:
        raise KeyError(f"diagnostics CSV is missing columns: {missing}")
    rows = [list(map(float, r)) for r in reader if r]
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return {c: data[:, header.index(c)] for c in CSV_COLUMNS}
