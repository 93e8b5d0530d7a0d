"""Grids, complex fields, spectral operators and discrete integrals.

Two geometries are supported:

* ``cartesian`` -- a periodic box [-L, L)^d (d = 1, 2, 3) with FFT derivatives.
  Integrals use the rectangle rule, which is spectrally accurate for smooth
  periodic integrands.  Near-origin integrals against |x|^{-b} are only
  O(h^{2-b}) accurate.
* ``radial`` -- radial profiles u(r) on r in (0, L] for an ambient dimension
  N in 3..5, with second-order finite differences.  This is a separate
  accuracy class from the Cartesian solver.

With ``offset=True`` the samples sit half a cell away from the origin so that
the singular weight |x|^{-b} can be sampled without regularisation.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft
from scipy.special import gamma

from .model import ModelParams, ParameterError, TruncationError

DEFAULT_MEMORY_CAP = 2**25  # samples


def fft_workers() -> int:
    try:
        return max(1, int(os.environ.get("INLS_THREADS", "1")))
    except ValueError:
        return 1


def sphere_area(N: int) -> float:
    """Surface area of the unit sphere S^{N-1}."""
    return 2 * math.pi ** (N / 2) / gamma(N / 2)


def _fft_size_ok(n: int) -> bool:
    """Even and free of prime factors above 5 (includes every power of two >= 2)."""
    if n < 2 or n % 2:
        return False
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


@dataclass(frozen=True)
class GridSpec:
    dims: int
    points: int
    L: float
    offset: bool = True
    radial: bool = False
    memory_cap: int = DEFAULT_MEMORY_CAP

    def __post_init__(self):
        n = self.points
        if not isinstance(n, (int, np.integer)) or not _fft_size_ok(n):
            raise ParameterError(f"grid: points per axis must be an even 5-smooth size (2^a 3^b 5^c, e.g."
                                 f" a power of two or 96), got {n!r}")
        if not self.L > 0:
            raise ParameterError(f"grid: half-width L must be positive, got {self.L}")
        if self.radial:
            if self.dims not in (3, 4, 5):
                raise ParameterError(f"grid: radial mode needs ambient N in 3..5, got {self.dims}")
        elif self.dims not in (1, 2, 3):
            raise ParameterError(f"grid: Cartesian dims must be 1..3, got {self.dims}")
        if self.size > self.memory_cap:
            raise ParameterError(f"grid: {self.size} samples exceed memory cap {self.memory_cap}")

    @property
    def N(self) -> int:
        """Ambient spatial dimension (the model's N)."""
        return self.dims

    @property
    def size(self) -> int:
        return self.points if self.radial else self.points**self.dims

    @property
    def shape(self) -> tuple:
        return (self.points,) if self.radial else (self.points,) * self.dims

    @property
    def h(self) -> float:
        return self.L / self.points if self.radial else 2 * self.L / self.points

    @property
    def cell_volume(self) -> float:
        return self.h if self.radial else self.h**self.dims

    @cached_property
    def axis(self) -> np.ndarray:
        n, h = self.points, self.h
        if self.radial:
            return (np.arange(n) + 0.5) * h
        shift = 0.5 * h if self.offset else 0.0
        return -self.L + shift + h * np.arange(n)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """k in (π/L)·{-n/2, ..., n/2-1}, in FFT order."""
        return 2 * np.pi * sfft.fftfreq(self.points, d=self.h)

    def coords(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis."""
        if self.radial:
            return [self.axis]
        out = []
        for j in range(self.dims):
            shape = [1] * self.dims
            shape[j] = self.points
            out.append(self.axis.reshape(shape))
        return out

    def kcoords(self, *, zero_nyquist: bool = False) -> list[np.ndarray]:
        k = self.wavenumbers.copy()
        if zero_nyquist:
            k[self.points // 2] = 0.0
        out = []
        for j in range(self.dims):
            shape = [1] * self.dims
            shape[j] = self.points
            out.append(k.reshape(shape))
        return out

    @cached_property
    def r2(self) -> np.ndarray:
        if self.radial:
            return self.axis**2
        return sum(x**2 for x in self.coords())

    @cached_property
    def r(self) -> np.ndarray:
        return np.sqrt(self.r2)

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(k**2 for k in self.kcoords())

    @cached_property
    def k2_grad(self) -> np.ndarray:
        """|k|² with the Nyquist wavenumber zeroed, matching :func:`gradient`."""
        return sum(k**2 for k in self.kcoords(zero_nyquist=True))

    @cached_property
    def radial_measure(self) -> np.ndarray:
        """σ_N r^{N-1} Δr at the cell centres (radial quadrature weights)."""
        return sphere_area(self.dims) * self.axis ** (self.dims - 1) * self.h

    @cached_property
    def radial_face_measure(self) -> np.ndarray:
        """σ_N r_{j+1/2}^{N-1} / Δr on the faces j+1/2, j = 0..n-1 (last face is r = L)."""
        faces = (np.arange(self.points) + 1.0) * self.h
        return sphere_area(self.dims) * faces ** (self.dims - 1) / self.h

    def min_radius(self) -> float:
        return float(np.sqrt(self.r2.min()))

    def header_fields(self) -> dict:
        return {"N": self.dims, "n": self.points, "L": self.L, "offset": int(self.offset)}


def make_grid(dims: int, points: int, L: float, offset: bool = True, *, radial: bool = False,
              memory_cap: int = DEFAULT_MEMORY_CAP) -> GridSpec:
    return GridSpec(dims=dims, points=points, L=float(L), offset=offset, radial=radial,
                    memory_cap=memory_cap)


class NumericalFailure(FloatingPointError):
    """NaN or Inf appeared in a field."""


@dataclass
class FieldState:
    samples: np.ndarray
    grid: GridSpec
    time: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.shape != self.grid.shape:
            raise ValueError(f"samples shape {self.samples.shape} does not match grid {self.grid.shape}")

    def copy(self) -> "FieldState":
        return FieldState(self.samples.copy(), self.grid, self.time)

    def with_samples(self, samples, time=None) -> "FieldState":
        return FieldState(samples, self.grid, self.time if time is None else time)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.samples).all())

    def check_finite(self) -> "FieldState":
        if not self.is_finite():
            raise NumericalFailure(f"non-finite samples at t={self.time}")
        return self


def sample(fn, grid: GridSpec, time: float = 0.0) -> FieldState:
    """Sample ``fn(*coords)`` (or ``fn(r)`` on a radial grid) onto the grid."""
    vals = fn(*grid.coords())
    return FieldState(np.broadcast_to(vals, grid.shape).astype(np.complex128), grid, time)


# -- spectral transforms ----------------------------------------------------

def forward(a: np.ndarray) -> np.ndarray:
    return sfft.fftn(a, workers=fft_workers())


def inverse(a: np.ndarray) -> np.ndarray:
    return sfft.ifftn(a, workers=fft_workers())


def gradient(u: FieldState) -> list[np.ndarray]:
    """Spectral gradient; the Nyquist mode is dropped so real fields have real derivatives."""
    g = u.grid
    if g.radial:
        return [radial_derivative(u.samples, g)]
    uh = forward(u.samples)
    return [inverse(1j * k * uh) for k in g.kcoords(zero_nyquist=True)]


def radial_derivative(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Second-order centred u_r at the cell centres, using the even/odd ghosts
    u(-r) = u(r) at the origin and u(L) = 0 at the outer edge."""
    h = grid.h
    ext = np.concatenate([f[:1], f, -f[-1:]])
    return (ext[2:] - ext[:-2]) / (2 * h)


def laplacian(u: FieldState) -> np.ndarray:
    g = u.grid
    if g.radial:
        return radial_laplacian_matrix(g) @ u.samples
    return inverse(-g.k2 * forward(u.samples))


def radial_laplacian_bands(grid: GridSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(lower, diag, upper) bands of the conservative radial Laplacian
    r^{1-N} d/dr (r^{N-1} d/dr), zero flux at r = 0 and u(L) = 0 via the ghost u_n = -u_{n-1}."""
    N, h, n = grid.dims, grid.h, grid.points
    faces = np.arange(n + 1) * h
    fp = faces[1:] ** (N - 1)        # r_{j+1/2}^{N-1}
    fm = faces[:-1] ** (N - 1)       # r_{j-1/2}^{N-1}, zero at the origin
    scale = 1.0 / (grid.axis ** (N - 1) * h * h)
    diag = -(fp + fm) * scale
    diag[-1] -= fp[-1] * scale[-1]
    return fm[1:] * scale[1:], diag, fp[:-1] * scale[:-1]


def radial_laplacian_matrix(grid: GridSpec):
    from scipy.sparse import diags

    lower, diag, upper = radial_laplacian_bands(grid)
    return diags([lower, diag, upper], [-1, 0, 1], format="csr")


# -- integrals and norms ----------------------------------------------------

def integrate(f: np.ndarray, grid: GridSpec) -> float:
    """Discrete ∫ f dx (rectangle rule, or σ_N Σ r^{N-1} f Δr on a radial grid)."""
    if grid.radial:
        return float(np.sum(np.real(f) * grid.radial_measure))
    return float(np.sum(np.real(f)) * grid.cell_volume)


def gradient_sq_integral(u: FieldState) -> float:
    """∫|∇u|² dx, by Plancherel on Cartesian grids (Σ|k|²|û|², Nyquist excluded so
    that it equals the rectangle-rule integral of |∇u|² built from :func:`gradient`)."""
    g = u.grid
    if g.radial:
        ext = np.append(u.samples, -u.samples[-1])
        d = np.abs(np.diff(ext)) ** 2
        return float(np.sum(d * g.radial_face_measure))
    uh = forward(u.samples)
    return float(np.sum(g.k2_grad * (uh.real**2 + uh.imag**2)) * g.cell_volume / g.size)


hdot1_norm_sq = gradient_sq_integral


def mass(u: FieldState) -> float:
    return integrate(np.abs(u.samples) ** 2, u.grid)


def sup_abs(u: FieldState) -> float:
    return float(np.max(np.abs(u.samples))) if u.samples.size else 0.0


def lp_norm(u: FieldState, p: float) -> float:
    if p == math.inf:
        return sup_abs(u)
    return integrate(np.abs(u.samples) ** p, u.grid) ** (1.0 / p)


@dataclass(frozen=True)
class SingularWeight:
    """Samples of (|x|² + ε²)^{-b/2} on a grid."""

    samples: np.ndarray = dc_field(repr=False)
    grid: GridSpec
    b: float
    epsilon: float = 0.0

    def power(self, exponent: float) -> np.ndarray:
        """(|x|² + ε²)^{-exponent/2}, e.g. exponent = b + 2 for the virial term."""
        return (self.grid.r2 + self.epsilon**2) ** (-exponent / 2)


def make_singular_weight(grid: GridSpec, b: float, epsilon: float = 0.0) -> SingularWeight:
    if epsilon < 0:
        raise ParameterError("epsilon must be nonnegative")
    if epsilon == 0 and b > 0 and not (grid.offset or grid.radial):
        raise ParameterError("unregularised |x|^-b needs an offset grid (no sample at the origin)")
    w = (grid.r2 + epsilon**2) ** (-b / 2)
    return SingularWeight(np.asarray(w, dtype=float), grid, float(b), float(epsilon))


def weighted_potential_integral(u: FieldState, w: SingularWeight, alpha: float) -> float:
    """P(u) = ∫ w(x) |u|^{α+2} dx."""
    return integrate(w.samples * np.abs(u.samples) ** (alpha + 2), u.grid)


def energy(u: FieldState, w: SingularWeight, params: ModelParams) -> float:
    """E[u] = ½∫|∇u|² - μ/(α+2) ∫|x|^{-b}|u|^{α+2}."""
    return 0.5 * gradient_sq_integral(u) - params.mu * weighted_potential_integral(u, w, params.alpha) / (params.alpha + 2)


def dealias(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    """2/3-rule truncation of the spectrum (Cartesian grids only)."""
    uh = forward(u)
    kmax = np.pi / grid.h
    mask = np.ones(grid.shape, dtype=bool)
    for k in grid.kcoords():
        mask &= np.abs(k) <= (2.0 / 3.0) * kmax
    return inverse(np.where(mask, uh, 0))


# -- resampling ---------------------------------------------------------------

def _interp_matrix(grid: GridSpec, targets: np.ndarray) -> np.ndarray:
    """Matrix evaluating the trigonometric interpolant at ``targets``."""
    k = grid.wavenumbers.copy()
    n = grid.points
    x0 = grid.axis[0]
    phase = np.exp(1j * np.outer(targets - x0, k))
    # split the Nyquist mode symmetrically so real data stay real
    phase[:, n // 2] = np.cos(k[n // 2] * (targets - x0))
    return phase / n


def resample_scaled(u: FieldState, lam: float, amplitude: float, *, time_scale: float = 1.0,
                    tol: float = 1e-10) -> FieldState:
    """Return v(x) = amplitude · u(λ x) on the same grid.

    Values with |λ x_j| >= L are set to zero.  If ``u`` has amplitude above
    ``tol`` (relative to its maximum) in the part of the box that maps outside
    it (λ < 1), a :class:`TruncationError` is raised.
    """
    g = u.grid
    peak = sup_abs(u)
    if peak == 0:
        return FieldState(np.zeros(g.shape, complex), g, u.time * time_scale)
    if lam < 1:
        outside = np.zeros(g.shape, dtype=bool)
        for x in g.coords():
            outside = outside | (np.abs(x) >= lam * g.L)
        if np.any(outside) and np.max(np.abs(u.samples[np.broadcast_to(outside, g.shape)])) > tol * peak:
            raise TruncationError(f"rescaling by λ={lam} pushes the field outside the box")
    if g.radial:
        from scipy.interpolate import CubicSpline

        r = g.axis
        spl_re = CubicSpline(np.concatenate([-r[::-1], r]), np.concatenate([u.samples.real[::-1], u.samples.real]))
        spl_im = CubicSpline(np.concatenate([-r[::-1], r]), np.concatenate([u.samples.imag[::-1], u.samples.imag]))
        t = lam * r
        vals = np.where(t < g.L, spl_re(t) + 1j * spl_im(t), 0.0)
        return FieldState(amplitude * vals, g, u.time * time_scale)
    targets = lam * g.axis
    M = _interp_matrix(g, targets)
    M[np.abs(targets) >= g.L, :] = 0.0
    a = forward(u.samples)
    for ax in range(g.dims):
        a = np.moveaxis(np.tensordot(M, a, axes=([1], [ax])), 0, ax)
    return FieldState(amplitude * a, g, u.time * time_scale)


# -- snapshots ------------------------------------------------------------------

SNAPSHOT_MAGIC = "INLS-FIELD v1"


def write_snapshot(u: FieldState, path) -> None:
    g = u.grid
    header = f"{SNAPSHOT_MAGIC}; N={g.dims}; n={g.points}; L={g.L!r}; t={u.time!r}; offset={int(g.offset)}"
    if g.radial:
        header += "; geometry=radial"
    data = np.empty(u.samples.size * 2, dtype="<f8")
    flat = np.ascontiguousarray(u.samples).reshape(-1)
    data[0::2] = flat.real
    data[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(data.tobytes())


def read_snapshot(path) -> FieldState:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = raw[:nl].decode("ascii")
    parts = [p.strip() for p in header.split(";")]
    if parts[0] != SNAPSHOT_MAGIC:
        raise ValueError(f"not an {SNAPSHOT_MAGIC} file: {header[:40]!r}")
    kv = dict(p.split("=", 1) for p in parts[1:])
    radial = kv.get("geometry") == "radial"
    grid = make_grid(int(kv["N"]), int(kv["n"]), float(kv["L"]), bool(int(kv["offset"])), radial=radial)
    data = np.frombuffer(raw[nl + 1:], dtype="<f8")
    if data.size != 2 * grid.size:
        raise ValueError("snapshot payload size does not match header")
    samples = (data[0::2] + 1j * data[1::2]).reshape(grid.shape)
    return FieldState(samples, grid, float(kv["t"]))
