"""Parameter algebra for the inhomogeneous NLS  i u_t + Δu + μ|x|^{-b}|u|^α u = 0.

Exponent formulas are evaluated in rational arithmetic (``fractions.Fraction``)
whenever the inputs are rational, so that identities such as s_c = 1 or the
admissibility relation hold exactly rather than to within floating-point drift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Union

import numpy as np

Number = Union[int, float, Fraction]

# Distinguished marker for an unbounded time exponent q = ∞.
INF = math.inf

ADMISSIBLE_TOL = 1e-12


class ParameterError(ValueError):
    """Raised when model parameters fall outside a supported range."""


class DimensionUnsupportedError(ParameterError):
    pass


class TruncationError(RuntimeError):
    """A rescaled field no longer fits inside the computational box."""


def _exact(x: Number) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, Rational):
        return Fraction(int(x.numerator), int(x.denominator))
    if isinstance(x, (float, np.floating)) and math.isfinite(x):
        return Fraction(float(x))
    raise ParameterError(f"cannot represent {x!r} as a rational number")


def derive_alpha(N: int, b: Number) -> Fraction:
    """Energy-critical nonlinearity power α = (4 - 2b)/(N - 2)."""
    if N < 3:
        raise DimensionUnsupportedError(f"energy-critical α needs N >= 3, got N={N}")
    if b < 0:
        raise ParameterError(f"b must be nonnegative, got {b}")
    return (4 - 2 * _exact(b)) / (N - 2)


def paper_b_ceiling(N: int) -> Fraction:
    """Largest admissible b for the scattering theory: min{(6-N)/2, 4/N}."""
    if N not in (3, 4, 5):
        raise ParameterError(f"b-ceiling is defined for N in {{3,4,5}}, got N={N}")
    return min(Fraction(6 - N, 2), Fraction(4, N))


@dataclass(frozen=True)
class ModelParams:
    """Model constants.  ``b`` and ``alpha`` are stored as floats for the numerics;
    ``exact_b`` / ``exact_alpha`` give the rational values used by the exponent algebra."""

    N: int
    b: float
    alpha: float = 0.0
    mu: int = 1
    energy_critical: bool = True
    exploratory: bool = False

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or not 1 <= self.N <= 5:
            raise ParameterError(f"model: dimension N must be an integer in 1..5, got {self.N!r}")
        if self.b < 0:
            raise ParameterError(f"model: b must be nonnegative, got {self.b}")
        if self.mu not in (1, -1):
            raise ParameterError(f"model: mu must be +1 (focusing) or -1 (defocusing), got {self.mu}")
        if self.energy_critical:
            a = float(derive_alpha(self.N, self._b_in))
            if self.alpha and abs(a - self.alpha) > 1e-12:
                raise ParameterError(
                    f"model: alpha={self.alpha} conflicts with the energy-critical value {a};"
                    " use energy_critical=False with exploratory=True"
                )
            object.__setattr__(self, "alpha", a)
        elif not self.exploratory:
            raise ParameterError("model: a non-critical alpha requires the exploratory flag")
        if self.alpha <= 0:
            raise ParameterError(f"model: alpha must be positive, got {self.alpha}")
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def exact_b(self) -> Fraction:
        return self._b_in

    @property
    def exact_alpha(self) -> Fraction:
        if self.energy_critical and self.N >= 3:
            return derive_alpha(self.N, self._b_in)
        return _exact(self.alpha)

    @property
    def _b_in(self) -> Fraction:
        # Recover short rationals such as 4/3 that were passed in as floats.
        f = Fraction(self.b).limit_denominator(10**6)
        return f if abs(float(f) - self.b) < 1e-15 else Fraction(self.b)

    @property
    def focusing(self) -> bool:
        return self.mu == 1

    @property
    def s_c(self) -> float:
        return critical_index(self)

    def validate_scattering_regime(self) -> None:
        """Hypotheses of the scattering theorem: N in {3,4,5}, 0 < b <= min{(6-N)/2, 4/N}."""
        if self.N not in (3, 4, 5):
            raise ParameterError(f"scattering regime needs N in {{3,4,5}}, got N={self.N}")
        if not 0 < self._b_in <= paper_b_ceiling(self.N):
            raise ParameterError(
                f"scattering regime needs 0 < b <= {paper_b_ceiling(self.N)} for N={self.N}, got b={self.b}"
            )
        if not self.energy_critical:
            raise ParameterError("scattering regime needs the energy-critical alpha")

    def validate_blowup_regime(self) -> None:
        """Hypotheses of the blow-up theorem: N >= 3, 0 < b <= 4/N, energy-critical α."""
        if self.N < 3:
            raise ParameterError(f"blow-up regime needs N >= 3, got N={self.N}")
        if not 0 < self._b_in <= Fraction(4, self.N):
            raise ParameterError(f"blow-up regime needs 0 < b <= 4/N, got b={self.b}")
        if not self.energy_critical:
            raise ParameterError("blow-up regime needs the energy-critical alpha")


def critical_index(params: ModelParams) -> float:
    """s_c = N/2 - (2 - b)/α."""
    if params.alpha <= 0:
        raise ParameterError("alpha must be positive")
    if params.energy_critical and params.N >= 3:
        return float(Fraction(params.N, 2) - (2 - params._b_in) / params.exact_alpha)
    return params.N / 2 - (2 - params.b) / params.alpha


def _rational_or_float(x):
    if x == INF:
        return INF
    try:
        return _exact(x)
    except ParameterError:
        return float(x)


def is_admissible_pair(q: Number, r: Number, N: int) -> bool:
    """True iff 2/q + N/r = N/2 and r lies in the dimension-dependent range."""
    q = _rational_or_float(q)
    r = _rational_or_float(r)
    if q <= 0 or r <= 0 or r == INF:
        return False
    lhs = (0 if q == INF else 2 / q) + N / r
    if abs(float(lhs - Fraction(N, 2))) > ADMISSIBLE_TOL:
        return False
    if r < 2:
        return False
    if N >= 3:
        return r <= Fraction(2 * N, N - 2)
    return True


@dataclass(frozen=True)
class ExponentSet:
    q0: Fraction
    r0: Fraction
    rbar: Fraction


def exponent_set(params: ModelParams) -> ExponentSet:
    """Exponents q0, r0 (the W(I) Strichartz pair) and r̄ = 2(N+2)/(N-2)."""
    N = params.N
    if N < 3:
        raise DimensionUnsupportedError(f"exponent set needs N >= 3, got N={N}")
    b = params._b_in
    den_q = b * N + N - 2
    den_r = N * N + b * N * N + 4
    if den_q == 0 or den_r == 0:
        raise ParameterError("degenerate exponent denominator")
    q0 = Fraction(2 * (N + 2)) * (b + 1) / den_q
    r0 = Fraction(2 * N * (N + 2)) * (b + 1) / den_r
    rbar = Fraction(2 * (N + 2), N - 2)
    return ExponentSet(q0, r0, rbar)


def scaling_exponent(params: ModelParams) -> float:
    """Amplitude exponent (2 - b)/α of the scaling symmetry."""
    return (2 - params.b) / params.alpha


def scaling_transform(u, lam: float, params: ModelParams, *, tol: float = 1e-10):
    """u(t, x) -> λ^{(2-b)/α} u(λ² t, λ x), resampled onto the same grid.

    The returned field carries time t/λ², the instant at which the rescaled
    solution equals the input.  Raises :class:`TruncationError` when the input
    has non-negligible amplitude in the region that maps outside the box.
    """
    from .field import resample_scaled

    if lam <= 0:
        raise ParameterError("lambda must be positive")
    return resample_scaled(u, lam, lam ** scaling_exponent(params), time_scale=lam**-2, tol=tol)
