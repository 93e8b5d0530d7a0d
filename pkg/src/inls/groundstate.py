"""Ground state W, its variational constants, and the trapping / coercivity functionals.

W(r) = (1 + r^{2-b} / ((N-b)(N-2)))^{-(N-2)/(2-b)} solves ΔW + |x|^{-b} W^{α+1} = 0
and extremises ∫|x|^{-b}|u|^{α+2} <= C1 ‖∇u‖^{α+2}.  With c = ‖∇W‖², C1 = c^{-α/2}
and E(W) = αc / (2(α+2)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .field import FieldState, gradient_sq_integral, make_singular_weight, sphere_area, weighted_potential_integral
from .model import ParameterError, derive_alpha, paper_b_ceiling


class QuadratureError(ArithmeticError):
    pass


class ThresholdExceededError(ValueError):
    pass


@dataclass(frozen=True)
class GroundStateProfile:
    N: int
    b: float

    def __post_init__(self):
        if self.N < 3:
            raise ParameterError("the ground state needs N >= 3")
        if not 0 <= self.b < 2:
            raise ParameterError("the ground state needs 0 <= b < 2")

    @property
    def alpha(self) -> float:
        return (4 - 2 * self.b) / (self.N - 2)

    @property
    def kappa(self) -> float:
        return (self.N - self.b) * (self.N - 2)

    @property
    def power(self) -> float:
        return (self.N - 2) / (2 - self.b)

    def W(self, r):
        r = np.asarray(r, dtype=float)
        return (1 + r ** (2 - self.b) / self.kappa) ** (-self.power)

    def dW(self, r):
        """W'(r) = -((N-2)/κ) r^{1-b} g^{-p-1},  g = 1 + r^{2-b}/κ."""
        r = np.asarray(r, dtype=float)
        g = 1 + r ** (2 - self.b) / self.kappa
        return -(self.N - 2) / self.kappa * r ** (1 - self.b) * g ** (-self.power - 1)

    def d2W(self, r):
        r = np.asarray(r, dtype=float)
        b, kap, p = self.b, self.kappa, self.power
        A = (self.N - 2) / kap
        g = 1 + r ** (2 - b) / kap
        return -A * ((1 - b) * r ** (-b) * g ** (-p - 1)
                     - (p + 1) * (2 - b) / kap * r ** (2 - 2 * b) * g ** (-p - 2))

    def laplacian(self, r):
        r = np.asarray(r, dtype=float)
        return self.d2W(r) + (self.N - 1) * self.dW(r) / r

    def residual(self, r):
        """ΔW + r^{-b} W^{α+1}; zero for the exact ground state."""
        r = np.asarray(r, dtype=float)
        return self.laplacian(r) + r ** (-self.b) * self.W(r) ** (self.alpha + 1)


def eval_W(profile: GroundStateProfile, r):
    if np.any(np.asarray(r) < 0):
        raise ValueError("r must be nonnegative")
    return profile.W(r)


@dataclass(frozen=True)
class VariationalConstants:
    N: int
    b: float
    alpha: float
    c: float
    C1: float
    E_W: float
    P_W: float
    quadrature_error: float

    def as_row(self) -> dict:
        return {"N": self.N, "b": self.b, "alpha": self.alpha, "c": self.c, "C1": self.C1,
                "E_W": self.E_W, "quadrature_error": self.quadrature_error}


R_CUT = 1e8
QUAD_TOL = 1e-9


def _radial_integral(f, tail_coef: float, tail_power: float, N: int, b: float) -> tuple[float, float]:
    """∫_0^∞ f(r) dr for f ~ tail_coef · r^{-tail_power} at infinity.

    [0, 1] is integrated directly, [1, R_CUT] in log r, and the tail beyond
    R_CUT is added from its leading-order asymptotics.  Returns (value, error).
    """
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=400)
    head, e1 = integrate.quad(f, 0.0, 1.0, **opts)
    mid, e2 = integrate.quad(lambda s: f(math.exp(s)) * math.exp(s), 0.0, math.log(R_CUT), **opts)
    tail = tail_coef * R_CUT ** (1 - tail_power) / (tail_power - 1)
    # next-order correction is smaller by a factor ~ R_CUT^{-(2-b)}
    tail_err = abs(tail) * R_CUT ** (-(2 - b)) * (tail_power + 2)
    return head + mid + tail, e1 + e2 + tail_err


def compute_constants(N: int, b: float, *, validate: bool = True) -> VariationalConstants:
    """c = ‖∇W‖², P(W) = ∫|x|^{-b}W^{α+2} by adaptive quadrature; C1 and E(W) follow."""
    if validate:
        if N not in (3, 4, 5):
            raise ParameterError(f"constants are tabulated for N in {{3,4,5}}, got {N}")
        ceiling = paper_b_ceiling(N)
        if not 0 < b <= float(ceiling) + 1e-15:
            raise ParameterError(f"need 0 < b <= {ceiling} for N={N}, got b={b}")
    return _constants_cached(int(N), float(b))


@lru_cache(maxsize=None)
def _constants_cached(N: int, b: float) -> VariationalConstants:
    prof = GroundStateProfile(N, b)
    alpha = float(derive_alpha(N, b)) if N >= 3 else prof.alpha
    sigma = sphere_area(N)
    kap, p = prof.kappa, prof.power
    A = (N - 2) / kap

    def kin(r):
        if r == 0.0:
            return 0.0
        return float(prof.dW(r)) ** 2 * r ** (N - 1)

    def pot(r):
        if r == 0.0:
            return 0.0
        return r ** (N - 1 - b) * float(prof.W(r)) ** (alpha + 2)

    # W' ~ -A κ^{p+1} r^{1-N} and W ~ κ^p r^{2-N} as r -> ∞
    kin_val, kin_err = _radial_integral(kin, A**2 * kap ** (2 * p + 2), N - 1, N, b)
    pot_val, pot_err = _radial_integral(pot, kap ** (p * (alpha + 2)), N + 1 - b, N, b)
    c = float(sigma * kin_val)
    P = float(sigma * pot_val)
    err = float(sigma * max(kin_err, pot_err))
    if err > QUAD_TOL * max(c, 1.0):
        raise QuadratureError(f"quadrature error estimate {err:.3e} exceeds tolerance for N={N}, b={b}")
    return VariationalConstants(N=N, b=b, alpha=alpha, c=c, C1=c ** (-alpha / 2),
                                E_W=alpha * c / (2 * (alpha + 2)), P_W=P, quadrature_error=err)


def trapping_function(y, c: float, alpha: float):
    """F(y) = y/2 - c^{-α/2} y^{(α+2)/2} / (α+2)."""
    y = np.asarray(y, dtype=float)
    return y / 2 - c ** (-alpha / 2) * y ** ((alpha + 2) / 2) / (alpha + 2)


def trapping_bound(E0: float, consts: VariationalConstants, alpha: float | None = None) -> float:
    """Root y* in [0, c] of F(y) = E0, by bisection (F increases on [0, c])."""
    alpha = consts.alpha if alpha is None else alpha
    c = consts.c
    E_W = alpha * c / (2 * (alpha + 2))
    if E0 < 0:
        raise ValueError(f"trapping bound needs E0 >= 0, got {E0}")
    if E0 > E_W * (1 + 1e-14):
        raise ThresholdExceededError(f"E0={E0} exceeds E(W)={E_W}")
    if E0 == 0:
        return 0.0
    if E0 >= E_W:
        return c
    lo, hi = 0.0, c
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = float(trapping_function(mid, c, alpha))
        if abs(f - E0) <= 1e-13 or hi - lo <= 1e-15 * c:
            return mid
        if f < E0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def coercivity_gap(delta0: float, alpha: float) -> float:
    """δ = 1 - (1 - δ0)^α, the coercivity constant when ‖∇u‖ <= (1-δ0)‖∇W‖."""
    if not 0 <= delta0 <= 1:
        raise ValueError(f"delta0 must lie in [0, 1], got {delta0}")
    return 1 - (1 - delta0) ** alpha


@dataclass(frozen=True)
class SharpInequalityReport:
    potential: float
    bound: float
    ratio: float | None

    @property
    def degenerate(self) -> bool:
        return self.ratio is None


def sharp_inequality_check(u: FieldState, consts: VariationalConstants, *, epsilon: float = 0.0) -> SharpInequalityReport:
    """Compare P(u) with C1 ‖∇u‖^{α+2} on the grid."""
    w = make_singular_weight(u.grid, consts.b, epsilon)
    P = weighted_potential_integral(u, w, consts.alpha)
    K = gradient_sq_integral(u)
    bound = consts.C1 * K ** ((consts.alpha + 2) / 2)
    if bound == 0:
        return SharpInequalityReport(P, bound, None)
    return SharpInequalityReport(P, bound, P / bound)


VALIDATED_B = (0.25, 0.5, 0.75, 1.0, 4.0 / 3.0)


def validated_grid() -> list[tuple[int, float]]:
    """(N, b) pairs of the constants suite: b in VALIDATED_B up to the ceiling."""
    out = []
    for N in (3, 4, 5):
        ceiling = float(paper_b_ceiling(N))
        out.extend((N, b) for b in VALIDATED_B if b <= ceiling + 1e-15)
    return out


def constants_table(pairs) -> str:
    cols = ["N", "b", "alpha", "c", "C1", "E_W", "quadrature_error"]
    lines = [",".join(cols)]
    for N, b in pairs:
        row = compute_constants(N, b).as_row()
        lines.append(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k]) for k in cols))
    return "\n".join(lines) + "\n"
