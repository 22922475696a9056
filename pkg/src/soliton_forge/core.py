"""Parameters, phase-space types and the polynomial vector fields.

Three coordinate systems are used for the cohomogeneity-one soliton ODE:

* the Ivey-type variables ``(X, Y, Z, W)`` flowing in ``t`` (``nonlin1``),
* the reversed variables ``(X, Yt=Y**2, Zt=1-Z, W)`` flowing in ``-t``,
  whose origin is the smooth-closing equilibrium (``nonlin2``),
* the two-dimensional Kahler reduction ``(X, Yt2=Y**2/X)``.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, field

import numpy as np


class InvalidParameterError(ValueError):
    """Raised for (d, q) or family parameters outside the supported range."""


class DegenerateStateError(ValueError):
    """Raised when a vector field is evaluated where it is singular."""


# Column order of the augmented state used by the integrators.
STATE_FIELDS = ("X", "Y", "Z", "W", "lng", "s", "f", "L", "h", "tbar")


@dataclass(frozen=True)
class SolitonParams:
    """Base dimension ``d`` and Chern ratio ``q`` with the derived constants.

    ``A2 = d(d+2)`` and ``A3 = d(d+2)^2 q^2 / 4`` are the only way the bundle
    enters the equations.
    """

    d: int
    q: float
    A2: float = field(init=False)
    A3: float = field(init=False)

    def __post_init__(self):
        d, q = self.d, self.q
        if isinstance(d, bool) or int(d) != d:
            raise InvalidParameterError(f"d must be an integer, got {d!r}")
        if d < 2:
            raise InvalidParameterError(f"d must be >= 2, got {d}")
        if d % 2:
            raise InvalidParameterError(f"d must be even (real dimension of a Kahler base), got {d}")
        if not math.isfinite(q):
            raise InvalidParameterError(f"q must be finite, got {q}")
        if q == 0:
            raise InvalidParameterError("q = 0 (trivial bundle, Ivey case) is out of scope")
        object.__setattr__(self, "d", int(d))
        object.__setattr__(self, "q", float(q))
        object.__setattr__(self, "A2", float(d * (d + 2)))
        object.__setattr__(self, "A3", 0.25 * d * (d + 2) ** 2 * q * q)

    @property
    def wy2_bound(self) -> float:
        """Upper bound ``A2 / (A3 (d+2))`` on ``W^2/Y^2`` in the complete regime."""
        return self.A2 / (self.A3 * (self.d + 2))


def make_params(d: int, q: float) -> SolitonParams:
    return SolitonParams(d, q)


@dataclass(frozen=True)
class PhaseState:
    """Point of the augmented flow.

    ``lng = ln g``, ``L = g*Y``; ``s``, ``f``, ``h`` and ``tbar`` are the
    arclength, fibre radius, potential and the ``int Y dt`` clock, all
    integrated alongside ``(X, Y, Z, W)``.
    """

    t: float
    X: float
    Y: float
    Z: float
    W: float
    lng: float = 0.0
    s: float = 0.0
    f: float = 0.0
    L: float = 0.0
    h: float = 0.0
    tbar: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self)[1:], dtype=float)

    @classmethod
    def from_array(cls, t: float, y) -> "PhaseState":
        return cls(float(t), *(float(v) for v in y))


@dataclass(frozen=True)
class TildeState:
    t: float  # reversed time, equal to -t of the PhaseState
    X: float
    Yt: float  # Y**2
    Zt: float  # 1 - Z
    W: float

    def as_array(self) -> np.ndarray:
        return np.array([self.X, self.Yt, self.Zt, self.W])


@dataclass(frozen=True)
class KahlerState:
    t: float
    X: float
    Yt2: float  # Y**2 / X

    def as_array(self) -> np.ndarray:
        return np.array([self.X, self.Yt2])


@dataclass(frozen=True)
class FirstIntegralContext:
    """Maximum scalar curvature ``C`` and the zero-section size ``lam``.

    Members of the family with equal ``Lambda = C lam^2`` are homothetic;
    ``gamma = (Lambda + A2)/2`` is the limit of ``(1-Z)/Y^2`` at the zero
    section.
    """

    C: float
    lam: float
    Lambda: float
    gamma: float

    def __post_init__(self):
        if not (self.C > 0 and self.lam > 0):
            raise InvalidParameterError("C and lambda must be positive")
        if self.Lambda != self.C * self.lam ** 2:
            raise InvalidParameterError("Lambda must equal C * lambda**2")

    @classmethod
    def from_Lambda(cls, p: SolitonParams, Lambda: float, lam: float = 1.0) -> "FirstIntegralContext":
        if not (Lambda > 0 and math.isfinite(Lambda)):
            raise InvalidParameterError(f"Lambda must be positive, got {Lambda}")
        if not (lam > 0 and math.isfinite(lam)):
            raise InvalidParameterError(f"lambda must be positive, got {lam}")
        C = Lambda / lam ** 2
        return cls(C=C, lam=lam, Lambda=C * lam ** 2, gamma=0.5 * (C * lam ** 2 + p.A2))


def to_tilde(st: PhaseState) -> TildeState:
    return TildeState(-st.t, st.X, st.Y * st.Y, 1.0 - st.Z, st.W)


def from_tilde(ts: TildeState) -> PhaseState:
    if ts.Yt < 0:
        raise DegenerateStateError("Yt must be nonnegative")
    return PhaseState(-ts.t, ts.X, math.sqrt(ts.Yt), 1.0 - ts.Zt, ts.W)


# ---------------------------------------------------------------------------
# vector fields


def nonlin1(p: SolitonParams, X, Y, Z, W):
    """Core ``(X, Y, Z, W)`` tangent; works elementwise on arrays."""
    d, A2, A3 = p.d, p.A2, p.A3
    return (
        X * (d * X**2 + Z**2 - 1) + (A2 / d) * Y**2 - 2 * (A3 / d) * W**2,
        Y * (d * X**2 + Z**2 - X),
        Z * (d * X**2 + Z**2 - 1) + A3 * W**2,
        W * (d * X**2 + Z**2 - 2 * X + Z),
    )


def augmented_rhs(p: SolitonParams, y) -> np.ndarray:
    """Tangent of the ten-component augmented state (see ``STATE_FIELDS``)."""
    X, Y, Z, W, lng, s, f, L, h, tbar = y
    d = p.d
    if W == 0.0:
        # stationary germ (0, 0, 1, 0): df/dt = g Z W / Y vanishes identically
        df = 0.0
    elif Y <= 0.0:
        raise DegenerateStateError(f"Y = {Y} <= 0 in df/dt = g Z W / Y")
    else:
        df = math.exp(lng) * Z * W / Y
    q2 = d * X * X + Z * Z
    return np.array([
        X * (q2 - 1) + (p.A2 / d) * Y * Y - 2 * (p.A3 / d) * W * W,
        Y * (q2 - X),
        Z * (q2 - 1) + p.A3 * W * W,
        W * (q2 - 2 * X + Z),
        X,
        L,
        df,
        L * q2,
        1.0 - d * X - Z,
        Y,
    ])


def rhs_nonlin1(p: SolitonParams, st: PhaseState) -> np.ndarray:
    """Tangent of ``st`` in ``STATE_FIELDS`` order.

    ``h`` obeys ``dh/dt = h_s ds/dt = 1 - dX - Z`` and ``tbar`` obeys
    ``dtbar/dt = Y``.
    """
    return augmented_rhs(p, st.as_array())


def nonlin2(p: SolitonParams, v) -> np.ndarray:
    """Vector field of the reversed system at ``v = (X, Yt, Zt, W)``.

    Accepts shape ``(4,)`` or ``(4, n)``.
    """
    X, Yt, Zt, W = v
    d, A2, A3 = p.d, p.A2, p.A3
    return np.array([
        -X * (d * X**2 + Zt**2 - 2 * Zt) - (A2 / d) * Yt + 2 * (A3 / d) * W**2,
        -2 * Yt * (d * X**2 - X + Zt**2 - 2 * Zt + 1),
        -Zt * (d * X**2 + Zt**2 - 3 * Zt + 2) + d * X**2 + A3 * W**2,
        -W * (d * X**2 - 2 * X + Zt**2 - 3 * Zt + 2),
    ])


def rhs_nonlin2(p: SolitonParams, st: TildeState) -> np.ndarray:
    return nonlin2(p, st.as_array())


def linear_matrix(p: SolitonParams) -> np.ndarray:
    """Linearisation of the reversed system at its origin."""
    A = np.diag([0.0, -2.0, -2.0, -2.0])
    A[0, 1] = -p.A2 / p.d
    return A


def nonlinearity_b(p: SolitonParams, v) -> np.ndarray:
    """``b(v) = nonlin2(v) - A v``, written out term by term.

    Subtracting ``A v`` numerically would cancel the ``Yt`` term of the first
    component to roundoff, which is far larger than ``b`` itself once ``v`` is
    small, so the quadratic and cubic monomials are evaluated directly.
    """
    X, Yt, Zt, W = v
    d, A3 = p.d, p.A3
    return np.array([
        -X * (d * X**2 + Zt**2 - 2 * Zt) + 2 * (A3 / d) * W**2,
        -2 * Yt * (d * X**2 - X + Zt**2 - 2 * Zt),
        -Zt * (d * X**2 + Zt**2 - 3 * Zt) + d * X**2 + A3 * W**2,
        -W * (d * X**2 - 2 * X + Zt**2 - 3 * Zt),
    ])


def nonlinearity_b_derivative(p: SolitonParams, v, w) -> np.ndarray:
    """Directional derivative ``Db(v) w``."""
    X, Yt, Zt, W = v
    wX, wY, wZ, wW = w
    d, A3 = p.d, p.A3
    return np.array([
        (-3 * d * X**2 - Zt**2 + 2 * Zt) * wX + 2 * X * (1 - Zt) * wZ + 4 * (A3 / d) * W * wW,
        -2 * (d * X**2 - X + Zt**2 - 2 * Zt) * wY - 2 * Yt * (2 * d * X - 1) * wX
        - 4 * Yt * (Zt - 1) * wZ,
        2 * d * X * (1 - Zt) * wX + (-d * X**2 - 3 * Zt**2 + 6 * Zt) * wZ + 2 * A3 * W * wW,
        -(d * X**2 - 2 * X + Zt**2 - 3 * Zt) * wW - W * (2 * d * X - 2) * wX - W * (2 * Zt - 3) * wZ,
    ])


def b_coefficient_bounds(p: SolitonParams) -> tuple[float, float]:
    """Constants ``(K1, K2)`` with ``|b(v)|_inf <= K1 |v|^2 + K2 |v|^3``.

    Sums of absolute monomial coefficients per component, maximised over
    components.
    """
    d, A3 = p.d, p.A3
    quad = [2 + 2 * A3 / d, 2 + 4, 3 + d + A3, 2 + 3]
    cub = [d + 1, 2 * (d + 1), d + 1, d + 1]
    return float(max(quad)), float(max(cub))


def fundamental_matrix(p: SolitonParams, t: float, t0: float) -> np.ndarray:
    """``Phi(t, t0)`` of the linearised reversed system, in closed form."""
    e = math.exp(-2.0 * (t - t0))
    Phi = np.diag([1.0, e, e, e])
    Phi[0, 1] = p.A2 / (2 * p.d) * (e - 1.0)
    return Phi


def rhs_kahler(p: SolitonParams, st: KahlerState) -> np.ndarray:
    return kahler_field(p, st.X, st.Yt2)


def kahler_field(p: SolitonParams, X, Yt):
    d = p.d
    k = d + 2
    return np.array([
        X * (d * X**2 + k**2 * Yt**2 - 2 * X - k * Yt),
        Yt * (d * X**2 + k**2 * Yt**2 - 3 * k * Yt + 2),
    ])


def kahler_perturbation(p: SolitonParams, v) -> np.ndarray:
    """Nonlinear part ``f(v)`` of the reduced system about ``(0, 2/(d+2))``.

    With ``v = (X, Yt2 - 2/(d+2))`` the reduced flow reads ``dv/dt = 2 v - f(v)``.
    """
    X, eta = v
    d = p.d
    k = d + 2
    return np.array([
        -d * X**3 - k**2 * X * eta**2 - 3 * k * X * eta + 2 * X**2,
        -d * X**2 * eta - k**2 * eta**3 - 3 * k * eta**2 - (2 * d / k) * X**2,
    ])


# ---------------------------------------------------------------------------
# first integral


def first_integral_residual(p: SolitonParams, st: PhaseState, ctx: FirstIntegralContext) -> float:
    """``dX^2 + A2 Y^2 + Z^2 - A3 W^2 - 1 + C L^2``; zero on exact solutions."""
    return (
        p.d * st.X**2 + p.A2 * st.Y**2 + st.Z**2 - p.A3 * st.W**2 - 1.0 + ctx.C * st.L**2
    )


def first_integral_residual_arrays(p: SolitonParams, C: float, X, Y, Zt, W, L):
    """Vectorised residual written with ``Zt = 1 - Z`` (exact near the zero section)."""
    return p.d * X**2 + p.A2 * Y**2 + Zt * Zt - 2 * Zt - p.A3 * W**2 + C * L**2
