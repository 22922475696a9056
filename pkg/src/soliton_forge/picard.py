"""Fixed-point construction of the soliton germ near the zero section.

In reversed time the closing equilibrium is the origin of ``v' = A v + b(v)``.
Solutions decaying like ``e^{-2t}`` are fixed points of

    T_u v (t) = u(t) - int_t^inf Phi(t, s) b(v(s)) ds,

with ``u`` a solution of the linear part.  The integral is evaluated on a
graded grid by writing ``b(v(s)) = e^{-4s} beta(s)``, interpolating the
slowly varying envelope ``beta`` by cubic Hermite pieces (slopes from the
vector field) and integrating the exponential weights in closed form.  Beyond the last node ``beta`` is held
constant, which is the leading term of its expansion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core import (
    FirstIntegralContext,
    InvalidParameterError,
    PhaseState,
    SolitonParams,
    b_coefficient_bounds,
    nonlin2,
    nonlinearity_b,
    nonlinearity_b_derivative,
)


class NonContractionError(RuntimeError):
    """The Picard iteration failed to contract, even after shrinking the seed."""


class PicardDomainError(ValueError):
    pass


@dataclass(frozen=True)
class SeedSpec:
    """Linear seed ``u = eps (A2/2d, 1, gamma, beta) e^{-2t}``.

    ``gamma`` fixes ``lim (1-Z)/Y^2`` and ``beta`` fixes ``lim W/Y^2`` (1 for
    a smooth closing).  ``ball_radius`` defaults to twice the seed amplitude.
    """

    gamma: float
    beta: float = 1.0
    eps: float = 1e-3
    ball_radius: Optional[float] = None

    def __post_init__(self):
        if not self.eps > 0:
            raise InvalidParameterError("seed amplitude eps must be positive")
        if self.ball_radius is None:
            amp = self.eps * max(1.0, abs(self.gamma), abs(self.beta))
            object.__setattr__(self, "ball_radius", 2.0 * amp)
        if not self.eps < self.ball_radius:
            raise InvalidParameterError("eps must be smaller than ball_radius")

    @classmethod
    def for_context(cls, ctx: FirstIntegralContext, eps: float = 1e-3) -> "SeedSpec":
        return cls(gamma=ctx.gamma, beta=1.0, eps=eps)

    def with_eps(self, eps: float) -> "SeedSpec":
        return replace(self, eps=eps, ball_radius=None)


@dataclass(frozen=True)
class WeightedGrid:
    """Nodes in reversed time ``[0, t_max]`` for the ``e^{2t}``-weighted norm."""

    nodes: np.ndarray
    weight_exponent: float = 2.0

    def __post_init__(self):
        n = np.asarray(self.nodes, dtype=float)
        if n.ndim != 1 or n.size < 4:
            raise InvalidParameterError("grid needs at least 4 nodes")
        if n[0] != 0.0:
            raise InvalidParameterError("grid must start at 0")
        if np.any(np.diff(n) <= 0):
            raise InvalidParameterError("grid nodes must be strictly increasing")
        n.setflags(write=False)
        object.__setattr__(self, "nodes", n)

    @property
    def t_max(self) -> float:
        return float(self.nodes[-1])

    def norm(self, w: np.ndarray) -> float:
        """``sup_t e^{2t} |w(t)|_inf`` over the nodes."""
        return float(np.max(np.exp(self.weight_exponent * self.nodes) * np.max(np.abs(w), axis=0)))


def make_grid(n: int = 400, t_max: float = 12.0, h_max: Optional[float] = None) -> WeightedGrid:
    """Graded nodes ``-ln(1 - k/(n+1))/2`` until their spacing reaches ``h_max``,
    then uniform steps that land exactly on ``t_max``.

    The pure graded sequence stops near ``ln(n)/2``; the uniform continuation
    keeps the panel width bounded out to the horizon.  ``h_max`` defaults to
    ``20/n`` so refining ``n`` refines both parts.
    """
    if n < 8:
        raise InvalidParameterError("n must be at least 8")
    if not t_max > 1.0:
        raise InvalidParameterError("t_max must exceed 1")
    h_max = 20.0 / n if h_max is None else h_max
    k = np.arange(n + 1)
    graded = -0.5 * np.log1p(-k / (n + 1))
    too_wide = np.nonzero(np.diff(graded) > h_max)[0]
    stop = too_wide[0] if too_wide.size else n
    head = graded[: stop + 1]
    head = head[head < t_max - h_max]
    m = max(2, int(math.ceil((t_max - head[-1]) / h_max)))
    uniform = np.linspace(head[-1], t_max, m + 1)[1:]
    return WeightedGrid(np.concatenate([head, uniform]))


def build_seed(p: SolitonParams, spec: SeedSpec, grid: WeightedGrid) -> np.ndarray:
    coeff = spec.eps * np.array([p.A2 / (2 * p.d), 1.0, spec.gamma, spec.beta])
    return coeff[:, None] * np.exp(-2.0 * grid.nodes)[None, :]


# ---------------------------------------------------------------------------
# panel-exact exponential tails


def _moments(h: np.ndarray, k: float) -> list:
    """``m_n = h^{-n} int_0^h x^n e^{-kx} dx`` for ``n = 0..3``."""
    kh = k * h
    out = [np.empty_like(h) for _ in range(4)]
    small = kh < 1.0
    if np.any(small):
        # h^{-n} M_n = h sum_j (-kh)^j / (j! (n + j + 1))
        x = -kh[small]
        acc = [np.zeros_like(x) for _ in range(4)]
        term = np.ones_like(x)
        for j in range(24):
            for n in range(4):
                acc[n] += term / (n + j + 1)
            term = term * x / (j + 1)
        for n in range(4):
            out[n][small] = h[small] * acc[n]
    big = ~small
    if np.any(big):
        hb, kb = h[big], kh[big]
        e = np.exp(-kb)
        m = -np.expm1(-kb) / k
        out[0][big] = m
        for n in range(1, 4):
            # M_n = (n M_{n-1} - h^n e^{-kh}) / k, rescaled by h^{-n}
            m = (n * m / hb - e) / k
            out[n][big] = m
    return out


def exponential_tail(nodes: np.ndarray, env: np.ndarray, k: float, denv: Optional[np.ndarray] = None) -> np.ndarray:
    """``P(t_j) = int_{t_j}^inf e^{-k(s - t_j)} env(s) ds`` at every node.

    Between nodes ``env`` is the cubic Hermite interpolant of ``(env, denv)``,
    or linear when ``denv`` is omitted; after the last node it is held
    constant.  Works on the trailing axis, so ``env`` may be stacked.
    """
    h = np.diff(nodes)
    m0, m1, m2, m3 = _moments(h, k)
    decay = np.exp(-k * h)
    env = np.asarray(env, dtype=float)
    if denv is None:
        wa, wb = m0 - m1, m1
        contrib = wa * env[..., :-1] + wb * env[..., 1:]
    else:
        w00 = m0 - 3 * m2 + 2 * m3
        w01 = 3 * m2 - 2 * m3
        w10 = h * (m1 - 2 * m2 + m3)
        w11 = h * (m3 - m2)
        contrib = w00 * env[..., :-1] + w01 * env[..., 1:] + w10 * denv[..., :-1] + w11 * denv[..., 1:]
    out = np.empty_like(env)
    out[..., -1] = env[..., -1] / k
    for j in range(h.size - 1, -1, -1):
        out[..., j] = contrib[..., j] + decay[j] * out[..., j + 1]
    return out


def tail_bound(p: SolitonParams, C0: float, t: float) -> float:
    """Bound on ``|int_t^inf Phi(t,s) b(v(s)) ds|_inf`` when ``|v(s)| <= C0 e^{-2s}``."""
    K1, K2 = b_coefficient_bounds(p)
    c = p.A2 / (2 * p.d)
    return (1 + c) * (K1 * C0**2 * math.exp(-4 * t) / 2 + K2 * C0**3 * math.exp(-6 * t) / 4)


def apply_T(
    p: SolitonParams,
    u: np.ndarray,
    v: np.ndarray,
    grid: WeightedGrid,
    b: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    decay_limit: Optional[float] = None,
) -> np.ndarray:
    """One application of the integral operator at every node.

    ``b`` replaces the nonlinearity (used by tests).  If ``decay_limit`` is
    given, ``v`` must satisfy ``e^{2t}|v| <= decay_limit`` on the grid, else
    ``NonContractionError`` is raised.
    """
    t = grid.nodes
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NonContractionError("iterate is not finite")
    if decay_limit is not None and grid.norm(v) > decay_limit:
        raise NonContractionError(
            f"iterate left the ball: weighted norm {grid.norm(v):.3e} > {decay_limit:.3e}"
        )
    c = p.A2 / (2 * p.d)
    w4 = np.exp(4.0 * t)
    if b is None:
        bv = nonlinearity_b(p, v)
        # envelope slope, taking the iterate's own tangent as dv/dt
        denv = w4 * (4 * bv + nonlinearity_b_derivative(p, v, nonlin2(p, v)))
        denv1 = denv[0] - c * denv[1]
    else:
        bv = b(v)
        denv = denv1 = None
    env = w4 * bv
    # Rows 2..4 of Phi(t,s) are e^{2(s-t)}; row 1 mixes the constant and
    # e^{2(s-t)} parts through the (1,2) entry.
    P2 = exponential_tail(t, env, 2.0, denv)
    P4 = exponential_tail(t, env[0] - c * env[1], 4.0, denv1)
    damp = np.exp(-4.0 * t)
    integral = damp * P2
    integral[0] = damp * (P4 + c * P2[1])
    return u - integral


def _extrapolated_ratio(num: np.ndarray, den: np.ndarray) -> float:
    """Aitken extrapolation of ``num/den`` from the last three (equally spaced) nodes."""
    r0, r1, r2 = (num[-3:] / den[-3:]).tolist()
    d1, d2 = r1 - r0, r2 - r1
    denom = d2 - d1
    if abs(d2) <= 1e-13 * abs(r2) or denom == 0.0 or d2 * d1 <= 0:
        return r2
    return r2 - d2 * d2 / denom


@dataclass
class PicardResult:
    params: SolitonParams
    spec: SeedSpec
    grid: WeightedGrid
    v: np.ndarray  # shape (4, n_nodes)
    iterations: int
    contraction_ratios: list
    updates: list
    seed_distance: float  # weighted |T_u u - u|
    limit_WY2: float
    limit_1mZY2: float
    limit_XY2: float
    retries: int = 0
    seed: np.ndarray = field(default=None, repr=False)

    @property
    def final_update(self) -> float:
        return self.updates[-1] if self.updates else 0.0


def iterate_to_fixed_point(
    p: SolitonParams,
    spec: SeedSpec,
    grid: WeightedGrid,
    picard_tol: float = 1e-12,
    max_iter: int = 200,
    max_retries: int = 6,
) -> PicardResult:
    """Iterate ``v <- T_u v`` from ``v = u`` until the weighted update is below ``picard_tol``.

    A divergent or stalling iteration is retried with half the seed amplitude,
    up to ``max_retries`` times.
    """
    last_err: Optional[Exception] = None
    for attempt in range(max_retries + 1):
        cur = spec.with_eps(spec.eps * 0.5**attempt) if attempt else spec
        try:
            res = _iterate(p, cur, grid, picard_tol, max_iter)
        except NonContractionError as exc:
            last_err = exc
            continue
        res.retries = attempt
        return res
    raise NonContractionError(f"no contraction after {max_retries} halvings of eps: {last_err}")


def _iterate(p, spec, grid, picard_tol, max_iter) -> PicardResult:
    u = build_seed(p, spec, grid)
    radius = spec.ball_radius
    v = u
    updates, ratios = [], []
    for it in range(1, max_iter + 1):
        nxt = apply_T(p, u, v, grid, decay_limit=10 * radius)
        upd = grid.norm(nxt - v)
        if updates:
            ratios.append(upd / updates[-1] if updates[-1] > 0 else 0.0)
            if len(ratios) >= 2 and ratios[-1] >= 1.0 and ratios[-2] >= 1.0 and upd > picard_tol:
                raise NonContractionError(f"contraction ratio {ratios[-1]:.3f} >= 1 at eps={spec.eps:g}")
        updates.append(upd)
        v = nxt
        if upd < picard_tol:
            break
    else:
        raise NonContractionError(f"no convergence in {max_iter} iterations at eps={spec.eps:g}")
    if np.any(v[1] <= 0):
        raise NonContractionError("fixed point has Yt <= 0 at some node")
    return PicardResult(
        params=p,
        spec=spec,
        grid=grid,
        v=v,
        iterations=it,
        contraction_ratios=ratios,
        updates=updates,
        seed_distance=updates[0],
        limit_WY2=_extrapolated_ratio(v[3], v[1]),
        limit_1mZY2=_extrapolated_ratio(v[2], v[1]),
        limit_XY2=_extrapolated_ratio(v[0], v[1]),
        seed=u,
    )


def seed_distance(p: SolitonParams, spec: SeedSpec, grid: WeightedGrid) -> float:
    """Weighted distance ``|T_u u - u|``, quadratic in the seed amplitude."""
    u = build_seed(p, spec, grid)
    return grid.norm(apply_T(p, u, u, grid) - u)


# ---------------------------------------------------------------------------
# from the germ to the forward flow


def germ_states(res: PicardResult, ctx: FirstIntegralContext) -> tuple[np.ndarray, np.ndarray]:
    """Augmented states at every node, ordered by increasing ``t = -t~``.

    Returns ``(t, states)``; the eleven columns of ``states`` are
    ``STATE_FIELDS`` followed by ``Zt = 1 - Z``, which is kept because the
    germ knows it far more accurately than ``1 - Z`` can be formed.

    The integrated quantities start at zero at ``t = -inf`` (``lng`` at
    ``ln lambda``) and are tails of exponentially decaying integrands.
    """
    X, Yt, Zt, W = res.v
    if np.any(Yt <= 0):
        raise PicardDomainError("Yt must be positive on the germ")
    p = res.params
    t = res.grid.nodes
    F1, F2, F3, F4 = nonlin2(p, res.v)
    Y = np.sqrt(Yt)
    dY = F2 / (2 * Y)
    e1, e2 = np.exp(t), np.exp(2 * t)
    # Each integrand is e^{-kt} times an envelope; slopes are d/dt of the envelope.
    lng = math.log(ctx.lam) + exponential_tail(t, e2 * X, 2.0, e2 * (2 * X + F1)) / e2
    g = np.exp(lng)
    dg = -g * X
    env_s = g * Y
    s = exponential_tail(t, e1 * env_s, 1.0, e1 * (env_s + dg * Y + g * dY)) / e1
    Z = 1 - Zt
    env_f = g * Z * W / Y
    d_env_f = dg * Z * W / Y - g * F3 * W / Y + g * Z * F4 / Y - env_f * dY / Y
    f = exponential_tail(t, e1 * env_f, 1.0, e1 * (env_f + d_env_f)) / e1
    env_h = Zt - p.d * X
    h = exponential_tail(t, e2 * env_h, 2.0, e2 * (2 * env_h + F3 - p.d * F1)) / e2
    tbar = exponential_tail(t, e1 * Y, 1.0, e1 * (Y + dY)) / e1
    L = g * Y
    cols = np.stack([X, Y, 1 - Zt, W, lng, s, f, L, h, tbar, Zt], axis=1)
    return -t[::-1], cols[::-1]


def handoff_state(res: PicardResult, ctx: FirstIntegralContext) -> PhaseState:
    """Augmented state at ``t = 0`` (the first grid node) for the forward integrator."""
    if res.v[1, 0] <= 0:
        raise PicardDomainError("Yt(0) must be positive")
    t, cols = germ_states(res, ctx)
    return PhaseState.from_array(t[-1], cols[-1, :10])
