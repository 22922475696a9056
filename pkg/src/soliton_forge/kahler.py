"""Independent construction of the Kahler solitons (``q = -1``).

On the canonical bundle the four-dimensional flow has the invariant surface
``W = 2X/(d+2)``, ``Z = (d+2) Y^2/X - 1``, on which it reduces to a planar
system in ``(X, Yt2 = Y^2/X)``.  The closing equilibrium ``(0, 2/(d+2))`` of
the planar system has linearisation ``2 I``, so every nearby trajectory leaves
it along a straight ray; the ray's slope fixes ``Lambda``.  The code works in
shifted coordinates ``(X, eta = Yt2 - 2/(d+2))`` so that the slope stays
resolved as the trajectory approaches the equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .core import (
    FirstIntegralContext,
    InvalidParameterError,
    KahlerState,
    PhaseState,
    SolitonParams,
    kahler_perturbation,
)
from .integrator import COL, COLUMNS, IntegrationOptions, Trajectory, advance, assemble
from .profile import MetricProfile


class KahlerAccuracyError(RuntimeError):
    pass


class ComparisonError(ValueError):
    pass


def _require_canonical(p: SolitonParams) -> None:
    if p.q != -1:
        raise InvalidParameterError(
            f"the Kahler reduction exists only on the canonical bundle (q = -1), got q = {p.q}"
        )


def seed_slope(p: SolitonParams, Lambda: float) -> float:
    """Limit of ``(Yt2 - 2/(d+2)) / X`` at the closing equilibrium."""
    return -(Lambda + p.A2) / (p.d + 2) ** 2


def unstable_seed(
    p: SolitonParams,
    C0: float,
    lambda0: float,
    eps: float = 1e-4,
    slope: Optional[float] = None,
) -> KahlerState:
    """First-order point ``(eps, 2/(d+2) + slope*eps)`` on the chosen ray."""
    _require_canonical(p)
    if not 0 < eps <= 1e-4:
        raise InvalidParameterError("eps must lie in (0, 1e-4]")
    if not (C0 > 0 and lambda0 > 0):
        raise InvalidParameterError("C0 and lambda0 must be positive")
    sl = seed_slope(p, C0 * lambda0**2) if slope is None else slope
    return KahlerState(0.0, eps, 2.0 / (p.d + 2) + sl * eps)


def reduced_first_integral(p: SolitonParams, C: float, g, X, eta):
    """``C g^2 X + A2 X + (d+2)^2 Yt2 - 2(d+2)``, written with ``eta``."""
    return C * g * g * X + p.A2 * X + (p.d + 2) ** 2 * eta


def lift_to_xyzw(p: SolitonParams, states: Sequence[KahlerState]) -> list:
    """Map reduced states onto the invariant surface of the full flow."""
    k = p.d + 2
    out = []
    for st in states:
        if st.X <= 0 or st.Yt2 <= 0:
            raise ValueError("lift needs X > 0 and Yt2 > 0")
        out.append(PhaseState(st.t, st.X, math.sqrt(st.X * st.Yt2), k * st.Yt2 - 1.0, 2.0 * st.X / k))
    return out


def _lift_rows(p: SolitonParams, z: np.ndarray) -> np.ndarray:
    """Augmented reduced rows ``(X, eta, lng, s, f, L, h, tbar)`` to ``COLUMNS`` rows."""
    k = p.d + 2
    X, eta = z[:, 0], z[:, 1]
    out = np.empty((z.shape[0], len(COLUMNS)))
    out[:, COL["X"]] = X
    out[:, COL["Y"]] = np.sqrt(np.maximum(X, 0.0) * (2.0 / k + eta))
    out[:, COL["Z"]] = 1.0 + k * eta
    out[:, COL["W"]] = 2.0 * X / k
    for name, j in (("lng", 2), ("s", 3), ("f", 4), ("L", 5), ("h", 6), ("tbar", 7)):
        out[:, COL[name]] = z[:, j]
    out[:, COL["Zt"]] = -k * eta
    return out


def _reduced_rhs(p: SolitonParams):
    k = p.d + 2

    def rhs(_t, z):
        X, eta, lng, s, f, L, h, tbar = z
        pert = kahler_perturbation(p, (X, eta))
        Z = 1.0 + k * eta
        Yt2 = 2.0 / k + eta
        g = math.exp(lng)
        Y = math.sqrt(X * Yt2) if X > 0 else 0.0
        q2 = p.d * X * X + Z * Z
        return np.array([
            2 * X - pert[0],
            2 * eta - pert[1],
            X,
            L,
            # g Z W / Y with W = 2X/k, Y = sqrt(X Yt2)
            g * Z * (2.0 / k) * math.sqrt(X / Yt2) if X > 0 else 0.0,
            L * q2,
            -k * eta - p.d * X,
            Y,
        ])

    return rhs


@dataclass
class KahlerResult:
    params: SolitonParams
    ctx: FirstIntegralContext
    seed: KahlerState
    slope_target: float
    slope_used: float
    limit_slope: float
    backward_rate: float
    t_start: float
    traj: Trajectory
    reduced_fi_drift: float
    corrections: int


def _backward_leg(p, X0, eta0, rtol, stop_norm=1e-10, t_span=60.0):
    def rhs(_t, v):
        return 2 * v - kahler_perturbation(p, v)

    def small(_t, v):
        return max(abs(v[0]), abs(v[1])) - stop_norm

    small.terminal = True
    sol = solve_ivp(rhs, (0.0, -t_span), [X0, eta0], method="RK45", rtol=rtol, atol=1e-300,
                    events=small, dense_output=False)
    if sol.status != 1:
        raise KahlerAccuracyError("backward flow did not reach the closing equilibrium")
    tb = float(sol.t_events[0][0])
    vb = sol.y_events[0][0]
    return tb, vb, sol.t, sol.y


def integrate_reduced(
    p: SolitonParams,
    seed: KahlerState,
    ctx: FirstIntegralContext,
    opts: IntegrationOptions = IntegrationOptions(),
    stop_norm: float = 1e-10,
    max_corrections: int = 6,
) -> KahlerResult:
    """Backward to the closing equilibrium, then forward with quadratures.

    The straight-line seed is only first-order accurate, so the backward
    limit of ``eta/X`` is measured and the seed slope is corrected until it
    matches the target ray.
    """
    _require_canonical(p)
    target = seed_slope(p, ctx.Lambda)
    X0 = seed.X
    slope = (seed.Yt2 - 2.0 / (p.d + 2)) / X0
    rtol = min(opts.rtol, 1e-10)
    for n_corr in range(max_corrections + 1):
        tb, vb, tt, vv = _backward_leg(p, X0, slope * X0, rtol, stop_norm)
        measured = vb[1] / vb[0]
        if abs(measured - target) <= 1e-12 * abs(target):
            break
        slope += target - measured
    else:
        raise KahlerAccuracyError(f"seed slope did not settle: {measured} vs {target}")

    norms = np.max(np.abs(vv), axis=0)
    tail = norms < 1e-6
    rate = float(np.polyfit(tt[tail], np.log(norms[tail]), 1)[0]) if np.count_nonzero(tail) > 3 else float("nan")

    # Quadrature tails at t_b: each integrand decays like e^{2t} or e^{t}.
    k = p.d + 2
    X, eta = vb
    Yt2 = 2.0 / k + eta
    Y = math.sqrt(X * Yt2)
    Z = 1.0 + k * eta
    lng = math.log(ctx.lam) + X / 2
    g = math.exp(lng)
    L = g * Y
    z0 = np.array([X, eta, lng, L, g * Z * (2.0 / k) * math.sqrt(X / Yt2), L, (-k * eta - p.d * X) / 2, Y])

    def monitor(z):
        Xz, ez = z[0], z[1]
        Zz = 1.0 + k * ez
        core = max(abs(Xz), math.sqrt(max(Xz, 0.0) * (2.0 / k + ez)), abs(Zz), 2 * abs(Xz) / k)
        return core, z[5] * (p.d * Xz * Xz + Zz * Zz)

    # The leg starts with every component near stop_norm, so the absolute
    # tolerance is scaled down with it; rtol governs once they grow.
    fwd = replace(opts, atol=opts.atol * stop_norm)
    log = advance(_reduced_rhs(p), tb, z0, fwd, monitor)
    traj = assemble(p, ctx, log, lambda z: _lift_rows(p, z))
    drift = float(np.max(np.abs(reduced_first_integral(p, ctx.C, np.exp(log.y[:, 2]), log.y[:, 0], log.y[:, 1]))))
    if drift > 1e-6:
        raise KahlerAccuracyError(f"reduced first integral drifted by {drift:.3e}")
    return KahlerResult(
        params=p, ctx=ctx, seed=KahlerState(0.0, X0, 2.0 / k + slope * X0),
        slope_target=target, slope_used=slope, limit_slope=float(measured),
        backward_rate=rate, t_start=tb, traj=traj, reduced_fi_drift=drift, corrections=n_corr,
    )


def compare_profiles(a: MetricProfile, b: MetricProfile, floor: float = 1e-12, n: int = 4000) -> dict:
    """Sup-relative deviations of ``f``, ``g`` and ``h_s`` over the common ``s`` range.

    Both profiles are evaluated on the same arclengths (log-spaced near the
    zero section, uniform further out) via dense output when available.
    """
    if (a.params.d, a.params.q) != (b.params.d, b.params.q):
        raise ComparisonError("profiles belong to different (d, q)")
    lo = max(a["s"][0], b["s"][0])
    hi = min(a["s"][-1], b["s"][-1])
    if not lo < hi:
        raise ComparisonError("profiles have no common s range")
    s = np.unique(np.concatenate([np.geomspace(lo, hi, n // 2), np.linspace(lo, hi, n // 2)]))
    pa, pb = _at(a, s), _at(b, s)
    out = {}
    for key in ("f", "g", "h_s"):
        fa, fb = pa[key], pb[key]
        out[key] = float(np.max(np.abs(fa - fb) / np.maximum(np.abs(fa), floor)))
    out["s_range"] = (float(lo), float(hi))
    return out


def _at(prof: MetricProfile, s: np.ndarray) -> dict:
    if prof.traj is not None:
        q = prof.evaluate(s)
        return {k: q[k] for k in ("f", "g", "h_s")}
    return {k: np.interp(s, prof["s"], prof[k]) for k in ("f", "g", "h_s")}
