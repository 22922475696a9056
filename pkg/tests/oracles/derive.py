"""Regenerate ``frozen.json``: reference values computed without the package.

Closed-form values come from sympy with the polynomials typed in directly.
Profile values come from a plain DOP853 shooting run that starts on the
linear ray at the zero section and shares no code with ``soliton_forge``.

    python3 tests/oracles/derive.py
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp

HERE = Path(__file__).resolve().parent


def consts(d, q):
    A2 = sp.Integer(d) * (d + 2)
    A3 = sp.Rational(1, 4) * d * (d + 2) ** 2 * sp.nsimplify(q) ** 2
    return A2, A3


def field1(d, q, X, Y, Z, W):
    A2, A3 = consts(d, q)
    r = d * X**2 + Z**2
    return (X * (r - 1) + A2 / d * Y**2 - 2 * A3 / d * W**2,
            Y * (r - X),
            Z * (r - 1) + A3 * W**2,
            W * (r - 2 * X + Z))


def field2(d, q, X, Yt, Zt, W):
    A2, A3 = consts(d, q)
    return (-X * (d * X**2 + Zt**2 - 2 * Zt) - A2 / d * Yt + 2 * A3 / d * W**2,
            -2 * Yt * (d * X**2 - X + Zt**2 - 2 * Zt + 1),
            -Zt * (d * X**2 + Zt**2 - 3 * Zt + 2) + d * X**2 + A3 * W**2,
            -W * (d * X**2 - 2 * X + Zt**2 - 3 * Zt + 2))


def kahler2(d, X, Yt):
    k = d + 2
    return (X * (d * X**2 + k**2 * Yt**2 - 2 * X - k * Yt),
            Yt * (d * X**2 + k**2 * Yt**2 - 3 * k * Yt + 2))


def closed_form() -> dict:
    out = {}
    for d, q in ((2, -1), (2, -2), (4, -1)):
        A2, A3 = consts(d, q)
        out[f"A2A3_d{d}_q{q}"] = [int(A2), int(A3)]
    R = sp.Rational
    out["field1_d2_q-1_at_0110"] = [float(v) for v in field1(2, -1, 0, 1, 1, 0)]
    out["field1_d2_q-1_at_1001"] = [float(v) for v in field1(2, -1, 1, 0, 0, 1)]
    out["field2_d2_q-1_at_0100"] = [float(v) for v in field2(2, -1, 0, 1, 0, 0)]
    out["kahler_d2_at_0.1_0.5"] = [float(v) for v in kahler2(2, R(1, 10), R(1, 2))]
    A2, A3 = consts(2, -1)
    # dX^2 + A2 Y^2 + Z^2 - A3 W^2 - 1 + C L^2 at (0,1,1,0), C = L = 1
    out["fi_residual_d2_q-1_at_0110_C1_L1"] = float(2 * 0 + A2 * 1 + 1 - A3 * 0 - 1 + 1)
    t = sp.Symbol("t")
    phi22 = sp.exp(-2 * t)
    out["phi_22_dt1"] = float(phi22.subs(t, 1))
    phi12 = A2 / 4 * sp.exp(-2 * t) - A2 / 4
    out["phi_12_dt1_d2"] = float(phi12.subs(t, 1))
    eps, gamma, beta = R(1, 100), 24, 1
    out["seed_u0_d2_gamma24_beta1_eps0.01"] = [float(eps * A2 / 4), float(eps), float(eps * gamma), float(eps * beta)]
    X, Yt = R(1, 100), R(1, 2)
    out["lift_d2_at_0.01_0.5"] = [float(X), float(sp.sqrt(X * Yt)), float(4 * Yt - 1), float(R(2, 4) * X)]
    L0 = sp.Symbol("L0", positive=True)
    for q in (-1, -2):
        A2, A3 = consts(2, q)
        # 2^{2/3} sqrt(3/L0) = sqrt(A2/(A3(d+2)))
        sol = sp.solve(sp.Eq(2 ** sp.Rational(2, 3) * sp.sqrt(3 / L0), sp.sqrt(A2 / (A3 * 4))), L0)
        out[f"Lambda0_d2_q{q}"] = float(sol[0])
    out["kahler_slope_d2_Lambda40"] = float(-(40 + 8) / sp.Integer(16))
    # nabla J coefficients on f = g = 1, g_s = 0, d = 2, q = -1
    f, g, gs, k = 1, 1, 0, sp.Rational(4, 2) * -1
    out["nablaJ_const_profile"] = [float(-k * f / g**2 - gs / g), float(f * gs / g + k * f**2 / g**2),
                                   float(-gs * g - k * f), float(-gs * g / f - k)]
    out["kahler_residual_const_profile"] = float(-(2 + 2) / sp.Integer(2) * -1 * 1 - 0)
    out["closing_h_s_over_g_s_d2_C40"] = float(sp.Integer(2) * 40 / 8)
    out["closing_g_s_over_f_d2"] = float(sp.Integer(8) / 4)
    out["closing_1mZ_over_Y2_Lambda40"] = float(sp.Rational(40 + 8, 2))
    out["bar_W_bound_Lambda40"] = float(2 ** sp.Rational(2, 3) * sp.sqrt(sp.Rational(3, 40)))
    return out


def field1_zt(d, q):
    """``field1`` in ``(X, Y, Zt = 1 - Z, W)``, expanded so that nothing cancels near ``Zt = 0``."""
    X, Y, Zt, W = sp.symbols("X Y Zt W")
    fx, fy, fz, fw = field1(d, q, X, Y, 1 - Zt, W)
    exprs = [sp.expand(e) for e in (fx, fy, -fz, fw)]
    return sp.lambdify((X, Y, Zt, W), exprs, "math")


def shoot(d: int, q: float, Lambda: float, s_probe, delta: float = 1e-12, t_end: float = 400.0):
    """Shoot from the linear ray ``Y^2 = delta`` with lambda = 1, C = Lambda."""
    A2, A3 = (float(v) for v in consts(d, q))
    C = Lambda
    gamma = (Lambda + A2) / 2
    field = field1_zt(d, q)

    def rhs(_t, y):
        X, Y, Zt, W, lng, s = y
        L = math.exp(lng) * Y
        return [*field(X, Y, Zt, W), X, L]

    X0 = A2 / (2 * d) * delta
    y0 = [X0, math.sqrt(delta), gamma * delta, delta, X0 / 2, math.sqrt(delta)]

    def blow(_t, y):
        return 1e3 - max(abs(v) for v in y[:4])

    blow.terminal = True
    sol = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", rtol=1e-13, atol=1e-30,
                    dense_output=True, events=blow)
    tt = sol.t
    s = sol.y[5]
    out = {"outcome": "BlowUp" if sol.status == 1 else "Reached_t_end", "probes": {}}
    for sv in s_probe:
        if sv > s[-1]:
            continue
        i = int(np.searchsorted(s, sv))
        # refine t(s) = sv by bisection on the dense output
        lo, hi = tt[max(i - 1, 0)], tt[min(i, len(tt) - 1)]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if sol.sol(mid)[5] < sv:
                lo = mid
            else:
                hi = mid
        X, Y, Zt, W, lng, _ = sol.sol(0.5 * (lo + hi))
        g = math.exp(lng)
        out["probes"][repr(sv)] = {"f": g * W / Y, "g": g, "h_s": (Zt - d * X) / (g * Y)}
    X, Y, Zt, W = sol.y[:4]
    g = np.exp(sol.y[4])
    fi = d * X**2 + A2 * Y**2 + Zt**2 - 2 * Zt - A3 * W**2 + C * (g * Y) ** 2
    out["max_fi_residual"] = float(np.max(np.abs(fi)))
    out["t_end"] = float(tt[-1])
    out["L_sqrtC_end"] = float(g[-1] * Y[-1] * math.sqrt(C))
    f_all = g * W / Y
    gsg = X / Y * g
    kres = np.abs(-(d + 2) / 2 * q * f_all - gsg)
    out["kahler_residual_scaled"] = float(np.max(kres) / max(1.0, float(np.max(np.abs(gsg)))))
    return out


def main() -> None:
    data = {"closed_form": closed_form()}
    probes = [0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 200.0]
    data["shooting"] = {
        "d2_q-1_Lambda40": shoot(2, -1, 40.0, probes),
        "d2_q-1_Lambda80": shoot(2, -1, 80.0, probes),
        "d2_q-2_Lambda160": shoot(2, -2, 160.0, probes),
        "d2_q-2_Lambda5": shoot(2, -2, 5.0, []),
    }
    (HERE / "frozen.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    print(json.dumps(data, indent=1)[:4000])


if __name__ == "__main__":
    main()
