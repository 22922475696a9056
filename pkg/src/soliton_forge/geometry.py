"""Geometric diagnostics on recovered profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .core import SolitonParams
from .integrator import Outcome, Trajectory, lambda0_threshold
from .profile import MetricProfile
from .report import ReportEntry


def second_derivative_ratios(prof: MetricProfile) -> tuple[np.ndarray, np.ndarray]:
    """``f_ss/f`` and ``g_ss/g`` from the soliton equations, in phase variables.

    ``f_ss/f = (Z^2 - Z + A3 W^2)/L^2`` and
    ``g_ss/g = (X^2 - X + (A2/d) Y^2 - 2 (A3/d) W^2)/L^2``; these equal the
    arclength forms but avoid the ``1/f`` and ``1/s`` factors at the zero
    section.
    """
    p = prof.params
    X, Y, Z, W, L = (prof[k] for k in ("X", "Y", "Z", "W", "L"))
    L2 = L * L
    fss = (-Z * prof.Zt + p.A3 * W**2) / L2
    gss = (X * X - X + (p.A2 / p.d) * Y**2 - 2 * (p.A3 / p.d) * W**2) / L2
    return fss, gss


def second_derivative_ratios_arclength(prof: MetricProfile) -> tuple[np.ndarray, np.ndarray]:
    """Same quantities written with ``f, g, f_s, g_s, h_s`` (used as a cross-check)."""
    p = prof.params
    d = p.d
    f, g, hs = prof["f"], prof["g"], prof["h_s"]
    fs, gs = prof.f_s, prof.g_s
    fss = -d * fs * gs / (f * g) - fs * hs / f + p.A3 * f**2 / g**4
    gss = (-fs * gs / (f * g) - gs * hs / g - (d - 1) * (gs / g) ** 2
           + (p.A2 / d) / g**2 - 2 * (p.A3 / d) * f**2 / g**4)
    return fss, gss


def hessian_terms(prof: MetricProfile) -> dict:
    fss, gss = second_derivative_ratios(prof)
    hs = prof["h_s"]
    return {
        "h_ss": -fss - prof.params.d * gss,
        "f_s h_s/f": prof.f_s * hs / prof["f"],
        "g_s h_s/g": prof.g_s * hs / prof["g"],
    }


def ricci_sign_report(prof: MetricProfile, tol: float = 1e-10) -> ReportEntry:
    terms = hessian_terms(prof)
    minima = {k: float(np.min(v)) for k, v in terms.items()}
    ok = all(m >= -tol for m in minima.values())
    return ReportEntry(
        name="ricci_nonnegative",
        status="pass" if ok else "fail",
        measured=minima,
        tolerance=tol,
        anchor="Hessian of h (equal to Rc) is nonnegative",
    )


def kahler_residual_value(prof: MetricProfile, p: Optional[SolitonParams] = None) -> float:
    p = prof.params if p is None else p
    gsg = prof.g_s * prof["g"]
    r = -(p.d + 2) / 2 * p.q * prof["f"] - gsg
    return float(np.max(np.abs(r)) / max(1.0, np.max(np.abs(gsg))))


def kahler_residual(prof: MetricProfile, p: Optional[SolitonParams] = None, tol: float = 1e-6) -> ReportEntry:
    """Scaled sup of ``-(d+2)/2 q f - g_s g``.

    Asserted only for ``q = -1`` profiles from the reduced pipeline; any other
    profile is reported.
    """
    p = prof.params if p is None else p
    val = kahler_residual_value(prof, p)
    asserted = p.q == -1 and prof.source == "kahler"
    return ReportEntry(
        name="kahler_residual",
        status=("pass" if val < tol else "fail") if asserted else "report-only",
        measured=val,
        tolerance=tol,
        anchor="-(d+2)/2 q f = g_s g",
    )


def nabla_J_coefficients(prof: MetricProfile, p: Optional[SolitonParams] = None) -> dict:
    """The four scalar functions multiplying the components of the covariant
    derivative of the complex structure."""
    p = prof.params if p is None else p
    f, g, gs = prof["f"], prof["g"], prof.g_s
    if np.any(f <= 0):
        raise ValueError("f must be positive at every sample")
    k = (p.d + 2) / 2 * p.q
    return {
        "c1": -k * f / g**2 - gs / g,
        "c2": f * gs / g + k * f**2 / g**2,
        "c3": -gs * g - k * f,
        "c4": -gs * g / f - k,
    }


def nabla_J_report(prof: MetricProfile, p: Optional[SolitonParams] = None, tol: float = 1e-6) -> ReportEntry:
    """Sup of each coefficient, scaled by ``max(1, sup |g_s term|)``."""
    p = prof.params if p is None else p
    c = nabla_J_coefficients(prof, p)
    f, g, gs = prof["f"], prof["g"], prof.g_s
    scales = {
        "c1": np.abs(gs / g),
        "c2": np.abs(f * gs / g),
        "c3": np.abs(gs * g),
        "c4": np.abs(gs * g / f),
    }
    sups = {k: float(np.max(np.abs(v)) / max(1.0, np.max(scales[k]))) for k, v in c.items()}
    asserted = p.q == -1 and prof.source == "kahler"
    ok = all(v < tol for v in sups.values())
    return ReportEntry(
        name="nabla_J_coefficients",
        status=("pass" if ok else "fail") if asserted else "report-only",
        measured=sups,
        tolerance=tol,
        anchor="all components of the derivative of J vanish",
    )


class AsymptoticClass(str, Enum):
    PARABOLOID = "Paraboloid"
    CIGAR_PARABOLOID = "CigarParaboloid"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class Classification:
    verdict: AsymptoticClass
    g_sqrt_s: float  # last value of g/sqrt(s)
    g_variation: float
    f_variation: float
    f_sqrt_variation: float
    s_max: float


def _variation(x: np.ndarray) -> float:
    return float((np.max(x) - np.min(x)) / abs(np.mean(x)))


def asymptotic_classifier(prof: MetricProfile, tol: float = 0.01, min_s: float = 100.0) -> Classification:
    """Classify the end by relative variation over the final decade of ``s``.

    ``g/sqrt(s)`` must settle; then either ``f/sqrt(s)`` (paraboloid) or ``f``
    (cigar-paraboloid) must settle too.  Profiles that stop before ``min_s``
    are left undetermined.
    """
    s = prof["s"]
    s_max = float(s[-1])
    nan = float("nan")
    if s_max < min_s:
        return Classification(AsymptoticClass.UNDETERMINED, nan, nan, nan, nan, s_max)
    m = s >= s_max / 10
    f, g, ss = prof["f"][m], prof["g"][m], s[m]
    gv = _variation(g / np.sqrt(ss))
    fv = _variation(f)
    fsv = _variation(f / np.sqrt(ss))
    if gv >= tol:
        verdict = AsymptoticClass.UNDETERMINED
    elif fv < tol:
        verdict = AsymptoticClass.CIGAR_PARABOLOID
    elif fsv < tol:
        verdict = AsymptoticClass.PARABOLOID
    else:
        verdict = AsymptoticClass.UNDETERMINED
    return Classification(verdict, float(g[-1] / math.sqrt(ss[-1])), gv, fv, fsv, s_max)


def classification_entry(cls: Classification, complete: bool) -> ReportEntry:
    measured = {
        "verdict": cls.verdict.value,
        "g_over_sqrt_s": cls.g_sqrt_s,
        "g_variation": cls.g_variation,
        "f_variation": cls.f_variation,
        "f_over_sqrt_s_variation": cls.f_sqrt_variation,
        "s_max": cls.s_max,
    }
    if complete:
        ok = cls.g_variation < 0.01 and cls.verdict != AsymptoticClass.UNDETERMINED
        status = "pass" if ok else "fail"
    else:
        status = "report-only"
    return ReportEntry(
        name="asymptotic_class",
        status=status,
        measured=measured,
        tolerance=0.01,
        anchor="g ~ sqrt(s) with f ~ sqrt(s) or f bounded",
    )


class Completeness(str, Enum):
    PROVEN = "ProvenComplete"
    OBSERVED = "ObservedOnly"
    INCOMPLETE = "Incomplete"


def completeness_verdict(traj: Trajectory, p: Optional[SolitonParams] = None, tol: float = 1e-4) -> ReportEntry:
    """``ProvenComplete`` needs convergence, the ``W^2/Y^2`` bound, the
    terminal value of ``L`` and ``Lambda >= Lambda0``; a converged run missing
    any of the other conditions is ``ObservedOnly``."""
    p = traj.params if p is None else p
    lam0 = lambda0_threshold(p)
    Lfin = float(traj["L"][-1] * math.sqrt(traj.ctx.C))
    converged = traj.outcome == Outcome.CONVERGED
    bound_ok = traj.min_WY2_margin >= -1e-9
    terminal_ok = abs(Lfin - 1.0) <= tol
    if converged and bound_ok and terminal_ok and traj.ctx.Lambda >= lam0:
        verdict = Completeness.PROVEN
    elif converged:
        verdict = Completeness.OBSERVED
    else:
        verdict = Completeness.INCOMPLETE
    if traj.ctx.Lambda >= lam0:
        status = "pass" if verdict == Completeness.PROVEN else "fail"
    else:
        status = "report-only"
    return ReportEntry(
        name="completeness",
        status=status,
        measured={"verdict": verdict.value, "Lambda": traj.ctx.Lambda, "Lambda0": lam0,
                  "outcome": traj.outcome.value, "L_sqrtC": Lfin, "min_WY2_margin": traj.min_WY2_margin},
        tolerance=tol,
        anchor="complete when C lambda^2 >= Lambda0",
    )
