import math

import numpy as np
import pytest

from soliton_forge.core import FirstIntegralContext, InvalidParameterError, PhaseState, make_params
from soliton_forge.integrator import (
    CorruptTrajectoryError,
    IntegrationOptions,
    Outcome,
    Trajectory,
    bar_diagnostics,
    check_converged,
    check_dXplusZ,
    check_first_integral,
    check_germ_rates,
    check_L_increasing,
    check_sign_invariance,
    check_terminal,
    check_W_bound,
    integrate,
    lambda0_threshold,
)

P = make_params(2, -1)
CTX = FirstIntegralContext.from_Lambda(P, 40.0)


def synthetic(X, Z=None, W=None, Y=None, Lambda=40.0, outcome=Outcome.STEP_LIMIT):
    n = len(X)
    Z = [0.5] * n if Z is None else Z
    W = [0.01] * n if W is None else W
    Y = [0.1] * n if Y is None else Y
    ctx = FirstIntegralContext.from_Lambda(P, Lambda)
    states = [PhaseState(float(i), X[i], Y[i], Z[i], W[i], L=0.1 + 0.01 * i) for i in range(n)]
    return Trajectory.from_states(P, ctx, states, outcome)


@pytest.mark.parametrize("q,expected", [(-1, "Lambda0_d2_q-1"), (-2, "Lambda0_d2_q-2")])
def test_lambda0_threshold(q, expected, oracle):
    assert lambda0_threshold(make_params(2, q)) == pytest.approx(oracle["closed_form"][expected], rel=1e-14)


def test_stationary_start_stays_put():
    tr = integrate(P, PhaseState(0, 0, 0, 1, 0), CTX, IntegrationOptions(max_t=1e3))
    assert tr.outcome == Outcome.STEP_LIMIT
    assert np.all(tr.y[:, :4] == np.array([0, 0, 1, 0]))


def test_options_validation():
    with pytest.raises(InvalidParameterError):
        IntegrationOptions(rtol=0)
    with pytest.raises(InvalidParameterError):
        IntegrationOptions(max_steps=0)


def test_trajectory_requires_increasing_t():
    with pytest.raises(CorruptTrajectoryError):
        Trajectory.from_states(P, CTX, [PhaseState(1, 0, 0.1, 1, 0), PhaseState(0, 0, 0.1, 1, 0)])


def test_sign_invariance_synthetic():
    bad = check_sign_invariance(synthetic([0.1, -0.1, 0.2]))
    assert bad.status == "fail"
    assert "index 2" in bad.measured["violations"][0]
    good = check_sign_invariance(synthetic([0.3, 0.2, 0.1, 0.05, 0.01, -0.01, -0.02, -0.03]))
    assert good.status == "pass"


def test_dXplusZ_synthetic():
    assert check_dXplusZ(synthetic([0.0], Z=[1.0], W=[0.0])).status == "pass"
    assert check_dXplusZ(synthetic([0.5], Z=[0.5])).status == "fail"


def test_W_bound_modes():
    tr = synthetic([0.1, 0.1], W=[0.1, 0.1], Y=[0.1, 0.1], Lambda=40.0)  # W^2/Y^2 = 1 > 0.25
    assert check_W_bound(tr, lambda0_threshold(P)).status == "fail"
    tr1 = synthetic([0.1, 0.1], W=[0.1, 0.1], Y=[0.1, 0.1], Lambda=1.0)
    assert check_W_bound(tr1, lambda0_threshold(P)).status == "report-only"


def test_converged_entry_follows_outcome():
    assert check_converged(synthetic([0.1], outcome=Outcome.BLOWUP)).status == "fail"
    assert check_converged(synthetic([0.1], outcome=Outcome.CONVERGED)).status == "pass"


def test_reference_run(run40, oracle):
    tr = run40.traj
    assert tr.outcome == Outcome.CONVERGED
    assert tr["L"][-1] == pytest.approx(1 / math.sqrt(40), abs=1e-4)
    for check in (check_first_integral, check_terminal, check_L_increasing, check_sign_invariance,
                  check_dXplusZ, check_germ_rates):
        assert check(tr).status == "pass", check.__name__
    assert check_W_bound(tr, lambda0_threshold(P)).status == "pass"


def test_bar_diagnostics_reference(run40, oracle):
    e = bar_diagnostics(run40.traj, run40.ctx)
    assert e.status == "pass"
    assert e.measured["Wbar_cap"] == pytest.approx(oracle["closed_form"]["bar_W_bound_Lambda40"], rel=1e-14)
    assert abs(e.measured["Lbar_at_0"] - 1.0) < 1e-4
    assert abs(e.measured["ZYbar_at_0"]) < 1e-4


def test_dense_evaluation_matches_samples(run40):
    tr = run40.traj
    idx = np.linspace(0, len(tr) - 1, 40).astype(int)
    assert np.allclose(tr.evaluate(tr.t[idx]), tr.y[idx], rtol=1e-12, atol=1e-15)


def test_t_of_s_inverts_arclength(run40):
    tr = run40.traj
    s = np.array([1e-3, 0.5, 3.0, 100.0])
    rows = tr.evaluate(tr.t_of_s(s))
    assert np.allclose(rows[:, 5], s, rtol=1e-12)
    with pytest.raises(ValueError):
        tr.t_of_s([tr["s"][-1] * 2])


def test_blowup_is_reported():
    from soliton_forge.pipeline import RunConfig, run

    r = run(RunConfig(d=2, q=-2.0, Lambda=5.0))
    assert r.traj.outcome == Outcome.BLOWUP
    assert r.report["reached_origin"].status == "fail"
    assert r.verdict == "Incomplete"
