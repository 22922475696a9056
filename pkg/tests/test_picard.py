import numpy as np
import pytest

from soliton_forge.core import FirstIntegralContext, InvalidParameterError, make_params
from soliton_forge.picard import (
    NonContractionError,
    PicardDomainError,
    SeedSpec,
    WeightedGrid,
    apply_T,
    build_seed,
    exponential_tail,
    germ_states,
    handoff_state,
    iterate_to_fixed_point,
    make_grid,
    seed_distance,
)

P = make_params(2, -1)
CTX = FirstIntegralContext.from_Lambda(P, 40.0)
GRID = make_grid()


@pytest.fixture(scope="module")
def fixed_point():
    return iterate_to_fixed_point(P, SeedSpec.for_context(CTX, 1e-3), GRID)


def test_seed_example(oracle):
    u = build_seed(P, SeedSpec(gamma=24, beta=1, eps=0.01), GRID)
    assert np.allclose(u[:, 0], oracle["closed_form"]["seed_u0_d2_gamma24_beta1_eps0.01"], rtol=1e-15)


def test_seed_is_pure_exponential():
    u = build_seed(P, SeedSpec(gamma=24, beta=1, eps=0.01), GRID)
    scaled = u * np.exp(2 * GRID.nodes)
    assert np.allclose(scaled, scaled[:, :1], rtol=1e-13)
    assert np.allclose(u[2] / u[1], 24) and np.allclose(u[3] / u[1], 1)


def test_seed_spec_validation():
    with pytest.raises(InvalidParameterError):
        SeedSpec(gamma=24, eps=0.0)
    with pytest.raises(InvalidParameterError):
        SeedSpec(gamma=24, eps=1e-3, ball_radius=1e-4)


def test_grid_shape():
    assert GRID.nodes[0] == 0 and GRID.t_max == pytest.approx(12.0)
    assert np.max(np.diff(GRID.nodes)) <= 20 / 400 + 1e-12
    with pytest.raises(InvalidParameterError):
        WeightedGrid(np.array([0.0, 1.0, 0.5, 2.0]))
    with pytest.raises(InvalidParameterError):
        make_grid(4)


def test_exponential_tail_exact_for_cubic_envelope():
    from scipy.integrate import quad

    t = np.concatenate([[0.0], np.cumsum(np.linspace(0.02, 0.3, 20))])
    k, T = 2.0, t[-1]

    def env(x):
        return 1 + x - 0.4 * x**2 + 0.05 * x**3

    def denv(x):
        return 1 - 0.8 * x + 0.15 * x**2

    out = exponential_tail(t, env(t), k, denv(t))
    for j in (0, 5, 13):
        exact = quad(lambda x: np.exp(-k * (x - t[j])) * env(x), t[j], T, epsabs=0, epsrel=1e-13)[0]
        exact += env(T) / k * np.exp(-k * (T - t[j]))
        assert out[j] == pytest.approx(exact, rel=1e-12)


def test_apply_T_with_zero_nonlinearity_returns_seed():
    u = build_seed(P, SeedSpec(gamma=24, eps=1e-3), GRID)
    out = apply_T(P, u, u, GRID, b=lambda v: np.zeros_like(v))
    assert np.array_equal(out, u)


def test_apply_T_rejects_iterates_outside_ball():
    u = build_seed(P, SeedSpec(gamma=24, eps=1e-3), GRID)
    with pytest.raises(NonContractionError):
        apply_T(P, u, 10 * u, GRID, decay_limit=1e-3)
    with pytest.raises(NonContractionError):
        apply_T(P, u, np.full_like(u, np.nan), GRID)


def test_fixed_point_contracts(fixed_point):
    r = fixed_point
    assert r.final_update < 1e-12
    assert max(r.contraction_ratios) < 0.5
    assert np.all(r.v[1] > 0)


def test_fixed_point_limits(fixed_point, oracle):
    cf = oracle["closed_form"]
    assert abs(fixed_point.limit_WY2 - 1) < 1e-6
    assert abs(fixed_point.limit_1mZY2 - cf["closing_1mZ_over_Y2_Lambda40"]) < 1e-6
    assert abs(fixed_point.limit_XY2 - 2.0) < 1e-5


def test_grid_refinement_does_not_move_limits(fixed_point):
    fine = iterate_to_fixed_point(P, SeedSpec.for_context(CTX, 1e-3), make_grid(800))
    assert abs(fine.limit_1mZY2 - fixed_point.limit_1mZY2) < 1e-8
    assert abs(fine.limit_WY2 - fixed_point.limit_WY2) < 1e-9


def test_seed_distance_is_quadratic():
    spec = SeedSpec.for_context(CTX, 1e-2)
    ratio = seed_distance(P, spec, GRID) / seed_distance(P, spec.with_eps(1e-3), GRID)
    assert 80 <= ratio <= 120


def test_halving_retry_reports_count():
    # a large amplitude leaves the ball; the driver halves eps until it contracts
    r = iterate_to_fixed_point(P, SeedSpec.for_context(CTX, 0.2), GRID)
    assert r.retries >= 1 and r.spec.eps < 0.2
    assert r.final_update < 1e-12


def test_germ_states_are_consistent(fixed_point):
    t, cols = germ_states(fixed_point, CTX)
    assert np.all(np.diff(t) > 0) and t[-1] == 0.0
    X, Y, Z, W, lng, s, f, L, h, tbar, Zt = cols.T
    assert np.allclose(L, np.exp(lng) * Y, rtol=1e-14)
    assert np.all(np.diff(s) > 0) and np.all(s > 0)
    fi = 2 * X**2 + 8 * Y**2 + Zt**2 - 2 * Zt - 8 * W**2 + 40 * L**2
    assert np.max(np.abs(fi)) < 1e-12


def test_handoff_requires_positive_Yt(fixed_point):
    st = handoff_state(fixed_point, CTX)
    assert st.t == 0.0 and st.Y > 0
    broken = type(fixed_point)(**{**fixed_point.__dict__, "v": fixed_point.v * np.array([[1], [-1], [1], [1]])})
    with pytest.raises(PicardDomainError):
        handoff_state(broken, CTX)
