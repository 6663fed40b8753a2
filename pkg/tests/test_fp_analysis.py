import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from marketchoice.ewa_sim import frozen_market_jump_moments
from marketchoice.fp_analysis import (
    AttractionState, ClassPayoffs, LearningParams, NoFixedPointError,
    aggregates_from_peaks, class_payoffs_at, delta_roots, diffusion_from_payoffs,
    diffusion_gradient_from_payoffs, drift_from_payoffs, fixed_point_count, fixed_points,
    fixed_points_from_payoffs, homogeneous_population_dynamics, homogeneous_self_consistent, homogeneous_tilde_p,
    jacobian_from_payoffs, softmax_choice, threshold_alphas_from_payoffs,
)
from marketchoice.market_core import Aggregates, GameParams
from marketchoice.nash_solver import symmetric_nash_value

BETA = 1 / 0.11
payoff_pairs = st.tuples(st.floats(0.05, 2.0), st.floats(0.05, 2.0))
states = st.tuples(st.floats(-1.0, 2.0), st.floats(-1.0, 2.0))
alphas = st.floats(0.0, 1.0)
betas = st.floats(0.1, 30.0)


def enumerated_moments(A, P, Q, alpha, beta):
    """Jump moments of (A' - A)/r by enumerating the choice; scores enter through P and Q only."""
    A = np.asarray(A, float)
    s = expit(beta * (A[0] - A[1]))
    mean = np.zeros(2)
    second = np.zeros((2, 2))
    for m, prob in ((0, s), (1, 1 - s)):
        o = 1 - m
        # chosen: score - A_m; other: -alpha A_o
        e_c, e_c2 = P[m] - A[m], Q[m] - 2 * A[m] * P[m] + A[m] ** 2
        d_o = -alpha * A[o]
        mean[m] += prob * e_c
        mean[o] += prob * d_o
        second[m, m] += prob * e_c2
        second[o, o] += prob * d_o ** 2
        second[m, o] += prob * e_c * d_o
        second[o, m] += prob * e_c * d_o
    return mean, second


@pytest.fixture(scope="module")
def nash_payoffs():
    p = GameParams()
    x = symmetric_nash_value(p)
    return p, Aggregates(x, 1 - x), class_payoffs_at(Aggregates(x, 1 - x), p, 1)


# --- jump moments --------------------------------------------------------------

@settings(max_examples=200)
@given(states, payoff_pairs, st.floats(1.0, 3.0), alphas, betas)
def test_moments_match_enumeration(A, P, qfac, alpha, beta):
    P = np.array(P)
    Q = P ** 2 * qfac
    mean, second = enumerated_moments(A, P, Q, alpha, beta)
    np.testing.assert_allclose(drift_from_payoffs(A, P, alpha, beta), mean, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(diffusion_from_payoffs(A, P, Q, alpha, beta), second, rtol=1e-10, atol=1e-12)


@settings(max_examples=200)
@given(states, payoff_pairs, alphas, betas)
def test_jacobian_matches_finite_differences(A, P, alpha, beta):
    A, P = np.array(A), np.array(P)
    h = 1e-6
    J = jacobian_from_payoffs(A, P, alpha, beta)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (drift_from_payoffs(A + e, P, alpha, beta) - drift_from_payoffs(A - e, P, alpha, beta)) / (2 * h)
        np.testing.assert_allclose(J[:, k], fd, rtol=1e-6, atol=1e-6)


@settings(max_examples=200)
@given(states, payoff_pairs, alphas, betas)
def test_diffusion_gradient_matches_finite_differences(A, P, alpha, beta):
    A, P = np.array(A), np.array(P)
    Q = 1.5 * P ** 2
    h = 1e-6
    G = diffusion_gradient_from_payoffs(A, P, Q, alpha, beta)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (diffusion_from_payoffs(A + e, P, Q, alpha, beta)
              - diffusion_from_payoffs(A - e, P, Q, alpha, beta)) / (2 * h)
        np.testing.assert_allclose(G[..., k], fd, rtol=1e-6, atol=1e-6)


def test_diffusion_positive_semidefinite():
    rng = np.random.default_rng(3)
    for _ in range(200):
        P = rng.uniform(0.1, 2, 2)
        S = diffusion_from_payoffs(rng.uniform(-1, 2, 2), P, P ** 2 * rng.uniform(1, 2, 2),
                                   rng.uniform(0, 1), rng.uniform(0.1, 20))
        assert np.min(np.linalg.eigvalsh(S)) > -1e-12


def test_moment_oracle(nash_payoffs):
    params, aggr, pay = nash_payoffs
    lp = LearningParams(r=0.01, alpha=0.3, beta=BETA)
    A = np.array([0.5, 0.45])
    mc = frozen_market_jump_moments(A, 1, aggr, params, lp, n_samples=1_000_000, seed=11)
    mu = drift_from_payoffs(A, pay.P, lp.alpha, lp.beta)
    S = diffusion_from_payoffs(A, pay.P, pay.Q, lp.alpha, lp.beta)
    z_mean = (mc.mean - mu) / mc.mean_se
    z_second = (mc.second - S) / mc.second_se
    assert np.all(np.abs(z_mean) < 4.5)
    assert np.all(np.abs(z_second) < 4.5)


# --- fixed points ---------------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(payoff_pairs, st.floats(1e-4, 1.0), betas)
def test_fixed_points_zero_drift_and_alternate(P, alpha, beta):
    pay = ClassPayoffs(np.array(P), 1.5 * np.array(P) ** 2)
    lp = LearningParams(r=0.01, alpha=alpha, beta=beta)
    fps = fixed_points_from_payoffs(pay, lp)
    assert len(fps) % 2 == 1
    kinds = [p.stable for p in fps.points]
    assert kinds[0] and kinds[-1]
    assert all(a != b for a, b in zip(kinds, kinds[1:]))
    for p in fps.points:
        mu = drift_from_payoffs(np.array(p.state), pay.P, alpha, beta)
        assert np.max(np.abs(mu)) < 1e-10
        assert 0 <= p.state.A_1 <= P[0] + 1e-12 and 0 <= p.state.A_2 <= P[1] + 1e-12


def test_no_learning_decay_single_point():
    pay = ClassPayoffs(np.array([0.7, 0.4]), np.array([0.6, 0.3]))
    fps = fixed_points_from_payoffs(pay, LearningParams(alpha=0.0))
    assert len(fps) == 1
    assert fps.points[0].state == AttractionState(0.7, 0.4)


def test_lyapunov_covariance(nash_payoffs):
    _, aggr, pay = nash_payoffs
    lp = LearningParams(r=0.01, alpha=0.03, beta=BETA)
    fps = fixed_points_from_payoffs(pay, lp)
    assert len(fps.stable) >= 2
    for p in fps.stable:
        S = diffusion_from_payoffs(np.array(p.state), pay.P, pay.Q, lp.alpha, lp.beta)
        C, J = p.peak_covariance, p.jacobian
        resid = J @ C + C @ J.T + lp.r * S
        assert np.max(np.abs(resid)) < 1e-12 * max(1.0, np.max(np.abs(lp.r * S)))
        assert np.min(np.linalg.eigvalsh(C)) > 0


def test_five_points_have_two_saddles(nash_payoffs):
    _, _, pay = nash_payoffs
    fps = fixed_points_from_payoffs(pay, LearningParams(alpha=0.03, beta=BETA))
    assert len(fps) == 5
    s01 = fps.saddle_between(0, 1)
    s12 = fps.saddle_between(1, 2)
    assert fps.stable[0].delta < s01.delta < fps.stable[1].delta < s12.delta < fps.stable[2].delta
    with pytest.raises(ValueError):
        fps.saddle_between(0, 2)


def test_threshold_bracketing():
    P = np.array([0.8, 0.74])
    th = threshold_alphas_from_payoffs(P, BETA)
    eps = 1e-3
    assert fixed_point_count(P, th.alpha_1to3 * (1 - eps), BETA) == 1
    assert fixed_point_count(P, th.alpha_1to3 * (1 + eps), BETA) == 3
    assert fixed_point_count(P, th.alpha_3to5 * (1 - eps), BETA) == 3
    assert fixed_point_count(P, th.alpha_3to5 * (1 + eps), BETA) == 5
    assert fixed_point_count(P, th.alpha_back_to_3 * (1 - eps), BETA) == 5
    assert fixed_point_count(P, th.alpha_back_to_3 * (1 + eps), BETA) == 3


def test_equal_payoffs_skip_three(nash_payoffs):
    # with equal market payoffs the middle point splits into three at the same alpha
    _, _, pay = nash_payoffs
    assert pay.P[0] == pytest.approx(pay.P[1], rel=1e-9)
    th = threshold_alphas_from_payoffs(pay.P, BETA)
    assert th.alpha_1to3 == pytest.approx(th.alpha_3to5, rel=1e-5)
    assert fixed_point_count(pay.P, th.alpha_1to3 * 1.001, BETA) == 5


def test_delta_scan_converged(nash_payoffs):
    _, _, pay = nash_payoffs
    for alpha in (0.005, 0.03, 0.1, 0.5):
        a = delta_roots(pay.P, alpha, BETA, 4096)
        b = delta_roots(pay.P, alpha, BETA, 65536)
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_roots_invariant_under_beta_payoff_scaling():
    # only beta * P matters once attractions are measured in payoff units
    P = np.array([0.77, 0.77])
    for k in (0.5, 2.0):
        a = np.array(delta_roots(P, 0.03, BETA, 8192))
        b = np.array(delta_roots(P * k, 0.03, BETA / k, 8192))
        np.testing.assert_allclose(b, a * k, rtol=1e-9, atol=1e-12)


# --- aggregates and homogeneous populations ---------------------------------------

def test_aggregates_from_peaks():
    ag = aggregates_from_peaks([[(0.0, 1.0)], [(0.1, 0.25), (-0.1, 0.75)]], 10.0)
    assert ag.pbar_1 == pytest.approx(0.5)
    assert ag.pbar_2 == pytest.approx(0.25 * expit(1.0) + 0.75 * expit(-1.0))
    with pytest.raises(ValueError):
        aggregates_from_peaks([[(0.0, 0.5)], [(0.0, 1.0)]], 1.0)


@given(st.floats(-5, 5), st.floats(0.01, 50))
def test_softmax_symmetry(d, beta):
    assert softmax_choice(d, beta) + softmax_choice(-d, beta) == pytest.approx(1.0)


def test_self_consistent_state_is_consistent():
    params = GameParams()
    lp = LearningParams(r=0.01, alpha=0.005, beta=BETA)
    sc = homogeneous_self_consistent(params, lp)
    assert sc.kind == "homogeneous_mixed"
    x = sc.aggregates.pbar_1
    assert homogeneous_tilde_p(x, params, lp) == pytest.approx(x, abs=1e-10)
    assert sc.aggregates.pbar_2 == pytest.approx(1 - x)


def test_population_dynamics_tolerance_convergence():
    params = GameParams()
    lp = LearningParams(r=0.01, alpha=0.005, beta=BETA)
    t_eval = np.linspace(0, 50, 11)
    init = [(0.3, 0.25), (0.2, 0.3)]
    a = homogeneous_population_dynamics(init, params, lp, 50.0, 1e-7, t_eval)
    b = homogeneous_population_dynamics(init, params, lp, 50.0, 1e-11, t_eval)
    np.testing.assert_allclose(a.attractions, b.attractions, atol=1e-5)
    np.testing.assert_allclose(a.aggregates, softmax_choice(a.attractions[..., 0] - a.attractions[..., 1], BETA))


def test_learning_params_validation():
    with pytest.raises(ValueError):
        LearningParams(r=-0.1)
    with pytest.raises(ValueError):
        LearningParams(alpha=1.5)
    lp = LearningParams(r=0.02, alpha=0.1, beta=3.0)
    assert LearningParams.from_dict(lp.to_dict()) == lp
    assert lp.log_scale == pytest.approx(-math.log(0.1) / 3.0)
