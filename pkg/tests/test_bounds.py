import math

import numpy as np
import pytest

from consensus_td import (
    InitMoments,
    InstanceOracles,
    InstanceParams,
    ProjectionSet,
    RateConstants,
    RngStream,
    StepsizePlan,
    compute_constants,
    compute_L,
    compute_oracles,
    generate_instance,
    init_moments,
    lemma1_envelope,
    ring_schedule,
    run,
    spectral_eta,
    theorem1_asymptote,
    theorem1_envelope,
    theorem2_envelope,
    weight_schedule,
)
from consensus_td.engine import default_projection
from consensus_td.errors import (
    DegenerateEtaError,
    NotPositiveDefiniteError,
    StepsizeOutOfRangeError,
    UnsupportedPlanError,
)


def make_constants(
    L=1.0,
    R0=1.0,
    sigma_min=0.5,
    sigma_max=1.0,
    eta=0.5,
    delta=0.5,
    B=1,
    N=1,
    gamma=0.5,
    dist_sq=0.0,
    norm=0.0,
    norm_sq=0.0,
    lambda_min_sym=None,
):
    return RateConstants(
        L_v=np.array([L / N] * N),
        L=L,
        R0=R0,
        sigma_min=sigma_min,
        sigma_max=sigma_max,
        lambda_min_sym=sigma_min if lambda_min_sym is None else lambda_min_sym,
        eta=eta,
        delta=delta,
        B=B,
        N=N,
        gamma=gamma,
        moments=InitMoments(
            E_theta0_dist_sq=dist_sq, E_Theta0_norm=norm, E_Theta0_norm_sq=norm_sq
        ),
    )


@pytest.fixture(scope="module")
def desk_constants():
    mrp, feats = generate_instance(InstanceParams(n=20, K=5, N=5, gamma=0.9), seed=12345)
    oracles = compute_oracles(mrp, feats)
    weights = weight_schedule(ring_schedule(5), lazy=0.25)
    spectral = spectral_eta(weights, 1)
    proj = default_projection(oracles.theta_star)
    theta0s = [
        np.random.default_rng(r).normal(size=(5, 5)) * 0.01 for r in range(8)
    ]
    moments = init_moments(theta0s, oracles.theta_star)
    return (
        mrp,
        oracles,
        proj,
        compute_constants(mrp, oracles, proj, spectral, moments),
    )


# ---------------------------------------------------------------------------
# compute_L


def test_compute_L_plugin_example():
    # n=1, phi=1, gamma=0.5, reward 1 gives ||b_v|| = 1 and sigma_max = 0.5;
    # with ball radius 2: H = 1 + 0.5*2 = 2, D = 1 + 1.5*2 = 4, L_v = 8.
    import consensus_td as ct

    mrp = ct.MarkovRewardProcess(
        P=np.array([[1.0]]), gamma=0.5, rewards=np.array([[[1.0]]])
    )
    feats = ct.FeatureMap(Phi=np.array([[1.0]]))
    oracles = compute_oracles(mrp, feats)
    L_v, L = compute_L(oracles, ProjectionSet(radius=2.0), mrp)
    assert L_v[0] == pytest.approx(8.0, abs=1e-12)
    assert L == pytest.approx(8.0, abs=1e-12)


def test_compute_L_zero_reward_small_ball():
    import consensus_td as ct

    mrp = ct.MarkovRewardProcess(
        P=np.array([[1.0]]), gamma=0.5, rewards=np.zeros((3, 1, 1))
    )
    feats = ct.FeatureMap(Phi=np.array([[1.0]]))
    oracles = compute_oracles(mrp, feats)
    L_v, L = compute_L(oracles, ProjectionSet(radius=1e-12), mrp)
    assert np.all(L_v < 1e-10)
    assert L < 1e-9


def test_direction_bound_holds_on_run(desk_constants):
    mrp, oracles, proj, constants = desk_constants
    weights = weight_schedule(ring_schedule(5), lazy=0.25)
    import consensus_td as ct

    _, feats = generate_instance(InstanceParams(n=20, K=5, N=5, gamma=0.9), seed=12345)
    traj = run(
        mrp, feats, oracles, weights, StepsizePlan.constant(0.1), proj, 2000,
        RngStream(55, 0), record_every=100,
    )
    assert np.all(traj.final_max_hM_norm() <= constants.L_v + 1e-12)
    assert np.all(traj.final_max_e_over_alpha() <= constants.L_v + 1e-12)


# ---------------------------------------------------------------------------
# lemma1_envelope


def test_lemma1_k0():
    c = make_constants(L=1.0, eta=0.5, delta=0.5)
    env = lemma1_envelope(0, c, Theta0_norm=1.0, plan=StepsizePlan.constant(0.1))
    assert env == pytest.approx(1.0 / 0.5, abs=1e-15)


def test_lemma1_hand_arithmetic():
    # delta=1/2, L=1, eta=1/2, alpha=0.1, ||Theta(0)||=1, k=2:
    # 0.25*2 + 4*(0.5*0.1 + 1*0.1) = 1.1.
    c = make_constants(L=1.0, eta=0.5, delta=0.5)
    env = lemma1_envelope(2, c, Theta0_norm=1.0, plan=StepsizePlan.constant(0.1))
    assert env == pytest.approx(1.1, abs=1e-12)


def test_lemma1_geometric_limit():
    # Constant stepsize: the partial sums converge to alpha/(1-delta), so the
    # envelope tends to 2 L alpha / (eta (1-delta)).
    c = make_constants(L=2.0, eta=0.7, delta=0.6)
    alpha = 0.05
    env = lemma1_envelope(10_000, c, 3.0, StepsizePlan.constant(alpha))
    limit = 2.0 * c.L * alpha / (c.eta * (1.0 - c.delta))
    assert env == pytest.approx(limit, rel=1e-12)


def test_lemma1_vectorized_matches_scalar():
    c = make_constants(L=1.5, eta=0.6, delta=0.4)
    plan = StepsizePlan.inv_sqrt()
    ks = np.array([0, 1, 5, 40, 41])
    vec = lemma1_envelope(ks, c, 2.0, plan)
    for i, k in enumerate(ks):
        assert vec[i] == pytest.approx(lemma1_envelope(int(k), c, 2.0, plan), rel=1e-14)


def test_lemma1_exact_partial_sum_cross_check():
    # Direct summation oracle for the tail sum.
    c = make_constants(L=1.0, eta=0.9, delta=0.8)
    plan = StepsizePlan.harmonic(2.0)
    k = 37
    direct = sum(c.delta ** (k - 1 - t) * plan.at(t) for t in range(k))
    expected = c.delta**k * 5.0 / c.eta + 2.0 * c.L / c.eta * direct
    assert lemma1_envelope(k, c, 5.0, plan) == pytest.approx(expected, rel=1e-12)


def test_lemma1_vanishing_stepsizes_drive_envelope_to_zero():
    # With alpha(k) -> 0 the consensus envelope itself vanishes, i.e. the
    # agents reach consensus even without averaging the outputs.
    c = make_constants(L=2.0, eta=0.7, delta=0.6)
    for plan in (StepsizePlan.inv_sqrt(), StepsizePlan.harmonic(1.0)):
        early = lemma1_envelope(10, c, 3.0, plan)
        late = lemma1_envelope(100_000, c, 3.0, plan)
        later = lemma1_envelope(1_000_000, c, 3.0, plan)
        assert late < early / 10.0
        assert later < late / 2.0


def test_lemma1_degenerate_raises():
    c = make_constants(eta=0.0, delta=0.0)
    with pytest.raises(DegenerateEtaError):
        lemma1_envelope(5, c, 1.0, StepsizePlan.constant(0.1))


# ---------------------------------------------------------------------------
# theorem1_envelope


def test_theorem1_hand_arithmetic():
    # beta0 = 1 (via E dist^2 = 1, zero norm moment), beta1 = 2 via
    # L=1/2, sigma_max=0, eta=1/2, delta=0, N=1. At gamma=0.5, alpha=0.1,
    # k=9: 1/(0.1*0.5)/10 + 2*0.1/0.5 = 2.4.
    c = make_constants(
        L=0.5, sigma_max=0.0, eta=0.5, delta=0.0, N=1, gamma=0.5, dist_sq=1.0
    )
    assert c.beta0(0.1) == pytest.approx(1.0, abs=1e-15)
    assert c.beta1 == pytest.approx(2.0, abs=1e-15)
    env = theorem1_envelope(9, c, StepsizePlan.constant(0.1))
    assert env == pytest.approx(2.4, abs=1e-12)


def test_theorem1_constant_decreases_to_asymptote():
    c = make_constants(dist_sq=2.0, norm=1.0)
    plan = StepsizePlan.constant(0.1)
    ks = np.arange(0, 2000)
    env = theorem1_envelope(ks, c, plan)
    asym = theorem1_asymptote(c, plan)
    gaps = env - asym
    assert np.all(np.diff(gaps) < 0)
    assert np.all(gaps > 0)
    assert gaps[-1] < gaps[0] * 1e-2


def test_theorem1_invsqrt_k0():
    c = make_constants(dist_sq=0.3, norm=0.7, gamma=0.5)
    env = theorem1_envelope(0, c, StepsizePlan.inv_sqrt())
    expected = (c.beta0(1.0) + c.beta1) / (2.0 * (1.0 - c.gamma))
    assert env == pytest.approx(expected, rel=1e-15)


def test_theorem1_invsqrt_vanishes():
    # ln(k+1)/sqrt(k+1) decay: at k = 1e6 the curve sits below 10 beta1/sqrt(k)
    # for mild discounts and small offsets.
    c = make_constants(gamma=0.1, dist_sq=0.1, norm=0.0)
    k = 10**6
    env = theorem1_envelope(k, c, StepsizePlan.inv_sqrt())
    assert env <= 10.0 * c.beta1 / math.sqrt(k)


def test_theorem1_rejects_harmonic():
    c = make_constants()
    with pytest.raises(UnsupportedPlanError):
        theorem1_envelope(1, c, StepsizePlan.harmonic(3.0))


# ---------------------------------------------------------------------------
# theorem2_envelope


def test_theorem2_rho():
    c = make_constants(sigma_min=0.8, delta=0.7)
    assert c.rho(0.5) == pytest.approx(0.7, abs=1e-15)
    c2 = make_constants(sigma_min=0.8, delta=0.1)
    assert c2.rho(0.5) == pytest.approx(0.6, abs=1e-15)


def test_theorem2_constant_k0():
    c = make_constants(
        sigma_min=0.8, delta=0.5, dist_sq=0.25, norm=1.0, norm_sq=1.5
    )
    alpha = 0.5
    rho = c.rho(alpha)
    expected = (
        2.0 * (0.25 + 2.0 * 1.5)
        + c.beta2 * alpha / (1.0 - rho)
        + c.beta3 * alpha**2 / ((1.0 - rho) * (1.0 - c.delta))
    )
    env = theorem2_envelope(0, c, StepsizePlan.constant(alpha), which="raw_iterate")
    assert env == pytest.approx(expected, rel=1e-15)


def test_theorem2_harmonic_values():
    c = make_constants(sigma_min=0.5, delta=0.5, norm=1.0)
    plan = StepsizePlan.harmonic(4.0)  # alpha0 > 1/sigma_min = 2
    assert theorem2_envelope(0, c, plan, which="averaged") == 0.0
    ks = np.arange(1, 50)
    env = theorem2_envelope(ks, c, plan, which="averaged")
    assert np.all(env > 0)
    coef = c.beta2 / (2 * c.sigma_min * (1 - c.delta)) + 4.0 * c.beta3 / (
        4 * c.sigma_min
    )
    assert env[9] == pytest.approx(coef * math.log(11.0) / 11.0, rel=1e-14)


def test_theorem2_stepsize_ranges():
    c = make_constants(sigma_min=0.5)
    with pytest.raises(StepsizeOutOfRangeError):
        theorem2_envelope(1, c, StepsizePlan.constant(2.5), which="raw_iterate")
    with pytest.raises(StepsizeOutOfRangeError):
        theorem2_envelope(1, c, StepsizePlan.harmonic(1.5), which="averaged")
    # Matching plans inside the admissible ranges work.
    theorem2_envelope(1, c, StepsizePlan.constant(1.0), which="raw_iterate")
    theorem2_envelope(1, c, StepsizePlan.harmonic(3.0), which="averaged")


def test_theorem2_plan_target_mismatch():
    c = make_constants(sigma_min=0.5)
    with pytest.raises(UnsupportedPlanError):
        theorem2_envelope(1, c, StepsizePlan.constant(1.0), which="averaged")
    with pytest.raises(UnsupportedPlanError):
        theorem2_envelope(1, c, StepsizePlan.harmonic(3.0), which="raw_iterate")
    with pytest.raises(UnsupportedPlanError):
        theorem2_envelope(1, c, StepsizePlan.inv_sqrt(), which="raw_iterate")


# ---------------------------------------------------------------------------
# constants plumbing


def test_beta3_is_four_beta1(desk_constants):
    _, _, _, constants = desk_constants
    assert constants.beta3 == 4.0 * constants.beta1
    assert constants.beta1 > 0 and constants.beta2 > 0


def test_init_moments_hand():
    theta_star = np.zeros(2)
    a = np.array([[1.0, 0.0], [0.0, 1.0]])  # mean row (0.5, 0.5), norm sqrt(2)
    b = np.array([[2.0, 0.0], [2.0, 0.0]])  # mean row (2, 0), norm sqrt(8)
    m = init_moments([a, b], theta_star)
    assert m.E_theta0_dist_sq == pytest.approx((0.5 + 4.0) / 2.0)
    assert m.E_Theta0_norm == pytest.approx((math.sqrt(2) + math.sqrt(8)) / 2.0)
    assert m.E_Theta0_norm_sq == pytest.approx((2.0 + 8.0) / 2.0)


def test_compute_constants_rejects_degenerate(desk_constants):
    from consensus_td import SpectralInfo

    mrp, oracles, proj, _ = desk_constants
    degenerate = SpectralInfo(
        sigma2_sup=0.0, eta=0.0, delta=0.0, B=1, degenerate=True
    )
    moments = InitMoments(0.0, 0.0, 0.0)
    with pytest.raises(DegenerateEtaError):
        compute_constants(mrp, oracles, proj, degenerate, moments)


def test_compute_constants_rejects_non_pd(desk_constants):
    from consensus_td import SpectralInfo

    mrp, oracles, proj, _ = desk_constants
    bad = InstanceOracles(
        pi=oracles.pi,
        A=oracles.A,
        b=oracles.b,
        b_bar=oracles.b_bar,
        theta_star=oracles.theta_star,
        J_star=oracles.J_star,
        sigma_min=oracles.sigma_min,
        sigma_max=oracles.sigma_max,
        lambda_min_sym=-1e-3,
    )
    spectral = SpectralInfo(sigma2_sup=0.6, eta=0.6, delta=0.6, B=1, degenerate=False)
    with pytest.raises(NotPositiveDefiniteError):
        compute_constants(mrp, bad, proj, spectral, InitMoments(0.0, 0.0, 0.0))


def test_sigma_discrepancy_flag():
    c = make_constants(sigma_min=0.5, lambda_min_sym=0.4)
    assert c.sigma_discrepancy()
    c2 = make_constants(sigma_min=0.5, lambda_min_sym=0.5)
    assert not c2.sigma_discrepancy()
