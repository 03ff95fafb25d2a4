import itertools
from math import e, log, sqrt

import numpy as np
import pytest
from scipy import integrate

from lpdecon.errors import (
    AssumptionViolationError,
    ConfigurationError,
    InvalidArgumentError,
    InvalidDataError,
)
from lpdecon.noise import laplace, no_noise, symmetric_gamma
from lpdecon.selector import (
    Candidate,
    EstimateCache,
    b_p,
    block_constants,
    build_candidates,
    c_of_p,
    c_p,
    comparison_norm,
    delta_tilde,
    estimate,
    g_bar,
    gamma_constant,
    gamma_p,
    penalty_U,
    prepare,
    rate_exponent_lp,
    rate_exponent_sup,
    select,
)
from lpdecon.spectral import EvaluationGrid, build_kernel
from lpdecon.structure import Partition, default_family

from oracles import laplace_decon_kernel


def test_b_p_examples():
    assert b_p(2) == 0.5
    assert b_p(1.5) == pytest.approx(1 / 3)
    assert b_p(np.inf) == 0.5
    with pytest.raises(InvalidArgumentError):
        b_p(1.0)


def test_c_p_formula():
    assert c_p(2, 2) == pytest.approx(((2 / e) * 5) ** (-5))
    assert c_p(1.5, 0) == 1.0  # the base is below one, so the clamp binds


def test_candidates_brute_force():
    n, lam = 1024, 2.0
    cp = ((2 / e) * (1 + lam * 2)) ** (-2 * (0.5 + lam))
    expected = [2.0 ** -k for k in range(1, 40)
                if 2.0 ** -k >= n ** -2.0 and sqrt(n * 2.0 ** -k) * (2.0 ** -k) ** 2 >= cp]
    cs = build_candidates(2, n, 1, [lam], default_family(1))
    assert sorted(c.h[0] for c in cs) == sorted(expected)
    assert len(expected) > 0


def test_candidates_multiblock_brute_force():
    n, lam = 2048, (2.0, 4.0)
    fam = default_family(2)
    cs = build_candidates(2, n, 2, lam, fam)
    cp = c_p(2, 4.0)
    ok = lambda hs, ls: (n * np.prod(hs)) ** 0.5 * np.prod(np.power(hs, ls)) >= cp
    dy = [2.0 ** -k for k in range(1, 25)]
    want = set()
    for h1, h2 in itertools.product(dy, dy):
        if h1 >= n ** -1.0 and h2 >= n ** -1.0 and ok([h1, h2], lam):
            want.add(((h1, h2), "[[1,2]]"))
        if h1 >= n ** -2.0 and h2 >= n ** -2.0 and ok([h1], lam[:1]) and ok([h2], lam[1:]):
            want.add(((h1, h2), "[[1],[2]]"))
    assert {(c.h, str(c.partition)) for c in cs} == want


def test_candidates_empty_names_constraint():
    with pytest.raises(ConfigurationError, match=r"feasibility.*block \[1\]|block \[1\].*feasibility"):
        build_candidates(np.inf, 10, 1, [2.0], default_family(1))
    with pytest.raises(ConfigurationError, match="h_min, h_max"):
        build_candidates(2, 100, 1, [2.0], default_family(1), k_max=0)


def test_log_h_max_policy_is_stricter():
    a = build_candidates(1.5, 4096, 1, [0.5], default_family(1), policy="unit")
    b = build_candidates(1.5, 4096, 1, [0.5], default_family(1), policy="log")
    assert {c.h for c in b} < {c.h for c in a}
    assert max(c.h[0] for c in b) <= log(4096) ** -1.5


def test_log_h_max_policy_empty_for_laplace():
    # with h_max = (ln n)^(-p) the feasibility constraint leaves nothing at n = 4096
    with pytest.raises(ConfigurationError):
        build_candidates(2, 4096, 1, [2.0], default_family(1), policy="log")


def test_penalty_examples():
    assert penalty_U(2, 100, [0.25], [2]) == pytest.approx(3.2)
    assert penalty_U(np.inf, e ** 9, [0.25], [2]) == pytest.approx(3 * e ** -4.5 * 4 ** 2.5)
    assert penalty_U(1.5, 64, [0.5], [2], L_norm=2.0) == pytest.approx(64 ** (-1 / 3) * 2.0)
    with pytest.raises(InvalidArgumentError):
        penalty_U(1.0, 100, [0.25], [2])


def test_gamma_examples():
    K = build_kernel(order=2)
    assert gamma_constant(1.5, (0,), 1, K, laplace()) == pytest.approx(4 + sqrt(111 / e))
    assert c_of_p(e) == pytest.approx(15 * e)


def test_block_constants_quadrature_oracle():
    K = build_kernel(order=1)
    c = block_constants(K, laplace(1.0), (0,), 1.0)
    f = lambda t: abs(K.ft(t) * (1 + t ** 2))
    l1 = 2 * integrate.quad(f, 0, np.inf)[0]
    l2 = sqrt(2 * integrate.quad(lambda t: f(t) ** 2, 0, np.inf)[0])
    assert c.Kg_l1 == pytest.approx(l1, rel=1e-7)
    assert c.Kg_l2 == pytest.approx(l2, rel=1e-7)
    assert c.C_I == pytest.approx(max(l1, l2) / sqrt(2 * np.pi), rel=1e-7)
    # regression baseline for the p=2 constant (Gaussian u_1, Laplace(1))
    g = gamma_constant(2, (0,), 2, K, laplace(1.0), consts=c)
    assert np.isfinite(g) and g == pytest.approx(2 * (7 * c.C_I + 3 / sqrt(2 * np.pi) * 2 * e ** -0.5 * sqrt(np.pi)), rel=1e-7)


def test_block_constants_phi_norm_2d():
    K = build_kernel(order=1)
    q = laplace(1.0, 2)
    c = block_constants(K, q, (0, 1), 1.0)
    t = np.linspace(-12, 12, 1601)
    w = np.abs(K.ft(t) * (1 + t ** 2))
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    integrand = np.maximum(np.abs(T1), np.abs(T2)) * np.outer(w, w)
    ref = np.trapezoid(np.trapezoid(integrand, t, axis=1), t)
    assert c.Kphi_l1 == pytest.approx(ref, rel=1e-5)


def test_gamma_requires_integrable_cf():
    with pytest.raises(AssumptionViolationError, match="N1"):
        gamma_constant(2, (0,), 2, build_kernel(), no_noise())


def test_gamma_p_full_only_uses_r1():
    K = build_kernel(order=2)
    g, table, _ = gamma_p(2, default_family(2, "full"), K, laplace(1.0, 2))
    assert g == table[(0, 1)][1]
    g, table, _ = gamma_p(2, default_family(2), K, laplace(1.0, 2))
    assert g == max(t[4] for t in table.values())


def test_g_bar_clamp():
    K = build_kernel(order=2)
    assert g_bar([0.0, 0.0], K, 2) == 1.0
    assert g_bar([2.0], K, 1) == pytest.approx(max(1.0, 2 * K.l1_norm))


def test_rate_examples():
    tau, ex = rate_exponent_lp([2.0], [1.0], 2)
    assert ex == pytest.approx(2 / 7)
    full = rate_exponent_lp([2, 2], [2, 2], 2, Partition.full(2))[1]
    ind = rate_exponent_lp([2, 2], [2, 2], 2, Partition.singletons(2))[1]
    assert (full, ind) == (pytest.approx(1 / 7), pytest.approx(2 / 9))


def test_sup_rate_examples():
    assert rate_exponent_sup([1, 1], [1, 1], [2, 2])[2] is False
    # d=1, r=inf: Upsilon = beta / (2 lambda + 1)
    ups, ex, ok = rate_exponent_sup([2.0], [np.inf], [1.0])
    assert ok and ups == pytest.approx(2 / 3) and ex == pytest.approx(2 / 7)
    # d=2, beta=(2,2), r=(4,4), lambda=(2,2): 1/tau = 5, 1/omega = 5/4, kappa = 3/4
    ups, ex, ok = rate_exponent_sup([2, 2], [4, 4], [2, 2])
    assert ok and ups == pytest.approx(1 / (5 + (5 / 4) / (3 / 4)))


def test_select_single_and_ties():
    a = Candidate((0.5, 0.5), Partition.full(2))
    b = Candidate((0.25, 0.5), Partition.singletons(2))
    c = Candidate((0.5, 0.5), Partition.singletons(2))
    assert select([b], [1.0], [2.0])[0] == 0
    assert select([b, a], [1.0, 0.5], [1.0, 1.5])[0] == 1  # larger volume wins the tie
    i, note = select([a, c], [1.0, 1.0], [1.0, 1.0])
    assert i == 1 and "tied" in note  # equal volume: earlier partition ([[1],[2]] < [[1,2]])
    assert select([a, c], [1.0, 0.9], [1.0, 1.0])[0] == 1
    with pytest.raises(ConfigurationError):
        select([], [], [])


@pytest.fixture(scope="module")
def small_2d():
    rng = np.random.default_rng(11)
    q = laplace(0.5, 2)
    Y = rng.normal(size=(40, 2)) + q.sample(40, seed=12)
    K = build_kernel(order=1)
    grid = EvaluationGrid.from_ranges([-16, -16], [16 - 32 / 256, 16 - 32 / 256], [256, 256])
    return Y, K, q, grid


def test_comparison_norm_pointwise_oracle(small_2d):
    Y, K, q, grid = small_2d
    cache = EstimateCache(Y, K, q, grid, 2.0)
    cand = Candidate((0.5, 1.0), Partition.singletons(2))
    other = Candidate((1.0, 0.5), Partition.full(2))
    x1, x2 = grid.points()
    # with a Gaussian u_1, K_eta * K_h = K_sqrt(h^2 + eta^2)
    s = np.hypot(cand.h, other.h)
    m1 = laplace_decon_kernel(x1[:, None] - Y[None, :, 0], s[0], 0.5, order=1).mean(axis=1)
    m2 = laplace_decon_kernel(x2[:, None] - Y[None, :, 1], s[1], 0.5, order=1).mean(axis=1)
    L1 = laplace_decon_kernel(x1[:, None] - Y[None, :, 0], 1.0, 0.5, order=1)
    L2 = laplace_decon_kernel(x2[:, None] - Y[None, :, 1], 0.5, 0.5, order=1)
    joint = L1 @ L2.T / Y.shape[0]
    ref = np.sqrt(np.sum((np.outer(m1, m2) - joint) ** 2) * grid.cell_volume)
    assert comparison_norm(cache, cand, other) == pytest.approx(ref, rel=1e-8)
    pens = [0.0, ref / 2, 2 * ref]
    assert delta_tilde(cache, cand, [other] * 3, pens) == pytest.approx(ref, rel=1e-8)
    assert delta_tilde(cache, cand, [other], [2 * ref]) == 0.0


def test_delta_nonincreasing_in_penalty(small_2d):
    Y, K, q, grid = small_2d
    cache = EstimateCache(Y, K, q, grid, 2.0)
    cands = [Candidate(h, P) for h in [(0.5, 0.5), (1.0, 0.5), (1.0, 1.0)]
             for P in (Partition.full(2), Partition.singletons(2))]
    pens = np.array([0.01, 0.02, 0.03, 0.01, 0.02, 0.03])
    prev = np.inf
    for kappa in (0.1, 1.0, 10.0):
        val = delta_tilde(cache, cands[0], cands, kappa * pens)
        assert val <= prev
        prev = val


def test_estimate_end_to_end_d1():
    rng = np.random.default_rng(3)
    q = laplace(1.0)
    Y = rng.normal(size=(100, 1)) + q.sample(100, seed=4)
    res = estimate(Y, q, 2, kappa_cal=0.02)
    feasible = {c.h for c in build_candidates(2, 100, 1, [2.0], default_family(1))}
    assert res.h in feasible
    assert res.estimate.values.sum() * res.grid.cell_volume == pytest.approx(1.0, abs=1e-3)
    assert res.diagnostics["imag_residual_ok"]
    d = res.to_dict()
    assert d["selected"]["partition"] == "[[1]]" and "timestamp" in d


def test_g_bar_stable_under_fixed_seed():
    rng = np.random.default_rng(5)
    q = laplace(0.5, 2)
    Y = rng.normal(size=(512, 2)) + q.sample(512, seed=6)
    a = prepare(Y, q, 2, default_family(2), kappa_cal=1e-3)
    b = prepare(Y.copy(), q, 2, default_family(2), kappa_cal=1e-3)
    assert a.G_bar == b.G_bar and a.G_bar > 1
    assert a.Lambda == pytest.approx(2 * a.gamma * a.G_bar ** 2)


def test_threads_match_serial():
    rng = np.random.default_rng(7)
    q = laplace(0.5, 2)
    Y = rng.normal(size=(256, 2)) + q.sample(256, seed=8)
    a = estimate(Y, q, 2, kappa_cal=1e-3, threads=1)
    b = estimate(Y, q, 2, kappa_cal=1e-3, threads=3)
    assert a.to_json(timestamp=False) == b.to_json(timestamp=False)


def test_input_errors():
    q = laplace()
    with pytest.raises(InvalidArgumentError):
        estimate(np.zeros((2, 1)), q)
    with pytest.raises(InvalidDataError):
        estimate(np.array([[0.0], [np.nan], [1.0]]), q)
    with pytest.raises(AssumptionViolationError):
        estimate(np.random.default_rng(0).normal(size=(50, 1)), no_noise(), 2)


def test_gamma_noise_selection_runs():
    q = symmetric_gamma(1.0, 0.5)
    Y = np.random.default_rng(9).normal(size=(200, 1)) + q.sample(200, seed=10)
    res = estimate(Y, q, np.inf, kappa_cal=0.01)
    assert res.constants["p"] == "inf" and res.h[0] > 0
