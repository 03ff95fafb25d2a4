import numpy as np
import pytest
from scipy import integrate

from lpdecon.errors import InvalidArgumentError, InvalidDataError
from lpdecon.harness import (
    Scenario,
    bias_decomposition,
    calibrate_kappa,
    gaussian_mixture,
    gaussian_product,
    gaussian_target,
    mc_risk,
    nikolskii_probe,
    rate_fit,
    replication_data,
    sample_target,
    smoothed_target,
    spline_compact,
    stochastic_norm,
    theoretical_exponent,
    write_reports_csv,
)
from lpdecon.noise import laplace, no_noise
from lpdecon.selector import EstimateCache
from lpdecon.spectral import EvaluationGrid, build_kernel, lp_norm


def line(lo, hi, m):
    return EvaluationGrid.from_ranges([lo], [hi], [m])


def test_gaussian_product_independent_coordinates():
    X = sample_target(gaussian_product(2), 10 ** 5, seed=1)
    r = np.corrcoef(X.T)[0, 1]
    assert abs(r) < 3 / np.sqrt(X.shape[0])


def test_single_component_mixture_moments():
    mix = gaussian_mixture([1.0], [[1.0, -2.0]], [[[2.0, 0.5], [0.5, 1.0]]])
    X = sample_target(mix, 10 ** 5, seed=2)
    se = np.sqrt(np.array([2.0, 1.0]) / X.shape[0])
    assert np.all(np.abs(X.mean(axis=0) - [1.0, -2.0]) < 4 * se)
    np.testing.assert_allclose(np.cov(X.T), [[2.0, 0.5], [0.5, 1.0]], atol=0.05)


def test_sampling_is_byte_identical():
    t = spline_compact(2, [1.0, 0.5])
    assert sample_target(t, 100, seed=9).tobytes() == sample_target(t, 100, seed=9).tobytes()


def test_mixture_weights_checked():
    with pytest.raises(InvalidArgumentError):
        gaussian_mixture([0.5, 0.6], [[0.0], [1.0]], [[[1.0]], [[1.0]]])


@pytest.mark.parametrize("target", [spline_compact(1, 0.7),
                                    gaussian_mixture([0.3, 0.7], [[-1.0], [1.5]], [[[0.5]], [[1.0]]])])
def test_cf_matches_pdf(target):
    for t in (0.3, 1.1, 2.7):
        kw = dict(limit=200, points=[-2, -1, 0, 1, 2])
        re = integrate.quad(lambda x: np.cos(t * x) * target.pdf([[x]])[0], -12, 12, **kw)[0]
        im = integrate.quad(lambda x: np.sin(t * x) * target.pdf([[x]])[0], -12, 12, **kw)[0]
        assert target.cf(np.array([[t]]))[0] == pytest.approx(re + 1j * im, abs=1e-9)


def test_spline_sampler_matches_pdf():
    t = spline_compact(1, 1.0)
    n = 20000
    X = sample_target(t, n, seed=3)[:, 0]
    counts, edges = np.histogram(X, bins=16, range=(-2, 2))
    probs = np.array([integrate.quad(lambda x: t.pdf([[x]])[0], a, b)[0]
                      for a, b in zip(edges[:-1], edges[1:])])
    se = np.sqrt(probs * (1 - probs) / n)
    assert np.all(np.abs(counts / n - probs) < 4 * se + 1e-12)


def test_block_target_marginals():
    t = gaussian_target([[0, 2], [1]], [[0.0, 1.0], [2.0]],
                        [[[1.0, 0.6], [0.6, 2.0]], [[0.5]]])
    assert str(t.partition) == "[[1,3],[2]]"
    x = np.array([[0.2, 1.5]])
    ref = integrate.quad(lambda y: t.pdf([[0.2, y, 1.5]])[0], -15, 15)[0]
    assert t.pdf(x, [0, 2])[0] == pytest.approx(ref, rel=1e-8)


def test_bias_closed_form_and_small_h():
    t = gaussian_product(1)
    K1 = build_kernel(order=1)
    g = line(-16, 16, 1024)
    x = g.points()[0]
    bias, expected = bias_decomposition(t, K1, [0.5], (0,), g)
    s = np.sqrt(1.25)
    np.testing.assert_allclose(expected.values, np.exp(-x ** 2 / (2 * s * s)) / (s * np.sqrt(2 * np.pi)),
                               atol=1e-13)
    tiny, _ = bias_decomposition(t, build_kernel(order=2), [g.axes[0].step], (0,), g)
    assert np.abs(tiny.values).max() < 1e-3


def test_stochastic_norm_zero_for_expectation():
    t = gaussian_product(1)
    K = build_kernel(order=2)
    g = line(-16, 16, 512)
    expected = smoothed_target(t, K, [0.4], (0,), g)
    assert stochastic_norm(expected, t, K, 2) < 1e-14


def test_nikolskii_probe():
    t = gaussian_product(1, 1.0, beta=2.0, L=10.0)
    g = line(-10, 10, 1024)
    ok = nikolskii_probe(t, 0, 2.0, 2.0, g, z=np.r_[0.0, 2.0 ** np.linspace(-6, 0, 13)])
    assert ok.ratios[0] == 0 and ok.passed
    bad = nikolskii_probe(t, 0, 2.0, 2.0, g, L=0.1)
    assert not bad.passed
    sp = spline_compact(1, 1.0)
    assert nikolskii_probe(sp, 0, 3.0, np.inf, line(-3, 3, 2048)).passed
    assert not nikolskii_probe(sp, 0, 3.0, np.inf, line(-3, 3, 2048), L=sp.L[0] / 10).passed


def test_rate_fit_examples():
    ns = 2.0 ** np.arange(9, 15)
    fit = rate_fit(ns, 3.0 * ns ** (-2 / 7))
    assert fit.slope == pytest.approx(-2 / 7, abs=1e-12)
    assert rate_fit(ns, np.full(ns.size, 0.4)).slope == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(InvalidDataError):
        rate_fit(ns, np.r_[1.0, 0.0, 1, 1, 1, 1])
    with pytest.raises(InvalidArgumentError):
        rate_fit(ns[:3], ns[:3])


def test_theoretical_exponent():
    sc = Scenario(gaussian_product(1), laplace(1.0))
    assert theoretical_exponent(sc) == pytest.approx(-2 / 9)
    sc2 = Scenario(gaussian_product(2), laplace(0.5, 2))
    assert theoretical_exponent(sc2) == pytest.approx(-2 / 9)


def fixed_scenario(**kw):
    base = Scenario(gaussian_product(1), laplace(0.5), p=2, n=256, replications=6, seed=4,
                    bandwidth=((0.5,), "[[1]]"))
    return base.with_(**kw)


def test_replication_streams_are_independent_of_count():
    a = replication_data(fixed_scenario(), 3)
    b = replication_data(fixed_scenario(replications=50), 3)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, replication_data(fixed_scenario(), 2))


def test_mc_risk_deterministic_and_parallel_equal():
    one = fixed_scenario(replications=1)
    assert mc_risk(one).risk == mc_risk(one).risk
    sc = fixed_scenario()
    serial = mc_risk(sc, workers=1)
    par = mc_risk(sc, workers=2)
    assert serial.to_json() == par.to_json()
    assert serial.partitions == {"[[1]]": 6}


def test_standard_error_shrinks_with_replications():
    a = mc_risk(fixed_scenario(replications=40))
    b = mc_risk(fixed_scenario(replications=160))
    assert 1.3 < a.std_error / b.std_error < 3.0


def test_risk_dominates_bias():
    sc = fixed_scenario(replications=20, bandwidth=((0.8,), "[[1]]"))
    rep = mc_risk(sc)
    g = line(-20, 20, 2048)
    bias, _ = bias_decomposition(sc.target, build_kernel(order=2), [0.8], (0,), g)
    b = lp_norm(bias, 2)
    assert rep.losses.mean() >= b - 3 * rep.losses.std(ddof=1) / np.sqrt(rep.losses.size)


def test_failures_are_recorded():
    # no noise violates the p = 2 integrability condition, so every selection fails
    sc = Scenario(gaussian_product(1), no_noise(), p=2, n=64, replications=2)
    rep = mc_risk(sc)
    assert rep.excluded == 2 and not rep.scenario_ok and len(rep.failures) == 2
    assert "AssumptionViolationError" in rep.failures[0]


def test_unresolved_replications_are_excluded():
    rep = mc_risk(fixed_scenario(replications=2, grid_points=4))
    assert rep.excluded == 2 and not rep.failures and not rep.scenario_ok


def test_selection_scenario_and_csv(tmp_path):
    sc = Scenario(gaussian_product(1), laplace(1.0), p=2, n=256, replications=3, seed=1,
                  kappa_cal=0.02, candidate_risks=True)
    rep = mc_risk(sc)
    assert rep.excluded == 0 and np.isfinite(rep.risk)
    for r in rep.records:
        assert min(r["candidate_losses"]) <= r["loss"] + 1e-12
    write_reports_csv(tmp_path / "r.csv", [rep])
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0].startswith("n,p") and len(rows) == 2


def test_calibrate_kappa_positive():
    sc = Scenario(gaussian_product(1), laplace(1.0), p=2, n=256, seed=2)
    out = calibrate_kappa(sc, pilot=3)
    assert out["kappa_cal"] > 0 and len(out["ratios"]) == 3
    assert out["kappa_cal"] <= max(out["ratios"])
