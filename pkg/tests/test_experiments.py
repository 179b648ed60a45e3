import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mconf import geometry as geo
from mconf import experiments as ex
from mconf.conformal import fit, predict_set
from mconf.density import BandwidthRule


# sphere model


def test_sphere_mean_direction_examples():
    m = ex.SphereRegressionModel()
    np.testing.assert_allclose(m.mean_direction(0.0), [1, 0, 0])
    np.testing.assert_allclose(m.mean_direction(1.0), np.array([1, 0, 1]) / math.sqrt(2))


@given(st.floats(-1, 1))
def test_sphere_mean_direction_is_unit(x):
    assert np.linalg.norm(ex.SphereRegressionModel().mean_direction(x)) == pytest.approx(1)


def test_sphere_resultant_length_at_x0(rng):
    m = ex.SphereRegressionModel()
    y = geo.vmf_sample(m.mean_direction(0.0), m.kappa, 10_000, rng)
    assert np.linalg.norm(y.mean(axis=0)) == pytest.approx(0.995, abs=1e-3)


def test_gen_sphere_shapes_and_support(rng):
    x, y = ex.gen_sphere(ex.SphereRegressionModel(), 300, rng)
    assert x.shape == (300,) and y.shape == (300, 3)
    assert np.all((x >= -1) & (x <= 1))
    assert geo.sphere().contains(y).all()


def test_cap_cosine_examples():
    assert ex.vmf_cap_cosine(200, 0.1) == pytest.approx(0.988487, abs=1e-6)
    assert ex.vmf_cap_cosine(200, 0.5) == pytest.approx(1 + math.log(0.5) / 200)


def test_oracle_cap_has_nominal_mass(rng):
    m = ex.SphereRegressionModel()
    y = geo.vmf_sample(m.mean_direction(0.3), m.kappa, 20_000, rng)
    assert m.oracle_cap(0.3, 0.1)(y).mean() == pytest.approx(0.9, abs=0.01)


# Stiefel model


def test_stiefel_eigenbasis_orthonormal_and_ordered():
    m = ex.StiefelRegressionModel()
    for x in (0.0, 0.1, 0.5, 1.0):
        q = m.eigenbasis(x)
        np.testing.assert_allclose(q.T @ q, np.eye(3), atol=1e-12)
        first = np.array([2 + x, 2 + 2 * x, 2 - x])
        np.testing.assert_allclose(q[:, 0], first / np.linalg.norm(first))
        w = np.linalg.eigvalsh(m.covariance(x))
        np.testing.assert_allclose(np.sort(w)[::-1], [2, 1, 0.5])


def test_gen_stiefel_frames_orthonormal(rng):
    x, y = ex.gen_stiefel(ex.StiefelRegressionModel(), 50, rng)
    assert y.shape == (50, 6)
    assert geo.stiefel32().contains(y).all()
    assert np.all((x >= 0) & (x <= 1))


def test_stiefel_first_column_near_population_axis(rng):
    m = ex.StiefelRegressionModel()
    target = np.array([2.1, 2.2, 1.9]) / np.linalg.norm([2.1, 2.2, 1.9])
    angles = [
        math.acos(min(1.0, abs(m.frame(0.1, rng)[:, 0] @ target))) for _ in range(101)
    ]
    assert np.median(angles) < 0.15


def test_first_entry_positive():
    f = np.array([[[-1.0, 0.0], [0.0, 0.0], [0.0, -1.0]]])
    out = ex.first_entry_positive(f)
    np.testing.assert_array_equal(out, [[[1, 0], [0, 0], [0, 1]]])


def test_generators_deterministic():
    sm, tm = ex.SphereRegressionModel(), ex.StiefelRegressionModel()
    for gen, model in ((ex.gen_sphere, sm), (ex.gen_stiefel, tm)):
        a = gen(model, 20, ex.substream(7, "train"))
        b = gen(model, 20, ex.substream(7, "train"))
        for u, v in zip(a, b):
            assert np.array_equal(u, v)


def test_substreams_differ():
    a = ex.substream(1, "train").random(5)
    b = ex.substream(1, "test").random(5)
    assert not np.array_equal(a, b)


# coverage


def _sphere_model(seed, n=400):
    sm = ex.SphereRegressionModel()
    x, y = ex.gen_sphere(sm, n, ex.substream(seed, "train"))
    return fit(x, y, sm.partition(), BandwidthRule.fixed(sm.h), geo.sphere())


def test_coverage_report_consistency():
    cm = _sphere_model(0)
    tx, ty = ex.gen_sphere(ex.SphereRegressionModel(), 500, ex.substream(0, "test"))
    rep = ex.empirical_coverage(cm, tx, ty, 0.1)
    assert rep.n_test == 500 == rep.counts.sum()
    assert 0 <= rep.overall <= 1
    assert np.all((rep.per_cell >= 0) & (rep.per_cell <= 1))
    d = rep.to_dict()
    assert d["defined"] and sum(d["per_cell_counts"]) == 500


def test_coverage_alpha_zero_is_one():
    cm = _sphere_model(1)
    tx, ty = ex.gen_sphere(ex.SphereRegressionModel(), 200, ex.substream(1, "test"))
    assert ex.empirical_coverage(cm, tx, ty, 0.0).overall == 1.0


def test_coverage_empty_test_set():
    rep = ex.empirical_coverage(_sphere_model(2), np.empty(0), np.empty((0, 3)), 0.1)
    assert rep.n_test == 0 and not rep.defined
    assert math.isnan(rep.overall)
    d = rep.to_dict()
    assert d["overall"] is None and d["defined"] is False


def test_coverage_set_fraction(rng):
    cm = _sphere_model(3)
    tx, ty = ex.gen_sphere(ex.SphereRegressionModel(), 100, ex.substream(3, "test"))
    cand = geo.sphere().uniform_sample(2000, rng)
    rep = ex.empirical_coverage(cm, tx, ty, 0.1, candidates=cand)
    assert 0 < rep.mean_set_fraction < 0.1


def test_sphere_coverage_study_per_cell():
    rep = ex.sphere_coverage_study(60, 11)
    assert rep.overall >= 0.88
    assert np.all(rep.per_cell >= 0.87)


def test_report_merge_rejects_mixed_alpha():
    a = ex.CoverageReport(0.1, np.zeros(2, int), np.zeros(2, int))
    b = ex.CoverageReport(0.2, np.zeros(2, int), np.zeros(2, int))
    with pytest.raises(ValueError):
        a.merge(b)


# set measures


def test_sym_diff_examples(rng):
    s = geo.sphere()
    hemi = lambda y: np.atleast_2d(y)[:, 2] >= 0
    every = lambda y: np.ones(len(np.atleast_2d(y)), bool)
    none = lambda y: np.zeros(len(np.atleast_2d(y)), bool)
    assert ex.sym_diff_measure(hemi, hemi, s, 1000, rng) == 0.0
    assert ex.sym_diff_measure(every, none, s, 1000, rng) == pytest.approx(4 * math.pi)
    assert ex.sym_diff_measure(hemi, every, s, 100_000, rng) == pytest.approx(
        2 * math.pi, abs=0.06
    )


def test_set_comparison_jaccard(rng):
    s = geo.sphere()
    hemi = lambda y: np.atleast_2d(y)[:, 2] >= 0
    quarter = lambda y: (np.atleast_2d(y)[:, 2] >= 0) & (np.atleast_2d(y)[:, 0] >= 0)
    c = ex.set_comparison(hemi, quarter, s, 100_000, rng)
    assert c["jaccard"] == pytest.approx(0.5, abs=0.01)
    assert c["volume_a"] == pytest.approx(2 * math.pi, abs=0.06)


# correlations


def test_xi_monotone_exact():
    x = np.arange(10.0)
    assert ex.xi_correlation(x, x) == 8 / 11
    for n in (2, 7, 100):
        assert ex.xi_correlation(np.arange(n), np.arange(n) ** 3) == 1 - 3 / (n + 1)


def test_xi_independent_near_zero(rng):
    assert abs(ex.xi_correlation(rng.random(10_000), rng.random(10_000))) < 0.03


def test_xi_uses_y_ranks_only():
    x = np.array([0.3, 0.1, 0.9, 0.5, 0.7])
    y = np.array([2.0, -1.0, 5.0, 3.0, 4.0])
    assert ex.xi_correlation(x, y) == ex.xi_correlation(x, np.exp(y))


def test_xi_brute_force(rng):
    # direct formula with ranks r_i = #{j: y_j <= y_(i)}, l_i = #{j: y_j >= y_(i)}
    x = rng.random(40)
    y = rng.integers(0, 6, 40).astype(float)
    ys = y[np.argsort(x, kind="stable")]
    n = len(ys)
    r = [sum(v <= u for v in ys) for u in ys]
    l = [sum(v >= u for v in ys) for u in ys]
    num = n * sum(abs(r[i + 1] - r[i]) for i in range(n - 1))
    den = 2 * sum(li * (n - li) for li in l)
    assert ex.xi_correlation(x, y) == pytest.approx(1 - num / den, abs=1e-15)


def test_xi_errors():
    with pytest.raises(ValueError):
        ex.xi_correlation([1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        ex.xi_correlation([1.0], [1.0])


def test_angular_correlation_examples(rng):
    t = rng.uniform(0, 2 * math.pi, 500)
    assert ex.angular_correlation(t, t) == 1.0
    assert ex.angular_correlation(t, -t) == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(ValueError):
        ex.angular_correlation(np.zeros(5), t[:5])


# simplex classes


def test_class_band_single_point():
    band = ex.simplex_class_band(np.array([[0.845, 0.01, 0.145]]))
    np.testing.assert_array_equal(band.fractions, [1, 0, 0])
    assert band.class_set == [0]


def test_class_band_uniform(rng):
    band = ex.simplex_class_band(geo.simplex().uniform_sample(60_000, rng))
    np.testing.assert_allclose(band.fractions, 1 / 3, atol=0.01)
    assert band.class_set == [0, 1, 2]


def test_class_band_tie_and_sum():
    band = ex.simplex_class_band(np.array([[0.4, 0.4, 0.2], [0.1, 0.2, 0.7]]))
    np.testing.assert_array_equal(band.fractions, [0.5, 0, 0.5])
    assert band.fractions.sum() == 1.0


def test_class_band_empty_raises():
    with pytest.raises(ValueError):
        ex.simplex_class_band(np.empty((0, 3)))


# pipelines


def _synthetic_vehicle(n, rng):
    x = rng.uniform(0, 200, (n, 5))
    logits = np.column_stack([x[:, 0] / 40, x[:, 1] / 40, x[:, 2] / 60]) + rng.normal(
        0, 0.5, (n, 3)
    )
    p = np.exp(logits - logits.max(axis=1, keepdims=True))
    return p / p.sum(axis=1, keepdims=True), x


def test_simplex_pipeline_nesting_and_bands(rng):
    probs, x = _synthetic_vehicle(400, rng)
    out = ex.simplex_run(probs, x, seed=3, n_grid=3000, n_mc=4000)
    s10, s05 = out["sets"][0.1], out["sets"][0.05]
    assert np.array_equal(s10.candidates, s05.candidates)
    assert not np.any(s10.in_set & ~s05.in_set)
    for a in (0.1, 0.05):
        band = out["bands"][a]
        if band is not None:
            assert band.fractions.sum() == pytest.approx(1.0)
    assert out["partition"].n_cells >= 1


def test_simplex_pipeline_single_class(rng):
    x = rng.uniform(0, 200, (200, 5))
    probs = np.tile([0.9, 0.05, 0.05], (200, 1)) + rng.normal(0, 0.01, (200, 1)) * [
        1, -0.5, -0.5
    ]
    out = ex.simplex_run(probs, x, seed=1, alphas=(0.05,), n_grid=5000, n_mc=4000)
    assert out["bands"][0.05].class_set == [0]


def test_sphere_run_outputs():
    run = ex.sphere_run(5, n_grid=2000, n_mc=20_000)
    assert 0 < run["set"].fraction < 0.2
    assert run["coverage"].overall >= 0.85
    assert run["comparison"]["sym_diff"] >= 0
    assert geo.sphere().contains(run["oracle_points"]).all()


def test_stiefel_run_outputs():
    run = ex.stiefel_run(2, n_grid=5000)
    assert 0 < run["set"].fraction < 1
    assert geo.stiefel32().contains(run["query_response"])


def test_wind_pipeline_synthetic_coverage():
    m = ex.CylinderRegressionModel()
    cols = m.generate(4000, ex.substream(9, "cyl"))
    run = ex.wind_run(*cols, seed=9, n_grid=2000)
    assert run["coverage"].overall >= 1 - 0.2 - 0.05
    assert run["n_rows"] == 4000 and run["n_dropped"] == 0
    assert 0 < run["xi_intensity"] < 1


def test_wind_drops_fast_rows(rng):
    m = ex.CylinderRegressionModel()
    t1, r1, t2, r2 = m.generate(400, rng)
    r1 = r1.copy()
    r1[:10] = 25.0
    run = ex.wind_run(t1, r1, t2, r2, seed=0, n_grid=500, truth=None)
    assert run["n_dropped"] == 10 and run["n_rows"] == 390
    assert "truth_in_set" not in run


def test_cylinder_generator_support(rng):
    t1, r1, t2, r2 = ex.CylinderRegressionModel().generate(5000, rng)
    for t in (t1, t2):
        assert np.all((t >= 0) & (t < 2 * math.pi))
    for r in (r1, r2):
        assert np.all((r >= 0) & (r <= 20))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_class_band_fractions_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    pts = geo.simplex().uniform_sample(int(rng.integers(1, 50)), rng)
    band = ex.simplex_class_band(pts)
    assert band.fractions.sum() == pytest.approx(1.0, abs=1e-15)
    assert all(band.fractions[k] > 0 for k in band.class_set)


def test_xi_agrees_with_scipy_without_ties(rng):
    stats = pytest.importorskip("scipy.stats")
    if not hasattr(stats, "chatterjeexi"):
        pytest.skip("scipy too old")
    x = rng.random(500)
    y = rng.integers(0, 5, 500).astype(float)
    assert ex.xi_correlation(x, y) == pytest.approx(stats.chatterjeexi(x, y).statistic, abs=1e-12)
    y = np.sin(8 * x) + rng.normal(0, 0.1, 500)
    assert ex.xi_correlation(x, y) == pytest.approx(stats.chatterjeexi(x, y).statistic, abs=1e-12)
