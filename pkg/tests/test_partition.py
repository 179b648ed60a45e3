import json
import math

import numpy as np
import pytest

from mconf import geometry as geo
from mconf.conformal import fit
from mconf.density import BandwidthRule, CellDensity
from mconf.partition import (
    CDSplitPartition,
    LevelSample,
    Partition,
    cd_split_partition,
    cube_partition,
    cube_side,
    grid_partition,
    h_hat,
    q_alpha_hat,
)
from mconf.experiments import vmf_cap_cosine, wind_partition


def test_cube_side_examples():
    # (log 1000 / 1000)^(1/3) = 0.190449...
    assert cube_side(1000, 1) == pytest.approx(0.19038, abs=1e-3)
    assert cube_side(1000, 1) == pytest.approx(math.log(1000) ** (1 / 3) / 10, rel=1e-14)
    assert cube_side(math.e, 1) == pytest.approx(math.exp(-1 / 3))


def test_cube_partition_unit_interval():
    x = np.linspace(0, 1, 1000)
    p = cube_partition(x)
    assert p.n_cells == 6
    assert p.side == pytest.approx(0.19038, abs=1e-3)
    cells = p.locate(x)
    assert cells.min() == 0 and cells.max() == 5
    assert np.bincount(cells, minlength=6).sum() == 1000


def test_cube_partition_normalized_multidim(rng):
    x = rng.uniform(0, 200, size=(300, 3))
    p = cube_partition(x, normalize=True)
    per_axis = math.ceil(1 / cube_side(300, 3))
    assert p.shape == (per_axis,) * 3


def test_cube_cell_counts_lower_bound(rng):
    n = 100_000
    x = rng.uniform(0, 1, n)
    p = cube_partition(x)
    counts = np.bincount(p.locate(x), minlength=p.n_cells)
    assert counts.min() >= n * p.side / 2 * 0.9


def test_wind_grid():
    p = wind_partition()
    assert p.n_cells == 40
    assert p.shape == (8, 5)


def test_single_axis_single_cell():
    p = grid_partition([[0.0, 1.0]])
    assert p.n_cells == 1
    assert (p.locate(np.array([-3.0, 0.0, 0.4, 1.0, 7.0])) == 0).all()


def test_breakpoint_goes_to_lower_cell():
    p = grid_partition([[0.0, 0.5, 1.0]])
    assert p.locate_one(0.5) == 0
    assert p.locate_one(0.5 + 1e-12) == 1
    assert p.locate_one(0.0) == 0


def test_non_monotone_breaks_rejected():
    with pytest.raises(ValueError):
        grid_partition([[0.0, 1.0, 0.5]])
    with pytest.raises(ValueError):
        grid_partition([[0.0]])


def test_locate_matches_cell_box(rng):
    p = wind_partition()
    x = np.column_stack([rng.uniform(0, 2 * np.pi, 500), rng.uniform(0, 20, 500)])
    cells = p.locate(x)
    for xi, k in zip(x, cells):
        for v, (lo, hi) in zip(xi, p.cell_box(k)):
            assert lo <= v <= hi
    assert np.array_equal(p.locate(x), cells)


def test_partition_json_roundtrip(rng):
    p = cube_partition(rng.uniform(-1, 1, 50))
    q = Partition.from_dict(json.loads(json.dumps(p.to_dict())))
    x = rng.uniform(-2, 2, 100)
    assert np.array_equal(p.locate(x), q.locate(x))
    assert q.to_dict()["w_n"] == p.side


class TestLevelFunctions:
    def test_uniform_density_all_or_nothing(self, rng):
        m = geo.sphere()
        u = 1 / m.total_volume
        dens = lambda y: np.full(len(y), u)
        assert h_hat(dens, 0.5 * u, m, 1000, rng) == 0.0
        assert h_hat(dens, u, m, 1000, rng) == pytest.approx(1.0)
        assert h_hat(dens, 0.0, m, 1000, rng) == 0.0
        for a in (0.05, 0.5, 0.9):
            assert q_alpha_hat(dens, a, m, 1000, rng) == pytest.approx(u)

    def test_total_mass(self, rng):
        mu = np.array([0.0, 0, 1])
        dens = lambda y: geo.vmf_density(mu, 5.0, y)
        assert h_hat(dens, np.inf, geo.sphere(), 100_000, rng) == pytest.approx(1.0, abs=0.02)

    def test_vmf_quantile_matches_cap_level(self, rng):
        mu = np.array([0.0, 0, 1])
        kappa = 200.0
        dens = lambda y: geo.vmf_density(mu, kappa, y)
        c = vmf_cap_cosine(kappa, 0.1)
        t = geo.vmf_density(mu, kappa, np.array([math.sqrt(1 - c * c), 0.0, c]))
        q = q_alpha_hat(dens, 0.1, geo.sphere(), 1_000_000, rng)
        assert q == pytest.approx(t, rel=0.05)

    def test_quantile_monotone_and_upper_limit(self, rng):
        mu = np.array([0.0, 0, 1])
        ls = LevelSample(lambda y: geo.vmf_density(mu, 3.0, y), geo.sphere(), 5000, rng)
        qs = [ls.quantile(a) for a in np.linspace(0.01, 0.99, 60)]
        assert all(a <= b for a, b in zip(qs, qs[1:]))
        # alpha past the last cumulative mass selects the sample maximum
        sub = LevelSample(lambda y: 0.8 * geo.vmf_density(mu, 3.0, y), geo.sphere(), 5000, rng)
        assert sub.total < 0.99
        assert sub.quantile(0.99) == sub.values.max()
        zs = np.linspace(0, ls.values.max(), 50)
        hs = [ls.h(z) for z in zs]
        assert all(a <= b for a, b in zip(hs, hs[1:]))


def _two_cluster_data(rng, n):
    # x < 0.5: concentrated (kappa=200); x >= 0.5: diffuse (kappa=5)
    x = rng.uniform(0, 1, n)
    mu = np.array([0.0, 0.0, 1.0])
    y = np.where(
        (x < 0.5)[:, None],
        geo.vmf_sample(mu, 200.0, n, rng),
        geo.vmf_sample(mu, 5.0, n, rng),
    )
    return x, y


class TestCDSplit:
    def _pilot(self, rng):
        x, y = _two_cluster_data(rng, 400)
        part = grid_partition([np.linspace(0, 1, 5)])
        return fit(x, y, part, BandwidthRule.fixed(0.3), geo.sphere())

    def test_separates_clusters(self, rng):
        pilot = self._pilot(rng)
        x, _ = _two_cluster_data(rng, 400)
        p = cd_split_partition(x, 0.1, 2, pilot, geo.sphere(), 20_000, rng)
        q = p.pilot_q
        assert max(q) > 2 * min(q)
        cells = p.locate(x)
        assert set(cells[x < 0.5]) .isdisjoint(set(cells[x >= 0.5]))

    def test_one_bin(self, rng):
        pilot = self._pilot(rng)
        x, _ = _two_cluster_data(rng, 100)
        p = cd_split_partition(x, 0.1, 1, pilot, geo.sphere(), 5000, rng)
        assert p.n_cells == 1
        assert (p.locate(x) == 0).all()

    def test_degenerate_quantiles_one_bin(self, rng):
        pilot = self._pilot(rng)
        x = np.full(50, 0.1)
        p = cd_split_partition(x, 0.1, 4, pilot, geo.sphere(), 5000, rng)
        assert p.n_cells == 1

    def test_deterministic_and_serializable(self, rng):
        pilot = self._pilot(rng)
        x, _ = _two_cluster_data(rng, 200)
        p = cd_split_partition(x, 0.1, 3, pilot, geo.sphere(), 5000, rng)
        q = Partition.from_dict(json.loads(json.dumps(p.to_dict())))
        assert isinstance(q, CDSplitPartition)
        assert np.array_equal(p.locate(x), p.locate(x))
        assert np.array_equal(p.locate(x), q.locate(x))

    def test_empty_pilot_cell_uses_pooled(self, rng):
        x = rng.uniform(0, 0.5, 100)
        y = geo.vmf_sample(np.array([0.0, 0, 1]), 20.0, 100, rng)
        pilot = fit(x, y, grid_partition([[0, 0.5, 1]]), BandwidthRule.fixed(0.3), geo.sphere())
        p = cd_split_partition(x, 0.1, 2, pilot, geo.sphere(), 5000, rng)
        assert np.isfinite(p.pilot_q).all()
