import numpy as np
import pytest

from aris_isac import Geometry, optimize, radar_snr, ris_reflect_power, synth_channels, user_sinrs
from aris_isac.model import crandn
from aris_isac.oracle import (GridSpec, McConfig, grid_best_phi, local_opt_certificate, mc_radar_snr,
                              mc_ris_power, mc_user_sinr, random_box_points, with_samples)
from aris_isac.receive_filter import optimal_filter

from conftest import make_config, unit_channels, unit_scale_config

MC = McConfig(n_samples=200_000, seed=3)


def point(seed=0, m=3, gamma=0.5):
    cfg = unit_scale_config(n=3, k=2, m=m, p_ris=1e3, gamma_targets=gamma)
    ch = unit_channels(cfg, seed)
    rng = np.random.default_rng(seed)
    w = 0.5 * crandn(rng, cfg.n_bs, cfg.n_cols)
    phi = random_box_points(rng, m, cfg.a_max, 1)[0]
    u = crandn(rng, cfg.n_bs)
    return cfg, ch, w, phi, u


class TestMonteCarlo:
    @pytest.mark.parametrize("seed", range(3))
    def test_user_sinr(self, seed):
        cfg, ch, w, phi, _ = point(seed)
        exact = user_sinrs(cfg, ch, w, phi)
        for k in range(cfg.n_users):
            assert mc_user_sinr(cfg, ch, w, phi, k, MC).agrees(exact[k])

    @pytest.mark.parametrize("seed", range(3))
    def test_radar_snr(self, seed):
        cfg, ch, w, phi, u = point(seed)
        assert mc_radar_snr(cfg, ch, w, phi, u, MC).agrees(radar_snr(cfg, ch, w, phi, u))

    @pytest.mark.parametrize("seed", range(3))
    def test_ris_power(self, seed):
        cfg, ch, w, phi, _ = point(seed)
        assert mc_ris_power(cfg, ch, w, phi, MC).agrees(ris_reflect_power(cfg, ch, w, phi))

    def test_detects_wrong_value(self):
        cfg, ch, w, phi, _ = point(0)
        est = mc_ris_power(cfg, ch, w, phi, MC)
        assert not est.agrees(1.05 * ris_reflect_power(cfg, ch, w, phi))

    def test_standard_error_shrinks_with_samples(self):
        cfg, ch, w, phi, u = point(1)
        small = mc_radar_snr(cfg, ch, w, phi, u, with_samples(MC, 50_000))
        large = mc_radar_snr(cfg, ch, w, phi, u, with_samples(MC, 800_000))
        assert large.se / small.se == pytest.approx(0.25, rel=0.15)

    def test_seeded(self):
        cfg, ch, w, phi, _ = point(2)
        a, b = mc_user_sinr(cfg, ch, w, phi, 0, MC), mc_user_sinr(cfg, ch, w, phi, 0, MC)
        assert a == b
        assert mc_user_sinr(cfg, ch, w, phi, 0, McConfig(200_000, seed=4)).value != a.value

    def test_batching_does_not_change_estimate(self):
        cfg, ch, w, phi, _ = point(2)
        a = mc_ris_power(cfg, ch, w, phi, McConfig(20_000, seed=1, batch=20_000))
        b = mc_ris_power(cfg, ch, w, phi, McConfig(20_000, seed=1, batch=5_000))
        assert a.value == pytest.approx(b.value, rel=0.05)

    @pytest.mark.parametrize("kw", [{"n_samples": 10}, {"batch": 0}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            McConfig(**kw)


class TestGrid:
    def test_matches_brute_force(self):
        cfg, ch, w, _, u = point(4, m=2, gamma=0.02)
        grid = GridSpec(n_phases=8, n_amps=3)
        best_phi, best = grid_best_phi(cfg, ch, w, u, grid)
        amps = cfg.a_max * np.arange(1, 4) / 3
        levels = (amps[:, None] * np.exp(2j * np.pi * np.arange(8) / 8)[None, :]).ravel()
        vals = []
        for a in levels:
            for b in levels:
                phi = np.array([a, b])
                ok = (ris_reflect_power(cfg, ch, w, phi) <= cfg.p_ris
                      and np.all(user_sinrs(cfg, ch, w, phi) >= cfg.gamma_targets))
                if ok:
                    vals.append(radar_snr(cfg, ch, w, phi, u))
        assert best == pytest.approx(max(vals), rel=1e-10)
        assert radar_snr(cfg, ch, w, best_phi, u) == pytest.approx(best, rel=1e-10)

    def test_chunking_irrelevant(self):
        cfg, ch, w, _, u = point(5, m=2, gamma=0.02)
        a = grid_best_phi(cfg, ch, w, u, GridSpec(16, 4, chunk=7))
        b = grid_best_phi(cfg, ch, w, u, GridSpec(16, 4))
        assert a[1] == b[1]

    def test_rejects_large_surfaces(self):
        cfg, ch, w, _, u = point(0, m=4)
        with pytest.raises(ValueError):
            grid_best_phi(cfg, ch, w, u)

    def test_no_feasible_point(self):
        cfg, ch, w, _, u = point(0, m=1)
        with pytest.raises(ValueError):
            grid_best_phi(cfg.replace(gamma_targets=1e6), ch, w, u, GridSpec(4, 2))


class TestCertificate:
    def test_converged_design_is_locally_optimal(self):
        cfg = make_config(4, 2, 8, p_bs_dbm=40.0)
        ch = synth_channels(cfg, Geometry(seed=1))
        sol = optimize(cfg, ch)
        rep = local_opt_certificate(cfg, ch, sol, n_perturb=200)
        assert rep.improving_fraction <= 0.05
        assert rep.gains.shape == (200,)

    def test_poor_design_is_flagged(self):
        cfg = make_config(4, 2, 8, p_bs_dbm=40.0, gamma_db=0.0)
        ch = synth_channels(cfg, Geometry(seed=1))
        sol = optimize(cfg, ch)
        # shrink the reflection: growing it back improves the radar SNR
        bad = type(sol)(sol.w_mat, 0.5 * sol.phi, sol.u, 0.0, sol.user_sinrs)
        rep = local_opt_certificate(cfg, ch, bad, n_perturb=200, radius=0.05)
        good = local_opt_certificate(cfg, ch, sol, n_perturb=200, radius=0.05)
        assert rep.improving_fraction > 0.1 > good.improving_fraction
        assert rep.best_gain > 0.01


def test_box_points_inside():
    pts = random_box_points(np.random.default_rng(0), 3, 2.0, 500)
    assert pts.shape == (500, 3) and np.abs(pts).max() <= 2.0


def test_filter_used_by_certificate_is_optimal():
    cfg, ch, w, phi, u = point(6)
    assert radar_snr(cfg, ch, w, phi, optimal_filter(cfg, ch, w, phi)) >= radar_snr(cfg, ch, w, phi, u)


class TestEdgeCases:
    def test_zero_reflection_gives_zero_ris_power(self):
        cfg, ch, w, _, _ = point(0)
        assert mc_ris_power(cfg, ch, w, np.zeros(cfg.n_ris), McConfig(10_000)).value == 0.0

    def test_noise_only_ris_power(self):
        cfg, ch, _, phi, _ = point(1)
        cfg = cfg.replace(rcs_var=0.0)
        est = mc_ris_power(cfg, ch, np.zeros((cfg.n_bs, cfg.n_cols)), phi, MC)
        assert est.agrees(2 * cfg.sigma2_z * np.sum(np.abs(phi) ** 2))

    def test_quadrupling_samples_halves_error(self):
        cfg, ch, w, phi, _ = point(2)
        a = mc_ris_power(cfg, ch, w, phi, with_samples(MC, 100_000))
        b = mc_ris_power(cfg, ch, w, phi, with_samples(MC, 400_000))
        assert b.se / a.se == pytest.approx(0.5, rel=0.2)


class TestGridProperties:
    def test_single_element_optimum_at_max_amplitude(self):
        # no binding constraints: the radar SNR grows with the amplitude
        cfg, ch, w, _, u = point(3, m=1, gamma=0.0)
        phi, _ = grid_best_phi(cfg.replace(p_ris=np.inf), ch, w, u, GridSpec(16, 8))
        assert abs(phi[0]) == pytest.approx(cfg.a_max)

    def test_grid_point_is_feasible(self):
        from aris_isac import check_feasibility
        cfg, ch, w, _, u = point(4, m=2, gamma=0.02)
        # the grid leaves W alone, so give the BS budget room for it
        cfg = cfg.replace(p_bs=2 * np.linalg.norm(w) ** 2)
        phi, _ = grid_best_phi(cfg, ch, w, u, GridSpec(16, 4))
        assert check_feasibility(cfg, ch, w, phi, tol=1e-9).feasible


@pytest.fixture(scope="module")
def default_designs():
    cfg = make_config(8, 4, 16, p_bs_dbm=40.0, gamma_db=-np.inf)
    ch = synth_channels(cfg, Geometry(seed=0))
    sol = optimize(cfg, ch)
    # without SINR targets a shrunk reflection stays feasible and is improvable
    shrunk = type(sol)(sol.w_mat, 0.9 * sol.phi, sol.u, 0.0, sol.user_sinrs)
    return cfg, ch, sol, shrunk


class TestCertificateDefaultScenario:
    def test_zero_radius(self, default_designs):
        cfg, ch, sol, _ = default_designs
        assert local_opt_certificate(cfg, ch, sol, n_perturb=20, radius=0.0).improving_fraction == 0.0

    def test_converged_solution(self, default_designs):
        cfg, ch, sol, _ = default_designs
        assert local_opt_certificate(cfg, ch, sol, n_perturb=1000, radius=1e-3).improving_fraction <= 0.01

    def test_shrunk_solution_flagged_more(self, default_designs):
        cfg, ch, sol, shrunk = default_designs
        a = local_opt_certificate(cfg, ch, sol, n_perturb=300, radius=1e-2)
        b = local_opt_certificate(cfg, ch, shrunk, n_perturb=300, radius=1e-2)
        assert b.improving_fraction > a.improving_fraction
