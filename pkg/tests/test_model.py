import numpy as np
import pytest
from hypothesis import given, strategies as st

from aris_isac import SystemConfig, check_feasibility, dbm_to_watt, radar_snr, ris_reflect_power
from aris_isac.model import (ChannelSet, DesignSolution, composite_channel, composite_channels, crandn,
                             lin_to_db, radar_cascade, ris_power_terms, user_sinr, user_sinrs,
                             validate_solution, watt_to_dbm)

from conftest import unit_channels, unit_scale_config

seeds = st.integers(0, 2**32 - 1)


def random_point(cfg, seed):
    rng = np.random.default_rng(seed)
    ch = unit_channels(cfg, seed)
    w = crandn(rng, cfg.n_bs, cfg.n_cols)
    phi = crandn(rng, cfg.n_ris)
    u = crandn(rng, cfg.n_bs)
    return ch, w, phi, u


class TestUnits:
    @pytest.mark.parametrize("dbm, watt", [(30, 1.0), (20, 0.1), (-80, 1e-11)])
    def test_dbm_to_watt(self, dbm, watt):
        assert dbm_to_watt(dbm) == pytest.approx(watt, rel=1e-12)
        assert watt_to_dbm(watt) == pytest.approx(dbm, abs=1e-9)

    def test_lin_to_db_zero(self):
        assert lin_to_db(0.0) == -np.inf


class TestConfig:
    @pytest.mark.parametrize("field, value", [
        ("n_bs", 0), ("p_ris", 0.0), ("sigma2_r", 0.0), ("sigma2_user", -1.0),
        ("gamma_targets", -0.1), ("a_max", 0.0), ("rcs_var", -1.0), ("p_bs", -1.0), ("sigma2_z", -1e-3),
    ])
    def test_invalid_fields(self, field, value):
        with pytest.raises(ValueError):
            unit_scale_config(**{field: value}) if field != "n_bs" else SystemConfig(
                0, 1, 1, 1.0, 1.0, 0.1, 0.1, 0.1, 1.0, 1.0)

    def test_broadcasts_per_user_values(self):
        cfg = unit_scale_config(k=3)
        assert cfg.sigma2_user.shape == (3,) and cfg.gamma_targets.shape == (3,)
        assert cfg.n_cols == cfg.n_users + cfg.n_bs

    def test_channel_shape_check(self):
        with pytest.raises(ValueError):
            ChannelSet(np.ones((2, 3)), np.ones((4, 2)), np.ones((2, 4)), np.ones(4))
        with pytest.raises(ValueError):
            ChannelSet(np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)), np.array([np.nan]))


class TestCompositeChannel:
    def test_zero_reflection(self):
        cfg = unit_scale_config()
        ch = unit_channels(cfg)
        assert np.array_equal(composite_channel(ch, np.zeros(cfg.n_ris), 1), ch.h_d[1])

    def test_scalar_chain(self):
        ch = ChannelSet(np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)), np.ones(1))
        phi = np.array([2.0 * np.exp(0.7j)])
        assert composite_channel(ch, phi, 0)[0] == pytest.approx(phi[0])

    def test_matches_loops(self, rng):
        cfg = unit_scale_config(n=3, k=2, m=4)
        ch = unit_channels(cfg, 5)
        phi = crandn(rng, 4)
        for k in range(2):
            ref = np.array([ch.h_d[k, n] + sum(ch.g_mat[m, n] * phi[m] * ch.h_r[k, m] for m in range(4))
                            for n in range(3)])
            assert np.allclose(composite_channel(ch, phi, k), ref, atol=1e-13)
        assert np.allclose(composite_channels(ch, phi)[1], composite_channel(ch, phi, 1))

    @given(seeds, st.floats(0, 1))
    def test_affine(self, seed, alpha):
        cfg = unit_scale_config()
        ch, _, p1, _ = random_point(cfg, seed)
        p2 = crandn(np.random.default_rng(seed + 1), cfg.n_ris)
        lhs = composite_channel(ch, alpha * p1 + (1 - alpha) * p2, 0)
        rhs = alpha * composite_channel(ch, p1, 0) + (1 - alpha) * composite_channel(ch, p2, 0)
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_bad_index(self):
        cfg = unit_scale_config()
        with pytest.raises(IndexError):
            composite_channel(unit_channels(cfg), np.zeros(cfg.n_ris), 5)


class TestUserSinr:
    def test_single_user_example(self):
        cfg = SystemConfig(1, 1, 1, 1.0, 1.0, 0.1, 0.1, 0.25, 1.0, 1.0)
        ch = ChannelSet(np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)), np.ones(1))
        w = np.array([[0.8 + 0.1j, 0.3j]])
        got = user_sinr(cfg, ch, w, np.zeros(1), 0)
        assert got == pytest.approx(abs(w[0, 0]) ** 2 / (abs(w[0, 1]) ** 2 + 0.25))

    def test_zero_beamformer(self):
        cfg = unit_scale_config()
        ch = unit_channels(cfg)
        assert np.all(user_sinrs(cfg, ch, np.zeros((cfg.n_bs, cfg.n_cols)), np.ones(cfg.n_ris)) == 0)

    def test_ris_noise_enters_denominator(self):
        cfg = unit_scale_config()
        ch, w, phi, _ = random_point(cfg, 3)
        quiet = cfg.replace(sigma2_z=0.0)
        assert np.all(user_sinrs(quiet, ch, w, phi) > user_sinrs(cfg, ch, w, phi))


class TestRadar:
    def test_zero_reflection_cascade(self):
        cfg = unit_scale_config()
        casc = radar_cascade(unit_channels(cfg), np.zeros(cfg.n_ris))
        assert not np.any(casc.h_t) and not np.any(casc.h_z0) and not np.any(casc.h_z1)

    def test_scalar_cascade(self):
        ch = ChannelSet(np.ones((1, 1)), np.full((1, 1), 0.5), np.ones((1, 1)), np.full(1, 2.0))
        casc = radar_cascade(ch, np.array([1.5]))
        assert casc.h_t[0, 0] == pytest.approx((0.5 * 1.5 * 2.0) ** 2)

    @given(seeds)
    def test_cascade_structure(self, seed):
        cfg = unit_scale_config(n=4, m=5)
        ch, _, phi, _ = random_point(cfg, seed)
        casc = radar_cascade(ch, phi)
        assert np.allclose(casc.h_t, casc.h_z0 @ ch.g_mat, atol=1e-12)
        sv = np.linalg.svd(casc.h_t, compute_uv=False)
        assert sv[1] <= 1e-10 * sv[0]

    def test_zero_beamformer(self):
        cfg = unit_scale_config()
        ch, _, phi, u = random_point(cfg, 0)
        assert radar_snr(cfg, ch, np.zeros((cfg.n_bs, cfg.n_cols)), phi, u) == 0.0

    @given(seeds, st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3))
    def test_filter_scale_invariance(self, seed, c):
        cfg = unit_scale_config()
        ch, w, phi, u = random_point(cfg, seed)
        base = radar_snr(cfg, ch, w, phi, u)
        assert radar_snr(cfg, ch, w, phi, c * u) == pytest.approx(base, rel=1e-12)

    def test_zero_filter_rejected(self):
        cfg = unit_scale_config()
        ch, w, phi, _ = random_point(cfg, 0)
        with pytest.raises(ValueError):
            radar_snr(cfg, ch, w, phi, np.zeros(cfg.n_bs))


class TestRisPower:
    def test_zero_reflection(self):
        cfg = unit_scale_config()
        ch, w, _, _ = random_point(cfg, 0)
        assert ris_reflect_power(cfg, ch, w, np.zeros(cfg.n_ris)) == 0.0

    def test_zero_beamformer_leaves_noise_terms(self):
        cfg = unit_scale_config()
        ch, _, phi, _ = random_point(cfg, 1)
        a = phi * ch.h_rt
        expect = (cfg.rcs_var * cfg.sigma2_z * np.linalg.norm(np.outer(a, a)) ** 2
                  + 2 * cfg.sigma2_z * np.sum(np.abs(phi) ** 2))
        got = ris_reflect_power(cfg, ch, np.zeros((cfg.n_bs, cfg.n_cols)), phi)
        assert got == pytest.approx(expect, rel=1e-12)

    def test_matches_frobenius_definition(self, rng):
        cfg = unit_scale_config()
        ch, w, phi, _ = random_point(cfg, 2)
        ph = np.diag(phi)
        hh = ph @ np.outer(ch.h_rt, ch.h_rt) @ ph
        ref = (np.linalg.norm(ph @ ch.g_mat @ w) ** 2
               + cfg.rcs_var * np.linalg.norm(hh @ ch.g_mat @ w) ** 2
               + cfg.rcs_var * cfg.sigma2_z * np.linalg.norm(hh) ** 2
               + 2 * cfg.sigma2_z * np.linalg.norm(ph) ** 2)
        assert ris_reflect_power(cfg, ch, w, phi) == pytest.approx(ref, rel=1e-12)

    @given(seeds, st.complex_numbers(max_magnitude=10))
    def test_beamformer_terms_scale_quadratically(self, seed, c):
        cfg = unit_scale_config()
        ch, w, phi, _ = random_point(cfg, seed)
        t = ris_power_terms(cfg, ch, w, phi)
        diff = ris_reflect_power(cfg, ch, c * w, phi) - ris_reflect_power(cfg, ch, w, phi)
        assert diff == pytest.approx((abs(c) ** 2 - 1) * (t[0] + t[1]), rel=1e-9, abs=1e-9 * t.sum())


class TestFeasibility:
    def test_zero_solution_violates_sinr_only(self):
        cfg = unit_scale_config()
        ch = unit_channels(cfg)
        rep = check_feasibility(cfg, ch, np.zeros((cfg.n_bs, cfg.n_cols)), np.zeros(cfg.n_ris))
        assert not rep.feasible
        assert rep.bs_power <= 0 and rep.ris_power <= 0 and np.all(rep.amplitude <= 0)
        assert np.all(rep.sinr > 0)

    def test_amplitude_residual(self):
        cfg = unit_scale_config(gamma_targets=0.0, p_ris=1e9)
        ch = unit_channels(cfg)
        phi = np.zeros(cfg.n_ris, dtype=complex)
        phi[1] = 1.1 * cfg.a_max
        sol = DesignSolution(np.zeros((cfg.n_bs, cfg.n_cols)), phi, np.ones(cfg.n_bs), 0.0, np.zeros(2))
        rep = validate_solution(cfg, ch, sol)
        assert rep.amplitude[1] == pytest.approx(0.1 * cfg.a_max)
        assert not rep.feasible
        assert set(rep.worst()) == {"bs_power", "ris_power", "sinr", "amplitude"}
