import numpy as np
import pytest

from aris_isac import (BcdOptions, Geometry, InfeasibleError, Mode, check_feasibility, initialize,
                       mode_config, optimize, run_baseline, synth_channels, validate_solution)
from aris_isac.bcd import coherent_phases

from conftest import make_config


def scenario(seed=0, **kw):
    kw.setdefault("p_bs_dbm", 40.0)
    kw.setdefault("gamma_db", 6.0)
    cfg = make_config(4, 2, 8, **kw)
    return cfg, synth_channels(cfg, Geometry(seed=seed))


def trace_values(sol):
    return np.array([t.radar_snr for t in sol.trace])


@pytest.mark.parametrize("seed", range(3))
def test_monotone_and_feasible(seed):
    cfg, ch = scenario(seed)
    sol = optimize(cfg, ch, BcdOptions(seed=seed))
    tr = trace_values(sol)
    assert np.all(np.diff(tr) >= -1e-6 * tr[:-1])
    assert sol.converged and sol.diagnostics["outer_iters"] <= 50
    assert validate_solution(cfg, ch, sol, tol=1e-6).feasible
    assert sol.radar_snr >= tr[-1] * (1 - 1e-12)


def test_single_round():
    cfg, ch = scenario(1)
    sol = optimize(cfg, ch, BcdOptions(max_outer=1))
    assert sol.diagnostics["outer_iters"] == 1 and len(sol.trace) == 2


def test_no_sinr_targets_matches_radar_only():
    cfg, ch = scenario(2, gamma_db=-np.inf)
    a = run_baseline(cfg, ch, Mode.ACTIVE_ISAC)
    b = run_baseline(cfg, ch, Mode.RADAR_ONLY_ACTIVE)
    assert a.radar_snr == pytest.approx(b.radar_snr, rel=1e-6)


def test_radar_only_not_worse_than_isac():
    cfg, ch = scenario(3)
    isac = run_baseline(cfg, ch, Mode.ACTIVE_ISAC)
    radar = run_baseline(cfg, ch, Mode.RADAR_ONLY_ACTIVE)
    assert radar.radar_snr >= isac.radar_snr * (1 - 1e-3)


def test_passive_keeps_unit_amplitude():
    cfg, ch = scenario(4)
    sol = run_baseline(cfg, ch, Mode.PASSIVE_ISAC)
    assert np.abs(sol.phi).max() <= 1 + 1e-9
    assert sol.mode == "passive_isac"
    assert validate_solution(sol.diagnostics["config"], ch, sol, tol=1e-6).feasible


def test_zero_bs_power_is_infeasible():
    cfg, ch = scenario(0, p_bs_dbm=-np.inf)
    assert cfg.p_bs == 0
    with pytest.raises(InfeasibleError):
        optimize(cfg, ch)


def test_unreachable_targets_infeasible():
    cfg, ch = scenario(0, gamma_db=120.0)
    with pytest.raises(InfeasibleError):
        optimize(cfg, ch)


@pytest.mark.parametrize("phases", ["coherent", "random"])
def test_initial_point_feasible(phases):
    cfg, ch = scenario(5)
    w, phi = initialize(cfg, ch, seed=5, phases=phases)
    assert check_feasibility(cfg, ch, w, phi).feasible


def test_random_phase_start_also_converges():
    cfg, ch = scenario(6)
    sol = optimize(cfg, ch, BcdOptions(init_phases="random", seed=6))
    tr = trace_values(sol)
    assert np.all(np.diff(tr) >= -1e-6 * tr[:-1])


def test_coherent_phases_unit_modulus_and_aligned():
    cfg, ch = scenario(7)
    phi = coherent_phases(ch)
    assert np.allclose(np.abs(phi), 1.0)
    _, _, vh = np.linalg.svd(ch.g_mat)
    terms = phi * ch.h_rt * (ch.g_mat @ vh[0].conj())
    assert np.allclose(np.angle(terms[np.abs(terms) > 0]), 0.0, atol=1e-9)


def test_mode_config():
    cfg, _ = scenario()
    passive = mode_config(cfg, "passive_isac")
    assert passive.a_max == 1.0 and passive.sigma2_z == 0.0 and np.isinf(passive.p_ris)
    assert passive.p_bs == pytest.approx(cfg.p_bs + cfg.p_ris)
    assert np.all(mode_config(cfg, Mode.RADAR_ONLY_ACTIVE).gamma_targets == 0)
    assert mode_config(cfg, "active_isac") is cfg


@pytest.mark.parametrize("kw", [{"max_outer": 0}, {"init_phases": "zeros"}, {"order": ("u", "w")},
                                {"mode": "semi_active"}])
def test_bad_options(kw):
    with pytest.raises(ValueError):
        BcdOptions(**kw)


def test_order_permutation_runs():
    cfg, ch = scenario(8)
    sol = optimize(cfg, ch, BcdOptions(order=("w", "phi", "u")))
    assert validate_solution(cfg, ch, sol, tol=1e-6).feasible


def test_deterministic():
    cfg, ch = scenario(9)
    a, b = optimize(cfg, ch), optimize(cfg, ch)
    assert a.radar_snr == b.radar_snr
    assert np.array_equal(a.phi, b.phi)


def test_default_scenario_always_has_a_start(default_cfg):
    for seed in range(10):
        ch = synth_channels(default_cfg, Geometry(seed=seed))
        w, phi = initialize(default_cfg, ch, seed)
        assert check_feasibility(default_cfg, ch, w, phi).feasible
