import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from aris_isac import Geometry, SystemConfig, dbm_to_watt, synth_channels
from aris_isac.model import ChannelSet, crandn

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


def make_config(n=4, k=2, m=4, p_bs_dbm=30.0, p_ris_dbm=20.0, noise_dbm=-80.0, gamma_db=6.0,
                a_max=8.0, rcs_var=1.0) -> SystemConfig:
    return SystemConfig(n, k, m, dbm_to_watt(p_bs_dbm), dbm_to_watt(p_ris_dbm), dbm_to_watt(noise_dbm),
                        dbm_to_watt(noise_dbm), dbm_to_watt(noise_dbm), 10 ** (gamma_db / 10), a_max,
                        rcs_var)


def unit_channels(cfg: SystemConfig, seed: int = 0) -> ChannelSet:
    """Channels with O(1) entries: the algebra is checked without tiny path losses."""
    rng = np.random.default_rng(seed)
    return ChannelSet(crandn(rng, cfg.n_users, cfg.n_bs), crandn(rng, cfg.n_ris, cfg.n_bs),
                      crandn(rng, cfg.n_users, cfg.n_ris), crandn(rng, cfg.n_ris))


def unit_scale_config(n=3, k=2, m=3, **kw) -> SystemConfig:
    """Config whose noise levels are comparable to unit channels."""
    base = dict(p_bs=1.0, p_ris=1.0, sigma2_z=0.1, sigma2_r=0.5, sigma2_user=0.3,
                gamma_targets=0.5, a_max=1.5, rcs_var=1.0)
    base.update(kw)
    return SystemConfig(n, k, m, **base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_scenario():
    cfg = make_config()
    return cfg, synth_channels(cfg, Geometry(seed=3))


@pytest.fixture
def default_cfg():
    return make_config(8, 4, 16, p_bs_dbm=40.0, gamma_db=12.0)


# one verdict line per acceptance criterion, printed after the test run
_VERDICTS: dict[int, tuple[bool, str]] = {}


def record_verdict(number: int, ok: bool, detail: str) -> None:
    _VERDICTS[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        ok, detail = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
