"""Alternating design of receive filter, transmit beamformer and RIS reflection."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
import logging
import time

import numpy as np

from .beamformer import MmOptions, build_w_data, feasibility_prephase, mm_update_w
from .model import (ChannelSet, DesignSolution, InfeasibleError, SystemConfig, TraceEntry,
                    check_feasibility, composite_channels, radar_snr, ris_reflect_power, user_sinrs)
from .receive_filter import build_filter_matrices, update_filter
from .reflection import PhiOptions, update_phi

log = logging.getLogger(__name__)


INIT_PHASES = ("coherent", "random")


class Mode(str, Enum):
    ACTIVE_ISAC = "active_isac"
    PASSIVE_ISAC = "passive_isac"
    RADAR_ONLY_ACTIVE = "radar_only_active"


@dataclass(frozen=True)
class BcdOptions:
    max_outer: int = 50
    rel_tol: float = 1e-4
    seed: int = 0
    mode: Mode = Mode.ACTIVE_ISAC
    order: tuple = ("u", "w", "phi")
    mm: MmOptions = field(default_factory=MmOptions)
    phi: PhiOptions = field(default_factory=PhiOptions)
    filter_method: str = "rank1"
    init_power_fraction: float = 0.9
    init_phases: str = "coherent"   # or "random"

    def __post_init__(self):
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if self.init_phases not in INIT_PHASES:
            raise ValueError(f"init_phases must be one of {INIT_PHASES}")
        if sorted(self.order) != ["phi", "u", "w"]:
            raise ValueError("order must be a permutation of ('u', 'w', 'phi')")
        object.__setattr__(self, "mode", Mode(self.mode))

    def with_backend(self, backend: str | None) -> "BcdOptions":
        return replace(self, mm=replace(self.mm, backend=backend), phi=replace(self.phi, backend=backend))


def mode_config(cfg: SystemConfig, mode: Mode | str) -> SystemConfig:
    """Scenario seen by the optimizer in each baseline mode."""
    mode = Mode(mode)
    if mode is Mode.PASSIVE_ISAC:
        # no amplification, no RIS noise, RIS budget moved to the BS
        return cfg.replace(a_max=1.0, sigma2_z=0.0, p_ris=np.inf, p_bs=cfg.p_bs + cfg.p_ris)
    if mode is Mode.RADAR_ONLY_ACTIVE:
        return cfg.replace(gamma_targets=np.zeros(cfg.n_users))
    return cfg


def _initial_beamformer(cfg: SystemConfig, ch: ChannelSet, phi: np.ndarray, rng) -> np.ndarray:
    """Regularized zero-forcing user columns plus one radar column matched to the target cascade."""
    n, k = cfg.n_bs, cfg.n_users
    h = composite_channels(ch, phi)
    alpha = k * float(np.mean(cfg.sigma2_user)) / max(cfg.p_bs, 1e-300)
    w_c = h.conj().T @ np.linalg.solve(h @ h.conj().T + alpha * np.eye(k), np.eye(k))
    w_c /= np.maximum(np.linalg.norm(w_c, axis=0, keepdims=True), 1e-300)
    v = (ch.g_mat.T @ (phi * ch.h_rt)).conj()
    if not np.any(v):
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    # keep the radar beam out of the users' channels when there is room to
    if n > k:
        v_null = v - np.linalg.pinv(h) @ (h @ v)
        if np.linalg.norm(v_null) > 1e-3 * np.linalg.norm(v):
            v = v_null
    w_r = np.zeros((n, n), dtype=complex)
    w_r[:, 0] = v / np.linalg.norm(v)
    w = np.hstack([w_c, w_r])
    return w * np.sqrt(cfg.p_bs) / np.linalg.norm(w)


def _bisect_scale(power_of, target: float, hi: float) -> float:
    """Largest ``x`` in ``[0, hi]`` with ``power_of(x) <= target`` (``power_of`` increasing)."""
    if power_of(hi) <= target:
        return hi
    lo = 0.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if power_of(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


def coherent_phases(ch: ChannelSet) -> np.ndarray:
    """Unit-modulus phases that add the target paths of the dominant BS-RIS mode in phase."""
    _, _, vh = np.linalg.svd(ch.g_mat)
    return np.exp(-1j * np.angle(ch.h_rt * (ch.g_mat @ vh[0].conj())))


def _candidate_starts(cfg, ch, rng, power_fraction, phases="coherent"):
    """Two starts: full BS power with the RIS amplitude backed off to the RIS budget,
    and full RIS amplitude with the BS power backed off instead."""
    if phases == "coherent":
        direction = coherent_phases(ch)
    else:
        direction = np.exp(1j * rng.uniform(0.0, 2 * np.pi, cfg.n_ris))
    if cfg.p_bs == 0:
        w = np.zeros((cfg.n_bs, cfg.n_cols), dtype=complex)
    else:
        w = _initial_beamformer(cfg, ch, cfg.a_max * direction, rng)
    if not np.isfinite(cfg.p_ris):
        return [(w, cfg.a_max * direction)]
    target = power_fraction * cfg.p_ris
    amp = _bisect_scale(lambda a: ris_reflect_power(cfg, ch, w, a * direction), target, cfg.a_max)
    starts = [(w, amp * direction)]
    if amp < cfg.a_max and cfg.p_bs > 0:
        phi = cfg.a_max * direction
        scale = _bisect_scale(lambda c: ris_reflect_power(cfg, ch, c * w, phi), target, 1.0)
        if scale > 0:
            starts.append((scale * w, phi))
    return starts


def _start_score(cfg, ch, w, phi) -> float:
    fm = build_filter_matrices(cfg, ch, w, phi)
    return update_filter(fm, cfg.rcs_var).value


def initialize(cfg: SystemConfig, ch: ChannelSet, seed: int = 0, power_fraction: float = 0.9,
               backend: str | None = None, phases: str = "coherent") -> tuple[np.ndarray, np.ndarray]:
    """Feasible starting point ``(W0, phi0)``; raises :class:`InfeasibleError` if none is found.

    Among the candidate starts that are feasible (after the SINR pre-phase if
    needed) the one with the largest radar SNR is returned.
    """
    ch.check(cfg)
    rng = np.random.default_rng(seed)
    if cfg.p_bs == 0 and np.any(cfg.gamma_targets > 0):
        raise InfeasibleError("no BS power available but SINR targets are positive",
                              {"p_bs": cfg.p_bs, "gamma_targets": cfg.gamma_targets.tolist()})
    best, best_score, last_err = None, -np.inf, None
    for w, phi in _candidate_starts(cfg, ch, rng, power_fraction, phases):
        if not check_feasibility(cfg, ch, w, phi).feasible:
            data = build_w_data(cfg, ch, phi, np.ones(cfg.n_bs) / np.sqrt(cfg.n_bs))
            try:
                w = feasibility_prephase(data, cfg, backend=backend)
            except InfeasibleError as exc:
                last_err = exc
                continue
            rep = check_feasibility(cfg, ch, w, phi)
            if not rep.feasible:
                last_err = InfeasibleError("could not construct a feasible starting point", rep.worst())
                continue
        score = _start_score(cfg, ch, w, phi)
        if score > best_score:
            best, best_score = (w, phi), score
    if best is None:
        raise last_err
    return best


def _residuals(cfg, ch, w, phi) -> dict:
    return check_feasibility(cfg, ch, w, phi).worst()


def optimize(cfg: SystemConfig, ch: ChannelSet, opts: BcdOptions = BcdOptions()) -> DesignSolution:
    """Run the alternating updates for ``opts.mode`` until ``gamma_r`` settles."""
    mode = Mode(opts.mode)
    cfg_m = mode_config(cfg, mode)
    timings = {"init": 0.0, "u": 0.0, "w": 0.0, "phi": 0.0}
    t0 = time.perf_counter()
    w, phi = initialize(cfg_m, ch, opts.seed, opts.init_power_fraction, backend=opts.mm.backend,
                        phases=opts.init_phases)
    u = update_filter(build_filter_matrices(cfg_m, ch, w, phi), cfg_m.rcs_var, opts.filter_method).u
    timings["init"] = time.perf_counter() - t0
    snr = radar_snr(cfg_m, ch, w, phi, u)
    trace = [TraceEntry(0, snr, _residuals(cfg_m, ch, w, phi))]
    statuses = []
    converged = False
    for rnd in range(1, opts.max_outer + 1):
        for step in opts.order:
            ts = time.perf_counter()
            if step == "u":
                u = update_filter(build_filter_matrices(cfg_m, ch, w, phi), cfg_m.rcs_var,
                                  opts.filter_method).u
            elif step == "w":
                res = mm_update_w(build_w_data(cfg_m, ch, phi, u), cfg_m, ch, phi, w, opts.mm)
                w = res.w_mat
                if res.status != "ok":
                    statuses.append(f"w:{res.status}")
            else:
                res = update_phi(cfg_m, ch, w, u, phi, opts.phi)
                phi = res.phi
                if res.status != "ok":
                    statuses.append(f"phi:{res.status}")
            timings[step] += time.perf_counter() - ts
        new = radar_snr(cfg_m, ch, w, phi, u)
        trace.append(TraceEntry(rnd, new, _residuals(cfg_m, ch, w, phi)))
        change = abs(new - snr) / max(abs(snr), 1e-300)
        snr = new
        log.debug("round %d: gamma_r=%.6e change=%.3e", rnd, new, change)
        if change < opts.rel_tol:
            converged = True
            break
    # the last reflection step leaves u stale; the closed form can only help
    u = update_filter(build_filter_matrices(cfg_m, ch, w, phi), cfg_m.rcs_var, opts.filter_method).u
    snr = radar_snr(cfg_m, ch, w, phi, u)
    return DesignSolution(
        w_mat=w, phi=phi, u=u, radar_snr=snr, user_sinrs=user_sinrs(cfg_m, ch, w, phi),
        trace=trace, status="ok", mode=mode.value, converged=converged,
        diagnostics={"outer_iters": len(trace) - 1, "timings": timings, "substatus": statuses,
                     "config": cfg_m},
    )


def run_baseline(cfg: SystemConfig, ch: ChannelSet, mode: Mode | str,
                 opts: BcdOptions = BcdOptions()) -> DesignSolution:
    return optimize(cfg, ch, replace(opts, mode=Mode(mode)))
