"""Seeded geometric channel synthesis.

BS, RIS and target positions are 2-D points; every array is a half-wavelength
ULA. Path loss is log-distance with a 1 m reference. BS-user links are
Rayleigh, BS-RIS and RIS-user links Rician, RIS-target pure LoS by default.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .model import ChannelSet, SystemConfig, crandn

LINKS = ("bs_user", "bs_ris", "ris_user", "ris_target")


def _default_exponents():
    return {"bs_user": 3.5, "bs_ris": 2.2, "ris_user": 2.8, "ris_target": 2.0}


def _default_rician():
    return {"bs_user": 0.0, "bs_ris": 10.0, "ris_user": 10.0, "ris_target": math.inf}


@dataclass(frozen=True)
class Geometry:
    bs_pos: tuple = (0.0, 0.0)
    ris_pos: tuple = (15.0, 10.0)
    target_pos: tuple = (70.0, 0.0)
    user_positions: tuple | None = None   # None: drawn in the user disk from seed
    user_center: tuple = (70.0, -10.0)
    user_radius: float = 5.0
    pathloss_ref: float = -30.0
    exponents: dict = field(default_factory=_default_exponents)
    rician_k: dict = field(default_factory=_default_rician)
    spacing_ratio: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for link in LINKS:
            if link not in self.exponents or link not in self.rician_k:
                raise ValueError(f"missing parameters for link {link!r}")
            if self.exponents[link] < 2.0:
                raise ValueError(f"path-loss exponent for {link} must be >= 2")
            if self.rician_k[link] < 0:
                raise ValueError(f"Rician factor for {link} must be >= 0")
        pts = [self.bs_pos, self.ris_pos, self.target_pos]
        for i in range(3):
            for j in range(i + 1, 3):
                if _dist(pts[i], pts[j]) <= 0:
                    raise ValueError("BS, RIS and target positions must be distinct")

    def with_seed(self, seed: int) -> "Geometry":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d["seed"] = int(seed)
        return Geometry(**d)

    def users(self, n_users: int, rng: np.random.Generator | None = None) -> np.ndarray:
        if self.user_positions is not None:
            pos = np.asarray(self.user_positions, dtype=float).reshape(-1, 2)
            if pos.shape[0] != n_users:
                raise ValueError(f"{pos.shape[0]} user positions given, config has {n_users} users")
            return pos
        rng = rng if rng is not None else np.random.default_rng(self.seed)
        r = self.user_radius * np.sqrt(rng.uniform(size=n_users))
        t = rng.uniform(0.0, 2 * np.pi, size=n_users)
        return np.asarray(self.user_center) + np.column_stack([r * np.cos(t), r * np.sin(t)])


def _dist(p, q) -> float:
    return float(math.hypot(q[0] - p[0], q[1] - p[1]))


def _angle(p, q) -> float:
    return math.atan2(q[1] - p[1], q[0] - p[0])


def ula_steering(m: int, angle: float, spacing_ratio: float = 0.5) -> np.ndarray:
    if m < 1:
        raise ValueError("element count must be >= 1")
    return np.exp(1j * 2 * np.pi * spacing_ratio * np.arange(m) * np.sin(angle))


def pathloss(d: float, exponent: float, ref_db: float = -30.0) -> float:
    """Linear amplitude gain of a log-distance path."""
    if not d > 0:
        raise ValueError("distance must be positive")
    return math.sqrt(10.0 ** ((ref_db - 10.0 * exponent * math.log10(d)) / 10.0))


def _rician(rng, k_factor: float, los: np.ndarray) -> np.ndarray:
    if math.isinf(k_factor):
        return los
    nlos = crandn(rng, *los.shape)
    return math.sqrt(k_factor / (k_factor + 1.0)) * los + math.sqrt(1.0 / (k_factor + 1.0)) * nlos


def synth_channels(cfg: SystemConfig, geometry: Geometry) -> ChannelSet:
    """Draw one channel realization; bit-identical for a fixed ``geometry.seed``."""
    rng = np.random.default_rng(geometry.seed)
    n, k, m = cfg.n_bs, cfg.n_users, cfg.n_ris
    ex, kf, ref, sp = geometry.exponents, geometry.rician_k, geometry.pathloss_ref, geometry.spacing_ratio
    users = geometry.users(k, rng)
    bs, ris, tgt = geometry.bs_pos, geometry.ris_pos, geometry.target_pos

    # BS -> RIS
    los_g = np.outer(ula_steering(m, _angle(ris, bs), sp), ula_steering(n, _angle(bs, ris), sp))
    g_mat = pathloss(_dist(bs, ris), ex["bs_ris"], ref) * _rician(rng, kf["bs_ris"], los_g)

    h_d = np.empty((k, n), dtype=complex)
    h_r = np.empty((k, m), dtype=complex)
    for i, up in enumerate(users):
        los_d = ula_steering(n, _angle(bs, up), sp)
        h_d[i] = pathloss(_dist(bs, up), ex["bs_user"], ref) * _rician(rng, kf["bs_user"], los_d)
        los_r = ula_steering(m, _angle(ris, up), sp)
        h_r[i] = pathloss(_dist(ris, up), ex["ris_user"], ref) * _rician(rng, kf["ris_user"], los_r)

    los_t = ula_steering(m, _angle(ris, tgt), sp)
    h_rt = pathloss(_dist(ris, tgt), ex["ris_target"], ref) * _rician(rng, kf["ris_target"], los_t)
    return ChannelSet(h_d=h_d, g_mat=g_mat, h_r=h_r, h_rt=h_rt)
