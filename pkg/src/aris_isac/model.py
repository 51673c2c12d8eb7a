"""Signal model of the active-RIS-assisted ISAC system.

Shapes: ``N`` BS antennas, ``K`` users, ``M`` RIS elements, ``L = K + N``
beamformer columns (``W = [W_c W_r]``, ``N x L``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def dbm_to_watt(p_dbm: float) -> float:
    return float(10.0 ** ((p_dbm - 30.0) / 10.0))


def watt_to_dbm(p_w: float) -> float:
    return float(10.0 * np.log10(p_w) + 30.0)


def db_to_lin(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def lin_to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(x, dtype=float))


class InfeasibleError(RuntimeError):
    """A scenario or subproblem admits no feasible point; ``report`` holds diagnostics."""

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report or {}


@dataclass(frozen=True)
class SystemConfig:
    """Scalar scenario parameters, all in linear units (watts, ratios).

    ``p_ris`` may be ``inf`` (constraint dropped) and ``sigma2_z`` may be 0;
    both are needed for the passive-RIS baseline.
    """

    n_bs: int
    n_users: int
    n_ris: int
    p_bs: float
    p_ris: float
    sigma2_z: float
    sigma2_r: float
    sigma2_user: np.ndarray
    gamma_targets: np.ndarray
    a_max: float
    rcs_var: float = 1.0

    def __post_init__(self):
        for name in ("n_bs", "n_users", "n_ris"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        k = int(self.n_users)
        s2u = np.broadcast_to(np.asarray(self.sigma2_user, dtype=float), (k,)).copy()
        gam = np.broadcast_to(np.asarray(self.gamma_targets, dtype=float), (k,)).copy()
        object.__setattr__(self, "sigma2_user", s2u)
        object.__setattr__(self, "gamma_targets", gam)
        if not self.p_bs >= 0:
            raise ValueError("p_bs must be >= 0")
        if not self.p_ris > 0:
            raise ValueError("p_ris must be > 0")
        if not self.sigma2_z >= 0:
            raise ValueError("sigma2_z must be >= 0")
        if not self.sigma2_r > 0:
            raise ValueError("sigma2_r must be > 0")
        if not np.all(s2u > 0):
            raise ValueError("sigma2_user entries must be > 0")
        if not np.all(gam >= 0):
            raise ValueError("gamma_targets entries must be >= 0")
        if not self.a_max > 0:
            raise ValueError("a_max must be > 0")
        if not self.rcs_var >= 0:
            raise ValueError("rcs_var must be >= 0")

    @property
    def n_cols(self) -> int:
        return self.n_users + self.n_bs

    def replace(self, **changes) -> "SystemConfig":
        fields = {f: getattr(self, f) for f in self.__dataclass_fields__}
        fields.update(changes)
        return SystemConfig(**fields)


@dataclass(frozen=True)
class ChannelSet:
    """``h_d`` (K x N), ``g_mat`` (M x N), ``h_r`` (K x M), ``h_rt`` (M,)."""

    h_d: np.ndarray
    g_mat: np.ndarray
    h_r: np.ndarray
    h_rt: np.ndarray

    def __post_init__(self):
        h_d = np.atleast_2d(np.asarray(self.h_d, dtype=complex))
        g = np.atleast_2d(np.asarray(self.g_mat, dtype=complex))
        h_r = np.atleast_2d(np.asarray(self.h_r, dtype=complex))
        h_rt = np.atleast_1d(np.asarray(self.h_rt, dtype=complex))
        k, n = h_d.shape
        m = g.shape[0]
        if g.shape != (m, n) or h_r.shape != (k, m) or h_rt.shape != (m,):
            raise ValueError(
                f"inconsistent channel shapes h_d{h_d.shape} G{g.shape} "
                f"h_r{h_r.shape} h_rt{h_rt.shape}")
        for arr in (h_d, g, h_r, h_rt):
            if not np.all(np.isfinite(arr)):
                raise ValueError("channel entries must be finite")
        object.__setattr__(self, "h_d", h_d)
        object.__setattr__(self, "g_mat", g)
        object.__setattr__(self, "h_r", h_r)
        object.__setattr__(self, "h_rt", h_rt)

    def check(self, cfg: SystemConfig) -> None:
        if self.h_d.shape != (cfg.n_users, cfg.n_bs) or self.h_rt.shape != (cfg.n_ris,):
            raise ValueError("channel dimensions do not match the system config")


@dataclass(frozen=True)
class RadarCascade:
    h_t: np.ndarray
    h_z0: np.ndarray
    h_z1: np.ndarray


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    radar_snr: float
    residuals: dict


@dataclass
class DesignSolution:
    w_mat: np.ndarray
    phi: np.ndarray
    u: np.ndarray
    radar_snr: float
    user_sinrs: np.ndarray
    trace: list = field(default_factory=list)
    status: str = "ok"
    mode: str = "active_isac"
    converged: bool = False
    diagnostics: dict = field(default_factory=dict)


def composite_channels(ch: ChannelSet, phi: np.ndarray) -> np.ndarray:
    """All composite channels, row ``k`` is ``h_{d,k}^T + h_{r,k}^T diag(phi) G``."""
    phi = np.asarray(phi, dtype=complex)
    if phi.shape != ch.h_rt.shape:
        raise ValueError(f"phi has shape {phi.shape}, expected {ch.h_rt.shape}")
    return ch.h_d + (ch.h_r * phi[None, :]) @ ch.g_mat


def composite_channel(ch: ChannelSet, phi: np.ndarray, k: int) -> np.ndarray:
    if not 0 <= k < ch.h_d.shape[0]:
        raise IndexError(f"user index {k} out of range")
    phi = np.asarray(phi, dtype=complex)
    if phi.shape != ch.h_rt.shape:
        raise ValueError(f"phi has shape {phi.shape}, expected {ch.h_rt.shape}")
    return ch.h_d[k] + (ch.h_r[k] * phi) @ ch.g_mat


def user_sinrs(cfg: SystemConfig, ch: ChannelSet, w_mat: np.ndarray, phi: np.ndarray) -> np.ndarray:
    h = composite_channels(ch, phi)
    gains = np.abs(h @ w_mat) ** 2  # K x L
    k = cfg.n_users
    desired = gains[np.arange(k), np.arange(k)]
    ris_noise = np.sum(np.abs(ch.h_r * phi[None, :]) ** 2, axis=1) * cfg.sigma2_z
    return desired / (gains.sum(axis=1) - desired + ris_noise + cfg.sigma2_user)


def user_sinr(cfg: SystemConfig, ch: ChannelSet, w_mat: np.ndarray, phi: np.ndarray, k: int) -> float:
    if not 0 <= k < cfg.n_users:
        raise IndexError(f"user index {k} out of range")
    return float(user_sinrs(cfg, ch, w_mat, phi)[k])


def radar_cascade(ch: ChannelSet, phi: np.ndarray) -> RadarCascade:
    phi = np.asarray(phi, dtype=complex)
    a = phi * ch.h_rt                       # Phi h_rt
    v = ch.g_mat.T @ a                      # G^T Phi h_rt
    h_t = np.outer(v, a @ ch.g_mat)         # (G^T Phi h_rt)(h_rt^T Phi G)
    h_z0 = np.outer(v, a)
    h_z1 = ch.g_mat.T * phi[None, :]
    return RadarCascade(h_t, h_z0, h_z1)


def radar_noise_matrix(cfg: SystemConfig, casc: RadarCascade) -> np.ndarray:
    n = casc.h_t.shape[0]
    return (cfg.rcs_var * cfg.sigma2_z * casc.h_z0 @ casc.h_z0.conj().T
            + cfg.sigma2_z * casc.h_z1 @ casc.h_z1.conj().T
            + cfg.sigma2_r * np.eye(n))


def radar_snr(cfg: SystemConfig, ch: ChannelSet, w_mat: np.ndarray, phi: np.ndarray, u: np.ndarray) -> float:
    u = np.asarray(u, dtype=complex)
    if not np.any(u):
        raise ValueError("receive filter u must be nonzero")
    casc = radar_cascade(ch, phi)
    num = cfg.rcs_var * np.linalg.norm(w_mat.conj().T @ (casc.h_t.conj().T @ u)) ** 2
    den = np.real(np.vdot(u, radar_noise_matrix(cfg, casc) @ u))
    return float(num / den)


def ris_power_terms(cfg: SystemConfig, ch: ChannelSet, w_mat: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """The four summands of the RIS reflection power, in order."""
    phi = np.asarray(phi, dtype=complex)
    gw = ch.g_mat @ w_mat                       # M x L
    a = phi * ch.h_rt
    echo_row = a @ gw                           # h_rt^T Phi G W, length L
    t1 = np.sum(np.abs(phi[:, None] * gw) ** 2)
    t2 = cfg.rcs_var * np.sum(np.abs(a) ** 2) * np.sum(np.abs(echo_row) ** 2)
    t3 = cfg.rcs_var * cfg.sigma2_z * np.sum(np.abs(a) ** 2) ** 2
    t4 = 2.0 * cfg.sigma2_z * np.sum(np.abs(phi) ** 2)
    return np.array([t1, t2, t3, t4], dtype=float)


def ris_reflect_power(cfg: SystemConfig, ch: ChannelSet, w_mat: np.ndarray, phi: np.ndarray) -> float:
    return float(ris_power_terms(cfg, ch, w_mat, phi).sum())


@dataclass(frozen=True)
class FeasibilityReport:
    bs_power: float          # ||W||_F^2 - P_BS
    ris_power: float         # P(W, phi) - P_RIS
    sinr: np.ndarray         # Gamma_k - gamma_k
    amplitude: np.ndarray    # |phi_m| - a_max
    feasible: bool
    tol: float

    def worst(self) -> dict:
        return {
            "bs_power": self.bs_power,
            "ris_power": self.ris_power,
            "sinr": float(self.sinr.max(initial=-np.inf)),
            "amplitude": float(self.amplitude.max(initial=-np.inf)),
        }


def check_feasibility(cfg: SystemConfig, ch: ChannelSet, w_mat: np.ndarray, phi: np.ndarray,
                      tol: float = 1e-6) -> FeasibilityReport:
    """Per-constraint residuals; positive means violated.

    Power and SINR residuals are judged relative to their budgets/targets,
    the amplitude residual relative to ``a_max``.
    """
    w_mat = np.asarray(w_mat, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    bs = float(np.linalg.norm(w_mat) ** 2 - cfg.p_bs)
    ris = float(ris_reflect_power(cfg, ch, w_mat, phi) - cfg.p_ris)
    sinr = cfg.gamma_targets - user_sinrs(cfg, ch, w_mat, phi)
    amp = np.abs(phi) - cfg.a_max
    ok = (bs <= tol * max(cfg.p_bs, 1e-300)
          and (np.isinf(cfg.p_ris) or ris <= tol * cfg.p_ris)
          and bool(np.all(sinr <= tol * cfg.gamma_targets))
          and bool(np.all(amp <= tol * cfg.a_max)))
    return FeasibilityReport(bs, ris, sinr, amp, ok, tol)


def validate_solution(cfg: SystemConfig, ch: ChannelSet, sol: DesignSolution,
                      tol: float = 1e-6) -> FeasibilityReport:
    return check_feasibility(cfg, ch, sol.w_mat, sol.phi, tol)


def random_unit(rng: np.random.Generator, shape: Sequence[int] | int) -> np.ndarray:
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return v / np.linalg.norm(v)


def crandn(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Circularly-symmetric CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
