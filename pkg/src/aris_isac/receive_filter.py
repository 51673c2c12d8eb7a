"""Receive-filter update: generalized Rayleigh quotient in closed form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .model import ChannelSet, SystemConfig, radar_cascade, radar_noise_matrix
from .numerics import gen_rayleigh_max


@dataclass(frozen=True)
class FilterMatrices:
    a_mat: np.ndarray
    b_mat: np.ndarray
    a_factor: np.ndarray   # a_mat = a_factor a_factor^H (rank one)


@dataclass(frozen=True)
class FilterUpdate:
    u: np.ndarray
    value: float          # rcs_var * u^H A u / u^H B u
    zero_snr: bool


def build_filter_matrices(cfg: SystemConfig, ch: ChannelSet, w_mat: np.ndarray,
                          phi: np.ndarray) -> FilterMatrices:
    casc = radar_cascade(ch, phi)
    # H_t = v v^T with v = G^T Phi h_rt, so A = ||W^T v||^2 v v^H
    v = ch.g_mat.T @ (phi * ch.h_rt)
    factor = v * np.linalg.norm(w_mat.T @ v)
    a_mat = np.outer(factor, factor.conj())
    b_mat = radar_noise_matrix(cfg, casc)
    b_mat = 0.5 * (b_mat + b_mat.conj().T)
    return FilterMatrices(a_mat, b_mat, factor)


def update_filter(fm: FilterMatrices, rcs_var: float, method: str = "rank1") -> FilterUpdate:
    """Globally optimal receive filter, unit norm.

    ``method="rank1"`` uses ``u ~ B^{-1} a`` (exact since A is rank one);
    ``method="eig"`` runs the generic generalized eigensolver.
    """
    n = fm.b_mat.shape[0]
    if not np.any(fm.a_factor) or rcs_var == 0:
        u = np.zeros(n, dtype=complex)
        u[0] = 1.0
        return FilterUpdate(u, 0.0, True)
    if method == "rank1":
        cho = sla.cho_factor(fm.b_mat, lower=True)
        u = sla.cho_solve(cho, fm.a_factor)
        val = float(np.real(np.vdot(fm.a_factor, u)))
        u = u / np.linalg.norm(u)
    elif method == "eig":
        val, u = gen_rayleigh_max(fm.a_mat, fm.b_mat)
    else:
        raise ValueError(f"unknown method {method!r}")
    return FilterUpdate(u, rcs_var * val, False)


def optimal_filter(cfg: SystemConfig, ch: ChannelSet, w_mat: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return update_filter(build_filter_matrices(cfg, ch, w_mat, phi), cfg.rcs_var).u
