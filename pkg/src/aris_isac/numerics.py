"""Shared linear-algebra kernels.

Hermitian / generalized eigenproblems, Kronecker-structured operators acting on
``x = phi (x) phi``, and the complex-to-real embeddings used when complex
decision variables are handed to the (purely real) conic layer.

Conventions
-----------
* ``vec`` is column-major (Fortran order), as in ``vec{[a_1, ..., a_n]}``.
* ``np.kron(phi, phi)`` is used for ``x``; since ``phi phi^T`` is symmetric the
  row- and column-major vectorizations coincide for that vector.
* Real embeddings of a complex vector are stacked, ``[Re v; Im v]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

DENSE_EIG_LIMIT = 4096


def herm(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def _check_hermitian(h: np.ndarray, atol: float = 1e-10) -> None:
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    if np.max(np.abs(h - herm(h)), initial=0.0) > atol * scale:
        raise ValueError("matrix is not Hermitian within tolerance")


def herm_max_eigpair(h: np.ndarray) -> tuple[float, np.ndarray]:
    """Largest eigenvalue of a Hermitian matrix and a unit-norm eigenvector."""
    h = np.asarray(h)
    _check_hermitian(h)
    vals, vecs = np.linalg.eigh(0.5 * (h + herm(h)))
    return float(vals[-1]), vecs[:, -1]


def gen_rayleigh_max(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """Maximize ``u^H a u / u^H b u`` for Hermitian PSD ``a`` and PD ``b``.

    Whitens with the Cholesky factor of ``b`` and solves a Hermitian
    eigenproblem, so ``b^{-1} a`` is never formed. Returns the optimal value and
    a unit-norm maximizer.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    _check_hermitian(a)
    _check_hermitian(b)
    try:
        low = np.linalg.cholesky(0.5 * (b + herm(b)))
    except np.linalg.LinAlgError as exc:
        raise ValueError("denominator matrix is not positive definite") from exc
    # cond check: cholesky can succeed on numerically singular input
    diag = np.abs(np.diag(low))
    if diag.min() <= 1e-14 * diag.max():
        raise ValueError("denominator matrix is singular within tolerance")
    tmp = sla.solve_triangular(low, a, lower=True)
    whitened = sla.solve_triangular(low, herm(tmp), lower=True)
    whitened = 0.5 * (whitened + herm(whitened))
    vals, vecs = np.linalg.eigh(whitened)
    u = sla.solve_triangular(herm(low), vecs[:, -1], lower=False)
    return float(vals[-1]), u / np.linalg.norm(u)


def vec(a: np.ndarray) -> np.ndarray:
    return np.asarray(a).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int) -> np.ndarray:
    return np.asarray(v).reshape(rows, -1, order="F")


def vec_kron_trace_check(a, b, c, d) -> float:
    """|Tr{ABCD} - vec^H{D^H} (C^T kron A) vec{B}|, a self-test of the vec plumbing."""
    a, b, c, d = (np.atleast_2d(np.asarray(m, dtype=complex)) for m in (a, b, c, d))
    lhs = np.trace(a @ b @ c @ d)
    rhs = vec(herm(d)).conj() @ (np.kron(c.T, a) @ vec(b))
    return float(abs(lhs - rhs))


def real_embed(f_tilde: np.ndarray) -> np.ndarray:
    """Real symmetric-form matrix with ``pb^T F pb = Re{phi^H F~ phi^*}``.

    ``pb = [Re phi; Im phi]``.
    """
    f_tilde = np.asarray(f_tilde, dtype=complex)
    if f_tilde.ndim != 2 or f_tilde.shape[0] != f_tilde.shape[1]:
        raise ValueError("real_embed expects a square matrix")
    re, im = f_tilde.real, f_tilde.imag
    return np.block([[re, im], [im, -re]])


@dataclass(frozen=True)
class RealEmbedding:
    phi_bar: np.ndarray
    f_bar: np.ndarray

    @classmethod
    def of(cls, phi: np.ndarray, f_tilde: np.ndarray) -> "RealEmbedding":
        return cls(stack_real(phi), real_embed(f_tilde))

    def quad(self) -> float:
        return float(self.phi_bar @ self.f_bar @ self.phi_bar)


def stack_real(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag])


def unstack_real(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    n = z.size // 2
    return z[:n] + 1j * z[n:]


def realify(c: np.ndarray) -> np.ndarray:
    """Real matrix mapping ``[Re w; Im w]`` to ``[Re(Cw); Im(Cw)]``."""
    c = np.atleast_2d(np.asarray(c, dtype=complex))
    re, im = c.real, c.imag
    return np.block([[re, -im], [im, re]])


def real_linear_form(c: np.ndarray) -> np.ndarray:
    """Row ``r`` with ``r @ [Re w; Im w] = Re{c^T w}``."""
    c = np.asarray(c, dtype=complex)
    return np.concatenate([c.real, -c.imag])


def herm_real_form(h: np.ndarray) -> np.ndarray:
    """Real symmetric ``Q`` with ``pb^T Q pb = phi^H H phi`` for Hermitian ``H``."""
    h = np.asarray(h, dtype=complex)
    re, im = h.real, h.imag
    q = np.block([[re, -im], [im, re]])
    return 0.5 * (q + q.T)


def max_eig_sym(s: np.ndarray) -> float:
    s = np.asarray(s, dtype=float)
    if s.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(0.5 * (s + s.T))[-1])


def power_max_eig(matvec, dim: int, shift: float, tol: float = 1e-9,
                  max_iter: int = 500, seed: int = 0) -> float:
    """Largest eigenvalue of a Hermitian operator by shifted power iteration.

    ``shift`` must make ``op + shift*I`` PSD with the wanted eigenvalue dominant
    (``shift >= -lambda_min``); the trace or a norm bound is a safe choice.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        y = matvec(v) + shift * v
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return -shift
        new = float(np.real(np.vdot(v, y)))
        v = y / ny
        if abs(new - lam) <= tol * max(1.0, abs(new)):
            lam = new
            break
        lam = new
    return lam - shift


def operator_max_eig(matvec, dim: int, shift: float, dense=None) -> float:
    """Max eigenvalue of a Hermitian operator: dense solve when small enough."""
    if dim <= DENSE_EIG_LIMIT:
        mat = dense() if dense is not None else np.column_stack(
            [matvec(e) for e in np.eye(dim, dtype=complex)])
        return float(np.linalg.eigvalsh(0.5 * (mat + herm(mat)))[-1])
    return power_max_eig(matvec, dim, shift)


@dataclass(frozen=True)
class KronOp:
    """Hermitian operator ``left (x) right`` applied without materializing it.

    Acts on length-``m*n`` vectors; for ``x = kron(a, b)``
    ``(L (x) R) x = kron(L a, R b)`` and ``x^H (L (x) R) x = (a^H L a)(b^H R b)``.
    """

    left: np.ndarray
    right: np.ndarray

    @property
    def dim(self) -> int:
        return self.left.shape[0] * self.right.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        mx = np.asarray(x).reshape(self.left.shape[1], self.right.shape[1])
        return (self.left @ mx @ self.right.T).reshape(-1)

    def quad_kron(self, phi: np.ndarray) -> float:
        """``x^H op x`` for ``x = phi (x) phi``."""
        return float(np.real(np.vdot(phi, self.left @ phi) * np.vdot(phi, self.right @ phi)))

    def quad(self, x: np.ndarray) -> float:
        return float(np.real(np.vdot(x, self.matvec(x))))

    def dense(self) -> np.ndarray:
        return np.kron(self.left, self.right)

    def eigvals(self) -> np.ndarray:
        el = np.linalg.eigvalsh(0.5 * (self.left + herm(self.left)))
        er = np.linalg.eigvalsh(0.5 * (self.right + herm(self.right)))
        return np.outer(el, er).ravel()

    def max_eig(self) -> float:
        return float(self.eigvals().max())

    def trace(self) -> float:
        return float(np.real(np.trace(self.left) * np.trace(self.right)))

    def scaled(self, alpha: float) -> "KronOp":
        return KronOp(alpha * self.left, self.right)
