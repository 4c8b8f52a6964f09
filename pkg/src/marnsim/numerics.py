"""Small dense complex-matrix kernel used by the rest of the simulator.

Matrices are plain complex numpy arrays.  Everything here operates on
matrices of at most a few dozen rows (stacked 2x2 Alamouti blocks), so
clarity wins over BLAS-level tuning.  Most helpers accept stacked inputs
(leading batch axes) so the Monte Carlo driver can vectorize trials.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "UsageError",
    "NumericError",
    "Projector",
    "dagger",
    "is_alamouti",
    "null_space_projector",
    "hermitian_solve",
    "matrix_inversion_lemma_check",
]

# Singular values / pivots below RANK_TOL * (largest value) count as zero.
RANK_TOL = 1e-10


class UsageError(ValueError):
    """Caller violated a precondition (bad shape, unsupported parameter)."""


class NumericError(ArithmeticError):
    """Input was numerically degenerate (singular, non-finite)."""


def dagger(a):
    """Conjugate transpose, batched over leading axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def is_alamouti(m, tol: float = 1e-10) -> bool:
    """True iff ``m`` is 2x2 of the form [[a, -conj(b)], [b, conj(a)]].

    The sign convention is fixed: the conjugates sit in the second column.
    """
    m = np.asarray(m, dtype=complex)
    if m.shape != (2, 2):
        raise UsageError(f"expected a 2x2 matrix, got shape {m.shape}")
    scale = max(float(np.abs(m).max()), 1.0)
    return (
        abs(m[0, 1] + np.conj(m[1, 0])) <= tol * scale
        and abs(m[1, 1] - np.conj(m[0, 0])) <= tol * scale
    )


@dataclass(frozen=True)
class Projector:
    """An orthogonal projector (Hermitian and idempotent)."""

    matrix: np.ndarray

    def check(self, tol: float = 1e-10) -> None:
        p = self.matrix
        scale = max(float(np.linalg.norm(p)), 1e-300)
        if np.linalg.norm(p @ p - p) > tol * scale:
            raise NumericError("projector is not idempotent")
        if np.linalg.norm(p - dagger(p)) > tol * scale:
            raise NumericError("projector is not Hermitian")

    @property
    def rank(self) -> int:
        return int(round(np.real(np.trace(self.matrix))))


def null_space_projector(columns) -> Projector:
    """Projector onto the orthogonal complement of the column space.

    Rank deficiency (repeated or dependent columns) is handled through an
    SVD with a relative drop tolerance, so nearly-parallel channel draws
    do not blow up the projector.
    """
    a = np.atleast_2d(np.asarray(columns, dtype=complex))
    if a.ndim != 2:
        raise UsageError("columns must be a 2-D array")
    n, k = a.shape
    if k >= n:
        raise UsageError(f"need fewer columns than rows, got {n}x{k}")
    if not np.all(np.isfinite(a)):
        raise NumericError("non-finite entries in columns")
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    keep = s > RANK_TOL * (s[0] if s.size else 0.0)
    basis = u[:, keep]
    p = np.eye(n, dtype=complex) - basis @ dagger(basis)
    # Symmetrize away the last few ulps so the invariant checks are exact.
    p = 0.5 * (p + dagger(p))
    return Projector(p)


def hermitian_solve(a, b, return_loaded: bool = False):
    """Solve ``a @ x = b`` for Hermitian positive-definite ``a``.

    Uses a Cholesky factorization.  If the matrix is close to singular
    (smallest pivot under 1e-12 of the largest) a diagonal loading of
    ``1e-12 * trace(a)/n`` is applied and reported via the second return
    value when ``return_loaded`` is set.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise UsageError(f"matrix must be square, got {a.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NumericError("non-finite input")
    scale = float(np.abs(a).max())
    if np.abs(a - dagger(a)).max() > 1e-8 * max(scale, 1e-300):
        raise UsageError("matrix is not Hermitian")
    a = 0.5 * (a + dagger(a))
    n = a.shape[0]
    loaded = False
    try:
        c = np.linalg.cholesky(a)
        piv = np.real(np.diag(c)) ** 2
        if piv.min() < 1e-12 * piv.max():
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        load = 1e-12 * max(np.real(np.trace(a)) / n, 1e-300)
        c = np.linalg.cholesky(a + load * np.eye(n))
        loaded = True
    y = np.linalg.solve(c, b if b.ndim > 1 else b[:, None])
    x = np.linalg.solve(dagger(c), y)
    if b.ndim == 1:
        x = x[:, 0]
    if return_loaded:
        return x, loaded
    return x


def solve_psd_stack(a, b):
    """Batched Hermitian-PD solve with a loading fallback.

    ``a`` has shape (..., n, n) and ``b`` (..., n, k) or (..., n).  Used on
    the Monte Carlo hot path where an occasional deep-fade draw makes a
    covariance nearly singular; such draws get diagonally loaded rather
    than aborting the whole batch.
    """
    a = np.asarray(a, dtype=complex)
    vec = b.ndim == a.ndim - 1
    if vec:
        b = b[..., None]
    n = a.shape[-1]
    try:
        x = np.linalg.solve(a, b)
        ok = np.all(np.isfinite(x))
    except np.linalg.LinAlgError:
        ok = False
    if not ok:
        tr = np.einsum("...ii->...", a).real / n
        load = 1e-12 * np.maximum(tr, 1e-300)
        a = a + load[..., None, None] * np.eye(n)
        x = np.linalg.solve(a, b)
    return x[..., 0] if vec else x


def matrix_inversion_lemma_check(bb, g, s: float) -> float:
    """Scalar SNR of a rank-augmented whitened quadratic form, two ways.

    Evaluates ``gamma = s*y / (s + y)`` with ``y`` the first diagonal entry
    of ``g^H bb^{-1} g`` -- the expanded form of
    ``g_1^H (bb + g g^H / s)^{-1} g_1``.  Exists purely as a cross-check
    oracle for the closed-form SNR expressions; the equality requires the
    2x2 blocks of ``g`` to carry Alamouti structure.
    """
    bb = np.asarray(bb, dtype=complex)
    g = np.atleast_2d(np.asarray(g, dtype=complex))
    if g.shape[0] == 1 and bb.shape[0] != 1:
        g = g.T
    if not np.all(np.isfinite(bb)):
        raise NumericError("non-finite input")
    try:
        w = hermitian_solve(bb, g)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericError("singular bb") from exc
    q = dagger(g) @ w
    y = float(np.real(q[0, 0]))
    if y == 0.0:
        return 0.0
    return s * y / (s + y)
