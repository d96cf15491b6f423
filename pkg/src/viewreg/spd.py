"""Spectral calculus on symmetric and SPD matrices.

Everything here goes through one symmetric eigensolver (LAPACK ``syevd`` via
:func:`numpy.linalg.eigh`) in double precision. Matrix functions are applied
on the spectrum, ``f(C) = U f(Λ) Uᵀ``, and the derivative of the matrix
logarithm uses the Daleckii-Krein formula with first divided differences of
``log`` on the eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, InvalidInput, NotPositiveDefinite, NumericOverflow

# Relative floor on the spectrum: λ_min must exceed PD_RTOL * λ_max.
PD_RTOL = 1e-14
# |λ_i - λ_j| below this fraction of max(λ_i, λ_j) counts as a repeated eigenvalue.
DEGENERATE_RTOL = 1e-12
# exp overflows float64 just above 709.78.
EXP_MAX = 709.0


def _as_array(m) -> np.ndarray:
    if isinstance(m, SymMatrix):
        return m.entries
    return np.asarray(m, dtype=np.float64)


class SymMatrix:
    """Immutable dense symmetric matrix.

    The input is symmetrized as ``(M + Mᵀ)/2`` on construction, so small
    round-off asymmetry from upstream arithmetic is tolerated.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries):
        a = np.array(_as_array(entries), dtype=np.float64)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise DimMismatch(f"expected a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidInput("matrix has non-finite entries")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self._entries = a

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._entries.copy()
        return self._entries.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, SymMatrix):
            return NotImplemented
        return np.array_equal(self._entries, other._entries)

    def __hash__(self):
        return hash(self._entries.tobytes())

    def __repr__(self):
        return f"{type(self).__name__}({self._entries.tolist()!r})"


class SpdMatrix(SymMatrix):
    """Symmetric matrix whose spectrum is verified strictly positive.

    The check is relative: ``λ_min > 1e-14 * λ_max``. Anything below that is
    indistinguishable from singular in double precision and is rejected with
    :class:`NotPositiveDefinite` rather than clamped.
    """

    __slots__ = ()

    def __init__(self, entries):
        super().__init__(entries)
        w = np.linalg.eigvalsh(self._entries)
        _check_pd(w)


def _check_pd(eigvals: np.ndarray) -> None:
    lo, hi = eigvals[0], eigvals[-1]
    if not (hi > 0 and lo > PD_RTOL * hi):
        raise NotPositiveDefinite(
            f"smallest eigenvalue {float(lo)!r} is not positive relative to largest {float(hi)!r}"
        )


@dataclass(frozen=True)
class SpectralFactorization:
    eigvals: np.ndarray  # ascending
    eigvecs: np.ndarray  # columns are eigenvectors

    def reconstruct(self) -> np.ndarray:
        return (self.eigvecs * self.eigvals) @ self.eigvecs.T

    def apply(self, fn) -> np.ndarray:
        """``U fn(Λ) Uᵀ`` symmetrized."""
        out = (self.eigvecs * fn(self.eigvals)) @ self.eigvecs.T
        return 0.5 * (out + out.T)


def sym_eig(m) -> SpectralFactorization:
    """Eigendecomposition of a symmetric matrix.

    Eigenvalues come back ascending. Each eigenvector is signed so its first
    component of non-negligible magnitude is positive, which makes the output
    a deterministic function of the input.
    """
    a = _as_array(m)
    if not np.all(np.isfinite(a)):
        raise InvalidInput("matrix has non-finite entries")
    if not isinstance(m, SymMatrix):
        a = SymMatrix(a).entries
    w, v = np.linalg.eigh(a)
    v = np.array(v)
    significant = np.abs(v) > 1e-12
    first = np.argmax(significant, axis=0)
    signs = np.sign(v[first, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    v *= signs
    w.setflags(write=False)
    v.setflags(write=False)
    return SpectralFactorization(eigvals=w, eigvecs=v)


def _spd_factor(c) -> SpectralFactorization:
    f = sym_eig(c)
    if f.eigvals[0] <= 0:
        raise NotPositiveDefinite(f"eigenvalue {float(f.eigvals[0])!r} is not positive")
    return f


def spd_log(c: SpdMatrix) -> SymMatrix:
    """Principal matrix logarithm of an SPD matrix."""
    return SymMatrix(_spd_factor(c).apply(np.log))


def spd_exp(s: SymMatrix) -> SpdMatrix:
    """Matrix exponential of a symmetric matrix (always SPD)."""
    f = sym_eig(s)
    if f.eigvals[-1] > EXP_MAX:
        raise NumericOverflow(f"eigenvalue {float(f.eigvals[-1])!r} overflows exp")
    return SpdMatrix(f.apply(np.exp))


def _shifted_factor(m, eps: float) -> SpectralFactorization:
    """Factor ``m + εI``, requiring it to be strictly positive definite."""
    if not (eps >= 0):
        raise InvalidInput(f"eps must be non-negative, got {eps!r}")
    a = _as_array(m)
    if eps:
        a = a + eps * np.eye(a.shape[0])
    f = sym_eig(a)
    _check_pd(f.eigvals)
    return f


def _log_pair(a, b, eps: float) -> tuple[SpectralFactorization, np.ndarray]:
    a_arr, b_arr = _as_array(a), _as_array(b)
    if a_arr.shape != b_arr.shape:
        raise DimMismatch(f"shapes differ: {a_arr.shape} vs {b_arr.shape}")
    fa = _shifted_factor(a_arr, eps)
    diff = fa.apply(np.log) - _shifted_factor(b_arr, eps).apply(np.log)
    return fa, diff


def lem_distance_sq(a, b, eps: float = 0.0) -> float:
    """Squared Log-Euclidean distance ``‖log(A+εI) − log(B+εI)‖²_F``.

    ``a`` and ``b`` only need to be symmetric; positive definiteness is
    required after the ``εI`` shift.
    """
    _, diff = _log_pair(a, b, eps)
    return float(np.sum(diff * diff))


def log_divided_differences(eigvals: np.ndarray) -> np.ndarray:
    """First divided differences of ``log`` on a spectrum.

    ``G[i, j] = (log λ_i − log λ_j) / (λ_i − λ_j)``, with the limit ``1/λ_i``
    when the two eigenvalues coincide to 1e-12 relative.
    """
    lam = np.asarray(eigvals, dtype=np.float64)
    li, lj = lam[:, None], lam[None, :]
    diff = li - lj
    close = np.abs(diff) < DEGENERATE_RTOL * np.maximum(li, lj)
    safe = np.where(close, 1.0, diff)
    # log1p form keeps accuracy when λ_i ≈ λ_j but outside the degenerate band
    g = np.log1p(safe / lj) / safe
    return np.where(close, 1.0 / li, g)


def _frechet(f: SpectralFactorization, w: np.ndarray) -> np.ndarray:
    u = f.eigvecs
    out = u @ (log_divided_differences(f.eigvals) * (u.T @ w @ u)) @ u.T
    return 0.5 * (out + out.T)


def logm_frechet_adjoint(c: SpdMatrix, w) -> SymMatrix:
    """Fréchet derivative of ``log`` at ``c`` applied to symmetric ``w``.

    Computes ``U (G ∘ (Uᵀ W U)) Uᵀ``. The operator is self-adjoint under the
    Frobenius inner product, so the same call gives both the directional
    derivative ``Dlog(c)[w]`` and its adjoint (the backward pass).
    """
    f = _spd_factor(c)
    w_arr = _as_array(w)
    if w_arr.shape != (f.eigvals.size, f.eigvals.size):
        raise DimMismatch(f"w has shape {w_arr.shape}, expected {(f.eigvals.size,) * 2}")
    return SymMatrix(_frechet(f, 0.5 * (w_arr + w_arr.T)))


def lem_value_and_grad(c_curr, c_tgt, eps: float = 0.0) -> tuple[float, SymMatrix]:
    """:func:`lem_distance_sq` and :func:`grad_r_spd` from one factorization each."""
    fa, diff = _log_pair(c_curr, c_tgt, eps)
    return float(np.sum(diff * diff)), SymMatrix(2.0 * _frechet(fa, diff))


def grad_r_spd(c_curr, c_tgt, eps: float = 0.0) -> SymMatrix:
    """Gradient of :func:`lem_distance_sq` with respect to ``c_curr``.

    ``2 · Dlog(C+εI)[log(C+εI) − log(T+εI)]``, taken over the full entry grid
    and returned symmetric.
    """
    return lem_value_and_grad(c_curr, c_tgt, eps)[1]


def random_spd(rng: np.random.Generator, dim: int, cond: float = 10.0) -> np.ndarray:
    """Random SPD matrix with log-uniform spectrum in ``[1, cond]``."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    lam = np.exp(rng.uniform(0.0, np.log(cond), size=dim))
    out = (q * lam) @ q.T
    return 0.5 * (out + out.T)


def random_orthogonal(rng: np.random.Generator, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))
