"""Semantic view-order ranking constraint.

Cosine similarities of each non-frontal view embedding to the frontal (0°)
anchor should decay with azimuth. Violations are penalized by a hinge over
adjacent pairs,

    loss = Σ_i max(0, s_{i+1} − s_i + δ),

which is zero exactly when every adjacent similarity drop is at least ``δ``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateEmbedding,
    DimMismatch,
    InvalidCoefficient,
    InvalidInput,
    InvalidMargin,
)

DEFAULT_MARGIN = 0.05


@dataclass(frozen=True)
class NoiseScheduleCoeffs:
    alpha_t: float
    sigma_t: float
    t: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.alpha_t) and self.alpha_t > 0):
            raise InvalidCoefficient(f"alpha_t must be positive, got {self.alpha_t!r}")
        if not (np.isfinite(self.sigma_t) and self.sigma_t >= 0):
            raise InvalidCoefficient(f"sigma_t must be non-negative, got {self.sigma_t!r}")


def estimate_clean_latent(z_t, eps_pred, coeffs: NoiseScheduleCoeffs) -> np.ndarray:
    """One-step clean-latent estimate ``(z_t − σ_t ε̂) / α_t``."""
    z = np.asarray(z_t, dtype=np.float64)
    e = np.asarray(eps_pred, dtype=np.float64)
    if z.shape != e.shape:
        raise DimMismatch(f"z_t shape {z.shape} != eps_pred shape {e.shape}")
    return (z - coeffs.sigma_t * e) / coeffs.alpha_t


def _normalize_rows(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(raw, axis=1)
    if np.any(norms == 0):
        bad = int(np.flatnonzero(norms == 0)[0])
        raise DegenerateEmbedding(f"embedding row {bad} has zero norm")
    return raw / norms[:, None], norms


@dataclass(frozen=True)
class ViewEmbeddingSequence:
    """Reference embedding plus the azimuth-sorted remaining views.

    Raw (pre-normalization) vectors are kept alongside the unit vectors so
    gradients can be taken with respect to the raw parameters. Row 0 of
    ``raw`` is the 0° reference.
    """

    raw: np.ndarray
    azimuths: tuple[float, ...]

    def __post_init__(self):
        raw = np.array(self.raw, dtype=np.float64)
        if raw.ndim != 2 or raw.shape[0] < 2:
            raise DimMismatch(f"need a reference and at least one view, got shape {raw.shape}")
        if not np.all(np.isfinite(raw)):
            raise InvalidInput("embeddings contain non-finite values")
        az = tuple(float(a) for a in self.azimuths)
        if len(az) != raw.shape[0] - 1:
            raise DimMismatch(f"{len(az)} azimuths for {raw.shape[0] - 1} non-reference views")
        if az[0] <= 0:
            raise InvalidInput("sequence azimuths must be > 0; the 0° view is the reference")
        if any(b <= a for a, b in zip(az, az[1:])):
            raise InvalidInput("sequence azimuths must be strictly increasing")
        unit, norms = _normalize_rows(raw)
        for a in (raw, unit, norms):
            a.setflags(write=False)
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "azimuths", az)
        object.__setattr__(self, "_unit", unit)
        object.__setattr__(self, "_norms", norms)

    @classmethod
    def from_parts(cls, ref, seq: Sequence, azimuths: Sequence[float]) -> "ViewEmbeddingSequence":
        return cls(np.vstack([np.asarray(ref, dtype=np.float64)[None], np.asarray(seq, dtype=np.float64)]),
                   tuple(azimuths))

    @property
    def ref(self) -> np.ndarray:
        return self._unit[0]

    @property
    def seq(self) -> np.ndarray:
        return self._unit[1:]

    @property
    def norms(self) -> np.ndarray:
        return self._norms

    def __len__(self) -> int:
        return self.raw.shape[0] - 1


@dataclass(frozen=True)
class SvoResult:
    loss: float
    per_term: np.ndarray
    sims: np.ndarray


def similarities(vs: ViewEmbeddingSequence) -> np.ndarray:
    return vs.seq @ vs.ref


def _check_margin(delta: float) -> None:
    if not (np.isfinite(delta) and delta >= 0):
        raise InvalidMargin(f"margin must be a non-negative number, got {delta!r}")


def hinge_arguments(sims, delta: float) -> np.ndarray:
    s = np.asarray(sims, dtype=np.float64)
    return s[1:] - s[:-1] + delta


def svo_loss(sims, delta: float = DEFAULT_MARGIN) -> SvoResult:
    _check_margin(delta)
    s = np.asarray(sims, dtype=np.float64).reshape(-1)
    if s.size < 1:
        raise InvalidInput("need at least one similarity")
    per_term = np.maximum(0.0, hinge_arguments(s, delta))
    return SvoResult(loss=float(per_term.sum()), per_term=per_term, sims=s)


def min_adjacent_gap(sims) -> float:
    """Smallest ``s_i − s_{i+1}``; +inf for a single view."""
    s = np.asarray(sims, dtype=np.float64)
    if s.size < 2:
        return float("inf")
    return float(np.min(s[:-1] - s[1:]))


def svo_grad(vs: ViewEmbeddingSequence, delta: float = DEFAULT_MARGIN) -> np.ndarray:
    """Subgradient of the hinge loss with respect to the raw embeddings.

    Returns an array shaped like ``vs.raw`` (row 0 is the reference). Only
    hinge terms with a strictly positive argument contribute; at an exact tie
    the subgradient is taken as zero.
    """
    _check_margin(delta)
    if np.any(vs.norms == 0):
        raise DegenerateEmbedding("zero-norm embedding")
    s = similarities(vs)
    active = (hinge_arguments(s, delta) > 0).astype(np.float64)
    # dloss/ds: +1 on the farther view, −1 on the nearer view of each active pair
    d_s = np.zeros_like(s)
    d_s[1:] += active
    d_s[:-1] -= active

    ref, seq, norms = vs.ref, vs.seq, vs.norms
    grad = np.zeros_like(vs.raw)
    # ∂s_i/∂u_i = (v_ref − s_i v_i)/‖u_i‖ ; ∂s_i/∂u_ref = (v_i − s_i v_ref)/‖u_ref‖
    grad[1:] = d_s[:, None] * (ref[None, :] - s[:, None] * seq) / norms[1:, None]
    grad[0] = (d_s[:, None] * (seq - s[:, None] * ref[None, :])).sum(axis=0) / norms[0]
    return grad


def svo_loss_from_raw(raw, azimuths, delta: float = DEFAULT_MARGIN) -> float:
    """Convenience scalar loss of raw embeddings, used as a finite-difference target."""
    vs = ViewEmbeddingSequence(np.asarray(raw), tuple(azimuths))
    return svo_loss(similarities(vs), delta).loss
