"""Extended SPD descriptors from multi-view latent feature maps.

Pipeline: each 4-channel map is compressed to a single luminance channel,
every map is cut into non-overlapping ``d × d`` patches, the flattened
patches of all views are pooled as samples, and their mean and population
covariance are packed into the ``(D+1) × (D+1)`` block matrix

    C = [[Σ + εI + μμᵀ, μ],
         [μᵀ,           1]]

whose Schur complement with respect to the unit corner is ``Σ + εI``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DimMismatch,
    InsufficientSamples,
    InvalidInput,
    ShapeError,
)
from .spd import SpdMatrix

CHANNELS = 4
DEFAULT_PATCH = 4
DEFAULT_EPS = 1e-6


@dataclass(frozen=True)
class LuminanceWeights:
    """Fixed per-channel weights, normalized to sum to one."""

    w: np.ndarray = field(default_factory=lambda: np.full(CHANNELS, 0.25))

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64).reshape(-1)
        if w.size != CHANNELS:
            raise DimMismatch(f"expected {CHANNELS} luminance weights, got {w.size}")
        if not np.all(np.isfinite(w)):
            raise InvalidInput("luminance weights must be finite")
        total = w.sum()
        if total == 0:
            raise InvalidInput("luminance weights sum to zero")
        w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "w", w)


@dataclass(frozen=True)
class FeatureMapStack:
    """``N`` views of ``4 × H × W`` feature maps with their azimuths in degrees."""

    maps: np.ndarray
    azimuths: tuple[float, ...]

    def __post_init__(self):
        maps = np.array(self.maps, dtype=np.float64)
        if maps.ndim != 4:
            raise DimMismatch(f"expected (views, 4, H, W), got shape {maps.shape}")
        if maps.shape[1] != CHANNELS:
            raise DimMismatch(f"expected {CHANNELS} channels, got {maps.shape[1]}")
        if not np.all(np.isfinite(maps)):
            raise InvalidInput("feature maps contain non-finite values")
        az = tuple(float(a) for a in self.azimuths)
        if len(az) != maps.shape[0]:
            raise DimMismatch(f"{len(az)} azimuths for {maps.shape[0]} views")
        if any(not (0.0 <= a < 360.0) for a in az):
            raise InvalidInput("azimuths must lie in [0, 360)")
        if any(b <= a for a, b in zip(az, az[1:])):
            raise InvalidInput("azimuths must be strictly increasing")
        maps.setflags(write=False)
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "azimuths", az)

    @property
    def views(self) -> int:
        return self.maps.shape[0]

    @property
    def height(self) -> int:
        return self.maps.shape[2]

    @property
    def width(self) -> int:
        return self.maps.shape[3]


@dataclass(frozen=True)
class SampleMatrix:
    columns: np.ndarray  # (D, M)
    patch: int

    @property
    def dim_d(self) -> int:
        return self.columns.shape[0]

    @property
    def count_m(self) -> int:
        return self.columns.shape[1]


@dataclass(frozen=True)
class MomentPair:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class ExtendedDescriptor:
    c: SpdMatrix
    eps_used: float
    moments: MomentPair

    @property
    def sigma_reg(self) -> np.ndarray:
        cov = self.moments.cov
        return cov + self.eps_used * np.eye(cov.shape[0])


def luminance_compress(fmap, w: LuminanceWeights | None = None) -> np.ndarray:
    """Weighted channel sum of a ``4 × H × W`` map (or a batch ``N × 4 × H × W``)."""
    w = w or LuminanceWeights()
    f = np.asarray(fmap, dtype=np.float64)
    if f.ndim < 3 or f.shape[-3] != CHANNELS:
        raise DimMismatch(f"expected {CHANNELS} channels, got shape {f.shape}")
    return np.tensordot(w.w, f, axes=([0], [f.ndim - 3]))


def _check_tiling(h: int, w: int, d: int) -> None:
    if d < 1:
        raise ShapeError(f"patch side must be positive, got {d}")
    if h % d or w % d:
        raise ShapeError(f"map size {h}x{w} is not divisible by patch side {d}")


def collect_patches(grays: Sequence[np.ndarray] | np.ndarray, d: int = DEFAULT_PATCH) -> SampleMatrix:
    """Non-overlapping ``d × d`` patches as columns, view-major then row-major."""
    g = np.asarray(grays, dtype=np.float64)
    if g.ndim == 2:
        g = g[None]
    if g.ndim != 3:
        raise DimMismatch(f"expected (views, H, W), got shape {g.shape}")
    n, h, w = g.shape
    _check_tiling(h, w, d)
    blocks = g.reshape(n, h // d, d, w // d, d).transpose(0, 1, 3, 2, 4)
    return SampleMatrix(columns=blocks.reshape(-1, d * d).T.copy(), patch=d)


def scatter_patches(columns: np.ndarray, views: int, h: int, w: int, d: int) -> np.ndarray:
    """Inverse of :func:`collect_patches`: columns back to ``(views, H, W)``."""
    blocks = np.asarray(columns).T.reshape(views, h // d, w // d, d, d)
    return blocks.transpose(0, 1, 3, 2, 4).reshape(views, h, w)


def _ordered_sum(a: np.ndarray) -> np.ndarray:
    # Sorted values in a C-contiguous buffer fix the reduction order, so the
    # result is independent of sample order bit for bit.
    return np.ascontiguousarray(np.sort(a, axis=-1)).sum(axis=-1)


def mean_cov(x: SampleMatrix | np.ndarray) -> MomentPair:
    """Mean and population covariance (divisor ``M``) of the sample columns."""
    cols = x.columns if isinstance(x, SampleMatrix) else np.asarray(x, dtype=np.float64)
    if cols.ndim != 2:
        raise DimMismatch(f"expected a (D, M) sample matrix, got shape {cols.shape}")
    m = cols.shape[1]
    if m < 2:
        raise InsufficientSamples(f"need at least 2 samples, got {m}")
    mu = _ordered_sum(cols) / m
    centered = cols - mu[:, None]
    cov = _ordered_sum(centered[:, None, :] * centered[None, :, :]) / m
    return MomentPair(mean=mu, cov=cov)


def extended_spd(m: MomentPair, eps: float = DEFAULT_EPS) -> ExtendedDescriptor:
    mu = np.asarray(m.mean, dtype=np.float64).reshape(-1)
    cov = np.asarray(m.cov, dtype=np.float64)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(cov))):
        raise InvalidInput("moments contain non-finite values")
    if not (np.isfinite(eps) and eps > 0):
        raise InvalidInput(f"eps must be positive, got {eps!r}")
    dim = mu.size
    if cov.shape != (dim, dim):
        raise DimMismatch(f"covariance shape {cov.shape} does not match mean length {dim}")
    c = np.empty((dim + 1, dim + 1))
    c[:dim, :dim] = cov + eps * np.eye(dim) + np.outer(mu, mu)
    c[:dim, dim] = mu
    c[dim, :dim] = mu
    c[dim, dim] = 1.0
    return ExtendedDescriptor(c=SpdMatrix(c), eps_used=float(eps), moments=MomentPair(mu, cov))


def build_descriptor(
    stack: FeatureMapStack,
    w: LuminanceWeights | None = None,
    d: int = DEFAULT_PATCH,
    eps: float = DEFAULT_EPS,
) -> ExtendedDescriptor:
    return descriptor_from_maps(stack.maps, w, d, eps)


def descriptor_from_maps(maps: np.ndarray, w: LuminanceWeights | None = None,
                         d: int = DEFAULT_PATCH, eps: float = DEFAULT_EPS) -> ExtendedDescriptor:
    """Same as :func:`build_descriptor` but skips the azimuth bookkeeping."""
    grays = luminance_compress(maps, w)
    return extended_spd(mean_cov(collect_patches(grays, d)), eps)


def descriptor_backward(maps: np.ndarray, grad_c, w: LuminanceWeights | None = None,
                        d: int = DEFAULT_PATCH) -> np.ndarray:
    """Pull a gradient on ``C`` back to the ``(N, 4, H, W)`` feature maps.

    The top-left block of ``C`` is the raw second moment ``XXᵀ/M + εI`` and
    the border is ``μ = X1/M``, so for symmetric ``G`` the sample gradient is
    ``(2/M)(G₁₁X + g₁₂1ᵀ)``.
    """
    w = w or LuminanceWeights()
    maps = np.asarray(maps, dtype=np.float64)
    n, _, h, wd = maps.shape
    x = collect_patches(luminance_compress(maps, w), d).columns
    dim, m = x.shape
    g = np.asarray(grad_c, dtype=np.float64)
    g11, g12 = g[:dim, :dim], g[:dim, dim]
    grad_x = (2.0 / m) * (g11 @ x + g12[:, None])
    grad_gray = scatter_patches(grad_x, n, h, wd, d)
    return w.w[None, :, None, None] * grad_gray[:, None, :, :]
