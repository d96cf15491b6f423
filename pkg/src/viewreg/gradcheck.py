"""Central finite differences for checking analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .harness import SceneConfig, build_scene, evaluate, initial_params
from .schedule import ScheduleConfig
from .spd import SymMatrix, grad_r_spd, lem_distance_sq, random_spd
from .view_order import (
    ViewEmbeddingSequence,
    hinge_arguments,
    similarities,
    svo_grad,
    svo_loss_from_raw,
)


def central_difference(func: Callable[[np.ndarray], float], x, h: float = 1e-6) -> np.ndarray:
    """Gradient of ``func`` at ``x`` by central differences, one entry at a time.

    ``x`` may have any shape; the result has the same shape.
    """
    x0 = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x0)
    flat = x0.reshape(-1)
    g = grad.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + h
        fp = func(x0.copy())
        flat[j] = orig - h
        fm = func(x0.copy())
        flat[j] = orig
        g[j] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric, floor: float = 1e-300) -> float:
    """Largest absolute discrepancy scaled by the largest gradient magnitude.

    Scaling by the gradient's infinity norm rather than entrywise keeps
    near-zero components from blowing up the ratio. Two all-zero gradients
    give 0.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(n), initial=0.0))
    err = np.max(np.abs(a - n), initial=0.0)
    if err == 0.0:
        return 0.0
    return float(err / max(scale, floor))


# Seeded check instances shared by the test-suite and the ``gradcheck`` command.

KINK_BAND = 1e-4
FD_STEP = 1e-6


@dataclass(frozen=True)
class GradCheck:
    target: str
    seed: int
    max_rel_err: float
    analytic: np.ndarray
    numeric: np.ndarray

    def passed(self, tol: float) -> bool:
        return self.max_rel_err < tol


def spd_instance(seed: int, dim: int = 3, cond: float = 10.0):
    rng = np.random.default_rng(seed)
    return random_spd(rng, dim, cond), random_spd(rng, dim, cond)


def check_spd(seed: int, dim: int = 3, eps: float = 1e-6, h: float = FD_STEP) -> GradCheck:
    a, b = spd_instance(seed, dim)
    analytic = grad_r_spd(a, b, eps).entries
    numeric = central_difference(lambda x: lem_distance_sq(SymMatrix(x), b, eps), a, h)
    return GradCheck("spd", seed, max_relative_error(analytic, numeric), analytic, numeric)


def _far_from_kinks(args: np.ndarray, band: float = KINK_BAND) -> bool:
    return bool(np.all(np.abs(args) > band))


def svo_instance(seed: int, views: int = 4, dim: int = 8, delta: float = 0.05,
                 satisfied: bool = False):
    """Raw embeddings ``(views+1, dim)`` and azimuths, away from hinge kinks.

    With ``satisfied`` the views sit on a fan of angles from the reference so
    every adjacent similarity drop exceeds ``delta``.
    """
    rng = np.random.default_rng(seed)
    azimuths = tuple(float(a) for a in np.linspace(180.0 / views, 180.0, views))
    while True:
        if satisfied:
            basis, _ = np.linalg.qr(rng.standard_normal((dim, 2)))
            angles = np.radians(azimuths) * 0.5 + rng.uniform(0, 0.05, size=views)
            seq = np.cos(angles)[:, None] * basis[:, 0] + np.sin(angles)[:, None] * basis[:, 1]
            seq = seq + 0.01 * rng.standard_normal(seq.shape)
            raw = np.vstack([basis[:, 0], seq]) * rng.uniform(0.5, 2.0, size=(views + 1, 1))
        else:
            raw = rng.standard_normal((views + 1, dim))
        args = hinge_arguments(similarities(ViewEmbeddingSequence(raw, azimuths)), delta)
        if _far_from_kinks(args) and (not satisfied or np.all(args < 0)):
            return raw, azimuths


def check_svo(seed: int, delta: float = 0.05, satisfied: bool = False, h: float = FD_STEP) -> GradCheck:
    raw, az = svo_instance(seed, delta=delta, satisfied=satisfied)
    analytic = svo_grad(ViewEmbeddingSequence(raw, az), delta)
    numeric = central_difference(lambda x: svo_loss_from_raw(x, az, delta), raw, h)
    return GradCheck("svo", seed, max_relative_error(analytic, numeric), analytic, numeric)


def harness_instance(seed: int):
    scene = SceneConfig(janus_init=False)
    model = build_scene(scene, seed)
    schedule = ScheduleConfig()
    rng = np.random.default_rng(seed)
    base = initial_params(scene, seed)
    while True:
        p = base.unflat(base.flat() + 0.1 * rng.standard_normal(base.flat().size))
        vs = ViewEmbeddingSequence(p.embed_params, model.azimuths[1:])
        if _far_from_kinks(hinge_arguments(similarities(vs), model.margin)):
            t = int(rng.integers(0, schedule.total_steps + 1))
            return model, schedule, p, t


def check_harness(seed: int, h: float = FD_STEP) -> GradCheck:
    model, schedule, p, t = harness_instance(seed)
    analytic = evaluate(p, model, t, schedule).grad.flat()
    numeric = central_difference(
        lambda x: evaluate(p.unflat(x), model, t, schedule, with_grad=False).breakdown.total,
        p.flat(), h)
    return GradCheck("harness", seed, max_relative_error(analytic, numeric), analytic, numeric)
