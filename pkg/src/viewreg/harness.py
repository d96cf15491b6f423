"""Deterministic toy multi-view scene optimized under the joint objective.

The scene stands in for a radiance field: each view's 4×H×W feature map is a
frozen random linear function of a shared texture vector, and the view
embeddings are free parameters. The descriptor regularizer pulls the pooled
texture statistics toward a target descriptor rendered from a hidden target
texture; the view-order regularizer acts on the embeddings. Plain gradient
descent with a fixed step runs the schedule.

Random streams (see :mod:`viewreg.rng`), all keyed by the run seed:
stream 1 draws the view operators, stream 2 the target texture, stream 3 the
initial parameters.
"""

from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError, DimMismatch, DivergedError, InvalidInput, ViewRegError
from .features import (
    CHANNELS,
    DEFAULT_EPS,
    ExtendedDescriptor,
    FeatureMapStack,
    LuminanceWeights,
    descriptor_backward,
    descriptor_from_maps,
)
from .rng import Stream
from .schedule import SCHEDULE_KEYS, ScheduleConfig, total_loss
from .spd import lem_distance_sq, lem_value_and_grad
from .view_order import (
    DEFAULT_MARGIN,
    ViewEmbeddingSequence,
    min_adjacent_gap,
    similarities,
    svo_grad,
    svo_loss,
)

TRACE_COLUMNS = ("iter", "total", "r_svo", "r_spd", "lambda_svo", "lambda_spd", "min_gap", "lem_dist")

STREAM_OPERATORS = 1
STREAM_TARGET = 2
STREAM_INIT = 3

# Scale of the perturbation added to the reference direction for the Janus view.
JANUS_NOISE = 0.05


@dataclass(frozen=True)
class SceneConfig:
    views: int = 5
    azimuths: tuple[float, ...] = (0.0, 45.0, 90.0, 135.0, 180.0)
    d_clip: int = 16
    height: int = 8
    width: int = 8
    patch: int = 4
    tex_dim: int = 32
    janus_init: bool = True
    margin: float = DEFAULT_MARGIN
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        object.__setattr__(self, "azimuths", tuple(float(a) for a in self.azimuths))
        bad = []
        if len(self.azimuths) != self.views or self.views < 2:
            bad.append("views")
        az = self.azimuths
        if not az or az[0] != 0.0 or any(b <= a for a, b in zip(az, az[1:])) or az[-1] >= 360.0:
            bad.append("azimuths")
        for key in ("d_clip", "height", "width", "patch", "tex_dim"):
            v = getattr(self, key)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                bad.append(key)
        if "patch" not in bad and "height" not in bad and "width" not in bad:
            if self.height % self.patch or self.width % self.patch:
                bad.append("patch")
        if not isinstance(self.janus_init, bool):
            bad.append("janus_init")
        if not (isinstance(self.margin, (int, float)) and self.margin >= 0):
            bad.append("margin")
        if not (isinstance(self.eps, (int, float)) and self.eps > 0):
            bad.append("eps")
        if bad:
            raise ConfigError("invalid scene fields", bad)


@dataclass(frozen=True)
class OptimizerConfig:
    step_size: float = 1e-2
    iterations: int = 2000

    def __post_init__(self):
        bad = []
        if not (isinstance(self.step_size, (int, float)) and self.step_size > 0):
            bad.append("step_size")
        if not (isinstance(self.iterations, int) and not isinstance(self.iterations, bool)
                and self.iterations >= 0):
            bad.append("iterations")
        if bad:
            raise ConfigError("invalid optimizer fields", bad)


@dataclass(frozen=True)
class HarnessConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    seed: int = 42

    def __post_init__(self):
        if self.schedule.total_steps != max(self.optimizer.iterations, 1):
            raise ConfigError("schedule.total_steps must equal optimizer.iterations",
                              ["schedule.total_steps"])

    @classmethod
    def from_dict(cls, data: dict) -> "HarnessConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        blocks = {"scene": SceneConfig, "optimizer": OptimizerConfig, "schedule": ScheduleConfig}
        unknown = [k for k in data if k not in (*blocks, "seed")]
        for name, kind in blocks.items():
            block = data.get(name, {})
            if not isinstance(block, dict):
                unknown.append(name)
                continue
            allowed = SCHEDULE_KEYS if kind is ScheduleConfig else kind.__dataclass_fields__
            unknown += [f"{name}.{k}" for k in block if k not in allowed]
        if unknown:
            raise ConfigError("unknown or malformed config keys", unknown)

        def build(name, kind, **defaults):
            try:
                return kind(**{**defaults, **data.get(name, {})})
            except ConfigError as err:
                raise ConfigError("invalid config values", [f"{name}.{k}" for k in err.keys]) from None
            except TypeError as err:
                raise ConfigError(f"invalid {name} block ({err})", [name]) from None

        scene = build("scene", SceneConfig)
        optimizer = build("optimizer", OptimizerConfig)
        steps = max(optimizer.iterations, 1)
        schedule = build("schedule", ScheduleConfig, **ScheduleConfig.for_steps(steps).to_dict())
        seed = data.get("seed", 42)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError("invalid config values", ["seed"])
        return cls(scene=scene, optimizer=optimizer, schedule=schedule, seed=seed)

    def to_dict(self) -> dict:
        scene = asdict(self.scene)
        scene["azimuths"] = list(scene["azimuths"])
        return {"scene": scene, "optimizer": asdict(self.optimizer),
                "schedule": self.schedule.to_dict(), "seed": self.seed}

    def with_schedule(self, **changes) -> "HarnessConfig":
        return replace(self, schedule=replace(self.schedule, **changes))


@dataclass(frozen=True)
class SceneParams:
    embed_params: np.ndarray  # (K+1, d_clip), row 0 is the reference view
    tex_params: np.ndarray  # (P,)

    def __post_init__(self):
        e = np.array(self.embed_params, dtype=np.float64)
        t = np.array(self.tex_params, dtype=np.float64).reshape(-1)
        if not (np.all(np.isfinite(e)) and np.all(np.isfinite(t))):
            raise InvalidInput("scene parameters must be finite")
        object.__setattr__(self, "embed_params", e)
        object.__setattr__(self, "tex_params", t)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.embed_params.reshape(-1), self.tex_params])

    def unflat(self, x: np.ndarray) -> "SceneParams":
        n = self.embed_params.size
        return SceneParams(x[:n].reshape(self.embed_params.shape), x[n:])


@dataclass(frozen=True)
class SceneModel:
    operators: np.ndarray  # (views, 4*H*W, P)
    azimuths: tuple[float, ...]
    target: ExtendedDescriptor
    height: int
    width: int
    patch: int = 4
    margin: float = DEFAULT_MARGIN
    eps: float = DEFAULT_EPS
    weights: LuminanceWeights = field(default_factory=LuminanceWeights)

    @property
    def views(self) -> int:
        return self.operators.shape[0]

    @property
    def tex_dim(self) -> int:
        return self.operators.shape[2]

    def feature_maps(self, tex_params) -> np.ndarray:
        tex = np.asarray(tex_params, dtype=np.float64).reshape(-1)
        if tex.size != self.tex_dim:
            raise DimMismatch(f"tex_params has {tex.size} entries, expected {self.tex_dim}")
        flat = self.operators @ tex
        return flat.reshape(self.views, CHANNELS, self.height, self.width)


def target_texture(cfg: SceneConfig, seed: int) -> np.ndarray:
    return Stream(seed, STREAM_TARGET).normal((cfg.tex_dim,))


def build_scene(cfg: SceneConfig, seed: int) -> SceneModel:
    n, size = cfg.views, CHANNELS * cfg.height * cfg.width
    ops = Stream(seed, STREAM_OPERATORS).normal((n, size, cfg.tex_dim)) / math.sqrt(cfg.tex_dim)
    ops.setflags(write=False)
    target_tex = target_texture(cfg, seed)
    partial = SceneModel(operators=ops, azimuths=cfg.azimuths, target=None, height=cfg.height,
                         width=cfg.width, patch=cfg.patch, margin=cfg.margin, eps=cfg.eps)
    target = descriptor_from_maps(partial.feature_maps(target_tex), partial.weights, cfg.patch, cfg.eps)
    return replace(partial, target=target)


def initial_params(cfg: SceneConfig, seed: int) -> SceneParams:
    s = Stream(seed, STREAM_INIT)
    embed = s.normal((cfg.views, cfg.d_clip))
    tex = s.normal((cfg.tex_dim,))
    noise = s.normal((cfg.d_clip,))
    if cfg.janus_init:
        ref = embed[0] / np.linalg.norm(embed[0])
        embed[-1] = ref + JANUS_NOISE * noise
    return SceneParams(embed, tex)


def render_views(p: SceneParams, m: SceneModel) -> tuple[FeatureMapStack, ViewEmbeddingSequence]:
    if p.embed_params.shape[0] != m.views:
        raise DimMismatch(f"{p.embed_params.shape[0]} embeddings for {m.views} views")
    stack = FeatureMapStack(m.feature_maps(p.tex_params), m.azimuths)
    vs = ViewEmbeddingSequence(p.embed_params, m.azimuths[1:])
    return stack, vs


@dataclass(frozen=True)
class Evaluation:
    breakdown: object  # LossBreakdown
    min_gap: float
    lem_dist: float
    grad: SceneParams | None


def evaluate(p: SceneParams, m: SceneModel, t: int, schedule: ScheduleConfig,
             with_grad: bool = True) -> Evaluation:
    """Joint objective at step ``t`` and, optionally, its gradient."""
    stack, vs = render_views(p, m)
    desc = descriptor_from_maps(stack.maps, m.weights, m.patch, m.eps)
    if with_grad:
        r_spd, g_c = lem_value_and_grad(desc.c, m.target.c, m.eps)
    else:
        r_spd = lem_distance_sq(desc.c, m.target.c, m.eps)
    sims = similarities(vs)
    r_svo = svo_loss(sims, m.margin).loss
    lb = total_loss(0.0, r_spd, r_svo, t, schedule)
    grad = None
    if with_grad:
        g_maps = descriptor_backward(stack.maps, g_c.entries, m.weights, m.patch)
        g_tex = np.einsum("nkp,nk->p", m.operators, g_maps.reshape(m.views, -1))
        g_embed = svo_grad(vs, m.margin)
        grad = SceneParams(lb.lambda_svo * g_embed, lb.lambda_spd * g_tex)
    return Evaluation(lb, min_adjacent_gap(sims), math.sqrt(r_spd), grad)


@dataclass
class OptimizationTrace:
    records: list[tuple] = field(default_factory=list)
    final_params: SceneParams | None = None

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        i = TRACE_COLUMNS.index(name)
        return np.array([r[i] for r in self.records], dtype=np.float64)

    def final(self, name: str) -> float:
        return self.records[-1][TRACE_COLUMNS.index(name)]

    def initial(self, name: str) -> float:
        return self.records[0][TRACE_COLUMNS.index(name)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(TRACE_COLUMNS) + "\n")
        for rec in self.records:
            buf.write(str(rec[0]) + "," + ",".join(repr(float(v)) for v in rec[1:]) + "\n")
        return buf.getvalue()


def run_optimization(model: SceneModel, schedule: ScheduleConfig, optimizer: OptimizerConfig,
                     seed: int = 42, init: SceneParams | None = None,
                     scene: SceneConfig | None = None) -> OptimizationTrace:
    """Gradient descent over ``optimizer.iterations`` steps.

    Record ``k`` holds the state after ``k`` updates, evaluated with the
    schedule weights at step ``k``; the trace therefore has
    ``iterations + 1`` rows.
    """
    if init is None:
        init = initial_params(scene or SceneConfig(), seed)
    x = init.flat()
    trace = OptimizationTrace()
    steps = optimizer.iterations
    for k in range(steps + 1):
        try:
            ev = evaluate(init.unflat(x), model, min(k, schedule.total_steps), schedule,
                          with_grad=k < steps)
        except (ViewRegError, np.linalg.LinAlgError) as err:
            raise DivergedError(k, f"numerical breakdown at iteration {k}: {err}") from err
        lb = ev.breakdown
        if not math.isfinite(lb.total):
            raise DivergedError(k)
        trace.records.append((k, lb.total, lb.r_svo, lb.r_spd, lb.lambda_svo, lb.lambda_spd,
                              ev.min_gap, ev.lem_dist))
        if k < steps:
            x = x - optimizer.step_size * ev.grad.flat()
    trace.final_params = init.unflat(x)
    return trace


def run_experiment(cfg: HarnessConfig, seed: int | None = None) -> tuple[SceneModel, OptimizationTrace]:
    seed = cfg.seed if seed is None else seed
    model = build_scene(cfg.scene, seed)
    trace = run_optimization(model, cfg.schedule, cfg.optimizer, seed, scene=cfg.scene)
    return model, trace


@dataclass(frozen=True)
class ConvergenceReport:
    spd_converged: bool
    svo_zero: bool
    total_decreased: bool
    final_lem_dist: float
    final_r_svo: float
    initial_total: float
    final_total: float
    converged: bool

    def to_dict(self) -> dict:
        return asdict(self)


def check_convergence(trace: OptimizationTrace, tol_spd: float,
                      require_svo_zero: bool = True) -> ConvergenceReport:
    if not trace.records:
        raise InvalidInput("empty trace")
    spd_ok = trace.final("lem_dist") <= tol_spd
    svo_zero = trace.final("r_svo") == 0.0
    decreased = trace.final("total") <= trace.initial("total")
    return ConvergenceReport(
        spd_converged=spd_ok,
        svo_zero=svo_zero,
        total_decreased=decreased,
        final_lem_dist=trace.final("lem_dist"),
        final_r_svo=trace.final("r_svo"),
        initial_total=trace.initial("total"),
        final_total=trace.final("total"),
        converged=spd_ok and decreased and (svo_zero or not require_svo_zero),
    )
