"""Time-varying regularizer weights and the joint objective.

The view-order weight holds a high plateau through warmup and then anneals
linearly; the descriptor weight holds a base level and ramps linearly up to
a peak over the second half of training.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .errors import ConfigError, InvalidStep

SCHEDULE_KEYS = (
    "total_steps",
    "warmup_steps",
    "svo_initial",
    "svo_final",
    "spd_base",
    "spd_peak",
    "spd_ramp_start",
)


@dataclass(frozen=True)
class ScheduleConfig:
    total_steps: int = 2000
    warmup_steps: int = 200
    svo_initial: float = 1.0
    svo_final: float = 0.1
    spd_base: float = 1.0
    spd_peak: float = 2.0
    spd_ramp_start: int = 1000

    def __post_init__(self):
        bad = []
        T = self.total_steps
        if not (isinstance(T, int) and T >= 1):
            bad.append("total_steps")
            T = None
        for key in ("warmup_steps", "spd_ramp_start"):
            v = getattr(self, key)
            if not isinstance(v, int) or v < 0 or (T is not None and v > T):
                bad.append(key)
        for key in ("svo_initial", "svo_final", "spd_base", "spd_peak"):
            v = getattr(self, key)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not v >= 0:
                bad.append(key)
        if not bad:
            if self.svo_final > self.svo_initial:
                bad.append("svo_final")
            if self.spd_peak < self.spd_base:
                bad.append("spd_peak")
        if bad:
            raise ConfigError("invalid schedule fields", bad)

    @classmethod
    def for_steps(cls, total_steps: int, **overrides) -> "ScheduleConfig":
        """Defaults scaled to ``total_steps``: warmup at 10%, SPD ramp from 50%."""
        params = dict(
            total_steps=total_steps,
            warmup_steps=total_steps // 10,
            spd_ramp_start=total_steps // 2,
        )
        params.update(overrides)
        return cls(**params)

    @classmethod
    def constant(cls, total_steps: int, svo: float, spd: float) -> "ScheduleConfig":
        return cls(total_steps=total_steps, warmup_steps=0, svo_initial=svo, svo_final=svo,
                   spd_base=spd, spd_peak=spd, spd_ramp_start=0)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LossBreakdown:
    base: float
    r_spd: float
    r_svo: float
    total: float
    lambda_svo: float
    lambda_spd: float

    @property
    def weights(self) -> tuple[float, float]:
        return self.lambda_svo, self.lambda_spd


def _check_step(t: int, cfg: ScheduleConfig) -> None:
    if not (0 <= t <= cfg.total_steps):
        raise InvalidStep(f"step {t} outside [0, {cfg.total_steps}]")


def _ramp(t: int, start: int, end: int, lo: float, hi: float) -> float:
    if t < start:
        return float(lo)
    if t >= end:
        return float(hi)
    return float(lo + (hi - lo) * (t - start) / (end - start))


def lambda_svo(t: int, cfg: ScheduleConfig) -> float:
    _check_step(t, cfg)
    return _ramp(t, cfg.warmup_steps, cfg.total_steps, cfg.svo_initial, cfg.svo_final)


def lambda_spd(t: int, cfg: ScheduleConfig) -> float:
    _check_step(t, cfg)
    return _ramp(t, cfg.spd_ramp_start, cfg.total_steps, cfg.spd_base, cfg.spd_peak)


def total_loss(base: float, r_spd: float, r_svo: float, t: int, cfg: ScheduleConfig) -> LossBreakdown:
    l_svo = lambda_svo(t, cfg)
    l_spd = lambda_spd(t, cfg)
    total = base + l_spd * r_spd + l_svo * r_svo
    return LossBreakdown(base=base, r_spd=r_spd, r_svo=r_svo, total=total,
                         lambda_svo=l_svo, lambda_spd=l_spd)
