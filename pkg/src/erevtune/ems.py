"""Thermostatic range-extender control.

The generator is switched on and off against a distance-indexed reference
state of charge: the reference ramps linearly from 100% down to the target
end-of-trip value as the vehicle covers ``l_set`` miles, and is capped (60%
by default) so short trips never fire the engine. A small hysteresis band
stops 1 Hz chattering around the reference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np


@dataclass(frozen=True)
class EmsConfig:
    l_set: float                 # miles
    soc_tev: float = 10.0        # target end-of-trip SOC, percent
    soc_ref_cap: float = 60.0    # percent
    hysteresis: float = 1.0      # percent

    def __post_init__(self):
        if self.l_set <= 0:
            raise ValueError("l_set must be positive")
        if not 0 < self.soc_tev < self.soc_ref_cap <= 100:
            raise ValueError("need 0 < soc_tev < soc_ref_cap <= 100")
        if self.hysteresis < 0:
            raise ValueError("hysteresis must be non-negative")


def soc_ref(d_t: float, cfg: EmsConfig) -> float:
    """Reference SOC after ``d_t`` miles, percent.

    Linear ramp 100 * (1 - (1 - soc_tev/100) * d_t / l_set), clamped to
    [0, soc_ref_cap].
    """
    if d_t < 0:
        raise ValueError("distance traveled cannot be negative")
    raw = 100.0 * (1.0 - (1.0 - cfg.soc_tev / 100.0) * d_t / cfg.l_set)
    return float(min(cfg.soc_ref_cap, max(0.0, raw)))


def thermostat_decide(
    d_t: float, soc: float, prev_engine_on: bool, cfg: EmsConfig
) -> bool:
    """Engine on below the reference, off above reference + hysteresis.

    Inside the band the previous state is held. With zero hysteresis this
    reduces to: engine on iff soc < reference.
    """
    ref = soc_ref(d_t, cfg)
    if soc < ref:
        return True
    if soc >= ref + cfg.hysteresis:
        return False
    return prev_engine_on


class EngineController(Protocol):
    """Per-step engine on/off decision."""

    def decide(self, d_t: float, soc: float, v: float, prev_engine_on: bool) -> bool:
        """``d_t`` is miles traveled so far; ``v`` the current speed in m/s."""
        ...

    def reset(self) -> None:
        """Called once before a simulation starts."""
        ...


@dataclass(frozen=True)
class ThermostatController:
    """The production rule: stateless, deterministic in its arguments."""

    cfg: EmsConfig

    def decide(self, d_t: float, soc: float, v: float, prev_engine_on: bool) -> bool:
        return thermostat_decide(d_t, soc, prev_engine_on, self.cfg)

    def reset(self) -> None:
        pass


@dataclass(frozen=True)
class AlwaysOffController:
    """Battery-only operation; used to probe a trip's natural SOC floor."""

    def decide(self, d_t: float, soc: float, v: float, prev_engine_on: bool) -> bool:
        return False

    def reset(self) -> None:
        pass


class ReplayController:
    """Replays a recorded engine trace sample by sample.

    Unlike rule controllers this one is sequential: each ``decide`` call
    consumes the next recorded value, so it must be reset between runs.
    """

    def __init__(self, trace):
        self.trace = np.asarray(trace, dtype=bool)
        self._i = 0

    def decide(self, d_t: float, soc: float, v: float, prev_engine_on: bool) -> bool:
        if self._i >= len(self.trace):
            return bool(self.trace[-1]) if len(self.trace) else False
        val = bool(self.trace[self._i])
        self._i += 1
        return val

    def reset(self) -> None:
        self._i = 0
