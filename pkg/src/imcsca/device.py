"""Behavioral RRAM, selector and driver models with process-variation sampling.

Resistance follows an exponential law in the filament gap, anchored at the
LRS/HRS endpoints (58.9 kOhm at 0.1 nm, 6.7 MOhm at 1.7 nm).  Switching moves
the gap at a rate exponential in the applied voltage.  Set and reset are
latching: once the drive crosses the switching threshold the filament keeps
moving until the voltage falls below a lower hold level.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class RramParams:
    gap_min: float = 0.1  # nm
    gap_max: float = 1.7  # nm
    r_lrs: float = 58.9e3  # ohm
    r_hrs: float = 6.7e6  # ohm
    write_latency: float = 25e-9  # s, full HRS->LRS at v_write_nominal
    v_write_nominal: float = 2.4
    v_set: float = 1.24
    v_reset: float = 0.8
    v_hold: float = 0.3
    v_accel: float = 0.18

    def __post_init__(self):
        if not self.gap_min < self.gap_max:
            raise ParameterError("gap_min must be below gap_max")
        if not self.r_lrs < self.r_hrs:
            raise ParameterError("r_lrs must be below r_hrs")
        if self.write_latency <= 0:
            raise ParameterError("write_latency must be positive")

    @property
    def k(self) -> float:
        """Log-resistance slope per nm of gap."""
        return np.log(self.r_hrs / self.r_lrs) / (self.gap_max - self.gap_min)

    @property
    def rate_nominal(self) -> float:
        """Gap velocity (nm/s) at the nominal write voltage."""
        return (self.gap_max - self.gap_min) / self.write_latency

    @property
    def r_mid(self) -> float:
        return float(np.sqrt(self.r_lrs * self.r_hrs))

    @property
    def gap_mid(self) -> float:
        return 0.5 * (self.gap_min + self.gap_max)


@dataclass(frozen=True)
class SelectorParams:
    v_threshold: float = 0.4
    r_on: float = 1e3

    def __post_init__(self):
        if self.v_threshold <= 0 or self.r_on < 0:
            raise ParameterError("selector needs v_threshold > 0 and r_on >= 0")


@dataclass(frozen=True)
class DriverParams:
    """Peripheral transistor on-resistances, scaled per chip by MOS variation."""

    r_precharge: float = 5e3  # PMOS, AND bitline precharge
    r_predischarge: float = 4e3  # NMOS, OR bitline pre-discharge
    r_wl_pull_up: float = 1.0e3
    r_wl_pull_down: float = 0.5e3
    tox_nominal: float = 1.2e-9
    length_nominal: float = 65e-9


@dataclass
class RramState:
    """Gap of one or more cells plus the switching latch (+1 set, -1 reset, 0 idle)."""

    gap: np.ndarray
    latch: np.ndarray = None

    def __post_init__(self):
        self.gap = np.asarray(self.gap, dtype=float)
        if self.latch is None:
            self.latch = np.zeros(self.gap.shape, dtype=np.int8)

    def value(self, params: RramParams) -> np.ndarray:
        """Logical value: 1 for LRS side of the mid point."""
        return (rram_resistance(self.gap, params) < params.r_mid).astype(np.uint8)


def rram_resistance(gap, params: RramParams = RramParams()):
    g = np.asarray(gap, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ParameterError("non-finite gap")
    lo = 0.5 * params.gap_min
    hi = 1.5 * params.gap_max
    r = params.r_lrs * np.exp(params.k * (np.clip(g, lo, hi) - params.gap_min))
    return float(r) if r.ndim == 0 else r


def switching_rate(v, params: RramParams = RramParams()):
    """Gap speed in nm/s for a drive of magnitude |v| (no threshold applied)."""
    v = np.abs(np.asarray(v, dtype=float))
    return params.rate_nominal * np.exp((v - params.v_write_nominal) / params.v_accel)


def rram_switch_step(state: RramState, v_applied, dt: float,
                     params: RramParams = RramParams(), lo=None, hi=None) -> RramState:
    """Advance the gap by ``dt`` under ``v_applied`` (positive = set direction).

    ``lo``/``hi`` are the per-cell LRS/HRS gaps; they default to the nominal
    endpoints.  Returns a new state.
    """
    if dt <= 0:
        raise ParameterError("dt must be positive")
    lo = params.gap_min if lo is None else lo
    hi = params.gap_max if hi is None else hi
    v = np.asarray(v_applied, dtype=float)
    latch = state.latch.copy()
    latch = np.where((latch == 0) & (v > params.v_set), 1, latch)
    latch = np.where((latch == 0) & (v < -params.v_reset), -1, latch)
    latch = np.where((latch == 1) & (v <= params.v_hold), 0, latch)
    latch = np.where((latch == -1) & (v >= -params.v_hold), 0, latch)
    step = switching_rate(v, params) * dt * latch
    gap = np.clip(state.gap - step, lo, hi)
    done = ((latch == 1) & (gap <= lo)) | ((latch == -1) & (gap >= hi))
    latch = np.where(done, 0, latch).astype(np.int8)
    return RramState(gap, latch)


def selector_current(v, r_series, sel: SelectorParams = SelectorParams()):
    """Current through a selector in series with ``r_series`` under total drop ``v``."""
    v = np.asarray(v, dtype=float)
    over = np.maximum(np.abs(v) - sel.v_threshold, 0.0)
    return np.sign(v) * over / (r_series + sel.r_on)


@dataclass(frozen=True)
class VariationSpec:
    """Relative 3-sigma Gaussian spreads."""

    lrs_gap: float = 0.07
    hrs_gap: float = 0.07
    mos_oxide_thickness: float = 0.10
    mos_gate_length: float = 0.10
    bl_capacitance: float = 0.0

    def __post_init__(self):
        for name in ("lrs_gap", "hrs_gap", "mos_oxide_thickness", "mos_gate_length", "bl_capacitance"):
            v = getattr(self, name)
            if not 0 <= v < 0.5:
                raise ParameterError(f"{name} must lie in [0, 0.5)")

    @classmethod
    def none(cls) -> "VariationSpec":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


TYPICAL_VARIATION = VariationSpec()
NO_VARIATION = VariationSpec.none()


@dataclass(frozen=True)
class DeviceInstance:
    """One sampled chip: per-cell gaps, driver resistance scale, per-BL capacitance scale."""

    lrs_gap: np.ndarray
    hrs_gap: np.ndarray
    drive_scale: float
    bl_cap_scale: np.ndarray
    seed: int | None = None
    tox: float = 1.2e-9
    gate_length: float = 65e-9

    @property
    def n_cells(self) -> int:
        return len(self.lrs_gap)

    def gaps_for(self, cells: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Gap per cell for logical states (1 = LRS)."""
        cells = np.asarray(cells) % self.n_cells
        return np.where(np.asarray(states) > 0, self.lrs_gap[cells], self.hrs_gap[cells])

    def bl_cap(self, bl: int) -> float:
        return float(self.bl_cap_scale[bl % len(self.bl_cap_scale)])


def sample_instance(spec: VariationSpec, seed: int | None, n_cells: int = 256, n_bls: int = 16,
                    params: RramParams = RramParams(), drivers: DriverParams = DriverParams()) -> DeviceInstance:
    """Draw one chip; sigma = nominal * fraction / 3 for every parameter."""
    rng = np.random.default_rng(seed)
    lrs = params.gap_min * (1 + spec.lrs_gap / 3 * rng.standard_normal(n_cells))
    hrs = params.gap_max * (1 + spec.hrs_gap / 3 * rng.standard_normal(n_cells))
    tox = drivers.tox_nominal * (1 + spec.mos_oxide_thickness / 3 * rng.standard_normal())
    length = drivers.length_nominal * (1 + spec.mos_gate_length / 3 * rng.standard_normal())
    # on-resistance ~ L / (mu * Cox * W) with Cox ~ 1/tox
    scale = (length / drivers.length_nominal) * (tox / drivers.tox_nominal)
    # bitline load is dominated by periphery gate/junction capacitance ~ L / tox
    periphery = (length / drivers.length_nominal) / (tox / drivers.tox_nominal)
    cap = periphery * (1 + spec.bl_capacitance / 3 * rng.standard_normal(n_bls))
    return DeviceInstance(np.maximum(lrs, 1e-3), np.maximum(hrs, 1e-3), float(scale),
                          np.maximum(cap, 0.05), seed, float(tox), float(length))


def nominal_instance(n_cells: int = 256, n_bls: int = 16) -> DeviceInstance:
    return sample_instance(NO_VARIATION, 0, n_cells, n_bls)


def with_overrides(params: RramParams, **kw) -> RramParams:
    return replace(params, **kw)
