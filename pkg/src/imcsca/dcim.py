"""Two-cycle DCIM evaluation of SOP functions on an AND crossbar and an OR crossbar.

Cycle 1 precharges the active AND bitlines to VDD, then drives the word
lines with the inputs (dual rail: row ``2v`` carries ``x_v``, row ``2v+1``
carries its complement).  An LRS cell whose word line is low discharges its
bitline through the selector until the selector cuts off, which leaves the
bitline ``v_threshold`` above the driver.  Sense amplifiers compare against
``v_ref_and`` to produce the minterm bits.

Cycle 2 pre-discharges the OR bitline, drives OR row ``j`` with minterm bit
``j`` and lets LRS taps charge the bitline up to ``VDD - v_threshold``.

Two readings of the discharge floor exist in the literature this model
follows: "discharged to VDD - Vth" for the AND array, and "charged up to
VDD - Vth" for the OR array.  Only the second is consistent with a selector
that stops conducting below its threshold, so the AND floor here is
``v_threshold`` above the low word line, not ``VDD - v_threshold``.

Word lines are ideal sources behind a driver resistance, so bitlines do not
interact and per-bitline currents add up on the supply and ground pins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .device import (DeviceInstance, DriverParams, RramParams, SelectorParams, nominal_instance,
                     rram_resistance)
from .logic import CapacityError, SopFunction
from .traces import CurrentTrace, Phase


class ConfigurationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PhaseSchedule:
    """Edge times in ns.  Cycle 2 times are absolute."""

    idle: tuple = (0.0, 1.0)
    precharge: tuple = (1.0, 4.0)
    en1: float = 4.5
    se1: float = 4.5 + 2 * 5.89
    idle2: tuple = (20.0, 21.0)
    predischarge: tuple = (21.0, 24.0)
    en2: float = 24.5
    se2: float = 24.5 + 2 * 5.89
    end: float = 40.0
    dt: float = 0.01

    def __post_init__(self):
        if not (self.precharge[1] <= self.en1 < self.se1 <= self.idle2[0]):
            raise ConfigurationError("cycle 1 edges out of order")
        if not (self.predischarge[1] <= self.en2 < self.se2 <= self.end):
            raise ConfigurationError("cycle 2 edges out of order")
        for t in (*self.precharge, self.en1, self.se1, *self.predischarge, self.en2, self.se2, self.end):
            if abs(t / self.dt - round(t / self.dt)) > 1e-6:
                raise ConfigurationError(f"dt does not divide edge time {t}")

    def index(self, t_ns: float) -> int:
        return int(round(t_ns / self.dt))

    @property
    def n_steps(self) -> int:
        return self.index(self.end)

    def phases(self) -> tuple:
        return (
            Phase("idle", *self.idle),
            Phase("precharge", *self.precharge),
            Phase("evaluate_and", self.en1, self.se1),
            Phase("idle2", *self.idle2),
            Phase("predischarge", *self.predischarge),
            Phase("evaluate_or", self.en2, self.se2),
        )


def default_schedule(params: RramParams = RramParams(), c_bl: float = 100e-15) -> PhaseSchedule:
    tau = params.r_lrs * c_bl * 1e9
    se = round(2 * tau, 2)
    return PhaseSchedule(se1=4.5 + se, se2=24.5 + se)


@dataclass(frozen=True)
class PulseShape:
    """Bipolar buffer/SA switching transient: damped sine, amplitude per driven line."""

    per_line: float = 2e-6  # A
    period_ns: float = 0.5
    decay_ns: float = 0.2
    length_ns: float = 1.0
    ground_ratio: float = 0.8

    def samples(self, dt_ns: float) -> np.ndarray:
        t = np.arange(int(round(self.length_ns / dt_ns))) * dt_ns
        return np.sin(2 * np.pi * t / self.period_ns) * np.exp(-t / self.decay_ns)


@dataclass
class DcimChip:
    """Programmed AND/OR arrays plus the electrical environment.

    ``and_rows`` describes each AND word line: ``("in", var, complemented)``
    or ``("bias", volts)``; ``or_rows`` likewise with ``("mt", column)``.
    """

    n_inputs: int
    and_lrs: np.ndarray  # (rows, cols) bool
    or_lrs: np.ndarray  # (or_rows,) bool, single output column
    and_rows: tuple
    or_rows: tuple
    function: SopFunction | None = None
    vdd: float = 1.2
    c_bl: float = 100e-15
    v_ref_and: float | None = None
    v_ref_or: float | None = None
    schedule: PhaseSchedule = field(default_factory=default_schedule)
    instance: DeviceInstance | None = None
    params: RramParams = field(default_factory=RramParams)
    selector: SelectorParams = field(default_factory=SelectorParams)
    drivers: DriverParams = field(default_factory=DriverParams)
    pulse: PulseShape = field(default_factory=PulseShape)
    leak_per_cell: float = 0.5e-9

    def __post_init__(self):
        self.and_lrs = np.asarray(self.and_lrs, dtype=bool)
        self.or_lrs = np.asarray(self.or_lrs, dtype=bool)
        if self.v_ref_and is None:
            self.v_ref_and = 0.75 * self.vdd
        if self.v_ref_or is None:
            self.v_ref_or = 0.25 * self.vdd

    @property
    def n_cols(self) -> int:
        return self.and_lrs.shape[1]

    @property
    def active_cols(self) -> np.ndarray:
        """Columns holding at least one input literal."""
        lit_rows = np.array([r[0] == "in" for r in self.and_rows])
        return self.and_lrs[lit_rows].any(axis=0)

    @property
    def n_cells(self) -> int:
        return self.and_lrs.size + self.or_lrs.size

    def to_dict(self) -> dict:
        return {
            "n_inputs": self.n_inputs,
            "function": str(self.function) if self.function is not None else None,
            "and_array": {"rows": len(self.and_rows), "cols": self.n_cols,
                          "row_drive": [list(r) for r in self.and_rows],
                          "lrs": self.and_lrs.astype(int).tolist()},
            "or_array": {"rows": len(self.or_rows), "cols": 1,
                         "row_drive": [list(r) for r in self.or_rows],
                         "lrs": self.or_lrs.astype(int).tolist()},
            "vdd": self.vdd, "c_bl": self.c_bl, "v_ref_and": self.v_ref_and, "v_ref_or": self.v_ref_or,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def program_dcim(f: SopFunction, n_inputs: int = 8, n_cols: int = 8, **kw) -> DcimChip:
    """Map minterm ``j`` to AND column ``j`` and OR row ``j``."""
    if f.n_vars > n_inputs:
        raise CapacityError(f"{f.n_vars} variables exceed the {n_inputs}-input array")
    if len(f.minterms) > n_cols:
        raise CapacityError(f"{len(f.minterms)} minterms exceed {n_cols} columns")
    and_rows = tuple(("in", v, c) for v in range(n_inputs) for c in (False, True))
    and_lrs = np.zeros((2 * n_inputs, n_cols), dtype=bool)
    or_lrs = np.zeros(n_cols, dtype=bool)
    for j, term in enumerate(f.minterms):
        for lit in term:
            and_lrs[2 * lit.var + int(lit.complemented), j] = True
        or_lrs[j] = True
    or_rows = tuple(("mt", j) for j in range(n_cols))
    return DcimChip(n_inputs, and_lrs, or_lrs, and_rows, or_rows, f, **kw)


def fanin_chip(fanins, n_inputs: int = 8, n_cols: int = 8, **kw) -> DcimChip:
    """Chip whose column ``j`` holds ``fanins[j]`` true literals a, b, ... (0 allowed)."""
    and_rows = tuple(("in", v, c) for v in range(n_inputs) for c in (False, True))
    and_lrs = np.zeros((2 * n_inputs, n_cols), dtype=bool)
    or_lrs = np.zeros(n_cols, dtype=bool)
    for j, k in enumerate(fanins):
        and_lrs[[2 * v for v in range(k)], j] = True
        or_lrs[j] = k > 0
    or_rows = tuple(("mt", j) for j in range(n_cols))
    return DcimChip(n_inputs, and_lrs, or_lrs, and_rows, or_rows, None, **kw)


def or_fanin_chip(k: int, n_inputs: int = 8, n_cols: int = 8, **kw) -> DcimChip:
    """k single-literal minterms a, b, c, ...: OR fanin k with all-ones inputs."""
    return fanin_chip([1] * k, n_inputs, n_cols, **kw)


def precharge_energy(chip: DcimChip, active_bls: int, swing: float | None = None) -> float:
    """Energy dissipated charging ``active_bls`` bitlines through ``swing`` volts: k * C * dV^2 / 2.

    The supply delivers twice as much for a full swing (``C * VDD * dV``); the
    other half ends up stored on the bitline.
    """
    if active_bls < 0:
        raise ValueError("active_bls must be non-negative")
    dv = chip.vdd if swing is None else swing
    return 0.5 * chip.c_bl * dv**2 * active_bls


# ---------------------------------------------------------------------------
# simulation

@dataclass
class DcimRun:
    outputs: np.ndarray  # (B,)
    minterms: np.ndarray  # (B, cols)
    supply: np.ndarray | None  # (B, T) amps, draw negative
    ground: np.ndarray | None
    final_and: np.ndarray  # (B, cols) V
    final_or: np.ndarray  # (B,) V
    dt_ns: float
    phases: tuple

    def trace(self, b: int = 0) -> CurrentTrace:
        return CurrentTrace.from_amps(self.dt_ns * 1e-9, self.supply[b], self.ground[b], self.phases)


def _row_levels(rows, inputs: np.ndarray, vdd: float) -> np.ndarray:
    """(B, rows) word-line voltage during evaluation."""
    out = np.empty((len(inputs), len(rows)))
    for r, spec in enumerate(rows):
        if spec[0] == "in":
            _, var, comp = spec
            x = inputs[:, var] if var < inputs.shape[1] else np.zeros(len(inputs))
            out[:, r] = vdd * ((1 - x) if comp else x)
        else:
            out[:, r] = spec[1]
    return out


def _group_conductance(g: np.ndarray, levels: np.ndarray):
    """Collapse (B, rows, cols) cell conductances into per-level sums.

    Returns (distinct levels (L,), G (B, L, cols)).  Rows sharing a drive
    voltage act as one conductance toward that voltage.
    """
    lv = np.unique(np.round(levels, 12))
    G = np.stack([np.einsum("brc,br->bc", g, np.isclose(levels, v)) for v in lv], axis=1)
    return lv, G


def simulate_dcim(chip: DcimChip, inputs, instances=None, initial=None, record: bool = True) -> DcimRun:
    """Simulate a batch of input vectors (and optionally one chip instance per vector)."""
    sch = chip.schedule
    x = np.atleast_2d(np.asarray(inputs, dtype=np.uint8))
    if chip.function is not None and x.shape[1] != chip.function.n_vars:
        raise ValueError(f"expected {chip.function.n_vars} input bits, got {x.shape[1]}")
    B = len(x)
    if instances is None:
        instances = chip.instance or nominal_instance()
    if isinstance(instances, DeviceInstance):
        instances = [instances] * B
    if len(instances) != B:
        raise ValueError("instance count must match the batch")

    p, sel, drv = chip.params, chip.selector, chip.drivers
    rows, cols = chip.and_lrs.shape
    n_or = len(chip.or_lrs)
    active = chip.active_cols
    act_idx = np.flatnonzero(active)
    ac = len(act_idx)
    vdd = chip.vdd

    and_cells = np.arange(rows * cols).reshape(rows, cols)
    or_cells = rows * cols + np.arange(n_or)
    r_and = np.empty((B, rows, ac))
    r_or = np.empty((B, n_or))
    scale = np.empty(B)
    cap = np.empty((B, cols))
    for b, inst in enumerate(instances):
        gaps = inst.gaps_for(and_cells[:, act_idx], chip.and_lrs[:, act_idx])
        r_and[b] = rram_resistance(gaps, p)
        r_or[b] = rram_resistance(inst.gaps_for(or_cells, chip.or_lrs), p)
        scale[b] = inst.drive_scale
        cap[b] = chip.c_bl * np.array([inst.bl_cap(c) for c in range(cols)])
    cap_or = chip.c_bl * np.array([inst.bl_cap(cols) for inst in instances])
    cap_a = cap[:, act_idx]

    lv_and = _row_levels(chip.and_rows, x, vdd)
    r_drv = np.where(lv_and > 0, drv.r_wl_pull_up, drv.r_wl_pull_down) * scale[:, None]
    g_and = 1.0 / (r_and + sel.r_on + r_drv[:, :, None])
    levels_and, G_and = _group_conductance(g_and, lv_and)

    if initial is None:
        v_and = np.zeros((B, ac))
        v_or = np.zeros(B)
    else:
        v_and = np.array(initial[0], dtype=float).reshape(B, cols)[:, act_idx].copy()
        v_or = np.array(initial[1], dtype=float).reshape(B).copy()

    dt = sch.dt * 1e-9
    T = sch.n_steps
    supply = np.zeros((B, T)) if record else None
    ground = np.zeros((B, T)) if record else None
    vth = sel.v_threshold
    r_pre = drv.r_precharge * scale[:, None]
    r_pd = drv.r_predischarge * scale

    def cell_step(v, lv, G, capv):
        """Euler step of bitlines driven by level groups; returns (v, drawn, sunk)."""
        shape = (1, len(lv)) + (1,) * (v.ndim - 1)
        d = lv.reshape(shape) - v[:, None]
        i = np.copysign(np.maximum(np.abs(d) - vth, 0.0), d) * G
        inflow = i.sum(axis=1)
        flat = i.reshape(len(v), -1)
        drawn = np.maximum(flat, 0.0).sum(axis=1)
        return v + inflow * dt / capv, drawn, drawn - flat.sum(axis=1)

    i_pc = (sch.index(sch.precharge[0]), sch.index(sch.precharge[1]))
    i_en1, i_se1 = sch.index(sch.en1), sch.index(sch.se1)
    i_pd = (sch.index(sch.predischarge[0]), sch.index(sch.predischarge[1]))
    i_en2, i_se2 = sch.index(sch.en2), sch.index(sch.se2)
    minterm_bits = np.zeros((B, cols), dtype=np.uint8)
    G_or = lv_or = levels_or = None

    outputs = np.zeros(B, dtype=np.uint8)
    for k in range(T):
        if k == i_se1:
            minterm_bits[:, act_idx] = (v_and >= chip.v_ref_and).astype(np.uint8)
            lv_or = _row_levels_or(chip.or_rows, minterm_bits, vdd)
            r_drv_or = np.where(lv_or > 0, drv.r_wl_pull_up, drv.r_wl_pull_down) * scale[:, None]
            g_or = 1.0 / (r_or + sel.r_on + r_drv_or)
            levels_or, G_or = _group_conductance(g_or[:, :, None], lv_or)
            G_or = G_or[:, :, 0]
        if k == i_se2:
            outputs = (v_or >= chip.v_ref_or).astype(np.uint8)
        drawn = np.zeros(B)
        sunk = np.zeros(B)
        if i_pc[0] <= k < i_pc[1]:
            i = (vdd - v_and) / r_pre
            drawn += i.sum(axis=1)
            v_and = v_and + i * dt / cap_a
        if k >= i_en1:
            v_and, d1, s1 = cell_step(v_and, levels_and, G_and, cap_a)
            drawn += d1
            sunk += s1
        if i_pd[0] <= k < i_pd[1]:
            i = v_or / r_pd
            sunk += i
            v_or = v_or - i * dt / cap_or
        if k >= i_en2:
            v_or, d2, s2 = cell_step(v_or, levels_or, G_or, cap_or)
            drawn += d2
            sunk += s2
        if record:
            supply[:, k] = -drawn
            ground[:, k] = sunk

    if record:
        n_cells = chip.n_cells
        leak = chip.leak_per_cell * n_cells
        supply -= leak
        ground += leak
        _add_pulses(chip, supply, ground, lv_and, lv_or, act_idx)
    final_and = np.full((B, cols), 0.0)
    final_and[:, act_idx] = v_and
    return DcimRun(outputs, minterm_bits, supply, ground, final_and, v_or, sch.dt, sch.phases())


def _row_levels_or(rows, minterm_bits: np.ndarray, vdd: float) -> np.ndarray:
    out = np.empty((len(minterm_bits), len(rows)))
    for r, spec in enumerate(rows):
        out[:, r] = vdd * minterm_bits[:, spec[1]] if spec[0] == "mt" else spec[1]
    return out


def _add_pulses(chip: DcimChip, supply, ground, lv_and, lv_or, act_idx) -> None:
    sch, ps = chip.schedule, chip.pulse
    shape = ps.samples(sch.dt)
    n = len(shape)
    # lines that toggle at each edge: driven word lines at EN, sense amplifiers at SE
    and_lines = (lv_and > 0).sum(axis=1) + 1
    or_lines = (lv_or > 0).sum(axis=1) + 1
    n_sa = max(len(act_idx), 1)
    for t, amp in ((sch.en1, and_lines), (sch.se1, np.full(len(supply), n_sa)),
                   (sch.en2, or_lines), (sch.se2, np.ones(len(supply)))):
        k = sch.index(t)
        m = min(n, supply.shape[1] - k)
        if m <= 0:
            continue
        a = ps.per_line * np.asarray(amp, dtype=float)[:, None]
        supply[:, k:k + m] -= a * shape[:m]
        ground[:, k:k + m] += ps.ground_ratio * a * shape[:m]


def run_dcim(chip: DcimChip, inputs, initial=None) -> tuple:
    """Single evaluation: ``(output bits, CurrentTrace)``."""
    run = simulate_dcim(chip, [inputs], chip.instance, initial)
    return run.outputs[:1].copy(), run.trace(0)


def truth_outputs(chip: DcimChip, n_vars: int | None = None) -> np.ndarray:
    """Outputs for every input vector, in numeric order."""
    n = chip.function.n_vars if n_vars is None else n_vars
    x = np.array([[(i >> v) & 1 for v in range(n)] for i in range(2**n)], dtype=np.uint8).reshape(2**n, n)
    return simulate_dcim(chip, x, chip.instance, record=False).outputs
