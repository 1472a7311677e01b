"""MAGIC stateful-logic execution: input initialization followed by sequential gates.

Gate templates (orientation, as data below): the write driver feeds the
input-cell network, which is in series with the output cell; the output
cell's far terminal is grounded.  The output-cell voltage is therefore the
divider ``V * R_out / (R_out + R_in)``.

* AND: input cells in series, output preset HRS, set polarity.
* OR:  input cells in parallel, output preset HRS, set polarity.
* NOR: input cells in parallel, output preset LRS, reset polarity.

Each gate type is driven at its own fraction of ``v_write`` so that the
latching set/reset thresholds separate the logic cases at the nominal
2.4 V.  With one output cell moving, the gap obeys an autonomous 1-D ODE,
so the trajectory is integrated by quadrature along the gap path and then
sampled on the trace grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .device import DeviceInstance, RramParams, nominal_instance, rram_resistance, switching_rate
from .logic import CapacityError, Literal, SopFunction
from .traces import CurrentTrace, Phase


@dataclass(frozen=True)
class GateTemplate:
    network: str  # how input cells combine: "series" or "parallel"
    output_preset: int  # logical value written to the output before evaluation
    polarity: int  # +1 drives the output toward LRS, -1 toward HRS
    drive_scale: float  # fraction of v_write applied across the gate


GATE_TEMPLATES = {
    "AND": GateTemplate("series", 0, +1, 1.0),
    "OR": GateTemplate("parallel", 0, +1, 0.5747),
    "NOR": GateTemplate("parallel", 1, -1, 1.0),
}


@dataclass(frozen=True)
class MagicTiming:
    dt_ns: float = 0.5
    idle_ns: float = 10.0
    write_slot_ns: float = 40.0
    measure_ns: float = 12.5  # init-write sampling instant within a slot
    gap_ns: float = 10.0
    slot_ns: tuple = (("AND", 2000.0), ("OR", 24000.0), ("NOR", 4000.0))
    leak_per_cell: float = 0.2e-9  # A

    def slot(self, kind: str) -> float:
        return dict(self.slot_ns)[kind]


@dataclass(frozen=True)
class MagicGate:
    kind: str
    inputs: tuple  # cell ids
    output: int


@dataclass
class MagicProgram:
    n_vars: int
    gates: list
    cell_literals: dict  # input cell id -> Literal it stores
    n_cells: int
    v_write: float = 2.4
    instance: DeviceInstance | None = None
    params: RramParams = field(default_factory=RramParams)
    function: SopFunction | None = None
    constant_cells: dict = field(default_factory=dict)  # cell id -> fixed bit (redundant inputs)

    def output_cell(self) -> int | None:
        return self.gates[-1].output if self.gates else None

    def preset(self) -> np.ndarray:
        """Logical value of every cell before inputs are written (erased = 0)."""
        v = np.zeros(self.n_cells, dtype=np.uint8)
        for g in self.gates:
            v[g.output] = GATE_TEMPLATES[g.kind].output_preset
        return v

    def gate_counts(self) -> dict:
        out: dict = {}
        for g in self.gates:
            key = f"{g.kind}{len(g.inputs)}"
            out[key] = out.get(key, 0) + 1
        return out

    def to_dict(self) -> dict:
        return {
            "n_vars": self.n_vars,
            "v_write": self.v_write,
            "n_cells": self.n_cells,
            "function": str(self.function) if self.function is not None else None,
            "gates": [{"kind": g.kind, "inputs": list(g.inputs), "output": g.output} for g in self.gates],
            "cell_map": {str(c): str(l) for c, l in sorted(self.cell_literals.items())},
            "constant_cells": {str(c): int(v) for c, v in sorted(self.constant_cells.items())},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


MAX_GATE_FANIN = 8


def compile_magic(f: SopFunction, v_write: float = 2.4, instance: DeviceInstance | None = None,
                  params: RramParams = RramParams()) -> MagicProgram:
    """One AND per multi-literal minterm in order, then one OR over all minterms."""
    if any(len(t) > MAX_GATE_FANIN for t in f.minterms):
        raise CapacityError(f"minterm wider than the {MAX_GATE_FANIN}-input gate limit")
    gates, lits = [], {}
    cell = 0
    or_inputs = []
    pending = []
    for term in f.minterms:
        ordered = sorted(term)
        if len(ordered) == 1:
            pending.append(ordered[0])
            or_inputs.append(None)
            continue
        ins = []
        for lit in ordered:
            lits[cell] = lit
            ins.append(cell)
            cell += 1
        gates.append(MagicGate("AND", tuple(ins), cell))
        or_inputs.append(cell)
        cell += 1
    if f.minterms:
        ins = []
        for c in or_inputs:
            if c is None:
                lits[cell] = pending.pop(0)
                c = cell
                cell += 1
            ins.append(c)
        # wider sums become a tree of gates within the fanin limit
        while len(ins) > MAX_GATE_FANIN:
            outs = []
            for i in range(0, len(ins), MAX_GATE_FANIN):
                chunk = tuple(ins[i:i + MAX_GATE_FANIN])
                if len(chunk) == 1:
                    outs.append(chunk[0])
                    continue
                gates.append(MagicGate("OR", chunk, cell))
                outs.append(cell)
                cell += 1
            ins = outs
        gates.append(MagicGate("OR", tuple(ins), cell))
        cell += 1
    return MagicProgram(f.n_vars, gates, lits, cell, v_write, instance, params, f)


def single_gate_program(kind: str, fanin: int, v_write: float = 2.4, instance=None,
                        params: RramParams = RramParams()) -> MagicProgram:
    """A program holding one gate whose inputs are the true literals a, b, ..."""
    lits = {i: Literal(i) for i in range(fanin)}
    return MagicProgram(fanin, [MagicGate(kind, tuple(range(fanin)), fanin)], lits, fanin + 1,
                        v_write, instance, params)


# ---------------------------------------------------------------------------
# gate physics

@dataclass
class GateSolution:
    """Per-batch trajectory of one gate's output cell."""

    triggered: np.ndarray
    g_path: np.ndarray  # (B, N) gap along the path
    t_path: np.ndarray  # (B, N) seconds
    i_path: np.ndarray  # (B, N) amps drawn from the driver
    op_time: np.ndarray  # s, output resistance crossing sqrt(R_LRS R_HRS); inf if never
    feature_time: np.ndarray  # s, current crossing the geometric mean of start/end current
    i_start: np.ndarray
    i_end: np.ndarray
    final_gap: np.ndarray

    def steady_current(self) -> np.ndarray:
        return np.where(self.triggered, self.i_end, self.i_start)

    def current_at(self, t_s: np.ndarray) -> np.ndarray:
        """Current samples (B, T) at the given times from gate start."""
        out = np.empty((len(self.triggered), len(t_s)))
        for b in range(len(self.triggered)):
            if self.triggered[b]:
                out[b] = np.exp(np.interp(t_s, self.t_path[b], np.log(self.i_path[b])))
            else:
                out[b] = self.i_start[b]
        return out


def sampled_op_time(current: np.ndarray, dt_ns: float, min_ratio: float = 1.5) -> np.ndarray:
    """Op-time (s) of sampled slot currents (..., T): crossing of the geometric mean of first and last sample.

    nan where the current does not change by at least ``min_ratio``.
    """
    i = np.atleast_2d(np.maximum(np.asarray(current, dtype=float), 1e-30))
    y = np.log(i)
    rise = y[:, -1] >= y[:, 0]
    y = np.where(rise[:, None], y, -y)
    level = 0.5 * (y[:, 0] + y[:, -1])
    k = np.argmax(y >= level[:, None], axis=1)
    rows = np.arange(len(y))
    k0 = np.maximum(k - 1, 0)
    y0, y1 = y[rows, k0], y[rows, k]
    frac = np.where(y1 > y0, (level - y0) / np.where(y1 > y0, y1 - y0, 1.0), 0.0)
    t = np.where(k > 0, k0 + frac, 0.0) * dt_ns * 1e-9
    ok = np.abs(y[:, -1] - y[:, 0]) >= np.log(min_ratio)
    out = np.where(ok, t, np.nan)
    return out.reshape(np.shape(current)[:-1]) if np.ndim(current) > 1 else out[0]


def input_resistance(network: str, r_inputs: np.ndarray) -> np.ndarray:
    r = np.asarray(r_inputs, dtype=float)
    if network == "series":
        return r.sum(axis=-1)
    return 1.0 / np.sum(1.0 / r, axis=-1)


def _crossing(path_x, path_y, level):
    """Per-row x where monotone ``path_y`` first reaches ``level`` (nan if never)."""
    inc = path_y[:, -1] >= path_y[:, 0]
    y = np.where(inc[:, None], path_y, -path_y)
    lv = np.where(inc, level, -level)
    idx = (y < lv[:, None]).sum(axis=1)
    ok = (idx > 0) & (idx < y.shape[1])
    i1 = np.clip(idx, 1, y.shape[1] - 1)
    rows = np.arange(len(y))
    y0, y1 = y[rows, i1 - 1], y[rows, i1]
    x0, x1 = path_x[rows, i1 - 1], path_x[rows, i1]
    frac = np.where(y1 > y0, (lv - y0) / np.where(y1 > y0, y1 - y0, 1.0), 0.0)
    x = x0 + frac * (x1 - x0)
    at_start = y[:, 0] >= lv
    return np.where(at_start, path_x[:, 0], np.where(ok, x, np.nan))


def solve_gate(kind: str, v_write: float, r_inputs: np.ndarray, out_gap: np.ndarray,
               lo: np.ndarray, hi: np.ndarray, params: RramParams = RramParams(),
               n_grid: int = 1025) -> GateSolution:
    """Integrate the output cell of ``kind`` gates for a batch.

    ``r_inputs`` is (B, n) input-cell resistances; ``out_gap``, ``lo``, ``hi``
    are (B,) output-cell gap and LRS/HRS gap bounds.
    """
    tpl = GATE_TEMPLATES[kind]
    v = tpl.drive_scale * v_write
    rs = input_resistance(tpl.network, r_inputs)
    g0 = np.asarray(out_gap, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), g0.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), g0.shape)
    r0 = rram_resistance(g0, params)
    vo0 = v * r0 / (r0 + rs)
    if tpl.polarity > 0:
        triggered = (vo0 > params.v_set) & (g0 > lo)
        r_stop = rs * params.v_hold / max(v - params.v_hold, 1e-12)
        g_stop = params.gap_min + np.log(np.maximum(r_stop, 1e-30) / params.r_lrs) / params.k
        g_end = np.minimum(np.maximum(lo, g_stop), g0)
    else:
        triggered = (vo0 > params.v_reset) & (g0 < hi)
        g_end = hi.copy()
    g_end = np.where(triggered, g_end, g0)
    s = np.linspace(0.0, 1.0, n_grid)
    g_path = g0[:, None] + s[None, :] * (g_end - g0)[:, None]
    r_path = rram_resistance(g_path, params)
    vo = v * r_path / (r_path + rs[:, None])
    inv_rate = 1.0 / switching_rate(vo, params)  # s per nm
    dg = np.abs(np.diff(g_path, axis=1))
    t_path = np.concatenate([np.zeros((len(g0), 1)),
                             np.cumsum(0.5 * (inv_rate[:, 1:] + inv_rate[:, :-1]) * dg, axis=1)], axis=1)
    i_path = v / (r_path + rs[:, None])
    i_start, i_end = i_path[:, 0], i_path[:, -1]
    gm = params.gap_mid
    crossed = (g_end - gm) * (g0 - gm) < 0
    op = _crossing(t_path, -tpl.polarity * g_path, np.full(len(g0), -tpl.polarity * gm))
    op = np.where(triggered & crossed, op, np.inf)
    level = np.sqrt(i_start * i_end)
    feat = _crossing(t_path, np.log(i_path), np.log(level))
    feat = np.where(triggered & (np.abs(np.log(i_end / i_start)) > 1e-6), feat, np.nan)
    return GateSolution(triggered, g_path, t_path, i_path, op, feat, i_start, i_end, g_end)


def write_current(v_write: float, hi: np.ndarray, lo: np.ndarray, t_s: np.ndarray,
                  params: RramParams = RramParams()) -> np.ndarray:
    """Total current of cells set together from gaps ``hi`` toward ``lo`` (both (..., k))."""
    rate = switching_rate(v_write, params)
    g = np.maximum(hi[..., None] - rate * t_s, lo[..., None])
    return (v_write / rram_resistance(g, params)).sum(axis=-2)


# ---------------------------------------------------------------------------
# program execution

def _stored_bits(program: MagicProgram, inputs: np.ndarray) -> np.ndarray:
    """(B, n_cells) logical value of every cell after initialization."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.uint8))
    if inputs.shape[1] != program.n_vars:
        raise ValueError(f"expected {program.n_vars} input bits, got {inputs.shape[1]}")
    bits = np.repeat(program.preset()[None, :], len(inputs), axis=0)
    for c, lit in program.cell_literals.items():
        x = inputs[:, lit.var]
        bits[:, c] = 1 - x if lit.complemented else x
    for c, v in program.constant_cells.items():
        bits[:, c] = v
    return bits


def _bounds(program: MagicProgram, instances, batch: int):
    if instances is None:
        instances = program.instance or nominal_instance()
    if isinstance(instances, DeviceInstance):
        instances = [instances]
    cells = np.arange(program.n_cells)
    lo = np.stack([inst.lrs_gap[cells % inst.n_cells] for inst in instances])
    hi = np.stack([inst.hrs_gap[cells % inst.n_cells] for inst in instances])
    if len(instances) == 1 and batch > 1:
        lo, hi = np.repeat(lo, batch, 0), np.repeat(hi, batch, 0)
    if len(lo) != batch:
        raise ValueError("instance count must be 1 or match the batch")
    return lo, hi


@dataclass
class ProgramRun:
    outputs: np.ndarray  # (B,)
    switched: np.ndarray  # (B,) cells written 0 -> 1 during initialization
    solutions: list  # GateSolution per gate
    write_bits: np.ndarray  # (B, n_cells) stored values after initialization
    lo: np.ndarray
    hi: np.ndarray


def execute(program: MagicProgram, inputs, instances=None) -> ProgramRun:
    """Run the program for a batch of input vectors without building traces."""
    bits = _stored_bits(program, inputs)
    lo, hi = _bounds(program, instances, len(bits))
    gaps = np.where(bits > 0, lo, hi)
    p = program.params
    sols = []
    for g in program.gates:
        r_in = rram_resistance(gaps[:, list(g.inputs)], p)
        sol = solve_gate(g.kind, program.v_write, r_in, gaps[:, g.output], lo[:, g.output], hi[:, g.output], p)
        gaps[:, g.output] = sol.final_gap
        sols.append(sol)
    out_cell = program.output_cell()
    if out_cell is None:
        outputs = np.zeros(len(bits), dtype=np.uint8)
    else:
        outputs = (rram_resistance(gaps[:, out_cell], p) < p.r_mid).astype(np.uint8)
    return ProgramRun(outputs, bits.sum(axis=1) - 0, sols, bits, lo, hi)


def write_slots(program: MagicProgram) -> list:
    """Cells written in each initialization slot: one slot per gate (its inputs and output)."""
    slots = []
    for g in program.gates:
        slots.append([c for c in g.inputs if c in program.cell_literals or c in program.constant_cells]
                     + [g.output])
    return slots


def run_program(program: MagicProgram, inputs, instance: DeviceInstance | None = None,
                timing: MagicTiming = MagicTiming()) -> tuple:
    """Execute once and return ``(output_bit, CurrentTrace)`` with phase markers.

    Phases: ``idle``, ``write<i>`` per initialization slot, ``gate<i>:<KIND><n>``.
    """
    run = execute(program, np.asarray(inputs)[None, :], instance)
    p = program.params
    dt = timing.dt_ns
    pieces, phases = [], []
    t = 0.0

    def emit(n_ns, current=None, name=None):
        nonlocal t
        n = int(round(n_ns / dt))
        seg = np.zeros(n) if current is None else current
        pieces.append(seg)
        if name:
            phases.append(Phase(name, t, t + n * dt))
        t += n * dt

    emit(timing.idle_ns, name="idle")
    erased = program.preset() * 0
    t_slot = np.arange(int(round(timing.write_slot_ns / dt))) * dt * 1e-9
    for i, cells in enumerate(write_slots(program)):
        target = run.write_bits[0, cells]
        switching = [c for c, v in zip(cells, target) if v > erased[c]]
        cur = None
        if switching:
            cur = write_current(program.v_write, run.hi[0, switching], run.lo[0, switching], t_slot, p)
        emit(timing.write_slot_ns, cur, f"write{i}")
        emit(timing.gap_ns)
    for i, (g, sol) in enumerate(zip(program.gates, run.solutions)):
        n = int(round(timing.slot(g.kind) / dt))
        cur = sol.current_at(np.arange(n) * dt * 1e-9)[0]
        emit(timing.slot(g.kind), cur, f"gate{i}:{g.kind}{len(g.inputs)}")
        emit(timing.gap_ns)
    drawn = np.concatenate(pieces) if pieces else np.zeros(0)
    leak = timing.leak_per_cell * max(program.n_cells, 1)
    trace = CurrentTrace.from_amps(dt * 1e-9, -(drawn + leak), drawn + leak, tuple(phases))
    return int(run.outputs[0]), trace


def switched_count(program: MagicProgram, inputs) -> int:
    """Cells the initialization writes from 0 to 1 (including LRS-preset outputs)."""
    return int(_stored_bits(program, inputs).sum())
