"""Monte Carlo feature models per (architecture, gate, fanin), plus sweeps and chip-count studies.

A model holds, for every fanin, the feature measured on ``n_mc`` sampled
chips.  Chips are shared across fanins (chip ``i`` of every fanin uses the
same device draw), mirroring a fixed set of test chips reprogrammed for
each configuration.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dcim, magic
from .device import NO_VARIATION, RramParams, VariationSpec, sample_instance
from .traces import MeasurementWindow, select_window, window_means

FEATURES = {
    ("DCIM", "OR"): "window-mean",
    ("DCIM", "AND"): "window-mean",
    ("DCIM", "PRECHARGE"): "precharge",
    ("MAGIC", "AND"): "op-time",
    ("MAGIC", "OR"): "op-time",
    ("MAGIC", "NOR"): "op-time",
    ("MAGIC", "WRITE"): "init-write",
}
DEFAULT_FANINS = {
    ("DCIM", "OR"): range(0, 9),
    ("DCIM", "AND"): range(0, 9),
    ("DCIM", "PRECHARGE"): range(0, 9),
    ("MAGIC", "AND"): range(2, 9),
    ("MAGIC", "OR"): range(1, 9),
    ("MAGIC", "NOR"): range(2, 9),
    ("MAGIC", "WRITE"): range(0, 10),
}
NOMINAL_VDD = {"DCIM": 1.2, "MAGIC": 2.4}
MIN_WINDOW_NS = 1.0
WINDOW_STEP_NS = 0.1


class CalibrationError(RuntimeError):
    pass


def chip_seeds(seed: int, n: int) -> np.ndarray:
    return np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)


@dataclass
class FaninModelSet:
    arch: str
    gate: str
    feature: str
    samples: dict  # fanin -> np.ndarray of feature values (A or s)
    window: MeasurementWindow | None = None
    vdd: float = 1.2
    n_mc: int = 0
    seed: int | None = None
    variation: dict = field(default_factory=dict)
    mean_traces: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        self.samples = {int(k): np.asarray(v, dtype=float) for k, v in self.samples.items()}
        counts = {len(v) for v in self.samples.values()}
        if len(counts) > 1:
            raise ValueError("per-fanin sample counts differ")

    @property
    def fanins(self) -> list:
        return sorted(self.samples)

    def mean(self, k: int) -> float:
        return float(np.mean(self.samples[k]))

    def std(self, k: int) -> float:
        x = self.samples[k]
        return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0

    def means(self) -> np.ndarray:
        return np.array([self.mean(k) for k in self.fanins])

    def stds(self) -> np.ndarray:
        return np.array([self.std(k) for k in self.fanins])

    def bin_edges(self, fanins=None) -> np.ndarray:
        keys = self.fanins if fanins is None else fanins
        return histogram_edges(np.concatenate([self.samples[k] for k in keys]))

    def pdf(self, k: int, edges=None) -> tuple:
        edges = self.bin_edges() if edges is None else edges
        h, _ = np.histogram(self.samples[k], bins=edges, density=True)
        return h, edges

    def cdf(self, k: int, x) -> np.ndarray:
        s = np.sort(self.samples[k])
        return np.searchsorted(s, np.asarray(x), side="right") / len(s)

    def to_dict(self) -> dict:
        return {
            "architecture": self.arch,
            "gate": self.gate,
            "feature": self.feature,
            "vdd": self.vdd,
            "n_mc": self.n_mc,
            "seed": self.seed,
            "variation": self.variation,
            "window": self.window.to_dict() if self.window else None,
            "fanins": {str(k): {"mean": self.mean(k), "std": self.std(k), "samples": self.samples[k].tolist()}
                       for k in self.fanins},
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_dict(cls, d) -> "FaninModelSet":
        w = d.get("window")
        return cls(d["architecture"], d["gate"], d["feature"],
                   {int(k): v["samples"] for k, v in d["fanins"].items()},
                   MeasurementWindow.from_dict(w) if w else None, d["vdd"], d["n_mc"], d.get("seed"),
                   d.get("variation", {}))

    @classmethod
    def load(cls, path) -> "FaninModelSet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def histogram_edges(pooled: np.ndarray) -> np.ndarray:
    """Common grid: Freedman-Diaconis width on the pooled samples, at least 40 bins."""
    lo, hi = float(pooled.min()), float(pooled.max())
    if hi <= lo:
        span = max(abs(lo), 1e-30) * 1e-9
        return np.linspace(lo - span, hi + span, 41)
    q75, q25 = np.percentile(pooled, [75, 25])
    width = 2 * (q75 - q25) / len(pooled) ** (1 / 3)
    n = 40 if width <= 0 else max(40, int(np.ceil((hi - lo) / width)))
    return np.linspace(lo, hi, min(n, 4000) + 1)


def overlap_coefficient(a, b) -> float:
    """Shared histogram area of two samples (1 = identical, 0 = disjoint)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if np.ptp(np.concatenate([a, b])) == 0:
        return 1.0
    edges = histogram_edges(np.concatenate([a, b]))
    pa, _ = np.histogram(a, bins=edges, density=True)
    pb, _ = np.histogram(b, bins=edges, density=True)
    return float(np.clip(np.sum(np.minimum(pa, pb) * np.diff(edges)), 0.0, 1.0))


def adjacent_overlap(model: FaninModelSet, n: int) -> float:
    """Overlap coefficient of the fanin ``n`` and ``n+1`` samples."""
    if n not in model.samples or n + 1 not in model.samples:
        raise KeyError(f"fanins {n} and {n + 1} must both be modeled")
    return overlap_coefficient(model.samples[n], model.samples[n + 1])


# ---------------------------------------------------------------------------
# DCIM feature extraction

def dcim_region(gate: str, sch: dcim.PhaseSchedule) -> tuple:
    """(channel, start_ns, end_ns) searched for the feature window."""
    if gate == "OR":
        return "supply", sch.en2, sch.se2
    if gate == "AND":
        return "ground", sch.en1, sch.se1
    return "supply", sch.precharge[0], sch.precharge[1]


def dcim_stimulus_chip(gate: str, k: int, vdd: float, **kw) -> dcim.DcimChip:
    if gate == "OR":
        return dcim.or_fanin_chip(k, vdd=vdd, **kw)
    if gate == "AND":
        return dcim.fanin_chip([k], vdd=vdd, **kw)
    return dcim.fanin_chip([1] * k, vdd=vdd, **kw)


def dcim_region_samples(gate: str, chip: dcim.DcimChip, instances) -> np.ndarray:
    """Leakage-free magnitude of the feature channel over its region, (B, L) amps."""
    sch = chip.schedule
    stim = np.ones if gate == "OR" else np.zeros
    x = stim((len(instances), chip.n_inputs), dtype=np.uint8)
    # second evaluation of the same stimulus: precharge starts from a repeatable state
    run = dcim.simulate_dcim(chip, x, instances, record=False)
    run = dcim.simulate_dcim(chip, x, instances, initial=(run.final_and, run.final_or))
    return region_from_arrays(gate, run.supply, run.ground, sch)


def region_from_arrays(gate: str, supply: np.ndarray, ground: np.ndarray, sch) -> np.ndarray:
    ch, t0, t1 = dcim_region(gate, sch)
    arr = np.atleast_2d(-supply if ch == "supply" else ground)
    i_idle = slice(sch.index(sch.idle[0]), sch.index(sch.idle[1]))
    leak = np.median(arr[:, i_idle], axis=1, keepdims=True)
    return arr[:, sch.index(t0):sch.index(t1)] - leak


def dcim_window_samples(gate: str, chip: dcim.DcimChip, instances, window: MeasurementWindow) -> np.ndarray:
    """Feature of an arbitrary chip (one value per instance) under the gate's calibration stimulus."""
    _, t0, _ = dcim_region(gate, chip.schedule)
    return window_means(dcim_region_samples(gate, chip, instances), chip.schedule.dt, window.shifted(-t0))


def _dcim_calibrate(gate, fanins, instances, vdd, window):
    sch = dcim.default_schedule()
    regions = {}
    for k in fanins:
        chip = dcim_stimulus_chip(gate, k, vdd)
        if gate != "PRECHARGE":
            _check_dcim_nominal(gate, k, chip)
        regions[k] = dcim_region_samples(gate, chip, instances)
    ch, t0, t1 = dcim_region(gate, sch)
    if window is None:
        if gate == "PRECHARGE":
            window = MeasurementWindow(t0, t1)
        else:
            means = {k: r.mean(axis=0) for k, r in regions.items()}
            window = select_window(means, sch.dt, t0, step=int(round(WINDOW_STEP_NS / sch.dt)),
                                   min_width=int(round(MIN_WINDOW_NS / sch.dt)))
    local = window.shifted(-t0)
    samples = {k: window_means(r, sch.dt, local) for k, r in regions.items()}
    mean_traces = {k: r.mean(axis=0) for k, r in regions.items()}
    return samples, window, mean_traces


def _check_dcim_nominal(gate, k, chip):
    x = np.ones((1, chip.n_inputs), np.uint8) if gate == "OR" else np.zeros((1, chip.n_inputs), np.uint8)
    run = dcim.simulate_dcim(chip, x, record=False)
    expected = 1 if (gate == "OR" and k > 0) else 0
    if int(run.outputs[0]) != expected:
        raise CalibrationError(f"nominal DCIM {gate}{k} stimulus gave output {run.outputs[0]}")


# ---------------------------------------------------------------------------
# MAGIC feature extraction

def _magic_calibrate(gate, fanins, instances, v_write, params):
    samples = {}
    for k in fanins:
        if gate == "WRITE":
            lo = np.stack([inst.lrs_gap[:max(k, 1)] for inst in instances])[:, :k]
            hi = np.stack([inst.hrs_gap[:max(k, 1)] for inst in instances])[:, :k]
            t = np.array([magic.MagicTiming().measure_ns * 1e-9])
            samples[k] = magic.write_current(v_write, hi, lo, t, params)[:, 0] if k else np.zeros(len(instances))
            continue
        prog = magic.single_gate_program(gate, k, v_write, params=params)
        sol = magic_feature_solution(prog, np.ones(k, np.uint8), instances)
        if not np.all(sol.triggered):
            raise CalibrationError(f"MAGIC {gate}{k} did not switch on every chip at {v_write} V")
        # same sampling and op-time rule an attacker applies to a trace
        timing = magic.MagicTiming()
        n = int(round(timing.slot(gate) / timing.dt_ns))
        cur = sol.current_at(np.arange(n) * timing.dt_ns * 1e-9)
        samples[k] = magic.sampled_op_time(cur, timing.dt_ns)
    return samples


def magic_feature_solution(prog, inputs, instances) -> magic.GateSolution:
    run = magic.execute(prog, np.repeat(np.asarray(inputs)[None, :], len(instances), 0), instances)
    return run.solutions[-1]


def magic_steady_currents(kind: str, fanins, v_write: float = 2.4, params: RramParams = RramParams(),
                          stored: int = 0) -> dict:
    """Nominal steady current per fanin with every input storing ``stored``."""
    out = {}
    for n in fanins:
        prog = magic.single_gate_program(kind, n, v_write, params=params)
        run = magic.execute(prog, np.full((1, n), stored, np.uint8))
        out[n] = float(run.solutions[-1].steady_current()[0])
    return out


# ---------------------------------------------------------------------------

def calibrate(arch: str, gate: str, fanins=None, n_mc: int = 200, vdd: float | None = None,
              spec: VariationSpec = VariationSpec(), seed: int = 0, window: MeasurementWindow | None = None,
              params: RramParams = RramParams()) -> FaninModelSet:
    """Build the feature model of one gate with the attack-aligned stimulus.

    DCIM OR uses all-ones inputs and the supply draw in cycle 2; DCIM AND
    uses all-zero inputs and the ground current in cycle 1; DCIM PRECHARGE
    counts discharged bitlines through the next precharge.  MAGIC features
    are the trace op-time (all-ones) and the initialization write current.
    """
    arch, gate = arch.upper(), gate.upper()
    if (arch, gate) not in FEATURES:
        raise ValueError(f"unknown model {arch}/{gate}")
    if n_mc < 2:
        raise ValueError("n_mc must be at least 2")
    fanins = list(DEFAULT_FANINS[(arch, gate)] if fanins is None else fanins)
    vdd = NOMINAL_VDD[arch] if vdd is None else vdd
    seeds = chip_seeds(seed, n_mc)
    instances = [sample_instance(spec, int(s), params=params) for s in seeds]
    mean_traces = None
    if arch == "DCIM":
        samples, window, mean_traces = _dcim_calibrate(gate, fanins, instances, vdd, window)
    else:
        samples = _magic_calibrate(gate, fanins, instances, vdd, params)
    return FaninModelSet(arch, gate, FEATURES[(arch, gate)], samples, window, vdd, n_mc, seed,
                         spec.to_dict(), mean_traces)


def subsample_study(model: FaninModelSet, counts=(25, 50, 100), trials: int = 200, seed: int = 0,
                    pair: tuple | None = None) -> dict:
    """Margin degradation and STD error when only ``count`` chips are profiled.

    The margin is the mean gap between the two fanins of ``pair`` (default:
    the two largest).  Degradation is E|margin_sub - margin_full| / margin_full;
    STD inflation is E|std_sub - std_full| / std_full with the pooled STD of
    the pair.  Subsamples draw the same chips for both fanins.
    """
    a, b = pair if pair is not None else model.fanins[-2:]
    xa, xb = model.samples[a], model.samples[b]
    n = len(xa)
    full_margin = abs(xb.mean() - xa.mean())
    full_std = np.sqrt(0.5 * (xa.var(ddof=1) + xb.var(ddof=1)))
    rng = np.random.default_rng(seed)
    out = {}
    for c in counts:
        if c > n:
            raise ValueError(f"subsample of {c} exceeds the {n} modeled chips")
        deg, infl = [], []
        for _ in range(trials):
            idx = rng.choice(n, size=c, replace=False)
            m = abs(xb[idx].mean() - xa[idx].mean())
            s = np.sqrt(0.5 * (xa[idx].var(ddof=1) + xb[idx].var(ddof=1))) if c > 1 else 0.0
            deg.append(abs(m - full_margin) / full_margin)
            infl.append(abs(s - full_std) / full_std if full_std > 0 else 0.0)
        out[c] = {"margin_degradation": float(np.mean(deg)), "std_inflation": float(np.mean(infl))}
    return out


DCIM_SWEEP = tuple(round(0.75 + 0.05 * i, 2) for i in range(26))
MAGIC_SWEEP = tuple(round(2.2 + 0.1 * i, 1) for i in range(9))


def sweep(arch: str, gate: str, voltages=None, fanins=None, n_mc: int = 50,
          spec: VariationSpec = VariationSpec(), seed: int = 0) -> list:
    """Rows of (vdd, fanin, mean, std, overlap with fanin+1) over a voltage grid.

    DCIM uses the window chosen at nominal VDD for every voltage so that the
    rows compare the same part of the waveform.
    """
    arch, gate = arch.upper(), gate.upper()
    voltages = (DCIM_SWEEP if arch == "DCIM" else MAGIC_SWEEP) if voltages is None else voltages
    window = None
    if arch == "DCIM":
        window = calibrate(arch, gate, fanins, 2, NOMINAL_VDD[arch], NO_VARIATION, seed).window
    rows = []
    for v in voltages:
        m = calibrate(arch, gate, fanins, n_mc, v, spec, seed, window=window)
        ks = m.fanins
        for k in ks:
            ov = adjacent_overlap(m, k) if k + 1 in m.samples else float("nan")
            rows.append({"vdd": float(v), "fanin": k, "mean": m.mean(k), "std": m.std(k), "overlap": ov})
    return rows


def write_csv(rows: list, path) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
