"""Defenses against structure recovery: redundant biased inputs and full literal expansion."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import dcim, magic
from .device import VariationSpec, sample_instance
from .logic import (CapacityError, SopFunction, all_inputs, candidate_space_size, expand_full,
                    structure_of)
from .profiler import FaninModelSet, chip_seeds, dcim_window_samples, overlap_coefficient

KINDS = ("redundant-inputs", "expand-literals")


@dataclass(frozen=True)
class ProtectionConfig:
    """Redundant inputs per bitline or gate, with bias levels as fractions of VDD.

    With ``randomize`` each bitline gets a count drawn from 0..k_redundant.
    The sense references move because redundant cells hold a minterm-1 AND
    bitline near VDD - bias_and - Vth and lift a 0-output OR bitline.
    """

    kind: str = "redundant-inputs"
    k_redundant: int = 2
    randomize: bool = False
    seed: int = 0
    and_bias: float = 1 / 3
    or_bias: float = 2 / 3
    v_ref_and: float = 0.65
    v_ref_or: float = 0.35
    max_extra_rows: int = 8
    max_fanin: int = 8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.k_redundant < 0:
            raise ValueError("k_redundant must be non-negative")
        for name in ("and_bias", "or_bias", "v_ref_and", "v_ref_or"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie strictly between 0 and VDD")

    def counts(self, n: int) -> np.ndarray:
        if not self.randomize:
            return np.full(n, self.k_redundant, dtype=int)
        return np.random.default_rng(self.seed).integers(0, self.k_redundant + 1, n)


def protect_redundant(chip, cfg: ProtectionConfig = ProtectionConfig()):
    """Pad every minterm with fixed redundant inputs; the computed function is unchanged."""
    if cfg.k_redundant == 0:
        return chip
    if isinstance(chip, dcim.DcimChip):
        return _protect_dcim(chip, cfg)
    if isinstance(chip, magic.MagicProgram):
        return _protect_magic(chip, cfg)
    raise TypeError("expected a DcimChip or MagicProgram")


def _protect_dcim(chip: dcim.DcimChip, cfg: ProtectionConfig) -> dcim.DcimChip:
    if cfg.k_redundant > cfg.max_extra_rows:
        raise CapacityError(f"{cfg.k_redundant} redundant rows exceed the {cfg.max_extra_rows} spare rows")
    cols = chip.n_cols
    active = np.flatnonzero(chip.active_cols)
    k_col = np.zeros(cols, dtype=int)
    k_col[active] = cfg.counts(len(active))
    k = cfg.k_redundant
    v_and, v_or = cfg.and_bias * chip.vdd, cfg.or_bias * chip.vdd
    extra = np.zeros((k, cols), dtype=bool)
    for j in range(cols):
        extra[:k_col[j], j] = True
    and_lrs = np.vstack([chip.and_lrs, extra])
    and_rows = chip.and_rows + (("bias", v_and),) * k
    or_lrs = np.concatenate([chip.or_lrs, np.ones(k, dtype=bool)])
    or_rows = chip.or_rows + (("bias", v_or),) * k
    return replace(chip, and_lrs=and_lrs, and_rows=and_rows, or_lrs=or_lrs, or_rows=or_rows,
                   v_ref_and=cfg.v_ref_and * chip.vdd, v_ref_or=cfg.v_ref_or * chip.vdd)


def _protect_magic(prog: magic.MagicProgram, cfg: ProtectionConfig) -> magic.MagicProgram:
    # AND inputs padded with stored 1s (LRS in series), OR/NOR inputs with stored 0s (HRS in parallel)
    counts = cfg.counts(len(prog.gates))
    gates, consts = [], dict(prog.constant_cells)
    nxt = prog.n_cells
    for g, k in zip(prog.gates, counts):
        if len(g.inputs) + k > cfg.max_fanin:
            raise CapacityError(f"{g.kind}{len(g.inputs)} + {k} exceeds fanin {cfg.max_fanin}")
        pad = list(range(nxt, nxt + k))
        nxt += k
        for c in pad:
            consts[c] = 1 if g.kind == "AND" else 0
        gates.append(magic.MagicGate(g.kind, tuple(g.inputs) + tuple(pad), g.output))
    return replace(prog, gates=gates, n_cells=nxt, constant_cells=consts)


def protect_expand(f: SopFunction) -> SopFunction:
    """Every minterm becomes a full-fanin canonical minterm."""
    return expand_full(f)


@dataclass
class OverheadReport:
    area_delta_cells: float  # added cells / cells used
    area_delta_rows: float  # added rows / input rows (cells for MAGIC)
    power_delta: float
    re_effort_factor: float
    obfuscation: float | None = None
    decoy_fanin: int | None = None

    def __post_init__(self):
        if self.re_effort_factor < 1:
            raise ValueError("re_effort_factor must be at least 1")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _patterns(n_vars: int, limit: int = 16, seed: int = 0) -> np.ndarray:
    x = np.array(list(all_inputs(n_vars)), dtype=np.uint8).reshape(-1, n_vars)
    if len(x) > limit:
        x = x[np.sort(np.random.default_rng(seed).choice(len(x), limit, replace=False))]
    return x


def mean_energy(chip, n_patterns: int = 16, seed: int = 0) -> float:
    """Mean supply energy (J) of one evaluation over a fixed set of input patterns."""
    if isinstance(chip, dcim.DcimChip):
        n = chip.function.n_vars if chip.function is not None else chip.n_inputs
        x = _patterns(n, n_patterns, seed)
        run = dcim.simulate_dcim(chip, x, chip.instance)
        return float(chip.vdd * (-run.supply).sum(axis=1).mean() * run.dt_ns * 1e-9)
    x = _patterns(chip.n_vars, n_patterns, seed)
    es = [magic.run_program(chip, b, chip.instance)[1].energy(chip.v_write) for b in x]
    return float(np.mean(es))


def _array_usage(chip) -> tuple:
    """(cells used, input rows or cells) of the original accounting bases."""
    if isinstance(chip, dcim.DcimChip):
        return int(chip.and_lrs.sum() + chip.or_lrs.sum()), chip.n_inputs
    return chip.n_cells, chip.n_cells


def truth_preserved(original, protected) -> bool:
    """Exhaustive output comparison."""
    def table(c):
        if isinstance(c, dcim.DcimChip):
            return dcim.truth_outputs(c)
        x = np.array(list(all_inputs(c.n_vars)), dtype=np.uint8).reshape(-1, c.n_vars)
        return magic.execute(c, x).outputs
    return bool(np.array_equal(table(original), table(protected)))


def evaluate_protection(original, protected, and_model: FaninModelSet | None = None,
                        n_mc: int = 0, spec: VariationSpec = VariationSpec(), seed: int = 0) -> OverheadReport:
    """Overheads of a protected chip versus the original, plus an obfuscation score.

    Area compares programmed cells and added rows.  Power is the ratio of
    mean evaluation energies.  Effort compares candidate-minterm spaces of
    the recovered-looking structures.  For DCIM redundant inputs with an
    AND model and ``n_mc`` > 1, the score is the overlap between the first
    padded column and the unprotected fanin class closest to it.
    """
    used, base_rows = _array_usage(original)
    used_p, _ = _array_usage(protected)
    if isinstance(original, dcim.DcimChip):
        rows_added = (len(protected.and_rows) - len(original.and_rows))
        rows_added = max(rows_added, protected.n_cols - original.n_cols, 0)
    else:
        rows_added = protected.n_cells - original.n_cells
    e0, e1 = mean_energy(original), mean_energy(protected)
    f0, f1 = original.function, protected.function
    effort = 1.0
    if f0 is not None and f1 is not None and structure_of(f0) != structure_of(f1):
        n = f0.n_vars
        effort = candidate_space_size(structure_of(f1), n, True) / candidate_space_size(
            structure_of(f0), n, f0.has_complements)
        effort = max(effort, 1.0)
    score, decoy = None, None
    if and_model is not None and n_mc > 1 and isinstance(protected, dcim.DcimChip):
        score, decoy = redundancy_obfuscation(original, protected, and_model, n_mc, spec, seed)
    return OverheadReport((used_p - used) / used if used else 0.0, rows_added / base_rows,
                          (e1 - e0) / e0 if e0 else 0.0, effort, score, decoy)


def _single_column(chip: dcim.DcimChip, col: int) -> dcim.DcimChip:
    """Chip keeping only column ``col`` (moved to column 0) and no function."""
    and_lrs = np.zeros_like(chip.and_lrs)
    and_lrs[:, 0] = chip.and_lrs[:, col]
    or_lrs = np.zeros_like(chip.or_lrs)
    return replace(chip, and_lrs=and_lrs, or_lrs=or_lrs, function=None, instance=None)


def redundancy_obfuscation(original: dcim.DcimChip, protected: dcim.DcimChip, and_model: FaninModelSet,
                           n_mc: int = 200, spec: VariationSpec = VariationSpec(), seed: int = 0) -> tuple:
    """(overlap, decoy fanin) of the first padded column against the nearest unprotected class."""
    col = int(np.flatnonzero(protected.active_cols)[0])
    chip = _single_column(protected, col)
    inst = [sample_instance(spec, int(s)) for s in chip_seeds(seed, n_mc)]
    x = dcim_window_samples("AND", chip, inst, and_model.window)
    return decoy_overlap(x, and_model)


def decoy_overlap(samples, and_model: FaninModelSet) -> tuple:
    """Overlap with the unprotected fanin class whose mean is closest to the samples' mean."""
    means = and_model.means()
    k = and_model.fanins[int(np.argmin(np.abs(means - np.mean(samples))))]
    return overlap_coefficient(samples, and_model.samples[k]), k


def redundant_fanin_samples(k_true: int, k_red: int, and_model: FaninModelSet, n_mc: int = 200,
                            spec: VariationSpec = VariationSpec(), seed: int = 0,
                            cfg: ProtectionConfig | None = None) -> np.ndarray:
    """AND-window feature of a fanin-``k_true`` bitline padded with ``k_red`` redundant cells."""
    cfg = replace(cfg or ProtectionConfig(), k_redundant=k_red, randomize=False)
    chip = protect_redundant(dcim.fanin_chip([k_true], vdd=and_model.vdd), cfg)
    inst = [sample_instance(spec, int(s)) for s in chip_seeds(seed, n_mc)]
    return dcim_window_samples("AND", chip, inst, and_model.window)
