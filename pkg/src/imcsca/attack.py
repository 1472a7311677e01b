"""Structure recovery from current traces and structure-guided function extraction.

Attacks talk to a chip only through an oracle: ``apply(bits)`` returns the
output bit and the current trace of one evaluation.  The same code runs
against simulators or recorded trace archives.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np

from . import dcim, magic
from .device import RramParams, SelectorParams
from .logic import (SopFunction, StructureDescriptor, all_inputs, bits_of, candidate_minterms,
                    evaluate)
from .profiler import FaninModelSet, dcim_region
from .traces import (CurrentTrace, EventThresholds, active_segments, add_noise, detect_events,
                     estimate_leakage, mean_current)


class OutOfModelError(ValueError):
    pass


class BudgetError(RuntimeError):
    pass


class ContradictionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# classification

@dataclass(frozen=True)
class Classification:
    best: int
    likelihoods: dict  # fanin -> likelihood relative to the best (best = 1)
    ambiguity: tuple

    @property
    def ambiguous(self) -> bool:
        return len(self.ambiguity) > 1


def _sigma_floor(model: FaninModelSet) -> float:
    m = model.means()
    gaps = np.abs(np.diff(m))
    gaps = gaps[gaps > 0]
    return 1e-3 * (gaps.min() if len(gaps) else max(abs(m).max(), 1e-30))


def classify_fanin(value: float, model: FaninModelSet, rho: float = 0.2) -> Classification:
    """Gaussian maximum likelihood over the model's fanins.

    A fanin with zero spread gets a tiny floor width, which turns the
    decision into nearest-mean matching.  Fanins whose likelihood is within
    ``rho`` of the best form the ambiguity set.
    """
    if not model.samples:
        raise ValueError("empty model")
    ks = model.fanins
    mu = model.means()
    sd = np.maximum(model.stds(), _sigma_floor(model))
    z = (value - mu) / sd
    if np.min(np.abs(z)) > 6:
        raise OutOfModelError(f"feature {value:.4g} lies outside every modeled fanin")
    ll = -0.5 * z**2 - np.log(sd)
    rel = np.exp(ll - ll.max())
    best = ks[int(np.argmax(ll))]
    amb = tuple(k for k, r in zip(ks, rel) if r >= rho)
    return Classification(best, {k: float(r) for k, r in zip(ks, rel)}, amb)


def decompose_total(total: float, model: FaninModelSet, m: int, max_in: int | None = None,
                    rho: float = 0.2, sigma_floor: float | None = None) -> tuple:
    """Best multiset of ``m`` fanins whose per-bitline contributions add up to ``total``.

    Contributions are ``mean(k) - mean(0)`` of a model whose fanin 0 is an
    empty bitline; ``total`` must have the same baseline removed.  Returns
    (best tuple, alternatives within ``rho``).
    """
    if m == 0:
        return (), []
    ks = [k for k in model.fanins if k >= 1 and (max_in is None or k <= max_in)]
    base = model.mean(0)
    c = {k: model.mean(k) - base for k in ks}
    v = {k: model.std(k) ** 2 for k in ks}
    floor = _sigma_floor(model) if sigma_floor is None else sigma_floor
    scored = []
    for combo in itertools.combinations_with_replacement(ks, m):
        s = sum(c[k] for k in combo)
        var = sum(v[k] for k in combo) + model.std(0) ** 2 + floor**2
        scored.append((-0.5 * (total - s) ** 2 / var - 0.5 * np.log(var), combo))
    scored.sort(key=lambda x: (-x[0], x[1]))
    best_ll, best = scored[0]
    alts = [combo for ll, combo in scored[1:] if np.exp(ll - best_ll) >= rho]
    return best, alts[:10]


# ---------------------------------------------------------------------------
# oracles

class DcimOracle:
    """Stateful DCIM chip: bitline voltages carry over between evaluations."""

    def __init__(self, chip: dcim.DcimChip, noise_sigma: float = 0.0, seed: int = 0):
        self.chip = chip
        self.n_vars = chip.function.n_vars if chip.function is not None else chip.n_inputs
        self.noise_sigma = noise_sigma
        self._rng = np.random.default_rng(seed)
        self._state = None
        self.queries = 0
        self._table = None

    def apply(self, bits) -> tuple:
        self.queries += 1
        run = dcim.simulate_dcim(self.chip, [bits], self.chip.instance, self._state)
        self._state = (run.final_and, run.final_or)
        tr = run.trace(0)
        if self.noise_sigma:
            tr = add_noise(tr, self.noise_sigma, self._rng.integers(2**32))
        return int(run.outputs[0]), tr

    def output(self, bits) -> int:
        """Output bit only; evaluated from one batched simulation of every input."""
        if self._table is None:
            self._table = dcim.truth_outputs(self.chip, self.n_vars)
        x = sum(int(b) << i for i, b in enumerate(bits))
        return int(self._table[x])


class MagicOracle:
    def __init__(self, program: magic.MagicProgram, noise_sigma: float = 0.0, seed: int = 0,
                 timing: magic.MagicTiming = magic.MagicTiming()):
        self.program = program
        self.n_vars = program.n_vars
        self.noise_sigma = noise_sigma
        self.timing = timing
        self._rng = np.random.default_rng(seed)
        self.queries = 0
        self._table = None

    def apply(self, bits) -> tuple:
        self.queries += 1
        out, tr = magic.run_program(self.program, bits, self.program.instance, self.timing)
        if self.noise_sigma:
            tr = add_noise(tr, self.noise_sigma, self._rng.integers(2**32))
        return out, tr

    def output(self, bits) -> int:
        if self._table is None:
            x = np.array(list(all_inputs(self.n_vars)), dtype=np.uint8).reshape(-1, self.n_vars)
            self._table = magic.execute(self.program, x).outputs
        x = sum(int(b) << i for i, b in enumerate(bits))
        return int(self._table[x])


class RecordedOracle:
    """Replays an archive directory of ``<pattern bits>.trace`` files plus ``outputs.json``."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.outputs = json.loads((self.dir / "outputs.json").read_text())
        self.n_vars = len(next(iter(self.outputs)))
        self.queries = 0

    def apply(self, bits) -> tuple:
        self.queries += 1
        key = "".join(str(int(b)) for b in bits)
        return int(self.outputs[key]), CurrentTrace.read(self.dir / f"{key}.trace")

    def output(self, bits) -> int:
        return int(self.outputs["".join(str(int(b)) for b in bits)])


def record_archive(oracle, patterns, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    outs = {}
    for bits in patterns:
        key = "".join(str(int(b)) for b in bits)
        out, tr = oracle.apply(bits)
        tr.write(d / f"{key}.trace")
        outs[key] = out
    (d / "outputs.json").write_text(json.dumps(outs, indent=1))


# ---------------------------------------------------------------------------
# DCIM attacks

def _dcim_feature(trace: CurrentTrace, gate: str, model: FaninModelSet) -> float:
    ch, _, _ = dcim_region(gate, dcim.default_schedule())
    leak = estimate_leakage(trace)
    x = mean_current(trace, model.window, ch) - leak[0 if ch == "supply" else 1]
    return -x if ch == "supply" else x


def precharge_energy_of(trace: CurrentTrace, vdd: float) -> float:
    """Supply energy drawn during the precharge phase, leakage removed (J)."""
    p = trace.phase("precharge")
    leak = estimate_leakage(trace)[0]
    i0, i1 = int(round(p.start / trace.dt_ns)), int(round(p.end / trace.dt_ns))
    drawn = -(trace.channel("supply")[i0:i1] - leak)
    return float(vdd * drawn.sum() * trace.dt_ns * 1e-9)


@dataclass
class DcimStructure:
    structure: StructureDescriptor
    or_class: Classification
    alternatives: list = field(default_factory=list)
    active_bls: int | None = None
    stimulus: tuple | None = None
    patterns_used: int = 0


def _decompose_and(trace, and_model, m, rho):
    x = _dcim_feature(trace, "AND", and_model) - and_model.mean(0)
    return decompose_total(x, and_model, m, rho=rho)


def attack_dcim_m1(oracle, or_model: FaninModelSet, and_model: FaninModelSet, rho: float = 0.2) -> DcimStructure:
    """All-ones stimulus for the OR fanin, all-zeros for the total AND discharge."""
    n = oracle.n_vars
    t1 = _settled(oracle, (1,) * n)
    cls = classify_fanin(_dcim_feature(t1, "OR", or_model), or_model, rho)
    m = cls.best
    t0 = _settled(oracle, (0,) * n)
    best, alts = _decompose_and(t0, and_model, m, rho)
    return DcimStructure(StructureDescriptor(m, best), cls, [list(a) for a in alts], patterns_used=2)


def _settled(oracle, bits) -> CurrentTrace:
    """Trace of a repeated stimulus, so the precharge starts from the state the models assume."""
    oracle.apply(bits)
    return oracle.apply(bits)[1]


def attack_dcim_m2(oracle, or_model: FaninModelSet, and_model: FaninModelSet,
                   precharge_model: FaninModelSet | None = None, rho: float = 0.2,
                   budget: int | None = None) -> DcimStructure:
    """Find an all-minterms-0 pattern, count bitlines by precharge energy, then decompose.

    Each evaluation's precharge refills what the previous pattern
    discharged, so a chain of queries measures the pattern before each one.
    Flipping one variable at a time and keeping the flips that raise that
    energy predicts the pattern with every literal at 0, which is probed
    first; a numeric scan is the fallback.  Flips are judged independently,
    which holds when every variable has a single polarity.
    """
    n = oracle.n_vars
    budget = 2**n if budget is None else budget
    vdd = or_model.vdd
    e_full = 100e-15 * vdd * (vdd - SelectorParams().v_threshold)
    eps = 0.02 * e_full
    seen = set()

    def probe(bits):
        """Settled trace and whether the OR cycle sits at leakage level."""
        if bits not in seen and len(seen) >= budget:
            raise BudgetError(f"no all-minterms-0 pattern within {budget} patterns (tautology?)")
        seen.add(bits)
        tr = _settled(oracle, bits)
        # other AND cells add a little steady current here, so only decide zero versus nonzero
        x_or = _dcim_feature(tr, "OR", or_model)
        return tr, abs(x_or - or_model.mean(0)) < abs(x_or - or_model.mean(1))

    def flip_deltas(base):
        """Energy change of each single-variable flip; the base must be the last query."""
        flips = [tuple(1 - v if j == i else v for j, v in enumerate(base)) for i in range(n)]
        es = []
        for bits in flips + [base]:
            seen.add(bits)
            es.append(precharge_energy_of(oracle.apply(bits)[1], vdd))
        return [e - es[0] for e in es[1:]]

    base = (0,) * n
    tr_star, ok = probe(base)
    deltas = flip_deltas(base)
    star = tuple(1 - v if d > eps else v for v, d in zip(base, deltas))
    if not ok:
        tr_star, ok = probe(star)
    if not ok:
        for x in range(2**n):
            bits = bits_of(x, n)
            if bits in seen:
                continue
            tr_star, ok = probe(bits)
            if ok:
                deltas = flip_deltas(bits)
                star = tuple(1 - v if d > eps else v for v, d in zip(bits, deltas))
                tr_star, _ = probe(star)
                break
        else:
            raise BudgetError("no all-minterms-0 pattern exists (tautology)")
    elif star != base:
        tr_star, _ = probe(star)
    flags = tuple("unused" if abs(d) <= eps else ("complemented" if star[i] else "true")
                  for i, d in enumerate(deltas))
    if precharge_model is not None:
        feat = -(mean_current(tr_star, precharge_model.window, "supply") - estimate_leakage(tr_star)[0])
        # per-bitline draw varies a little with the bitline's fanin, so round on the linear fit
        ks = np.array(precharge_model.fanins, dtype=float)
        slope, icept = np.polyfit(ks, precharge_model.means(), 1)
        m = int(max(round((feat - icept) / slope), 0))
    else:
        m = int(round(precharge_energy_of(tr_star, vdd) / e_full))
    best, alts = _decompose_and(tr_star, and_model, m, rho)
    s = StructureDescriptor(m, best, complement_flags=flags)
    cls = Classification(m, {m: 1.0}, (m,))
    return DcimStructure(s, cls, [list(a) for a in alts], active_bls=m, stimulus=star, patterns_used=len(seen))


# ---------------------------------------------------------------------------
# MAGIC attacks

@dataclass(frozen=True)
class FaninInferenceParams:
    v_write: float = 2.4
    r_lrs: float = 58.9e3
    r_hrs: float = 6.7e6
    max_in: int = 8

    def __post_init__(self):
        if min(self.v_write, self.r_lrs, self.r_hrs, self.max_in) <= 0 or self.r_lrs >= self.r_hrs:
            raise ValueError("inference parameters must be positive with r_lrs < r_hrs")

    def drive(self, kind: str) -> float:
        return magic.GATE_TEMPLATES[kind].drive_scale * self.v_write


def invert_rule(kind: str, current: float, p: FaninInferenceParams = FaninInferenceParams(),
                exact: bool = True) -> float:
    """Fanin implied by a steady all-zero-input current (unrounded).

    AND: n = V/(R_HRS I) - 1.  OR: n/(n+1) = R_HRS I / V.  NOR (output LRS):
    I = V / (R_HRS/n + R_LRS), so n = R_HRS I / (V - I R_LRS); with
    ``exact=False`` the first-order form n = R_HRS I / V is used instead.
    """
    v = p.drive(kind)
    if kind == "AND":
        return v / (p.r_hrs * current) - 1
    if kind == "OR":
        q = p.r_hrs * current / v
        return q / (1 - q) if q < 1 else np.inf
    if kind == "NOR":
        return p.r_hrs * current / (v - current * p.r_lrs) if exact else p.r_hrs * current / v
    raise ValueError(kind)


def rule_fanin(kind: str, current: float, p: FaninInferenceParams = FaninInferenceParams(),
               exact: bool = True) -> int:
    """Rounded to the nearest positive whole number, capped at ``max_in``."""
    n = invert_rule(kind, current, p, exact)
    return int(min(max(round(n), 1), p.max_in)) if np.isfinite(n) else p.max_in


def rule_bracket(kind: str, current: float, p: FaninInferenceParams = FaninInferenceParams()) -> bool:
    """Whether an all-zero steady current is admissible for ``kind``."""
    v, rh, mx = p.drive(kind), p.r_hrs, p.max_in
    if kind == "AND":
        return v / ((mx + 1) * rh) * 0.999 <= current <= v / rh * 1.001
    if kind == "OR":
        return 0.5 * v / rh * 0.999 <= current <= mx / (mx + 1) * v / rh * 1.001
    return v / rh * 0.9 <= current <= mx * v / rh * 1.2


@dataclass
class GateObservation:
    kind: str
    fanin: int
    rule_fanin: int
    model_fanin: int | None
    op_time: float | None
    steady_current: float
    ambiguous: bool = False


@dataclass
class MagicStructure:
    gates: list
    structure: StructureDescriptor
    flags: list = field(default_factory=list)
    patterns_used: int = 0


MIN_GATE_NS = 100.0


def gate_segments(trace: CurrentTrace, thresholds: EventThresholds = EventThresholds()) -> list:
    """[start, end) sample ranges of gate evaluations (activity longer than a write slot)."""
    segs = active_segments(trace, "supply", thresholds)
    return [s for s in segs if (s[1] - s[0]) * trace.dt_ns >= MIN_GATE_NS]


def write_segments(trace: CurrentTrace, thresholds: EventThresholds = EventThresholds()) -> list:
    segs = active_segments(trace, "supply", thresholds)
    return [s for s in segs if (s[1] - s[0]) * trace.dt_ns < MIN_GATE_NS]


def segment_current(trace: CurrentTrace, seg) -> np.ndarray:
    leak = estimate_leakage(trace)[0]
    return -(trace.channel("supply")[seg[0]:seg[1]] - leak)


def segment_op_time(trace: CurrentTrace, seg, min_ratio: float = 1.5) -> float | None:
    """Op-time (s) of one gate segment; None when the current does not switch."""
    t = magic.sampled_op_time(segment_current(trace, seg), trace.dt_ns, min_ratio)
    return None if np.isnan(t) else float(t)


def attack_magic_m1(oracle, models: dict, params: FaninInferenceParams = FaninInferenceParams(),
                    stimulus_zero=None, stimulus_one=None, rho: float = 0.2) -> MagicStructure:
    """Per-gate type and fanin from op-times (all literals 1) and steady currents (all literals 0).

    ``models`` maps gate kind -> op-time FaninModelSet.  The fanin is the
    rounded rule inversion of the steady current; the op-time model gives
    an independent estimate, and a disagreement beyond 1 flags the gate.
    """
    n = oracle.n_vars
    z = tuple(stimulus_zero) if stimulus_zero is not None else (0,) * n
    o = tuple(stimulus_one) if stimulus_one is not None else (1,) * n
    _, t_one = oracle.apply(o)
    _, t_zero = oracle.apply(z)
    segs1, segs0 = gate_segments(t_one), gate_segments(t_zero)
    if len(segs1) != len(segs0):
        raise ContradictionError("gate segmentation differs between the two stimuli")
    and_max = models["AND"].means().max() if "AND" in models else 1e-6
    or_min = models["OR"].means().min() if "OR" in models else 1e-6
    split = np.sqrt(and_max * or_min)
    gates = []
    for s1, s0 in zip(segs1, segs0):
        op = segment_op_time(t_one, s1)
        i_seg = segment_current(t_zero, s0)
        steady = float(i_seg[min(4, len(i_seg) - 1)])
        i1 = segment_current(t_one, s1)
        if op is None:
            kind = "OR" if rule_bracket("OR", steady, params) and not rule_bracket("AND", steady, params) else "AND"
        elif i1[-1] < i1[0]:
            kind = "NOR"
        else:
            kind = "OR" if op > split else "AND"
        rf = rule_fanin(kind, steady, params)
        mf, amb = None, False
        if op is not None and kind in models:
            try:
                c = classify_fanin(op, models[kind], rho)
                mf = c.best
                amb = abs(mf - rf) > 1
            except OutOfModelError:
                amb = True
        gates.append(GateObservation(kind, rf, rf, mf, op, steady, amb))
    and_f = [g.fanin for g in gates if g.kind == "AND"]
    ors = [g for g in gates if g.kind == "OR"]
    if not gates:
        s = StructureDescriptor(0, ())
    else:
        m = ors[-1].fanin if ors else len(and_f)
        singles = max(m - len(and_f), 0)
        s = StructureDescriptor(len(and_f) + singles, tuple(and_f) + (1,) * singles)
    return MagicStructure(gates, s, patterns_used=2)


def write_count(trace: CurrentTrace, v_write: float = 2.4, write_model: FaninModelSet | None = None,
                params: RramParams = RramParams(), timing: magic.MagicTiming = magic.MagicTiming()) -> int:
    """Cells switched 0 -> 1 during initialization, read slot by slot."""
    unit = v_write / params.r_mid
    k_meas = int(round(timing.measure_ns / trace.dt_ns))
    total = 0
    for seg in write_segments(trace):
        i = segment_current(trace, seg)
        x = float(i[min(k_meas, len(i) - 1)])
        if write_model is not None:
            total += classify_fanin(x, write_model).best
        else:
            total += int(round(x / unit))
    return total


@dataclass
class MagicM2Result:
    lrs_count: int
    hrs_count: int
    flags: tuple
    structure: StructureDescriptor | None = None
    gates: list = field(default_factory=list)
    patterns_used: int = 0


def attack_magic_m2(oracle, write_model: FaninModelSet | None = None, op_models: dict | None = None,
                    params: FaninInferenceParams = FaninInferenceParams(), n_cells: int | None = None) -> MagicM2Result:
    """Flip test on initialization counts; then model 1 on polarity-aligned stimuli.

    With every input at 1, flipping input ``i`` to 0 changes the number of
    cells written to 1 by (#complemented - #true) occurrences of ``i``.
    """
    n = oracle.n_vars
    base_bits = (1,) * n
    _, tr = oracle.apply(base_bits)
    base = write_count(tr, params.v_write, write_model)
    flags = []
    for i in range(n):
        bits = tuple(0 if j == i else 1 for j in range(n))
        _, tr_i = oracle.apply(bits)
        d = write_count(tr_i, params.v_write, write_model) - base
        flags.append("unused" if d == 0 else ("true" if d < 0 else "complemented"))
    used = n + 1
    hrs = (n_cells - base) if n_cells is not None else -1
    res = MagicM2Result(base, hrs, tuple(flags), patterns_used=used)
    if op_models is not None:
        zero = tuple(1 if f == "complemented" else 0 for f in flags)
        one = tuple(1 - b for b in zero)
        m1 = attack_magic_m1(oracle, op_models, params, zero, one)
        res.structure = StructureDescriptor(m1.structure.or_fanin, m1.structure.and_fanins, tuple(flags))
        res.gates = m1.gates
        res.patterns_used += m1.patterns_used
    return res


# ---------------------------------------------------------------------------
# paradigm

def identify_paradigm(trace: CurrentTrace, thresholds: EventThresholds = EventThresholds()) -> tuple:
    """('DCIM' | 'MAGIC' | 'unknown', sharp changes inside gate-length activity)."""
    events = detect_events(trace, thresholds)
    if not events:
        return "unknown", 0
    long_segs = gate_segments(trace, thresholds)
    spans = [(a * trace.dt_ns, b * trace.dt_ns) for a, b in long_segs]
    sharp = [e for e in events if e.kind == "sharp-change" and e.channel == "supply"
             and any(s <= e.start and e.end <= t for s, t in spans)]
    # precharge and short-circuit peaks only occur on precharged bitlines
    bipolar = any(e.kind in ("short-circuit-peak", "precharge-peak") for e in events)
    if len(sharp) > 1 or (long_segs and not bipolar):
        return "MAGIC", len(sharp)
    if bipolar:
        return "DCIM", len(sharp)
    return ("MAGIC" if long_segs else "unknown"), len(sharp)


# ---------------------------------------------------------------------------
# extraction

def _term_table(term, n: int) -> np.ndarray:
    x = np.arange(2**n)
    ok = np.ones(2**n, dtype=bool)
    for lit in term:
        bit = ((x >> lit.var) & 1).astype(bool)
        ok &= ~bit if lit.complemented else bit
    return ok


def _structure_groups(s: StructureDescriptor) -> dict:
    groups: dict = {}
    for k in s.and_fanins:
        groups[k] = groups.get(k, 0) + 1
    return groups


def _candidate_count(s, n, allow) -> int:
    total = 1
    for k, c in _structure_groups(s).items():
        total *= comb(len(candidate_minterms(k, n, allow)) if k <= n else 0, c)
    return total


def _enumerate_candidates(s, n, allow):
    groups = sorted(_structure_groups(s).items())
    choices = [list(itertools.combinations(candidate_minterms(k, n, allow), c)) for k, c in groups]
    for parts in itertools.product(*choices):
        yield tuple(t for part in parts for t in part)


@dataclass
class Extraction:
    function: SopFunction
    patterns_used: int
    brute_force_patterns: int
    strategy: str

    @property
    def reduction(self) -> float:
        return 1 - self.patterns_used / self.brute_force_patterns


def extract_function(output, n_vars: int, structure: StructureDescriptor, allow_complements: bool = False,
                     max_candidates: int = 200_000) -> Extraction:
    """Recover the function with as few output queries as the structure allows.

    ``output`` maps an input tuple to the chip's output bit.  Small version
    spaces are split greedily by the pattern with the most balanced
    prediction (lowest pattern value on ties).  Large true-literal spaces
    are resolved by testing each candidate minterm's indicator pattern;
    large complemented spaces fall back to the full truth table.
    """
    if any(k > n_vars for k in structure.and_fanins):
        raise ValueError("structure needs more variables than available")
    asked: dict = {}

    def ask(x: int) -> int:
        if x not in asked:
            asked[x] = int(output(bits_of(x, n_vars)))
        return asked[x]

    brute = 2**n_vars
    if structure.or_fanin == 0:
        f = SopFunction(n_vars, ())
        strategy = "empty"
        for x in range(brute):
            if ask(x):
                raise ContradictionError("empty structure but the chip outputs 1")
            break
        return Extraction(f, len(asked), brute, strategy)
    if _candidate_count(structure, n_vars, allow_complements) <= max_candidates:
        f, strategy = _version_space(ask, n_vars, structure, allow_complements), "version-space"
    elif not allow_complements:
        f, strategy = _monotone(ask, n_vars, structure), "implicant-scan"
    else:
        f, strategy = _truth_table_cover(ask, n_vars, structure), "truth-table"
    for x, y in asked.items():
        if evaluate(f, bits_of(x, n_vars)) != y:
            raise ContradictionError("recovered function disagrees with a probed pattern")
    return Extraction(f, len(asked), brute, strategy)


def _version_space(ask, n, s, allow):
    cands = list(_enumerate_candidates(s, n, allow))
    if not cands:
        raise ContradictionError("no candidate matches the structure")
    pool = sorted({t for c in cands for t in c}, key=lambda t: sorted(t))
    index = {t: i for i, t in enumerate(pool)}
    tables = np.stack([_term_table(t, n) for t in pool])
    tt = np.zeros((len(cands), 2**n), dtype=bool)
    for i, c in enumerate(cands):
        tt[i] = tables[[index[t] for t in c]].any(axis=0)
    alive = np.ones(len(cands), dtype=bool)
    while True:
        live = tt[alive]
        if not len(live):
            raise ContradictionError("structure inconsistent with observed outputs")
        p = live.mean(axis=0)
        if np.all((p == 0) | (p == 1)):
            break
        ent = -(np.where(p > 0, p * np.log2(np.where(p > 0, p, 1)), 0)
                + np.where(p < 1, (1 - p) * np.log2(np.where(p < 1, 1 - p, 1)), 0))
        x = int(np.argmax(ent))
        y = ask(x)
        alive &= tt[:, x] == bool(y)
    i = int(np.flatnonzero(alive)[0])
    return SopFunction(n, cands[i])


def _monotone(ask, n, s):
    sizes = sorted(_structure_groups(s))
    found = []
    for k in sizes:
        for term in candidate_minterms(k, n, False):
            if any(f <= term for f in found):
                continue
            x = sum(1 << lit.var for lit in term)
            if ask(x):
                found.append(term)
    want = _structure_groups(s)
    got: dict = {}
    for t in found:
        got[len(t)] = got.get(len(t), 0) + 1
    if any(c > want.get(k, 0) for k, c in got.items()):
        raise ContradictionError(f"implicant scan found sizes {got}, structure says {want}")
    # leftover slots hold absorbed terms, which never change the output
    for k in sizes:
        for term in candidate_minterms(k, n, False):
            if got.get(k, 0) >= want[k]:
                break
            if term not in found and any(f < term for f in found):
                found.append(term)
                got[k] = got.get(k, 0) + 1
        if got.get(k, 0) != want[k]:
            raise ContradictionError(f"implicant scan found sizes {got}, structure says {want}")
    return SopFunction(n, tuple(sorted(found, key=lambda t: (len(t), sorted(t)))))


def _truth_table_cover(ask, n, s):
    on = np.array([bool(ask(x)) for x in range(2**n)])
    want = _structure_groups(s)
    implicants = {k: [t for t in candidate_minterms(k, n, True) if not np.any(_term_table(t, n) & ~on)]
                  for k in want}
    tables = {t: _term_table(t, n) for ts in implicants.values() for t in ts}
    slots = [k for k in sorted(want) for _ in range(want[k])]

    def search(i, chosen, covered, start):
        if i == len(slots):
            return chosen if np.array_equal(covered, on) else None
        k = slots[i]
        lst = implicants[k]
        lo = start if i > 0 and slots[i - 1] == k else 0
        for j in range(lo, len(lst)):
            r = search(i + 1, chosen + [lst[j]], covered | tables[lst[j]], j + 1)
            if r is not None:
                return r
        return None

    res = search(0, [], np.zeros(2**n, dtype=bool), 0)
    if res is None:
        raise ContradictionError("no cover of the observed truth table matches the structure")
    return SopFunction(n, tuple(res))


# ---------------------------------------------------------------------------
# reports

@dataclass
class AttackReport:
    architecture: str
    structure: StructureDescriptor
    function: SopFunction | None = None
    patterns_used: int = 0
    brute_force_patterns: int = 0
    complement_flags: tuple | None = None
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if self.brute_force_patterns and self.patterns_used > self.brute_force_patterns:
            raise ValueError("patterns_used exceeds brute force")

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "structure": self.structure.to_dict(),
            "function": str(self.function) if self.function is not None else None,
            "patterns_used": self.patterns_used,
            "brute_force_patterns": self.brute_force_patterns,
            "complement_flags": list(self.complement_flags) if self.complement_flags else None,
            "notes": self.notes,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)
