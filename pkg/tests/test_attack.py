import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imcsca import attack, dcim, magic, profiler
from imcsca.attack import (AttackReport, BudgetError, ContradictionError, DcimOracle, FaninInferenceParams,
                           MagicOracle, OutOfModelError, classify_fanin, decompose_total, extract_function,
                           identify_paradigm, invert_rule, rule_fanin)
from imcsca.device import TYPICAL_VARIATION
from imcsca.logic import SopFunction, StructureDescriptor, bits_of, random_sop, structure_of
from imcsca.profiler import FaninModelSet
from imcsca.traces import CurrentTrace

P = FaninInferenceParams()


# ---------------------------------------------------------------------------
# classification

def test_classify_exact_means(dcim_models):
    m = dcim_models["OR"]
    for k in m.fanins:
        c = classify_fanin(m.mean(k), m)
        assert c.best == k and c.ambiguity == (k,)
        assert c.best in c.ambiguity and all(np.isfinite(v) for v in c.likelihoods.values())


def test_classify_closed_loop_from_simulated_traces(dcim_models):
    m = dcim_models["OR"]
    for k in range(9):
        oracle = DcimOracle(dcim.or_fanin_chip(k))
        oracle.apply((1,) * 8)
        _, tr = oracle.apply((1,) * 8)
        assert classify_fanin(attack._dcim_feature(tr, "OR", m), m).best == k


def test_overlapping_or7_or8_is_ambiguous():
    m = profiler.calibrate("dcim", "OR", [7, 8], 200, None, TYPICAL_VARIATION, 3)
    assert profiler.adjacent_overlap(m, 7) > 0
    c = classify_fanin(0.5 * (m.mean(7) + m.mean(8)), m)
    assert set(c.ambiguity) == {7, 8}


def test_out_of_model(dcim_models):
    m = dcim_models["OR"]
    with pytest.raises(OutOfModelError):
        classify_fanin(10 * m.means().max(), m)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 8), min_size=1, max_size=5))
def test_decompose_recovers_nominal_sums(fanins):
    base = {k: float(5 + 10 * k - 0.4 * k * k) for k in range(9)}
    m = FaninModelSet("DCIM", "AND", "x", {k: np.full(3, v) for k, v in base.items()})
    total = sum(base[k] - base[0] for k in fanins)
    best, alts = decompose_total(total, m, len(fanins))
    # distinct multisets can share a sum; the truth must then be listed as an alternative
    assert sum(base[k] - base[0] for k in best) == pytest.approx(total)
    assert tuple(sorted(fanins)) in [best] + alts


# ---------------------------------------------------------------------------
# DCIM attacks

@pytest.mark.parametrize("text,expected", [("a+bc", StructureDescriptor(2, (1, 2))),
                                           ("ab+cd", StructureDescriptor(2, (2, 2))),
                                           ("0", StructureDescriptor(0, ()))])
def test_dcim_m1_examples(text, expected, dcim_models):
    f = SopFunction.parse(text, 4)
    res = attack.attack_dcim_m1(DcimOracle(dcim.program_dcim(f)), dcim_models["OR"], dcim_models["AND"])
    assert res.structure == expected
    assert res.patterns_used == 2


def test_dcim_m2_zero_pattern_and_bitline_count(dcim_models):
    f = SopFunction.parse("ab'+c")
    oracle = DcimOracle(dcim.program_dcim(f))
    tr = attack._settled(DcimOracle(dcim.program_dcim(f)), (0, 0, 0))
    m = dcim_models["OR"]
    assert abs(attack._dcim_feature(tr, "OR", m) - m.mean(0)) < 0.5 * (m.mean(1) - m.mean(0))
    res = attack.attack_dcim_m2(oracle, dcim_models["OR"], dcim_models["AND"], dcim_models["PRECHARGE"])
    # the attack settles on the pattern with every literal at 0, which is also all-minterms-0
    assert f.truth_table()[sum(b << i for i, b in enumerate(res.stimulus))] == 0
    assert res.active_bls == 2
    assert res.structure == structure_of(f)
    assert res.structure.complement_flags == ("true", "complemented", "true")


def test_precharge_energy_is_linear_in_bitlines():
    single = None
    for k in range(1, 9):
        oracle = DcimOracle(dcim.fanin_chip([1] * k))
        oracle.apply((0,) * 8)
        oracle.apply((0,) * 8)
        _, tr = oracle.apply((0,) * 8)
        e = attack.precharge_energy_of(tr, 1.2)
        single = e if k == 1 else single
        assert e == pytest.approx(k * single, rel=0.05)


def test_dcim_m2_tautology_exhausts_budget(dcim_models):
    oracle = DcimOracle(dcim.program_dcim(SopFunction.parse("a+a'")))
    with pytest.raises(BudgetError):
        attack.attack_dcim_m2(oracle, dcim_models["OR"], dcim_models["AND"], dcim_models["PRECHARGE"])


# ---------------------------------------------------------------------------
# MAGIC attacks

def test_rule_examples():
    assert rule_fanin("AND", P.drive("AND") / (3 * P.r_hrs)) == 2
    v = P.drive("OR")
    assert invert_rule("OR", 2 * v / (3 * P.r_hrs)) == pytest.approx(2.0)
    assert invert_rule("NOR", 4 * P.drive("NOR") / P.r_hrs, exact=False) == pytest.approx(4.0)


@pytest.mark.parametrize("kind", ["AND", "OR", "NOR"])
def test_rule_round_trip_on_simulated_currents(kind):
    currents = profiler.magic_steady_currents(kind, range(2, 9))
    for n, i in currents.items():
        assert rule_fanin(kind, float(i)) == n


def test_magic_m1_running_example(magic_op_models):
    prog = magic.compile_magic(SopFunction.parse("ab+cd"))
    res = attack.attack_magic_m1(MagicOracle(prog), magic_op_models)
    assert [(g.kind, g.fanin) for g in res.gates] == [("AND", 2), ("AND", 2), ("OR", 2)]
    assert not any(g.ambiguous for g in res.gates)
    assert res.structure == StructureDescriptor(2, (2, 2))


def test_magic_m2_flip_test(magic_models, magic_op_models):
    f = SopFunction.parse("ab'd", 4)
    res = attack.attack_magic_m2(MagicOracle(magic.compile_magic(f)), magic_models["WRITE"], magic_op_models)
    assert res.flags == ("true", "complemented", "unused", "true")
    assert res.structure == structure_of(f)


def test_magic_m2_all_true_baseline_count(magic_models):
    f = SopFunction.parse("abcdefgh")
    prog = magic.compile_magic(f)
    res = attack.attack_magic_m2(MagicOracle(prog), magic_models["WRITE"])
    assert res.lrs_count == 8 + int(prog.preset().sum()) == magic.switched_count(prog, (1,) * 8)
    assert all(flag == "true" for flag in res.flags)


# ---------------------------------------------------------------------------
# paradigm identification

def test_identify_dcim_traces():
    rng = np.random.default_rng(4)
    for _ in range(100):
        f = random_sop(rng, 6, 6, complements=True)
        bits = tuple(int(b) for b in rng.integers(0, 2, 6))
        _, tr = dcim.run_dcim(dcim.program_dcim(f), bits)
        assert identify_paradigm(tr)[0] == "DCIM"


def test_identify_magic_and_flat():
    _, tr = magic.run_program(magic.compile_magic(SopFunction.parse("ab+cd")), (1, 1, 1, 1))
    assert identify_paradigm(tr) == ("MAGIC", 3)
    flat = CurrentTrace(0.1, np.zeros(200), np.zeros(200))
    assert identify_paradigm(flat)[0] == "unknown"


# ---------------------------------------------------------------------------
# extraction

def _oracle(f):
    return lambda bits: int(f.truth_table()[sum(b << i for i, b in enumerate(bits))])


def test_extract_running_example():
    f = SopFunction.parse("ab+cd")
    ex = extract_function(_oracle(f), 4, structure_of(f))
    assert np.array_equal(ex.function.truth_table(), f.truth_table())
    assert ex.patterns_used <= 6 and ex.brute_force_patterns == 16


def test_extract_a_plus_bc_reduction():
    f = SopFunction.parse("a+bc", 4)
    ex = extract_function(_oracle(f), 4, structure_of(f))
    assert np.array_equal(ex.function.truth_table(), f.truth_table())
    assert ex.patterns_used < 16 and ex.reduction >= 0.5


def test_extract_unique_candidate():
    f = SopFunction.parse("abc")
    ex = extract_function(_oracle(f), 3, structure_of(f))
    assert ex.patterns_used <= 1 and str(ex.function) == "abc"


@pytest.mark.parametrize("limit", [0, 200_000])
def test_extract_with_absorbed_terms(limit):
    # ab and abc are invisible next to a, yet the structure still counts them
    f = SopFunction.parse("a+ab+abc+de", 5)
    ex = extract_function(_oracle(f), 5, structure_of(f), max_candidates=limit)
    assert np.array_equal(ex.function.truth_table(), f.truth_table())
    assert structure_of(ex.function) == structure_of(f)


def test_extract_contradiction():
    # an empty structure cannot explain a chip that outputs 1
    with pytest.raises(ContradictionError):
        extract_function(_oracle(SopFunction.parse("a'+b'")), 2, StructureDescriptor(0, ()))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 7), st.booleans())
def test_extract_is_exact_and_consistent(seed, n, comp):
    f = random_sop(np.random.default_rng(seed), n, 5, complements=comp, single_polarity=True)
    seen = {}
    truth = f.truth_table()

    def ask(bits):
        x = sum(b << i for i, b in enumerate(bits))
        seen[x] = int(truth[x])
        return seen[x]

    ex = extract_function(ask, n, structure_of(f), allow_complements=comp)
    assert ex.patterns_used <= 2**n
    assert np.array_equal(ex.function.truth_table(), truth)
    got = ex.function.truth_table()
    assert all(got[x] == v for x, v in seen.items())


# ---------------------------------------------------------------------------
# reports and oracles

def test_report_invariant_and_json():
    s = StructureDescriptor(2, (2, 2))
    with pytest.raises(ValueError):
        AttackReport("DCIM", s, patterns_used=17, brute_force_patterns=16)
    import json
    d = json.loads(AttackReport("DCIM", s, SopFunction.parse("ab+cd"), 4, 16).dumps())
    assert d["structure"] == {"or_fanin": 2, "and_fanins": [2, 2]} and d["function"] == "ab+cd"


def test_recorded_oracle_replays_archive(tmp_path, dcim_models):
    f = SopFunction.parse("ab+c")
    live = DcimOracle(dcim.program_dcim(f))
    patterns = [bits_of(x, 3) for x in range(8)]
    # the attack applies each stimulus twice; the archive keeps the settled trace
    for p in patterns:
        live.apply(p)
    attack.record_archive(live, patterns, tmp_path)
    rec = attack.RecordedOracle(tmp_path)
    assert rec.n_vars == 3
    res = attack.attack_dcim_m1(rec, dcim_models["OR"], dcim_models["AND"])
    assert res.structure == structure_of(f)
    ex = extract_function(rec.output, 3, res.structure)
    assert np.array_equal(ex.function.truth_table(), f.truth_table())
