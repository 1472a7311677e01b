import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imcsca import dcim
from imcsca.device import DriverParams, SelectorParams
from imcsca.logic import CapacityError, SopFunction, all_inputs, evaluate, random_sop


def _rows(chip, col):
    """Literal names programmed LRS in one AND column."""
    out = set()
    for r, spec in enumerate(chip.and_rows):
        if chip.and_lrs[r, col]:
            _, var, comp = spec
            out.add(chr(97 + var) + ("'" if comp else ""))
    return out


def test_program_ab_cd():
    chip = dcim.program_dcim(SopFunction.parse("ab+cd"), n_inputs=4, n_cols=4)
    assert _rows(chip, 0) == {"a", "b"} and _rows(chip, 1) == {"c", "d"}
    assert not chip.and_lrs[:, 2:].any()
    assert chip.or_lrs.tolist() == [True, True, False, False]


def test_program_a_plus_bc_and_constant():
    chip = dcim.program_dcim(SopFunction.parse("a+bc"))
    assert _rows(chip, 0) == {"a"} and _rows(chip, 1) == {"b", "c"}
    assert chip.or_lrs[:2].all() and not chip.or_lrs[2:].any()
    zero = dcim.program_dcim(SopFunction.parse("0", 3))
    assert not zero.and_lrs.any() and not zero.or_lrs.any()


def test_capacity():
    with pytest.raises(CapacityError):
        dcim.program_dcim(SopFunction.parse("a+b+c+d+e+f+g+h+ab"))
    with pytest.raises(CapacityError):
        dcim.program_dcim(SopFunction.parse("i"))


def test_running_example_output():
    out, tr = dcim.run_dcim(dcim.program_dcim(SopFunction.parse("ab+cd")), (1, 1, 0, 1))
    assert out[0] == 1
    assert len(tr) == dcim.default_schedule().n_steps


def test_all_zero_discharges_most():
    f = SopFunction.parse("ab+cde+fgh")
    chip = dcim.program_dcim(f)
    sch = chip.schedule
    x = np.array(list(all_inputs(8)), dtype=np.uint8)
    run = dcim.simulate_dcim(chip, x)
    # early discharge, after the enable transient
    early = run.ground[:, sch.index(sch.en1 + 1.0):sch.index(sch.en1 + 3.0)].mean(axis=1)
    assert run.outputs[0] == 0
    assert np.argmax(early) == 0
    assert np.array_equal(run.outputs, f.truth_table())


def test_single_cell_discharge_oracle():
    # ideal periphery on a one-input array: only the LRS cell and its selector remain
    chip = dcim.fanin_chip([1], n_inputs=1, n_cols=1, selector=SelectorParams(0.4, 0.0),
                           drivers=DriverParams(r_wl_pull_up=0.0, r_wl_pull_down=0.0),
                           pulse=dcim.PulseShape(per_line=0.0), leak_per_cell=0.0)
    _, tr = dcim.run_dcim(chip, (0,))
    sch = chip.schedule
    g = tr.channel("ground")[sch.index(sch.en1):]
    assert (1.2 - 0.4) / 58.9e3 == pytest.approx(13.6e-6, rel=0.005)
    assert g[0] == pytest.approx((1.2 - 0.4) / 58.9e3, rel=0.01)
    tau = np.argmax(g < g[0] / np.e) * sch.dt
    assert 58.9e3 * 100e-15 * 1e9 == pytest.approx(5.89)
    assert tau == pytest.approx(5.89, rel=0.02)


def test_precharge_energy_values():
    chip = dcim.program_dcim(SopFunction.parse("ab"))
    assert dcim.precharge_energy(chip, 1) == pytest.approx(72e-15)
    assert dcim.precharge_energy(chip, 0) == 0.0
    with pytest.raises(ValueError):
        dcim.precharge_energy(chip, -1)


@pytest.mark.parametrize("k", [1, 3, 8])
def test_precharge_energy_matches_supply_integral(k):
    chip = dcim.fanin_chip([1] * k, pulse=dcim.PulseShape(per_line=0.0), leak_per_cell=0.0)
    first = dcim.simulate_dcim(chip, [(0,) * 8], record=False)
    run = dcim.simulate_dcim(chip, [(0,) * 8], initial=(first.final_and, first.final_or))
    sch = chip.schedule
    swing = chip.vdd - first.final_and[0, :k].mean()
    i0, i1 = sch.index(sch.precharge[0]), sch.index(sch.precharge[1])
    delivered = -run.supply[0, i0:i1].sum() * sch.dt * 1e-9 * chip.vdd
    # the supply delivers C*VDD*dV; half of the swing's CdV^2 is dissipated
    expected = 2 * dcim.precharge_energy(chip, k, swing) * chip.vdd / swing
    assert delivered == pytest.approx(expected, rel=0.02)


def test_input_width_checked():
    with pytest.raises(ValueError):
        dcim.run_dcim(dcim.program_dcim(SopFunction.parse("ab")), (1, 0, 1))


def test_dump_is_json():
    import json
    d = json.loads(dcim.program_dcim(SopFunction.parse("a+bc")).dumps())
    assert d["function"] == "a+bc" and d["and_array"]["cols"] == 8


funcs = st.builds(lambda s, n, c: random_sop(np.random.default_rng(s), n, 8, complements=c),
                  st.integers(0, 2**32 - 1), st.integers(1, 6), st.booleans())


@settings(max_examples=25, deadline=None)
@given(funcs)
def test_functional_equivalence(f):
    chip = dcim.program_dcim(f)
    assert np.array_equal(dcim.truth_outputs(chip, f.n_vars), f.truth_table())


def test_a_plus_bc_exhaustive_single_runs():
    f = SopFunction.parse("a+bc")
    chip = dcim.program_dcim(f)
    for bits in all_inputs(3):
        assert dcim.run_dcim(chip, bits)[0][0] == evaluate(f, bits)
