"""Protect a+bc two ways and show what the attacker now sees."""

from imcsca import attack, countermeasures as cm, dcim, profiler
from imcsca.device import NO_VARIATION
from imcsca.logic import SopFunction, structure_of

f = SopFunction.parse("a+bc")
chip = dcim.program_dcim(f)
models = {g: profiler.calibrate("dcim", g, None, 2, None, NO_VARIATION) for g in ("OR", "AND")}


def attempt(target):
    try:
        s = attack.attack_dcim_m1(attack.DcimOracle(target), models["OR"], models["AND"]).structure
        return f"OR fanin {s.or_fanin}, AND fanins {s.and_fanins}"
    except attack.OutOfModelError as exc:
        return f"no fit ({exc})"


print("original structure:", structure_of(f))
print("unprotected attack:", attempt(chip))

padded = cm.protect_redundant(chip, cm.ProtectionConfig(k_redundant=2))
rep = cm.evaluate_protection(chip, padded)
print(f"\nredundant inputs: truth kept {cm.truth_preserved(chip, padded)}, "
      f"power {100 * rep.power_delta:+.1f}%, rows {100 * rep.area_delta_rows:+.1f}%")
print("attack on padded chip:", attempt(padded))

g = cm.protect_expand(f)
wide = dcim.program_dcim(g)
rep = cm.evaluate_protection(chip, wide)
print(f"\nexpanded literals: {g}")
print(f"truth kept {cm.truth_preserved(chip, wide)}, power {100 * rep.power_delta:+.1f}%, "
      f"attacker effort x{rep.re_effort_factor:.2f}")
print("attack on expanded chip:", attempt(wide))
