"""Recover ab+cd from simulated supply traces on both architectures.

Run with ``python3 demos/attack_walkthrough.py``.  Calibration is at zero
variation so the whole script finishes in well under a minute.
"""

from imcsca import attack, dcim, magic, profiler
from imcsca.device import NO_VARIATION
from imcsca.logic import SopFunction

victim = SopFunction.parse("ab+cd")

print("profiling nominal gates ...")
dcim_models = {g: profiler.calibrate("dcim", g, None, 2, None, NO_VARIATION) for g in ("OR", "AND")}
magic_models = {g: profiler.calibrate("magic", g, None, 2, None, NO_VARIATION) for g in ("AND", "OR", "NOR")}

oracle = attack.DcimOracle(dcim.program_dcim(victim))
found = attack.attack_dcim_m1(oracle, dcim_models["OR"], dcim_models["AND"])
print(f"DCIM structure: OR fanin {found.structure.or_fanin}, AND fanins {found.structure.and_fanins}")
ex = attack.extract_function(oracle.output, victim.n_vars, found.structure)
print(f"DCIM function:  {ex.function}  ({ex.patterns_used} of {ex.brute_force_patterns} patterns)")

moracle = attack.MagicOracle(magic.compile_magic(victim))
res = attack.attack_magic_m1(moracle, magic_models)
print("MAGIC gates:   ", ", ".join(f"{g.kind}{g.fanin}" for g in res.gates))
ex = attack.extract_function(moracle.output, victim.n_vars, res.structure)
print(f"MAGIC function: {ex.function}  ({ex.patterns_used} of {ex.brute_force_patterns} patterns)")
