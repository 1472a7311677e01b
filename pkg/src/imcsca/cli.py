"""Command-line workflows: simulate, calibrate, attack, protect, sweep, report.

Settings come from an optional ``key = value`` config file with one section
per subcommand (plus ``[run]`` for shared keys); command-line flags win.
Exit codes: 0 ok, 1 user error, 2 internal error.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import attack, countermeasures, dcim, magic, profiler
from .device import NO_VARIATION, TYPICAL_VARIATION, sample_instance
from .logic import SopFunction

OUT_ENV = "IMCSCA_OUT"


class UserError(Exception):
    pass


@dataclass
class RunConfig:
    architecture: str = "dcim"
    function: str = ""
    n_vars: int | None = None
    vdd: float | None = None
    variation: str = "typical"
    seed: int = 0
    n_mc: int = 200
    attack_model: int = 1
    protection: str = "redundant-inputs"
    k_redundant: int = 2
    out_dir: Path = field(default_factory=lambda: Path(os.environ.get(OUT_ENV, "imcsca_out")))

    def variation_spec(self):
        if self.variation not in ("typical", "none"):
            raise UserError(f"variation must be 'typical' or 'none', got {self.variation!r}")
        return TYPICAL_VARIATION if self.variation == "typical" else NO_VARIATION

    def parsed_function(self) -> SopFunction:
        try:
            return SopFunction.parse(self.function or "0", self.n_vars)
        except ValueError as exc:
            raise UserError(f"cannot parse function: {exc}") from exc

    def module_seed(self, name: str) -> int:
        """Root seed split per module so each stage draws an independent stream."""
        tag = sum(ord(c) * 31**i for i, c in enumerate(name)) % 2**31
        return int(np.random.SeedSequence([self.seed, tag]).generate_state(1)[0])


_CASTS = {"n_vars": int, "vdd": float, "seed": int, "n_mc": int, "attack_model": int, "k_redundant": int,
          "out_dir": Path}


def load_config(path, command: str) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UserError(f"config file {p} not found")
    cp = configparser.ConfigParser()
    cp.read(p)
    values = {}
    for section in ("run", command):
        if cp.has_section(section):
            values.update(dict(cp.items(section)))
    return values


def build_config(args, command: str) -> RunConfig:
    values = load_config(args.config, command)
    for key, val in vars(args).items():
        if key in RunConfig.__dataclass_fields__ and val is not None:
            values[key] = val
    cfg = RunConfig()
    for key, val in values.items():
        if key not in RunConfig.__dataclass_fields__:
            continue
        try:
            setattr(cfg, key, _CASTS.get(key, str)(val))
        except ValueError as exc:
            raise UserError(f"bad value for {key}: {val!r}") from exc
    cfg.architecture = cfg.architecture.lower()
    if cfg.architecture not in ("dcim", "magic"):
        raise UserError(f"architecture must be dcim or magic, got {cfg.architecture!r}")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return cfg


def _parse_bits(text: str, n: int) -> tuple:
    if len(text) != n or set(text) - {"0", "1"}:
        raise UserError(f"input {text!r} must be {n} bits (variable a first)")
    return tuple(int(c) for c in text)


def _victim(cfg: RunConfig, f: SopFunction, with_variation: bool = False):
    inst = None
    if with_variation:
        inst = sample_instance(cfg.variation_spec(), cfg.module_seed("victim"))
    vdd = cfg.vdd
    if cfg.architecture == "dcim":
        kw = {"vdd": vdd} if vdd is not None else {}
        return dcim.program_dcim(f, instance=inst, **kw)
    return magic.compile_magic(f, vdd if vdd is not None else 2.4, inst)


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: RunConfig, args) -> int:
    f = cfg.parsed_function()
    chip = _victim(cfg, f)
    (cfg.out_dir / "chip.json").write_text(chip.dumps())
    inputs = args.inputs or ["0" * f.n_vars]
    for text in inputs:
        bits = _parse_bits(text, f.n_vars)
        if cfg.architecture == "dcim":
            out, tr = dcim.run_dcim(chip, bits)
            out = int(out[0])
        else:
            out, tr = magic.run_program(chip, bits)
        tr.write(cfg.out_dir / f"trace_{cfg.architecture}_{text or 'none'}.csv")
        print(f"{text or '-'} -> {out}")
    return 0


def cmd_calibrate(cfg: RunConfig, args) -> int:
    gates = args.gate or (["OR", "AND", "PRECHARGE"] if cfg.architecture == "dcim" else ["AND", "OR", "NOR", "WRITE"])
    for g in gates:
        m = profiler.calibrate(cfg.architecture, g, args.fanins, cfg.n_mc, cfg.vdd, cfg.variation_spec(),
                               cfg.module_seed("calibrate"))
        path = cfg.out_dir / f"model_{cfg.architecture}_{g.lower()}.json"
        m.save(path)
        print(f"{path}: means {np.array2string(m.means(), precision=4)}")
    return 0


def _load_models(cfg: RunConfig, model_dir: Path, gates, optional=()) -> dict:
    out = {}
    for g in list(gates) + list(optional):
        p = model_dir / f"model_{cfg.architecture}_{g.lower()}.json"
        if not p.exists():
            if g in optional:
                continue
            raise UserError(f"dependency error: model file {p} is missing; run calibrate first")
        out[g] = profiler.FaninModelSet.load(p)
    return out


def run_attack(cfg: RunConfig, f: SopFunction, model_dir: Path, extract: bool = True,
               noise: float = 0.0, victim_variation: bool = False) -> attack.AttackReport:
    """Attack a freshly programmed victim; nominal devices unless ``victim_variation``."""
    chip = _victim(cfg, f, with_variation=victim_variation)
    seed = cfg.module_seed("attack")
    notes = []
    if cfg.architecture == "dcim":
        models = _load_models(cfg, model_dir, ["OR", "AND"], ["PRECHARGE"])
        oracle = attack.DcimOracle(chip, noise, seed)
        if cfg.attack_model == 1:
            res = attack.attack_dcim_m1(oracle, models["OR"], models["AND"])
        else:
            res = attack.attack_dcim_m2(oracle, models["OR"], models["AND"], models.get("PRECHARGE"))
        structure, flags, used = res.structure, res.structure.complement_flags, res.patterns_used
        if res.or_class.ambiguous:
            notes.append(f"OR fanin ambiguity set {list(res.or_class.ambiguity)}")
        if res.alternatives:
            notes.append(f"alternative AND fanins {res.alternatives}")
    else:
        models = _load_models(cfg, model_dir, ["AND", "OR"], ["NOR", "WRITE"])
        oracle = attack.MagicOracle(chip, noise, seed)
        params = attack.FaninInferenceParams(v_write=chip.v_write)
        op = {k: v for k, v in models.items() if k != "WRITE"}
        if cfg.attack_model == 1:
            res = attack.attack_magic_m1(oracle, op, params)
            structure, flags = res.structure, None
        else:
            res = attack.attack_magic_m2(oracle, models.get("WRITE"), op, params)
            structure, flags = res.structure, res.flags
        used = res.patterns_used
        notes += [f"gate {i} {g.kind}{g.fanin}: rule and model disagree" for i, g in enumerate(res.gates)
                  if g.ambiguous]
    report = attack.AttackReport(cfg.architecture.upper(), structure, None, used, 2**f.n_vars, flags, notes)
    if extract:
        allow = bool(flags) and "complemented" in flags
        ex = attack.extract_function(oracle.output, f.n_vars, structure, allow)
        report.function = ex.function
        report.patterns_used = min(ex.patterns_used, report.brute_force_patterns)
        report.notes.append(f"extraction strategy {ex.strategy}, {ex.patterns_used} patterns")
        if not np.array_equal(ex.function.truth_table(), f.truth_table()):
            report.notes.append("recovered function differs from the victim")
    return report


def cmd_attack(cfg: RunConfig, args) -> int:
    f = cfg.parsed_function()
    report = run_attack(cfg, f, Path(args.model_dir or cfg.out_dir), not args.no_extract, args.noise,
                        args.victim_variation)
    path = cfg.out_dir / "attack_report.json"
    path.write_text(report.dumps())
    print(report.dumps())
    return 0


def cmd_protect(cfg: RunConfig, args) -> int:
    f = cfg.parsed_function()
    original = _victim(cfg, f)
    if cfg.protection == "expand-literals":
        g = countermeasures.protect_expand(f)
        if cfg.architecture == "dcim":
            cols = max(8, len(g.minterms))
            original = dcim.program_dcim(f, n_cols=cols)
            protected = dcim.program_dcim(g, n_cols=cols)
        else:
            protected = magic.compile_magic(g)
    elif cfg.protection == "redundant-inputs":
        pc = countermeasures.ProtectionConfig(k_redundant=cfg.k_redundant, randomize=args.randomize,
                                              seed=cfg.module_seed("protect"))
        protected = countermeasures.protect_redundant(original, pc)
    else:
        raise UserError(f"unknown protection {cfg.protection!r}")
    if not countermeasures.truth_preserved(original, protected):
        raise RuntimeError("protection changed the truth table")
    report = countermeasures.evaluate_protection(original, protected)
    (cfg.out_dir / "protected_chip.json").write_text(protected.dumps())
    (cfg.out_dir / "overhead.json").write_text(report.dumps())
    print(report.dumps())
    return 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    gate = (args.gate or ["OR" if cfg.architecture == "dcim" else "AND"])[0]
    rows = profiler.sweep(cfg.architecture, gate, args.voltages, args.fanins, cfg.n_mc, cfg.variation_spec(),
                          cfg.module_seed("sweep"))
    path = cfg.out_dir / f"sweep_{cfg.architecture}_{gate.lower()}.csv"
    profiler.write_csv(rows, path)
    print(f"{path}: {len({r['vdd'] for r in rows})} voltages")
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    src = Path(args.model_dir or cfg.out_dir)
    files = sorted(src.glob("model_*.json"))
    if not files:
        raise UserError(f"dependency error: no model files in {src}")
    lines = ["| model | fanin | mean | std | overlap with next |", "|---|---|---|---|---|"]
    stats = []
    for p in files:
        m = profiler.FaninModelSet.load(p)
        tag = f"{m.arch.lower()}_{m.gate.lower()}"
        edges = m.bin_edges()
        centers = 0.5 * (edges[1:] + edges[:-1])
        pdf_rows, cdf_rows = [], []
        pdfs = {k: m.pdf(k, edges)[0] for k in m.fanins}
        cdfs = {k: m.cdf(k, centers) for k in m.fanins}
        for i, c in enumerate(centers):
            pdf_rows.append({"x": c, **{f"fanin{k}": pdfs[k][i] for k in m.fanins}})
            cdf_rows.append({"x": c, **{f"fanin{k}": cdfs[k][i] for k in m.fanins}})
        profiler.write_csv(pdf_rows, cfg.out_dir / f"pdf_{tag}.csv")
        profiler.write_csv(cdf_rows, cfg.out_dir / f"cdf_{tag}.csv")
        for k in m.fanins:
            ov = profiler.adjacent_overlap(m, k) if k + 1 in m.samples else float("nan")
            stats.append({"model": tag, "fanin": k, "mean": m.mean(k), "std": m.std(k), "overlap": ov})
            lines.append(f"| {tag} | {k} | {m.mean(k):.4g} | {m.std(k):.3g} | {ov:.3f} |")
    profiler.write_csv(stats, cfg.out_dir / "summary.csv")
    (cfg.out_dir / "summary.md").write_text("\n".join(lines) + "\n")
    print(f"report for {len(files)} models written to {cfg.out_dir}")
    return 0


COMMANDS = {"simulate": cmd_simulate, "calibrate": cmd_calibrate, "attack": cmd_attack,
            "protect": cmd_protect, "sweep": cmd_sweep, "report": cmd_report}


def _fanins(text: str) -> list:
    if "-" in text:
        a, b = text.split("-")
        return list(range(int(a), int(b) + 1))
    return [int(x) for x in text.split(",")]


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="imcsca", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--arch", dest="architecture")
        p.add_argument("--function")
        p.add_argument("--n-vars", dest="n_vars", type=int)
        p.add_argument("--vdd", type=float)
        p.add_argument("--variation", choices=["typical", "none"])
        p.add_argument("--seed", type=int)
        p.add_argument("--n-mc", dest="n_mc", type=int)
        p.add_argument("--out", dest="out_dir")
        if name == "simulate":
            p.add_argument("--inputs", nargs="*")
        if name in ("calibrate", "sweep"):
            p.add_argument("--gate", nargs="*", type=str.upper)
            p.add_argument("--fanins", type=_fanins)
        if name == "sweep":
            p.add_argument("--voltages", type=lambda s: [float(v) for v in s.split(",")])
        if name in ("attack", "report"):
            p.add_argument("--model-dir")
        if name == "attack":
            p.add_argument("--attack-model", dest="attack_model", type=int, choices=[1, 2])
            p.add_argument("--no-extract", action="store_true")
            p.add_argument("--noise", type=float, default=0.0, help="white noise sigma in A")
            p.add_argument("--victim-variation", action="store_true",
                           help="sample the victim's devices from the variation spec")
        if name == "protect":
            p.add_argument("--kind", dest="protection", choices=list(countermeasures.KINDS))
            p.add_argument("--k", dest="k_redundant", type=int)
            p.add_argument("--randomize", action="store_true")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args, args.command)
        return COMMANDS[args.command](cfg, args)
    except (UserError, ValueError, attack.BudgetError, attack.ContradictionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
