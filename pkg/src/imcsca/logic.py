"""Boolean functions in sum-of-products form.

Functions are written as product terms joined by ``+``; a trailing ``'``
complements a literal, e.g. ``a+bc`` or ``ab'd + a'b'd``.  Variables are
single lowercase letters; ``a`` is variable 0.  The empty function is ``0``.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from math import comb

import numpy as np

MAX_EXPAND_VARS = 12


class CapacityError(ValueError):
    """Raised when a function does not fit the requested resource."""


@dataclass(frozen=True, order=True)
class Literal:
    var: int
    complemented: bool = False

    def value(self, bits) -> int:
        b = int(bits[self.var])
        return 1 - b if self.complemented else b

    def __str__(self) -> str:
        return chr(ord("a") + self.var) + ("'" if self.complemented else "")


Minterm = frozenset  # frozenset[Literal]


def _check_minterm(term) -> None:
    seen = {}
    for lit in term:
        if seen.get(lit.var, lit.complemented) != lit.complemented:
            raise ValueError(f"minterm contains both polarities of {Literal(lit.var)}")
        seen[lit.var] = lit.complemented


@dataclass(frozen=True)
class SopFunction:
    """An SOP function over ``n_vars`` inputs.

    ``minterms`` keeps the order the terms were written in; hardware
    mappings place minterm ``j`` on column/gate ``j``.
    """

    n_vars: int
    minterms: tuple = ()

    def __post_init__(self):
        terms = tuple(frozenset(t) for t in self.minterms)
        if len(set(terms)) != len(terms):
            raise ValueError("duplicate minterm")
        for t in terms:
            if not t:
                raise ValueError("empty minterm (constant 1) is not supported")
            _check_minterm(t)
            for lit in t:
                if not 0 <= lit.var < self.n_vars:
                    raise ValueError(f"literal {lit} outside {self.n_vars} variables")
        object.__setattr__(self, "minterms", terms)

    @classmethod
    def parse(cls, text: str, n_vars: int | None = None) -> "SopFunction":
        text = text.replace(" ", "")
        if not text:
            raise ValueError("empty function text")
        terms = []
        if text != "0":
            for chunk in text.split("+"):
                if not chunk:
                    raise ValueError(f"malformed function text {text!r}")
                lits = []
                i = 0
                while i < len(chunk):
                    ch = chunk[i]
                    if not ("a" <= ch <= "z"):
                        raise ValueError(f"unexpected {ch!r} in {text!r}")
                    comp = i + 1 < len(chunk) and chunk[i + 1] == "'"
                    lits.append(Literal(ord(ch) - ord("a"), comp))
                    i += 2 if comp else 1
                if len(set(lits)) != len(lits):
                    raise ValueError(f"repeated literal in {chunk!r}")
                terms.append(frozenset(lits))
        used = max((lit.var for t in terms for lit in t), default=-1) + 1
        if n_vars is None:
            n_vars = used
        elif n_vars < used:
            raise ValueError(f"{text!r} needs {used} variables, got {n_vars}")
        return cls(n_vars, tuple(terms))

    def __str__(self) -> str:
        if not self.minterms:
            return "0"
        return "+".join("".join(str(l) for l in sorted(t)) for t in self.minterms)

    @property
    def has_complements(self) -> bool:
        return any(l.complemented for t in self.minterms for l in t)

    def minterm_value(self, j: int, bits) -> int:
        return int(all(l.value(bits) for l in self.minterms[j]))

    def truth_table(self) -> np.ndarray:
        """Output for every input vector; row index ``x`` has bit ``i`` = variable ``i``."""
        return np.array([evaluate(self, bits) for bits in all_inputs(self.n_vars)], dtype=np.uint8)

    def polarity_of(self, var: int) -> str:
        """'true', 'complemented', 'mixed' or 'unused' for one variable."""
        pols = {l.complemented for t in self.minterms for l in t if l.var == var}
        if not pols:
            return "unused"
        if len(pols) == 2:
            return "mixed"
        return "complemented" if pols.pop() else "true"


def all_inputs(n_vars: int):
    """Input vectors in numeric order; bit ``i`` of the index drives variable ``i``."""
    for x in range(2**n_vars):
        yield tuple((x >> i) & 1 for i in range(n_vars))


def bits_of(x: int, n_vars: int) -> tuple:
    return tuple((x >> i) & 1 for i in range(n_vars))


def evaluate(f: SopFunction, bits) -> int:
    if len(bits) != f.n_vars:
        raise ValueError(f"expected {f.n_vars} input bits, got {len(bits)}")
    return int(any(all(l.value(bits) for l in t) for t in f.minterms))


def expand_full(f: SopFunction) -> SopFunction:
    """Canonical SOP: one full-width minterm per satisfying input row."""
    if f.n_vars > MAX_EXPAND_VARS:
        raise CapacityError(f"expansion limited to {MAX_EXPAND_VARS} variables")
    terms = []
    for bits in all_inputs(f.n_vars):
        if evaluate(f, bits):
            terms.append(frozenset(Literal(i, not b) for i, b in enumerate(bits)))
    return SopFunction(f.n_vars, tuple(terms))


@dataclass(frozen=True)
class StructureDescriptor:
    or_fanin: int
    and_fanins: tuple = ()
    complement_flags: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "and_fanins", tuple(sorted(self.and_fanins)))
        if self.or_fanin != len(self.and_fanins):
            raise ValueError("or_fanin must equal the number of AND fanins")

    def to_dict(self) -> dict:
        d = {"or_fanin": self.or_fanin, "and_fanins": list(self.and_fanins)}
        if self.complement_flags is not None:
            d["complement_flags"] = list(self.complement_flags)
        return d


def structure_of(f: SopFunction) -> StructureDescriptor:
    return StructureDescriptor(len(f.minterms), tuple(len(t) for t in f.minterms))


def candidate_minterms(fanin: int, n_vars: int, allow_complements: bool) -> list:
    out = []
    for vars_ in itertools.combinations(range(n_vars), fanin):
        if allow_complements:
            for pol in itertools.product((False, True), repeat=fanin):
                out.append(frozenset(Literal(v, c) for v, c in zip(vars_, pol)))
        else:
            out.append(frozenset(Literal(v) for v in vars_))
    return out


def candidate_space_size(s: StructureDescriptor, n_vars: int, allow_complements: bool = False) -> int:
    """Number of candidate minterms an attacker must consider for structure ``s``.

    Counts candidate minterms per distinct fanin, not candidate functions.
    With complements every fanin-``k`` slot admits ``C(n, k) * 2**k`` terms,
    which is ``2**n`` at full fanin.
    """
    if any(k > n_vars for k in s.and_fanins):
        raise ValueError("fanin larger than the variable count")
    total = 0
    for k in sorted(set(s.and_fanins)):
        total += comb(n_vars, k) * (2**k if allow_complements else 1)
    return total


def random_sop(rng: np.random.Generator, n_vars: int, max_minterms: int = 8,
               complements: bool = False, single_polarity: bool = False) -> SopFunction:
    """Random SOP function with 1..max_minterms distinct minterms.

    ``single_polarity`` draws one polarity per variable, so no variable
    appears both true and complemented.
    """
    polarity = rng.integers(0, 2, n_vars).astype(bool) if complements else np.zeros(n_vars, bool)
    n_terms = int(rng.integers(1, max_minterms + 1))
    terms: list = []
    for _ in range(50 * n_terms):
        if len(terms) == n_terms:
            break
        k = int(rng.integers(1, n_vars + 1))
        vars_ = rng.choice(n_vars, size=k, replace=False)
        if complements and not single_polarity:
            pols = rng.integers(0, 2, k).astype(bool)
        else:
            pols = polarity[vars_]
        t = frozenset(Literal(int(v), bool(c)) for v, c in zip(vars_, pols))
        if t not in terms:
            terms.append(t)
    return SopFunction(n_vars, tuple(terms))


def fanin_counts(s: StructureDescriptor) -> Counter:
    return Counter(s.and_fanins)
