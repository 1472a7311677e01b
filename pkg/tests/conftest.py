import numpy as np
import pytest

from imcsca import profiler
from imcsca.device import NO_VARIATION
from imcsca.logic import random_sop

CORPUS_SEED = 2024


def make_corpus(n_true: int = 100, n_comp: int = 100, seed: int = CORPUS_SEED) -> list:
    """Random SOPs over 2..8 variables with up to 8 minterms.

    The first ``n_true`` use true literals only; the rest draw one polarity per variable
    and contain at least one complemented literal.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_true + n_comp):
        while True:
            n = int(rng.integers(2, 9))
            f = random_sop(rng, n, 8, complements=i >= n_true, single_polarity=True)
            # a random polarity draw can still leave every used literal true
            if i < n_true or f.has_complements:
                break
        out.append(f)
    return out


@pytest.fixture(scope="session")
def corpus():
    return make_corpus()


@pytest.fixture(scope="session")
def dcim_models():
    return {g: profiler.calibrate("dcim", g, None, 2, None, NO_VARIATION, 0) for g in ("OR", "AND", "PRECHARGE")}


@pytest.fixture(scope="session")
def magic_models():
    return {g: profiler.calibrate("magic", g, None, 2, None, NO_VARIATION, 0)
            for g in ("AND", "OR", "NOR", "WRITE")}


@pytest.fixture(scope="session")
def magic_op_models(magic_models):
    return {k: v for k, v in magic_models.items() if k != "WRITE"}


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    verdicts = getattr(mod, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 12):
        if n in verdicts:
            ok, detail = verdicts[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: FAIL  not run in this session")
