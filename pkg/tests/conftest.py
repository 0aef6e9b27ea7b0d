import os

os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402
from scipy.stats import unitary_group  # noqa: E402

from recoilfree.model import SystemParams, TWO_PI, sr88_params  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


@pytest.fixture
def small_params():
    """Fast configuration: 20 kHz Rabi, 100 kHz trap, a handful of Fock levels."""
    return SystemParams(omega_rabi=TWO_PI * 20e3, omega_trap=TWO_PI * 100e3, eta=0.1, p0=0.95, n_fock=14)


@pytest.fixture
def sr88():
    return sr88_params(0.95)


def random_unitary(rng, n=2):
    return unitary_group.rvs(n, random_state=rng)


from hypothesis import settings  # noqa: E402

# timings are dominated by dense linear algebra and vary with machine load
settings.register_profile("recoilfree", deadline=None)
settings.load_profile("recoilfree")


# acceptance checks register here; one summary line per criterion is printed at the end
ACCEPTANCE: dict[int, list[tuple[str, bool]]] = {}
N_CRITERIA = 10


def acceptance_check(criterion: int, label: str, ok: bool) -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((label, bool(ok)))
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        checks = ACCEPTANCE.get(k)
        if not checks:
            tr.write_line(f"criterion {k:2d}: NOT RUN")
            continue
        verdict = "PASS" if all(ok for _, ok in checks) else "FAIL"
        detail = "; ".join(f"{label} [{'ok' if ok else 'FAIL'}]" for label, ok in checks)
        tr.write_line(f"criterion {k:2d}: {verdict}  {detail}")
