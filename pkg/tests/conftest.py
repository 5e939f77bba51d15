import numpy as np
import pytest

from arena_rank.data import parse_dataset
from arena_rank.models import Family, ModelConfig


def random_dataset(rng, m=5, max_count=6, density=1.0):
    """Complete (or random-density but connected) graph with random integer counts."""
    rows = []
    for i in range(m):
        for j in range(i + 1, m):
            if j == i + 1 or rng.random() < density:
                w, l, t = rng.integers(0, max_count, 3).tolist()
                if w + l + t == 0:
                    w = 1
                rows.append((f"c{i}", f"c{j}", w, l, t))
    return parse_dataset(rows)


def all_configs():
    out = []
    for fam in Family:
        for k_cov in (None, 0, 3):
            for k_tie in ((None,) if not fam.has_ties else (0, 1, 3)):
                out.append(ModelConfig(fam, k_cov, k_tie))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
