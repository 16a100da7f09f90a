import os

import numpy as np
import pytest

from phasefield.grid import make_grid


@pytest.fixture(scope="session", autouse=True)
def _isolated_cache(tmp_path_factory):
    # saddle solves are cached per session, never reused across runs
    old = os.environ.get("PF_CACHE_DIR")
    os.environ["PF_CACHE_DIR"] = str(tmp_path_factory.mktemp("pfcache"))
    yield
    if old is None:
        os.environ.pop("PF_CACHE_DIR", None)
    else:
        os.environ["PF_CACHE_DIR"] = old


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_grid():
    return make_grid(65, 65, (-1.0, 1.0, -1.0, 1.0))


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """record(n, passed, detail, seconds): one line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(n, passed, detail, seconds):
        line = f"{'PASS' if passed else 'FAIL'} criterion {n:2d}: {detail} [{seconds:.1f} s]"
        lines.append((n, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
