import numpy as np
import pytest

from hlt.datacube import HyperCube

import fusion_audit
import report

# every adaptive_fuse call made by the suite goes through the algebra checks
fusion_audit.install()


def random_cube(rng, h, w, b, quantized=False):
    """Random cube; with ``quantized`` values sit on a coarse grid so ties and 1.0 occur."""
    if quantized:
        planes = rng.integers(0, 21, size=(b, h, w)) / 20.0
    else:
        planes = rng.random((b, h, w))
    return HyperCube(planes, 400.0 + 10.0 * np.arange(b))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    s = fusion_audit.stats
    terminalreporter.write_line(
        f"fusion audit: {s['calls']} adaptive_fuse calls ({s['maps']} maps) checked for "
        "simplex, anti-monotonicity, permutation equivariance and per-pixel bounds")
    if report.lines:
        terminalreporter.section("acceptance criteria")
        for line in report.lines:
            terminalreporter.write_line(line)
