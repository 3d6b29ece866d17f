import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fractorsion import FracParams, Interval, LatticeSpec, Rect, Union, assemble_kernel, rasterize

settings.register_profile(
    "fractorsion",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("fractorsion")


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    # keep the default on-disk cache out of the working tree
    monkeypatch.setenv("FRACTORSION_CACHE", str(tmp_path / "cache"))


def interval_lattice(h=1 / 16, half=1.25):
    return LatticeSpec(1, h, [-half], [half])


def square_lattice(h=1 / 8, half=1.25):
    return LatticeSpec(2, h, [-half, -half], [half, half])


def single_cell(dim=1, h=1 / 8):
    """One-cell domain in the middle of a 5-cell-wide box."""
    lat = LatticeSpec(dim, h, [-2.5 * h] * dim, [2.5 * h] * dim)
    spec = Interval(-0.5 * h, 0.5 * h) if dim == 1 else Rect([-0.5 * h] * 2, [0.5 * h] * 2)
    return rasterize(spec, lat)


def kernel_for(spec, lat, s, p, **kw):
    return assemble_kernel(rasterize(spec, lat), FracParams(s, p), **kw)


TWO_INTERVALS = Union([Interval(-1.0, -0.25), Interval(0.25, 1.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict = {}


def record_acceptance(key: str, passed: bool, detail: str = ""):
    line = f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
    ACCEPTANCE_LINES[key] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.split(".")[0]), k)):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
