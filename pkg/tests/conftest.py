from __future__ import annotations

import pytest

from nlijsf.engine import binomial_lengths, synthesize_jsa
from nlijsf.physics import InterferometerSpec, PumpPulse, SpectralGrid


@pytest.fixture(scope="session")
def pump():
    return PumpPulse.from_lab_units(1553.3, 1.4, 36.8, 60.0)


@pytest.fixture(scope="session")
def grid():
    # window covering the first four orders on both sides of the pump
    return SpectralGrid.from_nm((1558.5, 1568.3), (1537.9, 1548.4), 200)


@pytest.fixture(scope="session")
def specs():
    return {
        "e1": InterferometerSpec.from_lengths([100], 10),
        "e2": InterferometerSpec.from_lengths([100] * 2, 10),
        "e3": InterferometerSpec.from_lengths([100] * 3, 10),
        "e4": InterferometerSpec.from_lengths([100] * 4, 10),
        "u3": InterferometerSpec.from_lengths(binomial_lengths(3, 50), 10),
        "u4": InterferometerSpec.from_lengths(binomial_lengths(4, 100 / 3), 10),
    }


@pytest.fixture(scope="session")
def jsas(specs, pump, grid):
    return {k: synthesize_jsa(s, pump, grid) for k, s in specs.items()}


@pytest.fixture(scope="session")
def smf(specs):
    return specs["e2"].dispersive_segments[0]


@pytest.fixture(scope="session")
def scan_grid():
    # wide enough that 0.16 nm filters at the scan edges stay on the grid
    return SpectralGrid.from_nm((1558.2, 1568.6), (1537.6, 1548.7), 521, 556)


@pytest.fixture(scope="session")
def scan_jsas(specs, pump, scan_grid):
    return {k: synthesize_jsa(specs[k], pump, scan_grid) for k in ("e2", "e4")}


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS, summary_lines

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in summary_lines():
            terminalreporter.write_line(line)
