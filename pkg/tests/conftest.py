"""Shared fixtures and the acceptance summary hook.

The acceptance module's tests are named test_criterion_NN_*; after the
run, one PASS/FAIL line per criterion is printed so the gate can be read
off the terminal without parsing pytest internals.
"""

import re

import numpy as np
import pytest

from conehull import ConeSpec

# unit vector along (1, golden ratio), 20 significant digits per component
GOLDEN = ("0.52573111211913360603", "0.85065080835203993218")

CRITERIA = {
    1: "trace per unit length of the slab indicator at t=2000",
    2: "lattice count error at t=4000, improving from t=250",
    3: "covolume identities, kernel covolume exactly 5",
    4: "two-route trace agreement for the rational cone",
    5: "limit-pattern certificates and hull round-trip",
    6: "exact offset recovery for all orbit points up to 50",
    7: "offset-map equivariance under translations",
    8: "cocycle antisymmetry, multilinearity, det scaling",
    9: "torus even pairing matches the momentum-space oracle",
    10: "bulk-edge duality on golden and rational edges",
    11: "byte-identical reruns and thread independence",
}


@pytest.fixture(scope="session")
def golden_spec():
    return ConeSpec(D=2, vectors=[list(GOLDEN)], exact=[False])


@pytest.fixture(scope="session")
def axis_spec():
    return ConeSpec(D=2, vectors=[[0, 1]])


@pytest.fixture(scope="session")
def rational_spec():
    return ConeSpec(D=2, vectors=[["3/5", "4/5"]])


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    pat = re.compile(r"test_criterion_(\d\d)")
    seen = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, ()):
            m = pat.search(getattr(rep, "nodeid", ""))
            if not m:
                continue
            num = int(m.group(1))
            ok = status == "passed" and seen.get(num, True)
            seen[num] = ok
    if not seen:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(CRITERIA):
        if num not in seen:
            continue
        verdict = "PASS" if seen[num] else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}: {verdict}  {CRITERIA[num]}")
