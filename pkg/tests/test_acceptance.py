"""Acceptance criteria, one test per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
summary lines; each criterion also prints its check table on failure.
"""

import math

import pytest

from stochprox import verification
from stochprox.verification import CRITERIA, format_report

# independent 40-digit evaluations, frozen here rather than imported
HALFSPACE_FIRST_COORDINATE = -0.03730079342516842  # 1 - 0.2 phi(5) / Phi(-5)
SQRT_2_OVER_PI = 0.7978845608028654
CONE_CONSTANT = 1.1283791670955126  # E[chi_2] * mean cosine on a pi/4 cap in the plane
LOGCOSH_L = 0.7698003589195010

TITLES = {
    1: "quadratic exactness",
    2: "sqrt(n delta / mu) bound and slope 1/2",
    3: "sum_max bias constant sqrt(2/pi)",
    4: "cone sharpness at the apex",
    5: "localization and concentration",
    6: "n L delta / mu^2 bound and slope 1",
    7: "covariance trace bound",
    8: "projection bound sqrt(n delta)",
    9: "half-space smoothed projection",
    10: "ball projection at rate delta",
    11: "tail lemmas",
    12: "property suites",
}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    rows = CRITERIA[number](seed=0)
    ok = bool(rows) and all(r.passed for r in rows)
    passed = sum(r.passed for r in rows)
    with capsys.disabled():
        print(f"\ncriterion {number:>2} {'PASS' if ok else 'FAIL'}  {TITLES[number]}  ({passed}/{len(rows)} checks)")
    assert ok, "\n" + format_report(rows)


def test_frozen_references_match_oracles():
    assert verification.HALFSPACE_REFERENCE == pytest.approx(HALFSPACE_FIRST_COORDINATE, abs=1e-15)
    assert verification.LOGCOSH_L == pytest.approx(LOGCOSH_L, rel=1e-15)
    assert math.sqrt(2 / math.pi) == pytest.approx(SQRT_2_OVER_PI, rel=1e-15)


def test_reported_values_hit_the_oracles():
    by_name = {r.name: r for r in verification.criterion_9()}
    assert by_name["closed-form first coordinate"].observed == pytest.approx(HALFSPACE_FIRST_COORDINATE, abs=1e-6)
    for r in verification.criterion_3():
        assert r.observed == pytest.approx(SQRT_2_OVER_PI, rel=0.02)
    for r in verification.criterion_4():
        se = float(r.detail.split("=")[1])
        assert abs(r.observed - CONE_CONSTANT) <= 3 * se
