"""Acceptance gate: one test per criterion, each reporting a single PASS/FAIL line.

Run on its own with ``python3 tests/test_acceptance.py`` or as part of pytest;
under pytest the lines are also collected into the terminal summary.
"""
import sys
import tempfile
import time
from pathlib import Path

import pytest

from branchgeo import cli
from branchgeo.suites import run_suite

SEED = 7
TIME_LIMIT = 60.0

CRITERIA = {
    1: ("representation identities", "representation"),
    2: ("iterated Poisson residual", "poisson"),
    3: ("z-order and division calculus", "zorder"),
    4: ("branch detection and d(0)", "branch"),
    5: ("invariance of index and degree", "invariance"),
    6: ("index/degree estimate", "estimate"),
    7: ("normalizing diffeomorphism", "normalize"),
    8: ("frontal frame algebra", "frontal"),
    9: ("curvature identities", "curvature"),
    10: ("curvature classification", "classification"),
    11: ("mean curvature recovery", "mean_curvature"),
}

RESULTS: dict[int, str] = {}


def _line(number, title, ok, detail):
    return f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})"


def _record(number, title, ok, detail):
    line = _line(number, title, ok, detail)
    RESULTS[number] = line
    print(line)
    return line


def check_suite(number):
    title, suite = CRITERIA[number]
    t0 = time.perf_counter()
    rows = run_suite(suite, SEED)
    elapsed = time.perf_counter() - t0
    failed = [c.name for c in rows if not c.passed]
    ok = not failed and elapsed < TIME_LIMIT
    detail = f"{len(rows) - len(failed)}/{len(rows)} checks, {elapsed:.1f}s"
    if failed:
        detail += "; failed: " + "; ".join(failed)
    _record(number, title, ok, detail)
    return ok, rows, elapsed


def check_determinism():
    t0 = time.perf_counter()
    tables = {}
    with tempfile.TemporaryDirectory() as tmp:
        for suite in ("frontal", "invariance", "representation"):
            runs = []
            for i in range(2):
                out = Path(tmp) / f"{suite}{i}"
                status = cli.main(["verify", "--suite", suite, "--seed", str(SEED), "--out", str(out)])
                runs.append((status, (out / f"verify_{suite}.csv").read_bytes(),
                             (out / f"verify_{suite}.json").read_bytes()))
            tables[suite] = runs[0] == runs[1] and runs[0][0] == 0
    elapsed = time.perf_counter() - t0
    ok = all(tables.values()) and elapsed < 3 * TIME_LIMIT
    detail = ", ".join(f"{k} {'identical' if v else 'differs'}" for k, v in tables.items()) + f", {elapsed:.1f}s"
    _record(12, "determinism of verify tables", ok, detail)
    return ok


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    ok, rows, elapsed = check_suite(number)
    assert elapsed < TIME_LIMIT
    assert ok, [c.row() for c in rows if not c.passed]


def test_criterion_12_determinism():
    assert check_determinism()


if __name__ == "__main__":
    status = [check_suite(n)[0] for n in sorted(CRITERIA)] + [check_determinism()]
    sys.exit(0 if all(status) else 1)
