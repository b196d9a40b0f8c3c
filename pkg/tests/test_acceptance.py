"""End-to-end acceptance sweeps on the default Plane preset at full sample sizes.

Each criterion is judged from the checks that the CLI commands produce.  Checks
that fail for reasons documented in the decisions ledger are listed in KNOWN and
run as strict xfails; every other sub-check must pass.  Run directly with
``python3 tests/test_acceptance.py`` to print only the verdict lines.
"""
from __future__ import annotations

import json
import sys
import tempfile
import time
from pathlib import Path

import pytest

from seclab.cli import COMMANDS, load_run_config, run

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "default.json"
TIME_BUDGET = 60.0
RUN_COMMANDS = ("smooth", "profile", "flow", "acs", "floer")

CRITERIA: dict[int, tuple[str, ...]] = {
    1: ("smoothing",),
    2: ("splitting",),
    3: ("profile",),
    4: ("acs",),
    5: ("moser",),
    6: ("lambda-sectorial",),
    7: ("floer",),
    8: ("controls",),
}

# diagnostics reported alongside a criterion but not part of its verdict
DIAGNOSTIC = {("moser", "Psi = id off the stated support union (diagnostic)")}

KNOWN: dict[tuple[str, str], int] = {
    **{("smoothing", f"P4 f~ {clause} [eps={eps}]"): 1
       for clause in ("f_plus_x_fprime", "two_fprime_plus_x_fsecond") for eps in (0.01, 0.001)},
    ("splitting", "Z[s] - 1 [alpha=0.25]"): 2,
    ("splitting", "Z[s] - 1 [alpha=1]"): 2,
    ("acs", "G^2 + I"): 4,
    ("acs", "tameness omega(v, Jv) > 0"): 4,
    ("moser", "Psi = id off the stated support union (diagnostic)"): 5,
    ("lambda-sectorial", "-d s_{phi,kappa} o J_lambda = lambda"): 6,
}


def sweep(out: Path) -> tuple[dict[tuple[str, str], dict], dict[str, float]]:
    checks: dict[tuple[str, str], dict] = {}
    timings: dict[str, float] = {}
    for cmd in RUN_COMMANDS:
        cfg = load_run_config(cmd, CONFIG, out=str(out / cmd))
        t0 = time.perf_counter()
        _, report = run(cfg, echo=lambda _line: None)
        timings[cmd] = time.perf_counter() - t0
        for c in report["checks"]:
            checks.setdefault((c["suite"], c["name"]), c)
    return checks, timings


def verdicts(checks: dict[tuple[str, str], dict]) -> dict[int, str]:
    out = {}
    for n, suites in CRITERIA.items():
        mine = [c for key, c in checks.items() if key[0] in suites and key not in DIAGNOSTIC]
        ok = bool(mine) and all(c["passed"] for c in mine)
        out[n] = "PASS" if ok else "FAIL"
    return out


@pytest.fixture(scope="module")
def results(tmp_path_factory, acceptance_verdicts):
    checks, timings = sweep(tmp_path_factory.mktemp("acceptance"))
    acceptance_verdicts.update(verdicts(checks))
    return checks, timings


def test_every_suite_is_swept(results):
    checks, _ = results
    swept = {s for s, _ in checks}
    assert {s for suites in CRITERIA.values() for s in suites} <= swept
    assert set(RUN_COMMANDS) | {"validate", "all"} == set(COMMANDS)
    assert not [k for k in checks if k[1] == "sweep completed"]


def test_constants_hold(results):
    checks, _ = results
    failing = [k for k, c in checks.items() if k[0] == "constants" and not c["passed"]]
    assert not failing


@pytest.mark.parametrize("cmd", RUN_COMMANDS)
def test_time_budget(results, cmd):
    assert results[1][cmd] < TIME_BUDGET


@pytest.mark.parametrize("criterion", sorted(CRITERIA))
def test_criterion_unconflicted_checks(results, criterion):
    checks, _ = results
    suites = CRITERIA[criterion]
    mine = {k: c for k, c in checks.items() if k[0] in suites and k not in KNOWN}
    assert mine
    failing = {f"{k[0]}: {k[1]}": c["worst"] for k, c in mine.items() if not c["passed"]}
    assert not failing


@pytest.mark.parametrize("key", sorted(KNOWN), ids=lambda k: f"criterion{KNOWN[k]}-{k[1]}")
@pytest.mark.xfail(strict=True, reason="documented conflict, see the decisions ledger")
def test_known_conflict(results, key):
    c = results[0][key]
    assert c["passed"], f"worst {c['worst']} vs tol {c['tol']}"


def test_failures_are_exactly_the_known_conflicts(results):
    checks, _ = results
    failing = {k for k, c in checks.items() if not c["passed"]}
    assert failing == set(KNOWN)
    assert all(checks[k]["known_conflict"] for k in KNOWN)


def test_criteria_verdicts(results, acceptance_verdicts):
    expected_fail = {n for k, n in KNOWN.items() if k not in DIAGNOSTIC}
    for n in CRITERIA:
        assert acceptance_verdicts[n] == ("FAIL" if n in expected_fail else "PASS")


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        checks, timings = sweep(Path(tmp))
    v = verdicts(checks)
    for n in sorted(v):
        print(f"Criterion {n}: {v[n]}")
    print(json.dumps({k: round(t, 1) for k, t in timings.items()}))
    sys.exit(0 if all(x == "PASS" for x in v.values()) else 1)
