import re
import time

import numpy as np
import pytest

from sysid.harness import ExperimentConfig, run_experiment

_RUNS = {}


def cached_run(**kwargs):
    """Run an experiment once per distinct config within the session; returns (records, seconds)."""
    config = ExperimentConfig(**kwargs)
    if config not in _RUNS:
        t0 = time.perf_counter()
        records = run_experiment(config)
        _RUNS[config] = (records, time.perf_counter() - t0)
    return _RUNS[config]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def final_errors(records):
    last = max(r.iter for r in records)
    return np.array([r.linf_error for r in records if r.iter == last])


_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter):
    rows = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" not in rep.nodeid or rep.when not in ("call", "setup"):
                continue
            m = _CRITERION.search(rep.nodeid)
            if m:
                key = int(m.group(1))
                # a failure in any phase wins over a pass
                if rows.get(key, ("passed",))[0] == "passed":
                    rows[key] = (outcome, m.group(2).replace("_", " "))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(rows):
        outcome, label = rows[key]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {key:2d}: {verdict}  {label}")
