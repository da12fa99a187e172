import math

import numpy as np
import pytest

from conftest import cached_run, final_errors
from sysid.estimator import GaussianBelief
from sysid.harness import (
    ExperimentConfig,
    RunRecord,
    VerdictUnavailable,
    draw_initialization,
    initial_dataset,
    mismatch_verdict,
    read_records,
    records_to_csv,
    run_algorithm1_step,
    run_experiment,
    run_to_dir,
    summarize,
)
from sysid.systems import get_case


def fake_records(values_by_seed):
    """Records whose model-error log det follows the given per-seed curves."""
    out = []
    for seed, curve in enumerate(values_by_seed):
        for it, v in enumerate(curve, start=1):
            out.append(RunRecord(seed, it, 5 + it, 0.0, float(v), 0.3, 1, (0.0,), (0.0,), (1.0, 0.0, 1.0)))
    return out


class TestConfig:
    def test_defaults(self):
        c = ExperimentConfig()
        assert (c.seeds, c.iterations, c.inner_iters, c.delta0, c.delta_shrink) == (30, 30, 10, 0.3, 0.8)
        assert (c.rho, c.lam, c.measure, c.n0) == (0.5, 100.0, "log-det", 5)

    def test_text_round_trip(self, tmp_path):
        c = ExperimentConfig(case="henon", seeds=3, rho=0.25, warmup_iters=7)
        path = tmp_path / "c.ini"
        path.write_text(c.to_text())
        assert ExperimentConfig.from_file(path) == c
        assert ExperimentConfig.from_file(path, seeds="5").seeds == 5

    @pytest.mark.parametrize("kwargs", [dict(seeds=0), dict(delta0=0.0), dict(case="pendulum"),
                                        dict(delta_shrink=1.0), dict(warmup_iters=-1)])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ExperimentConfig(**kwargs)

    def test_unknown_key(self):
        with pytest.raises(KeyError):
            ExperimentConfig.from_mapping({"gamma": "1"})


def test_single_row():
    records = run_experiment(ExperimentConfig(case="linear", seeds=1, iterations=1))
    assert len(records) == 1 and records[0].status == "ok"


def test_csv_is_deterministic():
    cfg = ExperimentConfig(case="henon", seeds=2, iterations=4)
    a = records_to_csv(run_experiment(cfg), 2, 2)
    b = records_to_csv(run_experiment(cfg), 2, 2)
    assert a == b


def test_step_appends_one_point():
    cfg = ExperimentConfig(case="henon")
    case = cfg.build_case()
    rng = np.random.default_rng(0)
    ds = initial_dataset(case, 5, rng)
    prior, state = draw_initialization(case, cfg, rng)
    step = run_algorithm1_step(case, ds, prior.mean, state, prior, cfg, rng)
    assert len(step.dataset) == len(ds) + 1
    assert step.state.delta <= state.delta


def test_step_requires_data():
    cfg = ExperimentConfig(case="henon")
    case = cfg.build_case()
    ds = initial_dataset(case, 1, np.random.default_rng(0))
    empty = type(ds)(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(ValueError):
        run_algorithm1_step(case, empty, np.zeros(2), draw_initialization(case, cfg, np.random.default_rng(0))[1],
                            GaussianBelief.flat(2), cfg, np.random.default_rng(0))


def test_unicycle_initial_data_is_a_rollout():
    case = get_case("unicycle")
    ds = initial_dataset(case, 5, np.random.default_rng(0))
    np.testing.assert_array_equal(ds.inputs[0, :3], 0.0)
    for k in range(1, 5):
        np.testing.assert_array_equal(ds.inputs[k, :3], ds.outputs[k - 1])
    np.testing.assert_array_equal(ds.context(), ds.outputs[-1])


@pytest.mark.parametrize("name", ["linear", "henon", "unicycle"])
def test_run_invariants(name):
    records, _ = cached_run(case=name)
    case = get_case(name)
    assert len(records) == 30 * 30
    assert all(r.status == "ok" for r in records)
    for r in records:
        assert r.n_data == 5 + r.iter
        assert math.isfinite(r.logdet_model_err)
        assert case.input_constraint.sqdist(np.array(r.inputs)) <= 1e-6
    deltas = {}
    for r in records:
        assert r.delta <= deltas.get(r.seed, np.inf)
        deltas[r.seed] = r.delta


def test_linear_inputs_reach_boundary():
    records, _ = cached_run(case="linear")
    late = [r for r in records if r.iter >= 10]
    norms = np.array([np.linalg.norm(r.inputs) for r in late])
    assert np.all(np.abs(norms - 0.5) < 1e-3)


def test_henon_model_error_ends_below_start():
    summary = summarize(cached_run(case="henon")[0])
    assert summary[-1]["logdet_model_err_mean"] < summary[0]["logdet_model_err_mean"]


def test_linear_seeds_converge():
    errs = final_errors(cached_run(case="linear")[0])
    assert errs.size == 30 and errs.max() < 5e-2


def test_tied_mismatch_ends_above_start():
    summary = summarize(cached_run(case="mismatch-tied", warmup_iters=500)[0])
    assert summary[-1]["logdet_model_err_mean"] > summary[0]["logdet_model_err_mean"]


class TestSummarize:
    def test_single_seed_zero_std(self):
        rows = summarize(fake_records([np.linspace(0, 1, 5)]))
        assert all(r["logdet_model_err_std"] == 0.0 for r in rows)
        assert [r["iter"] for r in rows] == [1, 2, 3, 4, 5]

    def test_constant_metric(self):
        rows = summarize(fake_records([[2.5] * 4, [2.5] * 4, [2.5] * 4]))
        for r in rows:
            assert r["logdet_model_err_mean"] == 2.5 and r["logdet_model_err_std"] == 0.0
            assert r["n_seeds"] == 3

    def test_mean_and_std(self):
        rows = summarize(fake_records([[1.0], [3.0]]))
        assert rows[0]["logdet_model_err_mean"] == 2.0 and rows[0]["logdet_model_err_std"] == 1.0

    def test_failed_rows_excluded(self):
        recs = fake_records([[1.0, 1.0]])
        recs.append(RunRecord(1, 1, 6, np.nan, np.nan, 0.3, 0, (np.nan,), (np.nan,), (np.nan,) * 3,
                              status="failed"))
        rows = summarize(recs)
        assert rows[0]["n_seeds"] == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            summarize([])


class TestVerdict:
    def test_unavailable_when_short(self):
        with pytest.raises(VerdictUnavailable):
            mismatch_verdict(fake_records([np.zeros(7)]))

    def test_rising_plateau_is_inadequate(self):
        curve = np.r_[-20.0, -19.0, -18.0, np.full(9, -17.0)]
        assert mismatch_verdict(fake_records([curve])) == "inadequate"

    def test_falling_plateau_is_adequate(self):
        curve = np.r_[-5.0, -20.0, -30.0, np.full(9, -40.0)]
        assert mismatch_verdict(fake_records([curve])) == "adequate"

    def test_flat_at_floor_is_adequate(self):
        assert mismatch_verdict(fake_records([np.full(12, -41.4)])) == "adequate"

    def test_above_but_falling_fast_is_adequate(self):
        curve = np.r_[-20.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, -5.0, -9.0, -13.0]
        assert mismatch_verdict(fake_records([curve])) == "adequate"


def test_outputs_round_trip(tmp_path):
    cfg = ExperimentConfig(case="unicycle", seeds=2, iterations=3)
    records = run_to_dir(cfg, tmp_path, plots=True)
    back = read_records(tmp_path / "records.csv")
    assert back == records
    for name in ("records.csv", "summary.csv", "timing.csv", "meta.json", "error.svg", "logdet.svg",
                 "trajectory.svg", "inputs.svg"):
        assert (tmp_path / name).exists(), name
    header = (tmp_path / "records.csv").read_text().splitlines()[0].split(",")
    assert header[:7] == ["seed", "iter", "n_data", "linf_error", "logdet_model_err", "delta", "accepted"]
    assert "input_1" in header and "theta_1" in header
