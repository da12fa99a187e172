"""Seeded experiment runs of the active identification loop.

Each outer iteration runs the inner estimation loop, designs the next input
against the model-error covariance, queries the true system and appends the
new pair. Records are written as CSV; summaries and figures are derived from
them.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import json
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from sysid.design import ConstraintSet, InformationObjective, _inverse_pd, design_input, posterior_information
from sysid.estimator import CalibrationState, GaussianBelief, estimation_loop
from sysid.model import Dataset, latest_output
from sysid.systems import CASE_NAMES, BenchmarkCase, get_case

log = logging.getLogger(__name__)

CONFIG_SECTION = "experiment"
METRICS = ("linf_error", "logdet_model_err", "delta", "accepted")
MIN_VERDICT_ITERS = 8


class VerdictUnavailable(ValueError):
    """Too few iterations to judge the model family."""


@dataclass(frozen=True)
class ExperimentConfig:
    case: str = "linear"
    seeds: int = 30
    iterations: int = 30
    inner_iters: int = 10
    delta0: float = 0.3
    delta_shrink: float = 0.8
    rho: float = 0.5
    lam: float = 100.0
    measure: str = "log-det"
    n0: int = 5
    warmup_iters: int = 0
    starts: int = 8
    prior_mean_std: float = 1.0
    prior_var_low: float = 0.5
    prior_var_high: float = 5.0
    sigma_var_low: float = 0.1
    sigma_var_high: float = 1.0
    henon_radius: float = 2.0
    rng_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.case not in CASE_NAMES:
            raise ValueError(f"unknown case {self.case!r}; choose from {', '.join(CASE_NAMES)}")
        for name in ("seeds", "iterations", "inner_iters", "n0", "starts", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.warmup_iters < 0:
            raise ValueError("warmup_iters must be non-negative")
        if not self.delta0 > 0:
            raise ValueError("delta0 must be positive")
        if not 0 < self.delta_shrink < 1:
            raise ValueError("delta_shrink must lie in (0, 1)")
        if not (0 < self.prior_var_low <= self.prior_var_high and 0 < self.sigma_var_low <= self.sigma_var_high):
            raise ValueError("variance ranges must be positive and ordered")

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key not in types:
                raise KeyError(f"unknown config key {key!r}")
            conv = {"int": int, "float": float, "str": str}[types[key]]
            kwargs[key] = conv(raw.strip() if isinstance(raw, str) else raw)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        with open(path) as fh:
            parser.read_file(fh)
        values = dict(parser[CONFIG_SECTION]) if parser.has_section(CONFIG_SECTION) else {}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)

    def to_text(self) -> str:
        parser = configparser.ConfigParser()
        parser[CONFIG_SECTION] = {k: str(v) for k, v in dataclasses.asdict(self).items()}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def build_case(self) -> BenchmarkCase:
        return get_case(self.case, henon_radius=self.henon_radius)


@dataclass(frozen=True)
class RunRecord:
    seed: int
    iter: int
    n_data: int
    linf_error: float
    logdet_model_err: float
    delta: float
    accepted: int
    inputs: tuple
    theta: tuple
    post_cov: tuple  # (00, 01, 11) block of the posterior covariance
    wall_ms: float = field(default=float("nan"), compare=False)
    status: str = "ok"

    def row(self) -> list:
        return [self.seed, self.iter, self.n_data, self.linf_error, self.logdet_model_err, self.delta,
                self.accepted, *self.inputs, *self.theta, *self.post_cov, self.status]


def record_header(design_dim: int, param_dim: int) -> list[str]:
    return (["seed", "iter", "n_data", *METRICS[:2], "delta", "accepted"]
            + [f"input_{i}" for i in range(design_dim)]
            + [f"theta_{i}" for i in range(param_dim)]
            + ["post_cov_00", "post_cov_01", "post_cov_11", "status"])


# ---------------------------------------------------------------- set-up

def seed_sequences(config: ExperimentConfig) -> list[np.random.SeedSequence]:
    """Child 0 draws the shared initial dataset; child k+1 drives seed k."""
    return np.random.SeedSequence(config.rng_seed).spawn(config.seeds + 1)


def initial_dataset(case: BenchmarkCase, n0: int, rng: np.random.Generator) -> Dataset:
    """``n0`` feasible inputs drawn uniformly; sequential cases roll out from the initial state."""
    xs, ys = [], []
    if case.sequential:
        state = np.asarray(case.initial_state, dtype=float)
        for _ in range(n0):
            u = case.input_constraint.sample(rng, case.design_dim)
            x = np.concatenate([state, u])
            y = case.oracle(x)
            xs.append(x)
            ys.append(y)
            state = y
        return Dataset(np.array(xs), np.array(ys), case.designable, latest_output)
    for _ in range(n0):
        x = case.input_constraint.sample(rng, case.oracle.input_dim)
        xs.append(x)
        ys.append(case.oracle(x))
    return Dataset(np.array(xs), np.array(ys))


def draw_initialization(case: BenchmarkCase, config: ExperimentConfig, rng: np.random.Generator):
    """Random prior mean, prior covariance scale and starting noise covariance."""
    d_theta = case.family.param_dim
    d_y = case.oracle.output_dim
    prior_mean = config.prior_mean_std * rng.standard_normal(d_theta)
    prior_var = rng.uniform(config.prior_var_low, config.prior_var_high)
    sigma_var = rng.uniform(config.sigma_var_low, config.sigma_var_high)
    prior = GaussianBelief(prior_mean, np.eye(d_theta) / prior_var)
    state = CalibrationState.initial(sigma_var * np.eye(d_y), config.delta0)
    return prior, state


# ---------------------------------------------------------------- algorithm

@dataclass(frozen=True)
class StepResult:
    dataset: Dataset
    theta: np.ndarray
    state: CalibrationState
    accepted: int
    design: np.ndarray
    information: np.ndarray  # posterior information at theta over the pre-step dataset


def run_algorithm1_step(case: BenchmarkCase, dataset: Dataset, theta, state: CalibrationState,
                        prior: GaussianBelief, config: ExperimentConfig,
                        rng: np.random.Generator) -> StepResult:
    """Estimate, design the next input against the model-error covariance, query, append."""
    if len(dataset) == 0:
        raise ValueError("dataset must be non-empty")
    loop = estimation_loop(dataset, case.family, theta, state, prior, iters=config.inner_iters,
                           rho=config.rho, shrink=config.delta_shrink)
    theta, state = loop.theta, loop.state
    if loop.no_accept:
        log.debug("no accepted pass; designing with the previous estimate")

    sigma_me = state.sigma_model_error
    fixed = posterior_information(dataset.inputs, theta, case.family, sigma_me,
                                  np.zeros_like(prior.precision))
    obj = InformationObjective(
        prior_precision=prior.precision,
        fixed_information=fixed,
        sigma_inv=_inverse_pd(sigma_me),
        input_dim=dataset.input_dim,
        measure=config.measure,
        lam=config.lam,
        input_set=case.input_constraint,
        output_set=ConstraintSet(),
        designable=dataset.designable,
    )
    context = dataset.context()
    design = design_input(obj, theta, case.family, context, starts=config.starts, rng=rng)
    x_new = dataset.assemble(context, design)
    y_new = case.oracle(x_new)
    return StepResult(dataset.append(x_new, y_new), theta, state, loop.accepted, design,
                      prior.precision + fixed)


def _logdet(m: np.ndarray) -> float:
    sign, value = np.linalg.slogdet(m)
    return float(value) if sign > 0 else float("nan")


def _ellipse_block(information: np.ndarray) -> tuple:
    cov = np.linalg.inv(information)
    if cov.shape[0] == 1:
        return (float(cov[0, 0]), float("nan"), float("nan"))
    return (float(cov[0, 0]), float(cov[0, 1]), float(cov[1, 1]))


def run_seed(config: ExperimentConfig, seed: int) -> list[RunRecord]:
    """All outer iterations for one initialization; failures end the seed with a failed row."""
    case = config.build_case()
    seqs = seed_sequences(config)
    dataset = initial_dataset(case, config.n0, np.random.default_rng(seqs[0]))
    rng = np.random.default_rng(seqs[seed + 1])
    prior, state = draw_initialization(case, config, rng)
    theta = prior.mean.copy()
    if config.warmup_iters:
        # calibrate on the fixed data first so iteration 1 is a converged baseline
        warm = estimation_loop(dataset, case.family, theta, state, prior, iters=config.warmup_iters,
                               rho=config.rho, shrink=config.delta_shrink)
        theta, state = warm.theta, warm.state

    records = []
    for it in range(1, config.iterations + 1):
        t0 = time.perf_counter()
        try:
            step = run_algorithm1_step(case, dataset, theta, state, prior, config, rng)
        except Exception as exc:  # noqa: BLE001 - recorded, run continues with other seeds
            log.warning("seed %d failed at iteration %d: %s", seed, it, exc)
            nan = float("nan")
            records.append(RunRecord(seed, it, len(dataset), nan, nan, state.delta, 0,
                                     (nan,) * case.design_dim, tuple(theta), (nan,) * 3,
                                     wall_ms=1e3 * (time.perf_counter() - t0), status="failed"))
            break
        dataset, theta, state = step.dataset, step.theta, step.state
        err = (float(np.max(np.abs(theta - case.theta_true))) if case.theta_true is not None
               else float("nan"))
        records.append(RunRecord(
            seed=seed,
            iter=it,
            n_data=len(dataset),
            linf_error=err,
            logdet_model_err=_logdet(state.sigma_model_error),
            delta=float(state.delta),
            accepted=step.accepted,
            inputs=tuple(float(v) for v in step.design),
            theta=tuple(float(v) for v in theta),
            post_cov=_ellipse_block(step.information),
            wall_ms=1e3 * (time.perf_counter() - t0),
        ))
    return records


def _run_seed_args(args):
    return run_seed(*args)


def run_experiment(config: ExperimentConfig) -> list[RunRecord]:
    """Every seed's records, ordered by (seed, iter)."""
    jobs = [(config, s) for s in range(config.seeds)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            per_seed = list(pool.map(_run_seed_args, jobs))
    else:
        per_seed = [run_seed(*job) for job in jobs]
    return [rec for recs in per_seed for rec in recs]


# ---------------------------------------------------------------- aggregation

def _by_iter(records, metric):
    table: dict[int, list[float]] = {}
    for rec in records:
        if rec.status != "ok":
            continue
        table.setdefault(rec.iter, []).append(float(getattr(rec, metric)))
    return table


def summarize(records) -> list[dict]:
    """Per-iteration mean and (population) standard deviation of each metric across seeds."""
    if not records:
        raise ValueError("no records to summarize")
    columns = {m: _by_iter(records, m) for m in METRICS}
    rows = []
    for it in sorted(columns["delta"]):
        row = {"iter": it, "n_seeds": len(columns["delta"][it])}
        for m in METRICS:
            vals = np.array(columns[m][it], dtype=float)
            vals = vals[np.isfinite(vals)]
            row[f"{m}_mean"] = float(np.mean(vals)) if vals.size else float("nan")
            row[f"{m}_std"] = float(np.std(vals)) if vals.size else float("nan")
        rows.append(row)
    return rows


def mismatch_verdict(records, rel_tol: float = 0.05) -> str:
    """Judge the model family from the mean log det of the model-error covariance.

    The curve is compared over its last quarter. The family is ``inadequate``
    when the curve ends above its iteration-1 value and is either flat
    (relative change below ``rel_tol``) or still rising; otherwise it is
    ``adequate``.
    """
    summary = summarize(records)
    curve = np.array([row["logdet_model_err_mean"] for row in summary])
    if len(curve) < MIN_VERDICT_ITERS:
        raise VerdictUnavailable(f"need at least {MIN_VERDICT_ITERS} iterations, got {len(curve)}")
    window = curve[-max(2, math.ceil(len(curve) / 4)):]
    start, end = window[0], window[-1]
    initial = curve[0]
    scale = max(abs(start), 1e-12)
    plateau = abs(end - start) / scale < rel_tol
    rising = end > start
    above = float(np.mean(window)) > initial + 1e-6 * (1.0 + abs(initial))
    return "inadequate" if above and (plateau or rising) else "adequate"


# ---------------------------------------------------------------- files

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def records_to_csv(records, design_dim: int, param_dim: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(record_header(design_dim, param_dim))
    for rec in records:
        writer.writerow([_fmt(v) for v in rec.row()])
    return buf.getvalue()


def read_records(path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        n_in = sum(h.startswith("input_") for h in header)
        n_th = sum(h.startswith("theta_") for h in header)
        out = []
        for row in reader:
            out.append(RunRecord(
                seed=int(row["seed"]),
                iter=int(row["iter"]),
                n_data=int(row["n_data"]),
                linf_error=float(row["linf_error"]),
                logdet_model_err=float(row["logdet_model_err"]),
                delta=float(row["delta"]),
                accepted=int(row["accepted"]),
                inputs=tuple(float(row[f"input_{i}"]) for i in range(n_in)),
                theta=tuple(float(row[f"theta_{i}"]) for i in range(n_th)),
                post_cov=tuple(float(row[k]) for k in ("post_cov_00", "post_cov_01", "post_cov_11")),
                status=row["status"],
            ))
    return out


def summary_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def write_outputs(records, config: ExperimentConfig, out_dir, started: Optional[datetime] = None,
                  plots: bool = True) -> Path:
    """records.csv, summary.csv, timing.csv, meta.json and (optionally) SVG figures."""
    from sysid import __version__

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    case = config.build_case()
    (out / "records.csv").write_text(records_to_csv(records, case.design_dim, case.family.param_dim))
    summary = summarize(records)
    (out / "summary.csv").write_text(summary_to_csv(summary))
    with open(out / "timing.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["seed", "iter", "wall_ms"])
        for rec in records:
            writer.writerow([rec.seed, rec.iter, f"{rec.wall_ms:.3f}"])
    meta = {
        "config": dataclasses.asdict(config),
        "case": {
            "name": case.name,
            "family": case.family.name,
            "theta_true": None if case.theta_true is None else case.theta_true.tolist(),
            "input_constraint": case.input_constraint.kind,
            "sequential": case.sequential,
        },
        "initialization": {
            "theta_prior": f"normal(0, {config.prior_mean_std}^2) per coordinate",
            "sigma_prior": f"s * I, s ~ uniform[{config.prior_var_low}, {config.prior_var_high}]",
            "sigma": f"v * I, v ~ uniform[{config.sigma_var_low}, {config.sigma_var_high}]",
            "initial_data": f"{config.n0} points drawn once from rng_seed {config.rng_seed}",
        },
        "failed_seeds": sorted({r.seed for r in records if r.status != "ok"}),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started": (started or datetime.now(timezone.utc)).isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    if plots:
        from sysid.plotting import render_all

        render_all(records, summary, out, case_name=case.name, theta_true=case.theta_true)
    return out


def run_to_dir(config: ExperimentConfig, out_dir, plots: bool = True) -> list[RunRecord]:
    started = datetime.now(timezone.utc)
    records = run_experiment(config)
    write_outputs(records, config, out_dir, started=started, plots=plots)
    return records

