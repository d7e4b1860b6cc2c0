"""Scenario wiring, repeats, aggregation and CSV output."""
from __future__ import annotations

import csv
import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .. import datagen
from ..filters import (
    BERNOULLI,
    GAUSSIAN,
    POISSON,
    FilterState,
    LinearFilterState,
    fklms_step,
    glm_map_step,
    klms_step_sgd,
    link,
    lms_step,
    nlms_step,
    norma_step,
    predict_linear,
    predict_score,
    qklms_step,
)
from ..kernels import KernelSpec, gram
from ..metrics import MetricSeries, asymptotic_nmse, function_error, pooled_nmse_db
from ..scalar_opt import NumericalFailure
from .config import ConfigError, ExperimentConfig
from .snapshot import save_snapshot

STEP_COLUMNS = ("run_id", "repeat", "step", "algorithm", "prediction", "observation",
                "truth", "squared_error", "center_count")
SUMMARY_COLUMNS = ("run_id", "algorithm", "nmse_db", "asymptotic_nmse_db",
                   "mean_center_count", "repeats", "asymptotic_nmse_db_se",
                   "asymptotic_truth_mse", "failed_repeats")
TRACKING_COLUMNS = ("run_id", "repeat", "step", "metric", "value")

# algorithms whose update decays the weight before forming the prediction error
DECAY_FIRST = {"fklms", "poisson_klms", "bernoulli_klms"}
MODEL_OF = {"poisson_klms": POISSON, "bernoulli_klms": BERNOULLI}

TUNING_GRID = np.arange(360.0)


@dataclass
class RepeatResult:
    repeat: int
    series: MetricSeries | None = None
    tracking: np.ndarray | None = None
    tracking_metric: str | None = None
    state: FilterState | None = None
    error: str | None = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    repeats: list[RepeatResult]
    summary: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return any(r.error is not None for r in self.repeats)

    @property
    def series(self) -> list[MetricSeries]:
        return [r.series for r in self.repeats if r.error is None]


def stream_config(cfg: ExperimentConfig, repeat: int):
    seed = cfg.base_seed + repeat
    n = cfg.n_steps
    if cfg.scenario == "gp_tracking":
        return datagen.GpStreamConfig(n=n, snr_db=cfg.snr_db, seed=seed)
    if cfg.scenario == "poisson_tuning":
        return datagen.TuningStreamConfig(n=n, seed=seed)
    if cfg.scenario == "logistic_boundary":
        return datagen.BoundaryStreamConfig(n=n, seed=seed)
    return datagen.RandomWalkConfig(cfg.dim, cfg.sigma_q2, cfg.sigma_n2, n, seed)


_GENERATORS = {
    datagen.GpStreamConfig: datagen.gp_stream,
    datagen.TuningStreamConfig: datagen.tuning_stream,
    datagen.BoundaryStreamConfig: datagen.boundary_stream,
    datagen.RandomWalkConfig: datagen.random_walk_stream,
}


@lru_cache(maxsize=512)
def make_stream(gen_cfg) -> datagen.Stream:
    """Generate (and memoize) the stream for a generator config."""
    return _GENERATORS[type(gen_cfg)](gen_cfg)


def is_linear(cfg: ExperimentConfig) -> bool:
    return cfg.algorithm == "nlms" or cfg.scenario == "steady_state"


def build_filter(cfg: ExperimentConfig, dim: int):
    if is_linear(cfg):
        return LinearFilterState.zeros(dim, cfg.eta)
    lam = cfg.lam if cfg.algorithm in DECAY_FIRST | {"norma"} else 1.0
    return FilterState(
        kernel=KernelSpec(cfg.gamma),
        lam=lam,
        sigma_d2=cfg.sigma_d2,
        sigma_n2=cfg.sigma_n2,
        budget=cfg.budget,
        prune_threshold=cfg.prune_threshold,
        model=MODEL_OF.get(cfg.algorithm, GAUSSIAN),
    )


def update(cfg: ExperimentConfig, state, x, y):
    alg = cfg.algorithm
    if is_linear(cfg):
        return nlms_step(state, x, y) if alg == "nlms" else lms_step(state, x, y)
    if alg == "klms":
        return klms_step_sgd(state, x, y, cfg.eta)
    if alg == "fklms":
        return fklms_step(state, x, y)
    if alg == "norma":
        return norma_step(state, x, y, cfg.eta)
    if alg == "qklms":
        return qklms_step(state, x, y, cfg.eta, cfg.eps_q)
    return glm_map_step(state, x, y)


def one_step_prediction(cfg: ExperimentConfig, state, x) -> float:
    """Predicted observation mean for ``x`` from the data seen so far.

    Algorithms that decay before updating predict with the decayed weight,
    which is their prior mean for the current step.
    """
    if is_linear(cfg):
        return predict_linear(state, x)
    s = predict_score(state, x)
    if cfg.algorithm in DECAY_FIRST:
        s *= state.lam
    return link(state.model, s)


def expansion_values(state: FilterState, X: np.ndarray) -> np.ndarray:
    if not state.size:
        return np.zeros(X.shape[0])
    return gram(state.kernel, X, state.points) @ state.coeffs


def run_repeat(cfg: ExperimentConfig, repeat: int) -> RepeatResult:
    """Run one repeat; a numerical failure is recorded rather than raised."""
    gen_cfg = stream_config(cfg, repeat)
    stream = make_stream(gen_cfg)
    n = len(stream)
    state = build_filter(cfg, stream.dim)
    pred = np.empty(n)
    count = np.zeros(n, dtype=np.int64)
    tracking = metric = None
    if cfg.scenario == "poisson_tuning":
        tracking, metric = np.empty(n), "function_error"
        mus = datagen.tuning_mean(gen_cfg, np.arange(n))
    elif cfg.scenario == "logistic_boundary":
        tracking, metric = np.empty(n), "accuracy"
        probe_rng = np.random.default_rng([gen_cfg.seed, 1])
        centers = datagen.boundary_center(gen_cfg, np.arange(n))

    try:
        for t in range(n):
            x = stream.X[t]
            pred[t] = one_step_prediction(cfg, state, x)
            update(cfg, state, x, stream.y[t])
            if not is_linear(cfg):
                count[t] = state.size
            if metric == "function_error":
                est = np.exp(expansion_values(state, TUNING_GRID[:, None]))
                truth = datagen.tuning_rate(gen_cfg, TUNING_GRID, mus[t])
                tracking[t] = function_error(est, truth)
            elif metric == "accuracy":
                P = probe_rng.uniform(-2.0, 2.0, (cfg.probes, 2))
                labels = datagen.boundary_labels(gen_cfg, P, centers[t])
                guess = (expansion_values(state, P) > 0.0).astype(float)
                tracking[t] = float(np.mean(guess == labels))
    except (NumericalFailure, FloatingPointError, OverflowError) as exc:
        return RepeatResult(repeat, error=f"step {t}: {type(exc).__name__}: {exc}")

    truth = stream.truth if stream.truth is not None else np.full(n, np.nan)
    series = MetricSeries(pred, stream.y, truth, count)
    keep_state = state if cfg.save_snapshots and isinstance(state, FilterState) else None
    return RepeatResult(repeat, series, tracking, metric, keep_state)


def _task(args):
    cfg, repeat = args
    return run_repeat(cfg, repeat)


def _nan_safe(fn, *args, **kw) -> float:
    try:
        return fn(*args, **kw)
    except ValueError:
        return math.nan


def summarize(cfg: ExperimentConfig, results: list[RepeatResult]) -> dict:
    ok = [r.series for r in results if r.error is None]
    start, window = cfg.asymptotic_start, cfg.asymptotic_window
    summary = dict(run_id=cfg.run_id, algorithm=cfg.algorithm, repeats=len(ok),
                   failed_repeats=len(results) - len(ok))
    if not ok:
        summary.update(nmse_db=math.nan, asymptotic_nmse_db=math.nan,
                       mean_center_count=math.nan, asymptotic_nmse_db_se=math.nan,
                       asymptotic_truth_mse=math.nan)
        return summary
    per_repeat = np.array([_nan_safe(asymptotic_nmse, s, start, window) for s in ok])
    sl = slice(start, start + window)
    summary.update(
        nmse_db=_nan_safe(pooled_nmse_db, ok),
        asymptotic_nmse_db=_nan_safe(pooled_nmse_db, ok, start, window),
        mean_center_count=float(np.mean([s.center_count.mean() for s in ok])),
        asymptotic_nmse_db_se=(float(np.std(per_repeat, ddof=1) / math.sqrt(len(ok)))
                               if len(ok) > 1 else math.nan),
        asymptotic_truth_mse=float(np.mean([np.mean((s.truth[sl] - s.prediction[sl]) ** 2)
                                            for s in ok])),
    )
    return summary


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _writer(path: Path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_outputs(result: ExperimentResult, out_dir) -> None:
    cfg = result.config
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.write_steps:
        fh, w = _writer(out / "steps.csv")
        with fh:
            w.writerow(STEP_COLUMNS)
            for r in result.repeats:
                if r.error is not None:
                    continue
                s = r.series
                se = s.squared_error
                for t in range(len(s)):
                    w.writerow([cfg.run_id, r.repeat, int(s.step[t]), cfg.algorithm,
                                _fmt(s.prediction[t]), _fmt(s.observation[t]),
                                _fmt(s.truth[t]), _fmt(se[t]), int(s.center_count[t])])
    fh, w = _writer(out / "summary.csv")
    with fh:
        w.writerow(SUMMARY_COLUMNS)
        w.writerow([_fmt(result.summary[c]) for c in SUMMARY_COLUMNS])
    tracked = [r for r in result.repeats if r.tracking is not None]
    if tracked:
        fh, w = _writer(out / "tracking.csv")
        with fh:
            w.writerow(TRACKING_COLUMNS)
            for r in tracked:
                for t, v in enumerate(r.tracking):
                    w.writerow([cfg.run_id, r.repeat, t, r.tracking_metric, _fmt(v)])
    failures = [r for r in result.repeats if r.error is not None]
    if failures:
        fh, w = _writer(out / "failures.csv")
        with fh:
            w.writerow(("run_id", "repeat", "error"))
            for r in failures:
                w.writerow([cfg.run_id, r.repeat, r.error])
    snaps = [r for r in result.repeats if r.state is not None]
    if snaps:
        (out / "snapshots").mkdir(exist_ok=True)
        for r in snaps:
            save_snapshot(r.state, out / "snapshots" / f"{cfg.run_id}_repeat{r.repeat:04d}.json")


def run_experiment(cfg: ExperimentConfig, write: bool = True, order=None) -> ExperimentResult:
    """Run every repeat of ``cfg`` and aggregate.

    Repeat ``r`` uses stream seed ``base_seed + r``; results are merged by
    repeat index, so execution order and worker count do not matter.
    ``order`` optionally permutes execution order (for testing that claim).
    """
    cfg = cfg.resolved()
    indices = list(range(cfg.repeats)) if order is None else list(order)
    if sorted(indices) != list(range(cfg.repeats)):
        raise ConfigError("order must be a permutation of the repeat indices")
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_task, [(cfg, r) for r in indices]))
    else:
        results = [run_repeat(cfg, r) for r in indices]
    results.sort(key=lambda r: r.repeat)
    result = ExperimentResult(cfg, results, summarize(cfg, results))
    if write and cfg.output:
        write_outputs(result, cfg.output)
    return result


@dataclass
class ScanSpec:
    param: str
    values: list

    def __post_init__(self):
        if not self.values:
            raise ConfigError("scan needs at least one candidate value")


@dataclass
class ScanResult:
    param: str
    best: object
    rows: list[tuple[object, dict]]

    @property
    def best_summary(self) -> dict:
        return next(s for v, s in self.rows if v == self.best)


def run_scan(cfg: ExperimentConfig, scan: ScanSpec, write: bool = True) -> ScanResult:
    """Grid scan of one parameter; picks the least pooled NMSE over all steps.

    Every candidate sees the same seeds. Ties go to the smaller value.
    """
    rows = []
    for v in scan.values:
        res = run_experiment(dataclasses.replace(cfg.with_param(scan.param, v), output=None),
                             write=False)
        rows.append((v, res.summary))
    ranked = sorted(
        (s["nmse_db"], v) for v, s in rows if not math.isnan(s["nmse_db"])
    )
    if not ranked:
        raise NumericalFailure("every scan candidate failed")
    best = ranked[0][1]
    if write and cfg.output:
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        fh, w = _writer(out / "scan.csv")
        with fh:
            w.writerow(("param", "value", *SUMMARY_COLUMNS, "selected"))
            for v, s in rows:
                w.writerow([scan.param, _fmt(v), *(_fmt(s[c]) for c in SUMMARY_COLUMNS),
                            int(v == best)])
    return ScanResult(scan.param, best, rows)
