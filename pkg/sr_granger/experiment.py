"""Monte Carlo harness for Type I / Type II error-rate experiments.

Every (sample length, model) pair is an independent task whose seeds derive
from the master seed through ``SeedSequence`` spawn keys, so the report does
not depend on the number of workers or on the order tasks complete in.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import scipy.stats
import yaml

from sr_granger.bivar_oracle import bivar_params_for_gc
from sr_granger.cli.logging_config import (
    bound_context,
    current_level,
    get_logger,
    worker_initializer,
)
from sr_granger.errors import GrangerError, UnstableFit
from sr_granger.gc_estimators import FrequencyBand
from sr_granger.inference import (
    FixedOrder,
    GcTestFactory,
    OrderPolicy,
    SelectOrder,
)
from sr_granger.sampling import OrderCriterion, simulate
from sr_granger.var_model import Null, Partition, TargetGC, VarParams, random_var

logger = get_logger(__name__)

FAMILIES = ("random", "bivariate_grid")
EXCLUSION_FLAG = 0.01
MODEL_STREAM = 1
TRIAL_STREAM = 2


@dataclass(frozen=True)
class ExperimentConfig:
    """Experiment design; see the packaged presets for examples."""

    family: str = "random"
    nx: int = 3
    ny: int = 5
    p: int = 7
    rho: float = 0.9
    gamma: float = 1.0
    target_gc: float = 0.0
    n_values: tuple[int, ...] = (256, 1024, 4096)
    models: int = 50
    trials_per_model: int = 200
    alpha: float = 0.05
    tests: tuple[str, ...] = ("projection", "lr")
    order_select: str | None = None
    p_max: int | None = None
    band: tuple[float, float] | None = None
    burn_in: int | None = None
    seed: int = 0
    kappa: float = 0.0
    a_yx: float = 0.0
    a_xx_values: tuple[float, ...] = ()
    a_yy_values: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"Unsupported family: {self.family}. Supported: {list(FAMILIES)}")
        if self.models < 1 or self.trials_per_model < 1:
            raise ValueError("models and trials_per_model must be >= 1")
        if not self.n_values:
            raise ValueError("n_values must not be empty")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        for name in self.tests:
            if name not in GcTestFactory.supported():
                raise ValueError(
                    f"Unsupported test: {name}. Supported: {GcTestFactory.supported()}"
                )
        if self.family == "bivariate_grid" and not (self.a_xx_values and self.a_yy_values):
            raise ValueError("bivariate_grid needs a_xx_values and a_yy_values")

    @property
    def partition(self) -> Partition:
        if self.family == "bivariate_grid":
            return Partition(1, 1)
        return Partition(self.nx, self.ny)

    @property
    def model_order(self) -> int:
        return 1 if self.family == "bivariate_grid" else self.p

    @property
    def model_count(self) -> int:
        if self.family == "bivariate_grid":
            return len(self.a_xx_values) * len(self.a_yy_values)
        return self.models

    @property
    def rate_kind(self) -> str:
        return "type_ii" if self.target_gc > 0 else "type_i"

    @property
    def order_policy(self) -> OrderPolicy:
        if self.order_select is None:
            return FixedOrder(self.model_order)
        p_max = self.p_max if self.p_max is not None else 2 * self.model_order
        return SelectOrder(OrderCriterion(self.order_select), p_max)

    @property
    def frequency_band(self) -> FrequencyBand | None:
        return FrequencyBand(*self.band) if self.band is not None else None

    def to_dict(self) -> dict[str, Any]:
        return {key: list(v) if isinstance(v, tuple) else v for key, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> ExperimentConfig:
        data = dict(raw)
        mode = data.pop("mode", None)
        if isinstance(mode, dict) and "target_gc" in mode:
            data["target_gc"] = float(mode["target_gc"])
        elif mode not in (None, "null"):
            raise ValueError(f"Invalid mode: {mode!r}; use 'null' or {{target_gc: F}}")
        policy = data.pop("order_policy", None)
        if isinstance(policy, dict) and "select" in policy:
            data["order_select"] = str(policy["select"]).lower()
            data["p_max"] = policy.get("p_max")
        elif policy not in (None, "fixed"):
            raise ValueError(f"Invalid order_policy: {policy!r}")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"Unknown experiment config keys: {unknown}")
        for key in ("n_values", "tests", "band", "a_xx_values", "a_yy_values"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return cls(**data)


def load_config(path: Path) -> ExperimentConfig:
    """Load an experiment config from YAML or JSON.

    Raises:
        FileNotFoundError: If the config file doesn't exist
        ValueError: If the config is not a mapping or has invalid entries
    """
    if not path.exists():
        raise FileNotFoundError(f"Configuration file not found: {path}")
    with open(path, encoding="utf-8") as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict):
        raise ValueError(f"Invalid configuration format in {path}")
    return ExperimentConfig.from_dict(raw)


def list_presets() -> list[str]:
    presets = resources.files("sr_granger") / "presets"
    return sorted(
        entry.name.removesuffix(".yaml")
        for entry in presets.iterdir()
        if entry.name.endswith(".yaml")
    )


def load_preset(name: str) -> ExperimentConfig:
    if name not in list_presets():
        raise ValueError(f"Unknown preset: {name}. Available: {list_presets()}")
    resource = resources.files("sr_granger") / "presets" / f"{name}.yaml"
    with resources.as_file(resource) as path:
        return load_config(path)


@dataclass
class ModelRate:
    """Per-model tally for one sample length and one test."""

    model: int
    rate: float
    trials: int
    rejections: int
    unstable: int
    failures: dict[str, int] = field(default_factory=dict)
    mean_scaled: float | None = None
    info: dict[str, float] = field(default_factory=dict)


@dataclass
class CellSummary:
    """Cross-model summary for one (N, test) cell."""

    N: int
    test: str
    rates: list[ModelRate]
    mean: float
    lower: float
    upper: float
    pooled_rate: float
    pooled_ci: tuple[float, float]
    total_variance: float
    within_variance: float
    between_variance: float
    exclusion_fraction: float
    flagged: bool
    failures: dict[str, int]
    failed_models: int


@dataclass
class ErrorRateReport:
    config: dict[str, Any]
    seed: int
    rate_kind: str
    cells: list[CellSummary]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _generator(seed: int, *key: int) -> np.random.Generator:
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(sequence))


def build_model(
    config: ExperimentConfig, index_n: int, index_m: int, seed: int
) -> tuple[VarParams, dict[str, float]]:
    """The m-th model of the sample drawn at the index_n-th sample length."""
    if config.family == "bivariate_grid":
        a_xx = config.a_xx_values[index_m // len(config.a_yy_values)]
        a_yy = config.a_yy_values[index_m % len(config.a_yy_values)]
        params = bivar_params_for_gc(a_xx, a_yy, config.a_yx, config.kappa, config.target_gc)
        return params.to_model(), {"a_xx": a_xx, "a_yy": a_yy, "a_xy": params.a_xy}

    rng = _generator(seed, MODEL_STREAM, index_n, index_m)
    mode = TargetGC(config.target_gc) if config.target_gc > 0 else Null()
    n = config.nx + config.ny
    model = random_var(n, config.p, config.partition, config.rho, config.gamma, mode, rng)
    return model, {"spectral_radius": model.spectral_radius}


@dataclass(frozen=True)
class _Task:
    config: ExperimentConfig
    seed: int
    index_n: int
    index_m: int


@dataclass
class _Tally:
    rejections: int = 0
    trials: int = 0
    unstable: int = 0
    scaled_sum: float = 0.0
    failures: Counter[str] = field(default_factory=Counter)


# (N index, model index, per-test tallies, model info, model failure)
_Outcome = tuple[int, int, dict[str, _Tally], dict[str, float], str | None]


def _run_task(task: _Task) -> _Outcome:
    N = task.config.n_values[task.index_n]
    with bound_context(seed=task.seed, N=N, model=task.index_m):
        return _run_trials(task)


def _run_trials(task: _Task) -> _Outcome:
    config = task.config
    N = config.n_values[task.index_n]
    try:
        model, info = build_model(config, task.index_n, task.index_m, task.seed)
    except GrangerError as err:
        logger.warning("model generation failed", error=str(err))
        return task.index_n, task.index_m, {}, {}, type(err).__name__

    band = config.frequency_band
    tests = {
        name: GcTestFactory.create(name, band=band if name == "projection" else None)
        for name in config.tests
    }
    policy = config.order_policy
    partition = config.partition
    tallies = {name: _Tally() for name in config.tests}

    for trial in range(config.trials_per_model):
        rng = _generator(task.seed, TRIAL_STREAM, task.index_n, task.index_m, trial)
        data = simulate(model, N, rng, burn_in=config.burn_in)
        for name, test in tests.items():
            tally = tallies[name]
            try:
                result = test.run(data, partition, config.alpha, policy)
            except UnstableFit:
                tally.unstable += 1
                continue
            except GrangerError as err:
                tally.failures[type(err).__name__] += 1
                continue
            tally.trials += 1
            tally.rejections += int(result.reject)
            tally.scaled_sum += result.scaled
    return task.index_n, task.index_m, tallies, info, None


def _quantiles(rates: list[float]) -> tuple[float, float]:
    if not rates:
        return math.nan, math.nan
    lo, hi = np.quantile(rates, [0.025, 0.975])
    return float(lo), float(hi)


def _summarize(
    N: int, test: str, rates: list[ModelRate], failed_models: int, rate_kind: str
) -> CellSummary:
    valid = [r for r in rates if r.trials > 0]
    values = [r.rate for r in valid]
    trials = sum(r.trials for r in valid)
    rejections = sum(r.rejections for r in valid)
    unstable = sum(r.unstable for r in rates)
    failures: Counter[str] = Counter()
    for r in rates:
        failures.update(r.failures)

    counted = rejections if rate_kind == "type_i" else trials - rejections
    if trials > 0:
        pooled = counted / trials
        ci = scipy.stats.binomtest(counted, trials).proportion_ci(0.95, method="exact")
        pooled_ci = (float(ci.low), float(ci.high))
    else:
        pooled, pooled_ci = math.nan, (math.nan, math.nan)

    # unbiased on both sides: sample variance across models, and the mean of
    # the per-model binomial variance estimates p(1-p)/(n-1)
    total_var = float(np.var(values, ddof=1)) if len(values) > 1 else math.nan
    binomial = [r.rate * (1.0 - r.rate) / (r.trials - 1) for r in valid if r.trials > 1]
    within_var = float(np.mean(binomial)) if binomial else math.nan
    between_var = max(0.0, total_var - within_var) if math.isfinite(total_var - within_var) else math.nan
    attempted = trials + unstable + sum(failures.values())
    exclusion = unstable / attempted if attempted else 0.0
    flagged = exclusion > EXCLUSION_FLAG
    if flagged:
        logger.warning("cell exclusions above threshold", N=N, test=test, fraction=exclusion)
    lower, upper = _quantiles(values)

    return CellSummary(
        N=N,
        test=test,
        rates=rates,
        mean=float(np.mean(values)) if values else math.nan,
        lower=lower,
        upper=upper,
        pooled_rate=pooled,
        pooled_ci=pooled_ci,
        total_variance=total_var,
        within_variance=within_var,
        between_variance=between_var,
        exclusion_fraction=exclusion,
        flagged=flagged,
        failures=dict(sorted(failures.items())),
        failed_models=failed_models,
    )


def error_rate_experiment(
    config: ExperimentConfig, seed: int | None = None, workers: int = 1
) -> ErrorRateReport:
    """Run the configured sweep and tabulate per-model and pooled error rates.

    Null designs report Type I rates (rejection frequency); designs with a
    positive target GC report Type II rates (one minus power). Per-trial
    failures are counted, never raised.
    """
    master = config.seed if seed is None else seed
    tasks = [
        _Task(config, master, i, m)
        for i in range(len(config.n_values))
        for m in range(config.model_count)
    ]
    logger.info(
        "experiment started",
        family=config.family,
        tasks=len(tasks),
        trials=config.trials_per_model,
        workers=workers,
    )
    if workers > 1:
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=worker_initializer,
            initargs=(current_level(),),
        ) as pool:
            outcomes = list(pool.map(_run_task, tasks))
    else:
        outcomes = [_run_task(task) for task in tasks]

    by_key = {(i, m): (tallies, info, error) for i, m, tallies, info, error in outcomes}
    cells: list[CellSummary] = []
    for i, N in enumerate(config.n_values):
        for test in config.tests:
            rates: list[ModelRate] = []
            failed_models = 0
            for m in range(config.model_count):
                tallies, info, error = by_key[(i, m)]
                if error is not None:
                    failed_models += 1
                    continue
                tally = tallies[test]
                reject_rate = tally.rejections / tally.trials if tally.trials else math.nan
                rate = reject_rate if config.rate_kind == "type_i" else 1.0 - reject_rate
                rates.append(
                    ModelRate(
                        model=m,
                        rate=rate,
                        trials=tally.trials,
                        rejections=tally.rejections,
                        unstable=tally.unstable,
                        failures=dict(sorted(tally.failures.items())),
                        mean_scaled=tally.scaled_sum / tally.trials if tally.trials else None,
                        info=info,
                    )
                )
            cells.append(_summarize(N, test, rates, failed_models, config.rate_kind))
    logger.info("experiment finished", cells=len(cells))
    return ErrorRateReport(
        config=config.to_dict(), seed=master, rate_kind=config.rate_kind, cells=cells
    )
