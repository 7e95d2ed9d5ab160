"""Declarative sequential generation pipeline and the simulation harness.

A pipeline is a list of stages executed in temporal order: one vine-copula
baseline stage, one randomized treatment stage, then regression stages whose
predictors may only reference columns produced earlier. ``simulate`` repeats
the whole fit-generate-score cycle with per-run derived seeds and aggregates
the per-run metric reports into box-plot statistics.
"""

from __future__ import annotations

import concurrent.futures
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .copulas import DEFAULT_FAMILIES
from .dataset import (
    CONTINUOUS,
    DISCRETE,
    STAGE_BASELINE,
    STAGE_OUTCOME,
    STAGE_TREATMENT,
    ColumnSchema,
    DataTable,
    apply_transform,
    complete_cases,
    validate_lower_bounds,
)
from .errors import ConfigError, SynthesisError
from .metrics import MetricConfig, MetricsReport, aggregate_runs, score_tables
from .regression import (
    RandomnessStrategy,
    fit_linear,
    fit_logistic,
    generate_binary,
    generate_continuous,
    sample_treatment,
)
from .vine import fit_baseline_vine, generate_baseline

BASELINE_VINE = "baseline_vine"
TREATMENT_MULTINOMIAL = "treatment_multinomial"
REGRESSION_CONTINUOUS = "regression_continuous"
REGRESSION_BINARY = "regression_binary"

_STAGE_KINDS = (
    BASELINE_VINE,
    TREATMENT_MULTINOMIAL,
    REGRESSION_CONTINUOUS,
    REGRESSION_BINARY,
)


@dataclass(frozen=True)
class StageSpec:
    """One generation step: what it produces and what it may look at."""

    kind: str
    targets: tuple[str, ...]
    predictors: tuple[str, ...] = ()
    strategy: RandomnessStrategy | None = None
    probabilities: tuple[float, ...] | None = None

    @property
    def target(self) -> str:
        if len(self.targets) != 1:
            raise ValueError("stage has multiple targets")
        return self.targets[0]


@dataclass(frozen=True)
class PipelineConfig:
    schema: tuple[ColumnSchema, ...]
    stages: tuple[StageSpec, ...]
    metrics: MetricConfig
    n_synth: int | None = None
    preprocess_log: bool = False
    runs: int = 500
    base_seed: int = 0
    families: tuple[str, ...] = DEFAULT_FAMILIES


def validate_config(config: PipelineConfig) -> None:
    """Check stage ordering, coverage and temporal consistency eagerly."""
    names = [c.name for c in config.schema]
    by_name = {c.name: c for c in config.schema}
    treatment_cols = [c.name for c in config.schema if c.stage == STAGE_TREATMENT]
    outcome_cols = [c.name for c in config.schema if c.stage == STAGE_OUTCOME]
    if len(treatment_cols) != 1:
        raise ConfigError(f"schema must have exactly one treatment column, found {treatment_cols}")
    if len(outcome_cols) != 1:
        raise ConfigError(f"schema must have exactly one outcome column, found {outcome_cols}")

    if not config.stages:
        raise ConfigError("config declares no stages")
    for idx, stage in enumerate(config.stages):
        if stage.kind not in _STAGE_KINDS:
            raise ConfigError(f"stage {idx}: unknown kind {stage.kind!r}")
        for name in (*stage.targets, *stage.predictors):
            if name not in by_name:
                raise ConfigError(f"stage {idx}: unknown column {name!r}")
    if config.stages[0].kind != BASELINE_VINE:
        raise ConfigError("the first stage must be the baseline vine")
    if len(config.stages) < 2 or config.stages[1].kind != TREATMENT_MULTINOMIAL:
        raise ConfigError("the second stage must be the treatment draw")
    if sum(s.kind == BASELINE_VINE for s in config.stages) != 1:
        raise ConfigError("exactly one baseline stage is allowed")
    if sum(s.kind == TREATMENT_MULTINOMIAL for s in config.stages) != 1:
        raise ConfigError("exactly one treatment stage is allowed")

    covered: list[str] = []
    produced: set[str] = set()
    for idx, stage in enumerate(config.stages):
        for predictor in stage.predictors:
            if predictor not in produced:
                raise ConfigError(
                    f"stage {idx} ({stage.kind}) uses column {predictor!r} before any "
                    "earlier stage produces it; stages must respect temporal order"
                )
        for target in stage.targets:
            if target in produced:
                raise ConfigError(f"stage {idx}: column {target!r} produced twice")
        if stage.kind == BASELINE_VINE:
            bad = [t for t in stage.targets if by_name[t].stage != STAGE_BASELINE]
            if bad:
                raise ConfigError(f"stage {idx}: non-baseline columns in baseline stage: {bad}")
            if len(stage.targets) < 2:
                raise ConfigError("the baseline stage needs at least 2 columns")
        elif stage.kind == TREATMENT_MULTINOMIAL:
            target = stage.target
            col = by_name[target]
            if col.stage != STAGE_TREATMENT:
                raise ConfigError(f"stage {idx}: {target!r} is not the treatment column")
            if stage.probabilities is not None:
                p = stage.probabilities
                if len(p) != len(col.categories):
                    raise ConfigError(
                        f"stage {idx}: {len(p)} probabilities for "
                        f"{len(col.categories)} treatment arms"
                    )
                if any(v < 0 for v in p) or abs(sum(p) - 1.0) > 1e-9:
                    raise ConfigError(f"stage {idx}: probabilities must be >= 0 and sum to 1")
        elif stage.kind == REGRESSION_CONTINUOUS:
            if by_name[stage.target].kind != CONTINUOUS:
                raise ConfigError(f"stage {idx}: target {stage.target!r} is not continuous")
            if stage.strategy is None:
                raise ConfigError(f"stage {idx}: continuous regression needs a strategy")
        elif stage.kind == REGRESSION_BINARY:
            if not by_name[stage.target].is_binary:
                raise ConfigError(f"stage {idx}: target {stage.target!r} is not binary")
        covered.extend(stage.targets)
        produced.update(stage.targets)

    missing = [n for n in names if n not in produced]
    if missing:
        raise ConfigError(f"no stage produces columns {missing}")
    if len(covered) != len(names):
        raise ConfigError("stage targets must cover every schema column exactly once")
    if config.n_synth is not None and config.n_synth < 1:
        raise ConfigError("n_synth must be positive")
    if config.runs < 1:
        raise ConfigError("runs must be at least 1")
    if config.metrics.label not in by_name or not by_name[config.metrics.label].is_binary:
        raise ConfigError(f"metrics label {config.metrics.label!r} must be a binary column")


# ---------------------------------------------------------------------------
# config document parsing
# ---------------------------------------------------------------------------

def parse_config(path) -> PipelineConfig:
    """Parse and validate a JSON pipeline configuration file."""
    with open(path, encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    config = config_from_dict(doc)
    validate_config(config)
    return config


def config_from_dict(doc: dict) -> PipelineConfig:
    try:
        schema = tuple(
            ColumnSchema(
                name=c["name"],
                kind=c["kind"],
                categories=tuple(c.get("categories", ())),
                lower_bound=c.get("lower_bound"),
                log_transform=bool(c.get("log_transform", False)),
                stage=c.get("stage", STAGE_BASELINE),
                stage_order=int(c.get("stage_order", 0)),
            )
            for c in doc["schema"]
        )
        stages = []
        for s in doc["stages"]:
            targets = s.get("targets")
            if targets is None:
                targets = [s["target"]]
            strategy = None
            if s.get("strategy") is not None:
                strategy = RandomnessStrategy.from_dict(s["strategy"])
            stages.append(
                StageSpec(
                    kind=s["kind"],
                    targets=tuple(targets),
                    predictors=tuple(s.get("predictors", ())),
                    strategy=strategy,
                    probabilities=(
                        tuple(s["probabilities"]) if s.get("probabilities") else None
                    ),
                )
            )
        metrics_doc = doc.get("metrics", {})
        label = metrics_doc.get("label")
        if label is None:
            outcome = [c.name for c in schema if c.stage == STAGE_OUTCOME]
            label = outcome[0] if outcome else ""
        metrics = MetricConfig(
            label=label,
            test_fraction=float(metrics_doc.get("test_fraction", 0.3)),
            knn_k=int(metrics_doc.get("knn_k", 5)),
            classifiers=tuple(metrics_doc.get("classifiers", ("knn", "logistic"))),
            run_efficacy=bool(metrics_doc.get("run_efficacy", True)),
        )
        return PipelineConfig(
            schema=schema,
            stages=tuple(stages),
            metrics=metrics,
            n_synth=doc.get("n_synth"),
            preprocess_log=bool(doc.get("preprocess_log", False)),
            runs=int(doc.get("runs", 500)),
            base_seed=int(doc.get("base_seed", 0)),
            families=tuple(doc.get("families", DEFAULT_FAMILIES)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config document: {exc}") from exc


def config_to_dict(config: PipelineConfig) -> dict:
    return {
        "schema": [
            {
                "name": c.name,
                "kind": c.kind,
                "categories": list(c.categories),
                "lower_bound": c.lower_bound,
                "log_transform": c.log_transform,
                "stage": c.stage,
                "stage_order": c.stage_order,
            }
            for c in config.schema
        ],
        "stages": [
            {
                "kind": s.kind,
                "targets": list(s.targets),
                "predictors": list(s.predictors),
                "strategy": s.strategy.to_dict() if s.strategy else None,
                "probabilities": list(s.probabilities) if s.probabilities else None,
            }
            for s in config.stages
        ],
        "metrics": {
            "label": config.metrics.label,
            "test_fraction": config.metrics.test_fraction,
            "knn_k": config.metrics.knn_k,
            "classifiers": list(config.metrics.classifiers),
            "run_efficacy": config.metrics.run_efficacy,
        },
        "n_synth": config.n_synth,
        "preprocess_log": config.preprocess_log,
        "runs": config.runs,
        "base_seed": config.base_seed,
        "families": list(config.families),
    }


def override_strategy(config: PipelineConfig, variant: str) -> PipelineConfig:
    """Swap the randomness variant of every continuous regression stage."""
    stages = []
    for stage in config.stages:
        if stage.kind == REGRESSION_CONTINUOUS:
            base = stage.strategy or RandomnessStrategy(variant="residual_draw")
            bound = base.bound
            if variant == "admissible_rejection" and bound is None:
                col = next(c for c in config.schema if c.name == stage.target)
                bound = col.lower_bound if col.lower_bound is not None else 0.0
            stages.append(
                replace(stage, strategy=replace(base, variant=variant, bound=bound))
            )
        else:
            stages.append(stage)
    return replace(config, stages=tuple(stages))


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def _check_real_conforms(config: PipelineConfig, real: DataTable) -> None:
    if tuple(c.name for c in real.schema) != tuple(c.name for c in config.schema):
        raise ConfigError("real table columns do not match the config schema")
    for rc, cc in zip(real.schema, config.schema):
        if rc.kind != cc.kind or rc.categories != cc.categories:
            raise ConfigError(
                f"column {rc.name!r} in the real table does not match the config schema"
            )


def _effective_bound(strategy: RandomnessStrategy, column: ColumnSchema,
                     log_space: bool) -> RandomnessStrategy:
    """Move the admissibility floor into log space when fitting logged columns.

    A nonpositive floor becomes -inf there (the exponential back-transform
    already guarantees positivity)."""
    if strategy.variant != "admissible_rejection" or not log_space or not column.log_transform:
        return strategy
    bound = strategy.bound
    new_bound = np.log(bound) if bound is not None and bound > 0 else -np.inf
    return replace(strategy, bound=new_bound)


def run_pipeline(config: PipelineConfig, real: DataTable, seed) -> DataTable:
    """Fit all stage models on the real table and generate one synthetic table.

    Every stage model is fitted on the complete cases of the columns it
    touches; generation feeds on previously generated synthetic columns only.
    """
    validate_config(config)
    _check_real_conforms(config, real)
    n_synth = config.n_synth if config.n_synth is not None else real.n_rows

    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    stage_seeds = root.spawn(len(config.stages) + 1)
    jitter_seed = stage_seeds[-1]

    fit_table = apply_transform(real, "forward") if config.preprocess_log else real

    synth_columns: dict[str, np.ndarray] = {}
    synth_schema: list[ColumnSchema] = []
    by_name = {c.name: c for c in config.schema}

    def synth_so_far() -> DataTable:
        return DataTable(tuple(synth_schema), dict(synth_columns))

    for idx, stage in enumerate(config.stages):
        stage_seed = stage_seeds[idx]
        try:
            if stage.kind == BASELINE_VINE:
                block = complete_cases(fit_table, stage.targets)
                model = fit_baseline_vine(
                    block, columns=stage.targets, families=config.families,
                    seed=jitter_seed,
                )
                baseline = generate_baseline(model, n_synth, stage_seed)
                for name in stage.targets:
                    synth_columns[name] = baseline.values(name)
                    synth_schema.append(by_name[name])
            elif stage.kind == TREATMENT_MULTINOMIAL:
                col = by_name[stage.target]
                p = stage.probabilities
                if p is None:
                    p = tuple(1.0 / len(col.categories) for _ in col.categories)
                synth_columns[stage.target] = sample_treatment(
                    n_synth, p, col.categories, stage_seed
                )
                synth_schema.append(col)
            elif stage.kind == REGRESSION_CONTINUOUS:
                model = fit_linear(fit_table, stage.target, stage.predictors)
                strategy = _effective_bound(
                    stage.strategy, by_name[stage.target], config.preprocess_log
                )
                synth_columns[stage.target] = generate_continuous(
                    model, synth_so_far(), strategy, stage_seed
                )
                synth_schema.append(by_name[stage.target])
            else:  # REGRESSION_BINARY
                model = fit_logistic(fit_table, stage.target, stage.predictors)
                synth_columns[stage.target] = generate_binary(
                    model, synth_so_far(), stage_seed
                )
                synth_schema.append(by_name[stage.target])
        except SynthesisError as exc:
            raise SynthesisError(
                f"stage {idx} ({stage.kind}, targets={list(stage.targets)}) failed: {exc}"
            ) from exc

    synth = DataTable(
        config.schema, {name: synth_columns[name] for name in by_name}
    )
    if config.preprocess_log:
        synth = apply_transform(synth, "inverse")
    validate_lower_bounds(synth)
    return synth


def derive_run_seed(base_seed: int, run_id: int) -> np.random.SeedSequence:
    """Counter-based per-run seed: reproducible individually, independent jointly."""
    return np.random.SeedSequence(entropy=(base_seed, run_id))


@dataclass
class SimulationResult:
    summary: dict
    reports: list[MetricsReport]
    failures: list[tuple[int, str]] = field(default_factory=list)
    example_synth: DataTable | None = None
    total_seconds: float = 0.0


def _single_run(config: PipelineConfig, real: DataTable, run_id: int):
    run_root = derive_run_seed(config.base_seed, run_id)
    pipeline_seed, metrics_seed = run_root.spawn(2)
    started = time.perf_counter()
    synth = run_pipeline(config, real, pipeline_seed)
    report = score_tables(
        real,
        synth,
        config.metrics,
        seed=int(metrics_seed.generate_state(1)[0]),
        run_id=run_id,
    )
    report.timing_seconds = time.perf_counter() - started
    return report, synth


def simulate(
    config: PipelineConfig,
    real: DataTable,
    workers: int = 1,
    on_run=None,
) -> SimulationResult:
    """Repeat fit-generate-score ``config.runs`` times and aggregate.

    Individual run failures are recorded and skipped; the whole simulation
    aborts once more than 10% of the planned runs have failed.
    """
    validate_config(config)
    started = time.perf_counter()
    reports: list[MetricsReport] = []
    failures: list[tuple[int, str]] = []
    example = None
    max_failures = 0.1 * config.runs

    def handle(run_id, outcome, error=None):
        nonlocal example
        if error is not None:
            failures.append((run_id, str(error)))
            if len(failures) > max_failures:
                raise SynthesisError(
                    f"{len(failures)} of {config.runs} runs failed (over 10%); "
                    f"first failure: run {failures[0][0]}: {failures[0][1]}"
                ) from error
            return
        report, synth = outcome
        reports.append(report)
        if example is None:
            example = synth
        if on_run is not None:
            on_run(report)

    if workers <= 1:
        for run_id in range(config.runs):
            try:
                outcome = _single_run(config, real, run_id)
            except SynthesisError as exc:
                handle(run_id, None, exc)
            else:
                handle(run_id, outcome)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(_single_run, config, real, run_id): run_id
                for run_id in range(config.runs)
            }
            outcomes: dict[int, tuple] = {}
            errors: dict[int, Exception] = {}
            for future in concurrent.futures.as_completed(futures):
                run_id = futures[future]
                try:
                    outcomes[run_id] = future.result()
                except SynthesisError as exc:
                    errors[run_id] = exc
            for run_id in range(config.runs):
                if run_id in errors:
                    handle(run_id, None, errors[run_id])
                else:
                    handle(run_id, outcomes[run_id])

    if not reports:
        raise SynthesisError("all simulation runs failed")
    reports.sort(key=lambda r: r.run_id)
    summary = aggregate_runs(reports)
    timings = [r.timing_seconds for r in reports]
    summary[("timing_seconds", "run")] = {
        "mean": float(np.mean(timings)),
        "sd": float(np.std(timings)),
        "min": float(np.min(timings)),
        "q25": float(np.quantile(timings, 0.25)),
        "median": float(np.quantile(timings, 0.5)),
        "q75": float(np.quantile(timings, 0.75)),
        "max": float(np.max(timings)),
        "count": len(timings),
    }
    return SimulationResult(
        summary=summary,
        reports=reports,
        failures=failures,
        example_synth=example,
        total_seconds=time.perf_counter() - started,
    )
