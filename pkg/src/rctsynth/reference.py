"""Bundled simulated trial dataset with known structure.

A desk-scale stand-in for a real four-arm HIV trial table: correlated
continuous baselines, a bimodal health score, imbalanced binaries, randomized
treatment, follow-up cell counts driven by known linear models, injected
missingness in the late follow-up measurement, and a binary outcome from a
known logistic model. Every quantity is reproducible from the seed, which is
what makes the table usable as a fidelity oracle in tests.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from .dataset import (
    CONTINUOUS,
    DISCRETE,
    STAGE_BASELINE,
    STAGE_OUTCOME,
    STAGE_POST_RANDOMIZATION,
    STAGE_TREATMENT,
    ColumnSchema,
    DataTable,
)
from .errors import DegenerateInputError

TREATMENT_ARMS = ("zdv", "zdv_ddi", "zdv_zal", "ddi")
YES_NO = ("no", "yes")

#: Arm shifts in the follow-up cell-count models and the outcome model.
_CD4_20_ARM_EFFECT = (0.0, 45.0, 35.0, 28.0)
_CD4_96_ARM_EFFECT = (0.0, 30.0, 22.0, 18.0)
_OUTCOME_ARM_EFFECT = (0.0, -0.5, -0.35, -0.3)

_MISSING_FRACTION = 0.37


def reference_schema() -> tuple[ColumnSchema, ...]:
    return (
        ColumnSchema("age", CONTINUOUS, lower_bound=12.0, stage=STAGE_BASELINE),
        ColumnSchema("weight", CONTINUOUS, lower_bound=0.0, stage=STAGE_BASELINE),
        ColumnSchema("sex", DISCRETE, categories=("female", "male"), stage=STAGE_BASELINE),
        ColumnSchema("race", DISCRETE, categories=("white", "nonwhite"), stage=STAGE_BASELINE),
        ColumnSchema("hemophilia", DISCRETE, categories=YES_NO, stage=STAGE_BASELINE),
        ColumnSchema("homosexual", DISCRETE, categories=YES_NO, stage=STAGE_BASELINE),
        ColumnSchema("drug_use", DISCRETE, categories=YES_NO, stage=STAGE_BASELINE),
        ColumnSchema("karnofsky", CONTINUOUS, lower_bound=0.0, stage=STAGE_BASELINE),
        ColumnSchema("prior_nonzdv_art", DISCRETE, categories=YES_NO, stage=STAGE_BASELINE),
        ColumnSchema("zdv_30_prior", DISCRETE, categories=YES_NO, stage=STAGE_BASELINE),
        ColumnSchema("art_days", CONTINUOUS, lower_bound=0.0, stage=STAGE_BASELINE),
        ColumnSchema(
            "art_history",
            DISCRETE,
            categories=("naive", "under_1yr", "over_1yr"),
            stage=STAGE_BASELINE,
        ),
        ColumnSchema("symptomatic", DISCRETE, categories=YES_NO, stage=STAGE_BASELINE),
        ColumnSchema(
            "cd4_baseline", CONTINUOUS, lower_bound=0.0, log_transform=True,
            stage=STAGE_BASELINE,
        ),
        ColumnSchema("treatment", DISCRETE, categories=TREATMENT_ARMS, stage=STAGE_TREATMENT),
        ColumnSchema(
            "cd4_20", CONTINUOUS, lower_bound=0.0, log_transform=True,
            stage=STAGE_POST_RANDOMIZATION, stage_order=0,
        ),
        ColumnSchema(
            "cd4_96", CONTINUOUS, lower_bound=0.0, log_transform=True,
            stage=STAGE_POST_RANDOMIZATION, stage_order=1,
        ),
        ColumnSchema("outcome", DISCRETE, categories=("censored", "event"), stage=STAGE_OUTCOME),
    )


def generate_reference_dataset(seed: int, n: int = 2139) -> DataTable:
    """Simulate the reference trial table with known dependencies."""
    if n < 50:
        raise DegenerateInputError("the reference dataset needs at least 50 rows")
    rng = np.random.default_rng(np.random.SeedSequence([823_117, seed]))

    # correlated standard-normal latents via structural equations
    e = rng.standard_normal((n, 7))
    z_age = e[:, 0]
    z_sex = e[:, 1]
    z_weight = 0.30 * z_age + 0.45 * z_sex + math.sqrt(1.0 - 0.09 - 0.2025) * e[:, 2]
    z_karn = e[:, 3]
    z_cd4 = 0.30 * z_karn + math.sqrt(1.0 - 0.09) * e[:, 4]
    z_art = e[:, 5]
    z_arthist = 0.75 * z_art + math.sqrt(1.0 - 0.5625) * e[:, 6]

    age = 12.0 + stats.gamma.ppf(stats.norm.cdf(z_age), a=7.0, scale=3.5)
    weight = stats.gamma.ppf(stats.norm.cdf(z_weight), a=28.0, scale=2.6)
    sex = (stats.norm.cdf(z_sex) >= 0.17).astype(np.int64)  # 17% female

    # bimodal health score: low-functioning and high-functioning clusters
    low_cluster = rng.uniform(size=n) < 0.35
    karnofsky = np.where(low_cluster, 77.0 + 4.0 * z_karn, 94.0 + 2.2 * z_karn)
    karnofsky = np.minimum(karnofsky, 100.0)

    cd4_baseline = np.exp(math.log(350.0) + 0.24 * z_cd4)
    art_days = stats.gamma.ppf(stats.norm.cdf(z_art), a=1.3, scale=320.0)
    hist_u = stats.norm.cdf(z_arthist)
    art_history = np.where(hist_u < 0.42, 0, np.where(hist_u < 0.73, 1, 2)).astype(np.int64)

    race = (rng.uniform(size=n) >= 0.71).astype(np.int64)  # 71% white
    hemophilia = (rng.uniform(size=n) < 0.08).astype(np.int64)
    homosexual = (rng.uniform(size=n) < 0.66).astype(np.int64)
    drug_use = (rng.uniform(size=n) < 0.13).astype(np.int64)
    prior_nonzdv_art = (rng.uniform(size=n) < 0.18).astype(np.int64)
    zdv_30_prior = (rng.uniform(size=n) < 0.55).astype(np.int64)
    symptomatic = (rng.uniform(size=n) < 0.17).astype(np.int64)

    treatment = rng.choice(4, size=n, p=[0.25, 0.25, 0.25, 0.25]).astype(np.int64)
    arm_20 = np.asarray(_CD4_20_ARM_EFFECT)[treatment]
    arm_96 = np.asarray(_CD4_96_ARM_EFFECT)[treatment]
    arm_out = np.asarray(_OUTCOME_ARM_EFFECT)[treatment]

    cd4_20 = (
        60.0
        + 0.82 * cd4_baseline
        + 1.1 * (karnofsky - 85.0)
        + arm_20
        + rng.normal(0.0, 55.0, size=n)
    )
    cd4_96 = (
        30.0
        + 0.25 * cd4_20
        + 0.55 * cd4_baseline
        + arm_96
        + rng.normal(0.0, 65.0, size=n)
    )

    logit = (
        3.0
        - 0.0045 * cd4_20
        - 0.0040 * cd4_96
        + 0.9 * symptomatic
        + arm_out
    )
    outcome = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-logit))).astype(np.int64)

    # inject missingness into the late follow-up column at a fixed count
    n_missing = round(_MISSING_FRACTION * n)
    missing_idx = rng.choice(n, size=n_missing, replace=False)
    cd4_96_mask = np.zeros(n, dtype=bool)
    cd4_96_mask[missing_idx] = True
    cd4_96_observed = cd4_96.copy()
    cd4_96_observed[cd4_96_mask] = np.nan

    schema = reference_schema()
    columns = {
        "age": age,
        "weight": weight,
        "sex": sex,
        "race": race,
        "hemophilia": hemophilia,
        "homosexual": homosexual,
        "drug_use": drug_use,
        "karnofsky": karnofsky,
        "prior_nonzdv_art": prior_nonzdv_art,
        "zdv_30_prior": zdv_30_prior,
        "art_days": art_days,
        "art_history": art_history,
        "symptomatic": symptomatic,
        "cd4_baseline": cd4_baseline,
        "treatment": treatment,
        "cd4_20": cd4_20,
        "cd4_96": cd4_96_observed,
        "outcome": outcome,
    }
    return DataTable(schema, columns, {"cd4_96": cd4_96_mask})


def reference_config(runs: int = 500, base_seed: int = 20240501):
    """Pipeline configuration matching the reference dataset's schema.

    Five stages: vine baseline, equal-probability treatment draw, two linear
    cell-count models with bounded rejection noise, and the logistic outcome.
    """
    from .metrics import MetricConfig
    from .pipeline import PipelineConfig, StageSpec
    from .regression import ADMISSIBLE_REJECTION, RandomnessStrategy

    schema = reference_schema()
    baseline = tuple(c.name for c in schema if c.stage == STAGE_BASELINE)
    rejection = RandomnessStrategy(variant=ADMISSIBLE_REJECTION, bound=0.0)
    stages = (
        StageSpec(kind="baseline_vine", targets=baseline),
        StageSpec(kind="treatment_multinomial", targets=("treatment",),
                  probabilities=(0.25, 0.25, 0.25, 0.25)),
        StageSpec(
            kind="regression_continuous",
            targets=("cd4_20",),
            predictors=(*baseline, "treatment"),
            strategy=rejection,
        ),
        StageSpec(
            kind="regression_continuous",
            targets=("cd4_96",),
            predictors=(*baseline, "treatment", "cd4_20"),
            strategy=rejection,
        ),
        StageSpec(
            kind="regression_binary",
            targets=("outcome",),
            predictors=(*baseline, "treatment", "cd4_20", "cd4_96"),
        ),
    )
    return PipelineConfig(
        schema=schema,
        stages=stages,
        metrics=MetricConfig(label="outcome"),
        runs=runs,
        base_seed=base_seed,
    )
