"""Per-variable generators used after the baseline block.

Covers the randomized treatment draw, ordinary/weighted least squares and
IRLS logistic execution models, and the three ways randomness enters a
regression-generated value: gaussian noise scaled to the residual spread,
a draw from the stored residual pool, or a pool draw redrawn until the value
clears an admissibility floor.
"""

from __future__ import annotations

import hashlib
import warnings as _warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .dataset import CONTINUOUS, DISCRETE, DataTable, complete_cases, require_no_missing
from .errors import AdmissibilityError, DegenerateInputError

NORMAL_NOISE = "normal_noise"
RESIDUAL_DRAW = "residual_draw"
ADMISSIBLE_REJECTION = "admissible_rejection"

_VARIANTS = (NORMAL_NOISE, RESIDUAL_DRAW, ADMISSIBLE_REJECTION)

#: Short aliases accepted on the command line.
STRATEGY_ALIASES = {"a": NORMAL_NOISE, "b": RESIDUAL_DRAW, "c": ADMISSIBLE_REJECTION}


@dataclass(frozen=True)
class RandomnessStrategy:
    """How noise enters a continuous regression generator."""

    variant: str = ADMISSIBLE_REJECTION
    bound: float | None = None
    max_rejections: int = 10000

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown randomness variant {self.variant!r}")
        if self.variant == ADMISSIBLE_REJECTION and self.bound is None:
            raise ValueError("admissible_rejection requires a bound")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "bound": self.bound,
            "max_rejections": self.max_rejections,
        }

    @staticmethod
    def from_dict(doc: dict) -> "RandomnessStrategy":
        return RandomnessStrategy(
            variant=doc.get("variant", ADMISSIBLE_REJECTION),
            bound=doc.get("bound"),
            max_rejections=int(doc.get("max_rejections", 10000)),
        )


# ---------------------------------------------------------------------------
# design matrices
# ---------------------------------------------------------------------------

def design_matrix(table: DataTable, predictors) -> tuple[np.ndarray, list[str]]:
    """Intercept plus predictors; discrete columns reference-coded against
    their first category."""
    require_no_missing(table, predictors)
    columns = [np.ones(table.n_rows)]
    names = ["(intercept)"]
    for name in predictors:
        col = table.column_schema(name)
        if col.kind == CONTINUOUS:
            columns.append(table.values(name))
            names.append(name)
        else:
            codes = table.values(name)
            for k, category in enumerate(col.categories[1:], start=1):
                columns.append((codes == k).astype(np.float64))
                names.append(f"{name}={category}")
    return np.column_stack(columns), names


@dataclass(frozen=True)
class LinearModel:
    """Least-squares execution model with its training residual pool."""

    response: str
    predictors: tuple[str, ...]
    coefficient_names: tuple[str, ...]
    coefficients: np.ndarray
    residuals: np.ndarray
    sigma_resid: float
    warnings: tuple[str, ...] = ()

    def predict(self, table: DataTable) -> np.ndarray:
        x, names = design_matrix(table, self.predictors)
        keep = [names.index(c) for c in self.coefficient_names]
        return x[:, keep] @ self.coefficients

    def to_json_dict(self) -> dict:
        digest = hashlib.sha256(np.ascontiguousarray(self.residuals).tobytes())
        return {
            "kind": "linear",
            "response": self.response,
            "predictors": list(self.predictors),
            "coefficient_names": list(self.coefficient_names),
            "coefficients": [float(c) for c in self.coefficients],
            "sigma_resid": self.sigma_resid,
            "residual_pool": {"n": int(self.residuals.size), "sha256": digest.hexdigest()},
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class LogisticModel:
    """Maximum-likelihood logistic execution model."""

    response: str
    predictors: tuple[str, ...]
    coefficient_names: tuple[str, ...]
    coefficients: np.ndarray
    converged: bool
    n_iterations: int
    warnings: tuple[str, ...] = ()

    def predict_probability(self, table: DataTable) -> np.ndarray:
        x, names = design_matrix(table, self.predictors)
        keep = [names.index(c) for c in self.coefficient_names]
        eta = x[:, keep] @ self.coefficients
        return np.clip(_sigmoid(eta), 1e-12, 1.0 - 1e-12)

    def to_json_dict(self) -> dict:
        return {
            "kind": "logistic",
            "response": self.response,
            "predictors": list(self.predictors),
            "coefficient_names": list(self.coefficient_names),
            "coefficients": [float(c) for c in self.coefficients],
            "converged": self.converged,
            "warnings": list(self.warnings),
        }


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ez = np.exp(eta[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _solve_least_squares(x: np.ndarray, y: np.ndarray, names: list[str]):
    """Pivoted-QR least squares; aliased columns are dropped, not regularized."""
    q, r, piv = linalg.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(x.shape) * np.finfo(np.float64).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    kept = np.sort(piv[:rank])
    dropped = [names[i] for i in np.sort(piv[rank:])]
    xk = x[:, kept]
    coef, *_ = np.linalg.lstsq(xk, y, rcond=None)
    return coef, [names[i] for i in kept], dropped


def fit_linear(table: DataTable, response: str, predictors) -> LinearModel:
    """Ordinary least squares on complete cases, keeping the residual pool."""
    predictors = tuple(predictors)
    if table.column_schema(response).kind != CONTINUOUS:
        raise ValueError(f"response {response!r} must be continuous")
    rows = complete_cases(table, (response, *predictors))
    x, names = design_matrix(rows, predictors)
    if rows.n_rows <= x.shape[1]:
        raise DegenerateInputError(
            f"{rows.n_rows} complete rows cannot support {x.shape[1]} coefficients"
        )
    y = rows.values(response)
    coef, kept_names, dropped = _solve_least_squares(x, y, names)
    warn_records = tuple(f"dropped aliased column {name!r}" for name in dropped)
    for record in warn_records:
        _warnings.warn(record, stacklevel=2)
    keep_idx = [names.index(c) for c in kept_names]
    residuals = y - x[:, keep_idx] @ coef
    residuals.flags.writeable = False
    return LinearModel(
        response=response,
        predictors=predictors,
        coefficient_names=tuple(kept_names),
        coefficients=coef,
        residuals=residuals,
        sigma_resid=float(np.std(residuals)),
        warnings=warn_records,
    )


def fit_weighted_linear(table: DataTable, response: str, predictors, weights) -> LinearModel:
    """Weighted least squares; weights align with the complete-case rows.

    With all weights equal this reproduces :func:`fit_linear`. Residuals are
    stored on the data scale (unweighted).
    """
    predictors = tuple(predictors)
    rows = complete_cases(table, (response, *predictors))
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (rows.n_rows,):
        raise ValueError(
            f"expected {rows.n_rows} weights for the complete-case rows, got {w.shape}"
        )
    if np.any(w <= 0.0):
        raise ValueError("weights must be strictly positive")
    x, names = design_matrix(rows, predictors)
    if rows.n_rows <= x.shape[1]:
        raise DegenerateInputError(
            f"{rows.n_rows} complete rows cannot support {x.shape[1]} coefficients"
        )
    y = rows.values(response)
    sq = np.sqrt(w)
    coef, kept_names, dropped = _solve_least_squares(x * sq[:, None], y * sq, names)
    warn_records = tuple(f"dropped aliased column {name!r}" for name in dropped)
    keep_idx = [names.index(c) for c in kept_names]
    residuals = y - x[:, keep_idx] @ coef
    residuals.flags.writeable = False
    return LinearModel(
        response=response,
        predictors=predictors,
        coefficient_names=tuple(kept_names),
        coefficients=coef,
        residuals=residuals,
        sigma_resid=float(np.std(residuals)),
        warnings=warn_records,
    )


def _fit_logistic_arrays(x, y, names, response, predictors,
                         max_iterations=50, tol=1e-8):
    coef = np.zeros(x.shape[1])
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        p = np.clip(_sigmoid(x @ coef), 1e-10, 1.0 - 1e-10)
        score = x.T @ (y - p)
        if np.max(np.abs(score)) < tol:
            converged = True
            break
        w = p * (1.0 - p)
        hessian = x.T @ (w[:, None] * x)
        try:
            step = np.linalg.solve(hessian, score)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(hessian, score, rcond=None)
        coef = coef + step
    warn_records: tuple[str, ...] = ()
    if not converged:
        warn_records = (
            f"IRLS for {response!r} hit the iteration cap; "
            "the classes may be perfectly separated",
        )
        _warnings.warn(warn_records[0], stacklevel=3)
    return LogisticModel(
        response=response,
        predictors=tuple(predictors),
        coefficient_names=tuple(names),
        coefficients=coef,
        converged=converged,
        n_iterations=iterations,
        warnings=warn_records,
    )


def fit_logistic(table: DataTable, response: str, predictors) -> LogisticModel:
    """Logistic regression by iteratively reweighted least squares.

    Fits on complete cases; the binary response is coded 0/1 by category
    order. Perfect separation leaves ``converged`` False at the iteration cap.
    """
    predictors = tuple(predictors)
    col = table.column_schema(response)
    if not col.is_binary:
        raise ValueError(f"response {response!r} must be a binary discrete column")
    rows = complete_cases(table, (response, *predictors))
    y = rows.values(response).astype(np.float64)
    if len(np.unique(y)) < 2:
        raise DegenerateInputError(
            f"response {response!r} has a single class in the complete-case rows"
        )
    x, names = design_matrix(rows, predictors)
    return _fit_logistic_arrays(x, y, names, response, predictors)


def fit_missingness_model(table: DataTable, target: str, predictors) -> LogisticModel:
    """Model the probability that ``target`` is observed (its mask inverted).

    Fits on rows whose predictors are complete; the response is 1 where the
    target cell is observed and 0 where it is missing.
    """
    predictors = tuple(predictors)
    miss = table.missing(target)
    if not miss.any() or miss.all():
        raise DegenerateInputError(
            f"target {target!r} needs both observed and missing cells"
        )
    rows = complete_cases(table, predictors)
    observed = (~rows.missing(target)).astype(np.float64)
    if len(np.unique(observed)) < 2:
        raise DegenerateInputError(
            f"target {target!r} has no observed/missing contrast after filtering"
        )
    x, names = design_matrix(rows, predictors)
    return _fit_logistic_arrays(x, observed, names, target, predictors)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def generate_continuous(
    model: LinearModel,
    rows: DataTable,
    strategy: RandomnessStrategy,
    seed: int,
) -> np.ndarray:
    """Predict each row and inject noise according to the strategy.

    ``admissible_rejection`` redraws pool residuals until prediction plus
    residual clears the bound, erroring out for a row only after
    ``max_rejections`` rounds (which happens when no pooled residual is
    admissible for that prediction).
    """
    preds = model.predict(rows)
    rng = np.random.default_rng(seed)
    n = preds.shape[0]
    if strategy.variant == NORMAL_NOISE:
        return preds + rng.normal(0.0, model.sigma_resid, size=n)
    pool = model.residuals
    if strategy.variant == RESIDUAL_DRAW:
        return preds + pool[rng.integers(0, pool.size, size=n)]
    out = np.empty(n, dtype=np.float64)
    remaining = np.arange(n)
    rounds = 0
    while remaining.size:
        if rounds >= strategy.max_rejections:
            raise AdmissibilityError(
                f"no admissible residual found after {rounds} draws",
                row=int(remaining[0]),
            )
        values = preds[remaining] + pool[rng.integers(0, pool.size, size=remaining.size)]
        ok = values >= strategy.bound
        out[remaining[ok]] = values[ok]
        remaining = remaining[~ok]
        rounds += 1
    return out


def generate_binary(model: LogisticModel, rows: DataTable, seed: int) -> np.ndarray:
    """Per-row Bernoulli draw at the model's predicted probability (0/1 codes)."""
    p = model.predict_probability(rows)
    rng = np.random.default_rng(seed)
    return (rng.uniform(size=p.shape[0]) < p).astype(np.int64)


def sample_treatment(n: int, probabilities, labels, seed: int) -> np.ndarray:
    """Independent categorical draws; returns codes aligned with ``labels``."""
    p = np.asarray(probabilities, dtype=np.float64)
    if len(labels) != p.shape[0]:
        raise ValueError("probabilities and labels must have the same length")
    if np.any(p < 0.0) or abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueError("probabilities must be nonnegative and sum to 1")
    rng = np.random.default_rng(seed)
    return rng.choice(len(labels), size=n, p=p).astype(np.int64)
