"""Empirical univariate distributions and data-space <-> uniform-space maps.

Continuous columns use a rank/(n+1) empirical CDF (so mapped values stay
strictly inside (0, 1)) and a left-continuous step inverse (smallest order
statistic whose ECDF reaches the target), which keeps every generated value
inside the observed support. Discrete columns are continuized: each category
owns the uniform interval between its neighbouring cumulative proportions,
cells are jittered uniformly inside their interval, and the inverse snaps a
uniform back to the owning category.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import CONTINUOUS, DISCRETE, DataTable, require_no_missing
from .errors import DegenerateInputError

KIND_CONTINUOUS = "continuous"
KIND_DISCRETE_CONTINUIZED = "discrete-as-continuized"


@dataclass(frozen=True)
class EmpiricalMarginal:
    """Fitted per-column empirical distribution."""

    column: str
    kind: str
    n: int
    sorted_values: np.ndarray | None = None
    categories: tuple[str, ...] = ()
    cumulative: np.ndarray | None = None  # len(categories) + 1 bounds, 0 .. 1

    def cdf(self, x) -> np.ndarray:
        """Empirical CDF under the rank/(n+1) convention, never 0 or 1."""
        if self.kind != KIND_CONTINUOUS:
            raise ValueError("cdf is defined for continuous marginals")
        x = np.asarray(x, dtype=np.float64)
        ranks = np.searchsorted(self.sorted_values, x, side="right")
        ranks = np.maximum(ranks, 1)
        return ranks / (self.n + 1)

    def inverse(self, u):
        """Left-continuous empirical quantile (continuous) or owning category
        code (discrete)."""
        u_arr = np.asarray(u, dtype=np.float64)
        if np.any(u_arr <= 0.0) or np.any(u_arr >= 1.0):
            raise ValueError("u must lie strictly inside (0, 1)")
        if self.kind == KIND_CONTINUOUS:
            idx = np.ceil(u_arr * self.n).astype(np.int64) - 1
            idx = np.clip(idx, 0, self.n - 1)
            out = self.sorted_values[idx]
        else:
            out = np.searchsorted(self.cumulative[1:-1], u_arr, side="right")
        return out[()]

    def continuize(self, codes, rng: np.random.Generator) -> np.ndarray:
        """Jitter category codes uniformly inside their cumulative interval."""
        if self.kind != KIND_DISCRETE_CONTINUIZED:
            raise ValueError("continuize is defined for discrete marginals")
        codes = np.asarray(codes, dtype=np.int64)
        lo = self.cumulative[codes]
        hi = self.cumulative[codes + 1]
        out = lo + (hi - lo) * rng.uniform(size=codes.shape)
        return np.clip(out, 1e-12, 1.0 - 1e-12)

    def to_dict(self) -> dict:
        if self.kind == KIND_CONTINUOUS:
            return {
                "column": self.column,
                "kind": self.kind,
                "values": [float(v) for v in self.sorted_values],
            }
        return {
            "column": self.column,
            "kind": self.kind,
            "n": self.n,
            "categories": list(self.categories),
            "cumulative": [float(v) for v in self.cumulative],
        }

    @staticmethod
    def from_dict(doc: dict) -> "EmpiricalMarginal":
        if doc["kind"] == KIND_CONTINUOUS:
            return fit_marginal(doc["values"], column=doc["column"])
        return EmpiricalMarginal(
            column=doc["column"],
            kind=KIND_DISCRETE_CONTINUIZED,
            n=int(doc["n"]),
            categories=tuple(doc["categories"]),
            cumulative=np.asarray(doc["cumulative"], dtype=np.float64),
        )


def fit_marginal(values, column: str = "") -> EmpiricalMarginal:
    """Fit a continuous empirical marginal from observed values."""
    vals = np.asarray(values, dtype=np.float64)
    vals = vals[~np.isnan(vals)]
    if vals.size < 2:
        raise DegenerateInputError("need at least 2 observed values to fit a marginal")
    srt = np.sort(vals)
    srt.flags.writeable = False
    return EmpiricalMarginal(
        column=column, kind=KIND_CONTINUOUS, n=int(srt.size), sorted_values=srt
    )


def fit_discrete_marginal(codes, categories, column: str = "") -> EmpiricalMarginal:
    """Fit a continuized discrete marginal from observed category codes."""
    codes = np.asarray(codes, dtype=np.int64)
    codes = codes[codes >= 0]
    if codes.size < 2:
        raise DegenerateInputError("need at least 2 observed values to fit a marginal")
    counts = np.bincount(codes, minlength=len(categories)).astype(np.float64)
    cumulative = np.concatenate([[0.0], np.cumsum(counts / codes.size)])
    cumulative[-1] = 1.0
    cumulative.flags.writeable = False
    return EmpiricalMarginal(
        column=column,
        kind=KIND_DISCRETE_CONTINUIZED,
        n=int(codes.size),
        categories=tuple(categories),
        cumulative=cumulative,
    )


def fit_table_marginals(table: DataTable, columns) -> dict[str, EmpiricalMarginal]:
    out = {}
    for name in columns:
        col = table.column_schema(name)
        obs = ~table.missing(name)
        if col.kind == CONTINUOUS:
            out[name] = fit_marginal(table.values(name)[obs], column=name)
        else:
            out[name] = fit_discrete_marginal(
                table.values(name)[obs], col.categories, column=name
            )
    return out


def pseudo_observations(table: DataTable, columns, seed: int) -> np.ndarray:
    """Map listed columns into (0, 1)^d for copula fitting.

    Columns must have no missing cells. Continuous columns go through their
    rank/(n+1) ECDF; discrete columns are jittered inside cumulative-proportion
    intervals by a generator seeded with ``seed``.
    """
    columns = list(columns)
    require_no_missing(table, columns)
    marginals = fit_table_marginals(table, columns)
    rng = np.random.default_rng(seed)
    grid = np.empty((table.n_rows, len(columns)), dtype=np.float64)
    for j, name in enumerate(columns):
        marginal = marginals[name]
        if marginal.kind == KIND_CONTINUOUS:
            grid[:, j] = marginal.cdf(table.values(name))
        else:
            grid[:, j] = marginal.continuize(table.values(name), rng)
    return grid


def inverse_empirical_cdf(marginal: EmpiricalMarginal, u):
    """Map uniforms back to the data space of a fitted marginal."""
    return marginal.inverse(u)
