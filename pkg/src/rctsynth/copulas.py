"""Bivariate copula families: densities, conditional (h) functions, fitting.

Five families are supported: independence, gaussian, clayton, gumbel and
frank. Clayton and gumbel additionally come in 90/180/270-degree rotations so
that negative and opposite-corner tail dependence can be represented; the
rotated forms are expressed through the base family's functions:

    C_90(u, v)  = u - C(1 - v, u)
    C_180(u, v) = u + v - 1 + C(1 - u, 1 - v)
    C_270(u, v) = v - C(v, 1 - u)

Conditioning direction matters for rotated families, so both conditional CDFs
are exposed: ``h1`` conditions the first variable on the second (dC/dv) and
``h2`` the second on the first (dC/du), each with an inverse.

Parameters are estimated by Kendall-tau inversion followed by a bounded
golden-section refinement of the log-likelihood; the winning family is the one
with the highest refined log-likelihood. Pairs whose tau-based independence
test statistic stays below the threshold are fitted as independence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, optimize, stats
from scipy.stats import norm

from .errors import DegenerateInputError, NumericError

_TRIM = 1e-12

GAUSSIAN_RHO_BOUNDS = (-0.999, 0.999)
CLAYTON_THETA_BOUNDS = (1e-4, 28.0)
GUMBEL_THETA_BOUNDS = (1.0 + 1e-6, 20.0)
FRANK_THETA_BOUNDS = (-40.0, 40.0)

#: Families tried by default during pair-copula selection.
DEFAULT_FAMILIES = ("independence", "gaussian", "clayton", "gumbel", "frank")

#: Quantile of the asymptotic tau test below which a pair is fitted as
#: independent.
INDEPENDENCE_CRITICAL = 1.645


def _trim(u) -> np.ndarray:
    return np.clip(np.asarray(u, dtype=np.float64), _TRIM, 1.0 - _TRIM)


# ---------------------------------------------------------------------------
# base-family functions, defined for rotation 0 on exchangeable copulas
# ---------------------------------------------------------------------------

def _gaussian_density(rho, u, v):
    x = norm.ppf(u)
    y = norm.ppf(v)
    s2 = 1.0 - rho * rho
    expo = -(rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * s2)
    return np.exp(expo) / math.sqrt(s2)


def _gaussian_h(rho, u, v):
    x = norm.ppf(u)
    y = norm.ppf(v)
    return norm.cdf((x - rho * y) / math.sqrt(1.0 - rho * rho))


def _gaussian_hinv(rho, p, v):
    y = norm.ppf(v)
    return norm.cdf(norm.ppf(p) * math.sqrt(1.0 - rho * rho) + rho * y)


def _clayton_log_sum(theta, u, v):
    # log(u^-theta + v^-theta - 1), computed in log space to survive small u, v
    a = -theta * np.log(u)
    b = -theta * np.log(v)
    m = np.maximum(a, b)
    return m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))


def _clayton_density(theta, u, v):
    log_a = _clayton_log_sum(theta, u, v)
    log_c = (
        math.log1p(theta)
        - (1.0 + theta) * (np.log(u) + np.log(v))
        - (2.0 + 1.0 / theta) * log_a
    )
    return np.exp(log_c)


def _clayton_h(theta, u, v):
    log_a = _clayton_log_sum(theta, u, v)
    log_h = -(1.0 + theta) * np.log(v) - (1.0 + 1.0 / theta) * log_a
    return np.exp(log_h)


def _clayton_hinv(theta, p, v):
    # expm1 keeps precision for p near 1; logaddexp guards v^-theta overflow
    w = -theta * np.log(v) + np.log(np.expm1(-theta / (1.0 + theta) * np.log(p)))
    return np.exp(-np.logaddexp(0.0, w) / theta)


def _gumbel_parts(theta, u, v):
    x = -np.log(u)
    y = -np.log(v)
    log_s = np.logaddexp(theta * np.log(x), theta * np.log(y))
    return x, y, log_s


def _gumbel_density(theta, u, v):
    x, y, log_s = _gumbel_parts(theta, u, v)
    t = np.exp(log_s / theta)
    log_c = (
        -t
        + (2.0 / theta - 2.0) * log_s
        + (theta - 1.0) * (np.log(x) + np.log(y))
        - np.log(u)
        - np.log(v)
        + np.log1p((theta - 1.0) * np.exp(-log_s / theta))
    )
    return np.exp(log_c)


def _gumbel_h(theta, u, v):
    x, y, log_s = _gumbel_parts(theta, u, v)
    t = np.exp(log_s / theta)
    log_h = -t + (1.0 / theta - 1.0) * log_s + (theta - 1.0) * np.log(y) - np.log(v)
    return np.exp(log_h)


def _gumbel_hinv(theta, p, v):
    # no closed form: bisection on (0, 1); h is increasing in its first slot
    p = np.asarray(p, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    p, v = np.broadcast_arrays(p, v)
    lo = np.full(p.shape, _TRIM)
    hi = np.full(p.shape, 1.0 - _TRIM)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        too_low = _gumbel_h(theta, mid, v) < p
        lo = np.where(too_low, mid, lo)
        hi = np.where(too_low, hi, mid)
    out = 0.5 * (lo + hi)
    residual = np.abs(_gumbel_h(theta, out, v) - p)
    interior = (p > 1e-9) & (p < 1.0 - 1e-9)
    if np.any(residual[interior] > 1e-6):
        raise NumericError("gumbel h-inverse bisection failed to converge")
    return out


def _frank_density(theta, u, v):
    g1 = math.expm1(-theta)
    gu = np.expm1(-theta * u)
    gv = np.expm1(-theta * v)
    denom = g1 + gu * gv
    return -theta * g1 * np.exp(-theta * (u + v)) / (denom * denom)


def _frank_h(theta, u, v):
    g1 = math.expm1(-theta)
    gu = np.expm1(-theta * u)
    gv = np.expm1(-theta * v)
    return np.exp(-theta * v) * gu / (g1 + gu * gv)


def _frank_hinv(theta, p, v):
    g1 = math.expm1(-theta)
    denom = (1.0 - p) * np.exp(-theta * v) + p
    return -np.log1p(p * g1 / denom) / theta


_BASE_FUNS = {
    "gaussian": (_gaussian_density, _gaussian_h, _gaussian_hinv),
    "clayton": (_clayton_density, _clayton_h, _clayton_hinv),
    "gumbel": (_gumbel_density, _gumbel_h, _gumbel_hinv),
    "frank": (_frank_density, _frank_h, _frank_hinv),
}

_PAR_BOUNDS = {
    "gaussian": GAUSSIAN_RHO_BOUNDS,
    "clayton": CLAYTON_THETA_BOUNDS,
    "gumbel": GUMBEL_THETA_BOUNDS,
    "frank": FRANK_THETA_BOUNDS,
}


# ---------------------------------------------------------------------------
# tau <-> parameter maps
# ---------------------------------------------------------------------------

def frank_parameter_to_tau(theta: float) -> float:
    """Kendall tau of a frank copula via the Debye integral."""
    if theta == 0.0:
        return 0.0
    sign = 1.0 if theta > 0 else -1.0
    t = abs(theta)

    def integrand(s):
        return 1.0 if s == 0.0 else s / math.expm1(s)

    debye = integrate.quad(integrand, 0.0, t, limit=200)[0] / t
    return sign * (1.0 - 4.0 / t * (1.0 - debye))


def tau_to_parameter(family: str, tau: float) -> float:
    """Closed-form (or numerically inverted) parameter matching a Kendall tau.

    Clayton and gumbel take the magnitude of negative taus; their sign is
    carried by a 90/270-degree rotation instead.
    """
    if family == "gaussian":
        return math.sin(math.pi * tau / 2.0)
    if family == "clayton":
        t = abs(tau)
        lo, hi = CLAYTON_THETA_BOUNDS
        return min(max(2.0 * t / (1.0 - t) if t < 1.0 else hi, lo), hi)
    if family == "gumbel":
        t = abs(tau)
        lo, hi = GUMBEL_THETA_BOUNDS
        return min(max(1.0 / (1.0 - t) if t < 1.0 else hi, lo), hi)
    if family == "frank":
        lo, hi = FRANK_THETA_BOUNDS
        max_tau = frank_parameter_to_tau(hi)
        if abs(tau) >= max_tau:
            return hi if tau > 0 else lo
        if tau == 0.0:
            return 1e-6
        bracket = (1e-6, hi) if tau > 0 else (lo, -1e-6)
        return optimize.brentq(
            lambda th: frank_parameter_to_tau(th) - tau, *bracket, xtol=1e-12
        )
    raise ValueError(f"no tau inversion for family {family!r}")


def parameter_to_tau(family: str, parameter: float, rotation: int = 0) -> float:
    """Population Kendall tau implied by a family parameter and rotation."""
    if family == "independence":
        return 0.0
    if family == "gaussian":
        tau = 2.0 / math.pi * math.asin(parameter)
    elif family == "clayton":
        tau = parameter / (parameter + 2.0)
    elif family == "gumbel":
        tau = 1.0 - 1.0 / parameter
    elif family == "frank":
        tau = frank_parameter_to_tau(parameter)
    else:
        raise ValueError(f"unknown family {family!r}")
    return -tau if rotation in (90, 270) else tau


# ---------------------------------------------------------------------------
# copula objects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BivariateCopula:
    """A fitted (or constructed) bivariate copula."""

    family: str
    parameter: float | None = None
    rotation: int = 0
    fitted_tau: float = 0.0

    def __post_init__(self):
        if self.family == "independence":
            if self.parameter is not None:
                raise ValueError("independence copula takes no parameter")
            return
        if self.family not in _BASE_FUNS:
            raise ValueError(f"unknown family {self.family!r}")
        if self.rotation not in (0, 90, 180, 270):
            raise ValueError(f"rotation must be one of 0/90/180/270, got {self.rotation}")
        if self.family in ("gaussian", "frank") and self.rotation != 0:
            raise ValueError(f"{self.family} copula does not use rotations")
        lo, hi = _PAR_BOUNDS[self.family]
        if self.parameter is None or not lo <= self.parameter <= hi:
            raise ValueError(
                f"{self.family} parameter must lie in [{lo}, {hi}], got {self.parameter}"
            )
        if self.family == "frank" and self.parameter == 0.0:
            raise ValueError("frank parameter must be nonzero")

    # -- evaluations --------------------------------------------------------

    def density(self, u, v) -> np.ndarray:
        u, v = _trim(u), _trim(v)
        if self.family == "independence":
            return np.ones(np.broadcast(u, v).shape)
        dens = _BASE_FUNS[self.family][0]
        if self.rotation == 0:
            return dens(self.parameter, u, v)
        if self.rotation == 90:
            return dens(self.parameter, u, 1.0 - v)
        if self.rotation == 180:
            return dens(self.parameter, 1.0 - u, 1.0 - v)
        return dens(self.parameter, 1.0 - u, v)

    def h1(self, u, v) -> np.ndarray:
        """Conditional CDF of the first variable given the second, dC/dv."""
        u, v = _trim(u), _trim(v)
        if self.family == "independence":
            return np.broadcast_to(u, np.broadcast(u, v).shape).copy()
        h = _BASE_FUNS[self.family][1]
        if self.rotation == 0:
            out = h(self.parameter, u, v)
        elif self.rotation == 90:
            out = h(self.parameter, u, 1.0 - v)
        elif self.rotation == 180:
            out = 1.0 - h(self.parameter, 1.0 - u, 1.0 - v)
        else:
            out = 1.0 - h(self.parameter, 1.0 - u, v)
        return _trim(out)

    def h1_inv(self, p, v) -> np.ndarray:
        """Inverse of :meth:`h1` in its first argument."""
        p, v = _trim(p), _trim(v)
        if self.family == "independence":
            return np.broadcast_to(p, np.broadcast(p, v).shape).copy()
        hinv = _BASE_FUNS[self.family][2]
        if self.rotation == 0:
            out = hinv(self.parameter, p, v)
        elif self.rotation == 90:
            out = hinv(self.parameter, p, 1.0 - v)
        elif self.rotation == 180:
            out = 1.0 - hinv(self.parameter, 1.0 - p, 1.0 - v)
        else:
            out = 1.0 - hinv(self.parameter, 1.0 - p, v)
        return _trim(out)

    def h2(self, w, u) -> np.ndarray:
        """Conditional CDF of the second variable given the first, dC/du."""
        w, u = _trim(w), _trim(u)
        if self.family == "independence":
            return np.broadcast_to(w, np.broadcast(w, u).shape).copy()
        h = _BASE_FUNS[self.family][1]
        if self.rotation == 0:
            out = h(self.parameter, w, u)
        elif self.rotation == 90:
            out = 1.0 - h(self.parameter, 1.0 - w, u)
        elif self.rotation == 180:
            out = 1.0 - h(self.parameter, 1.0 - w, 1.0 - u)
        else:
            out = h(self.parameter, w, 1.0 - u)
        return _trim(out)

    def h2_inv(self, p, u) -> np.ndarray:
        """Inverse of :meth:`h2` in its first argument."""
        p, u = _trim(p), _trim(u)
        if self.family == "independence":
            return np.broadcast_to(p, np.broadcast(p, u).shape).copy()
        hinv = _BASE_FUNS[self.family][2]
        if self.rotation == 0:
            out = hinv(self.parameter, p, u)
        elif self.rotation == 90:
            out = 1.0 - hinv(self.parameter, 1.0 - p, u)
        elif self.rotation == 180:
            out = 1.0 - hinv(self.parameter, 1.0 - p, 1.0 - u)
        else:
            out = hinv(self.parameter, p, 1.0 - u)
        return _trim(out)

    def log_likelihood(self, u, v) -> float:
        dens = np.maximum(self.density(u, v), 1e-300)
        return float(np.sum(np.log(dens)))

    def tau(self) -> float:
        """Population Kendall tau implied by the fitted parameter."""
        if self.family == "independence":
            return 0.0
        return parameter_to_tau(self.family, self.parameter, self.rotation)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "parameter": self.parameter,
            "rotation": self.rotation,
            "fitted_tau": self.fitted_tau,
        }

    @staticmethod
    def from_dict(doc: dict) -> "BivariateCopula":
        return BivariateCopula(
            family=doc["family"],
            parameter=doc["parameter"],
            rotation=int(doc.get("rotation", 0)),
            fitted_tau=float(doc.get("fitted_tau", 0.0)),
        )


INDEPENDENCE = BivariateCopula(family="independence")


def h_function(copula: BivariateCopula, u, v) -> np.ndarray:
    """Conditional CDF of u given v for a bivariate copula."""
    _check_unit_open(u, "u")
    _check_unit_open(v, "v")
    return copula.h1(u, v)


def h_inverse(copula: BivariateCopula, p, v) -> np.ndarray:
    """Value u with ``h_function(copula, u, v) == p``."""
    _check_unit_open(p, "p")
    _check_unit_open(v, "v")
    return copula.h1_inv(p, v)


def _check_unit_open(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError(f"{name} must lie strictly inside (0, 1)")


# ---------------------------------------------------------------------------
# dependence measurement and fitting
# ---------------------------------------------------------------------------

def kendall_tau(x, y) -> float:
    """Tie-corrected (tau-b) Kendall rank correlation; 0 for constant input."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise DegenerateInputError("kendall_tau needs at least 2 observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        return 0.0
    return float(stats.kendalltau(x, y).statistic)


def independence_test_statistic(tau: float, n: int) -> float:
    """Asymptotic normal test statistic for Kendall tau against independence."""
    return abs(tau) * math.sqrt(9.0 * n * (n - 1) / (2.0 * (2.0 * n + 5.0)))


def _golden_section_max(f, lo: float, hi: float, tol: float = 1e-6) -> float:
    """Golden-section search for the maximizer of f on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _candidate_copulas(tau: float, families) -> list[BivariateCopula]:
    rotations = (0, 180) if tau >= 0 else (90, 270)
    candidates = []
    for family in families:
        if family == "independence":
            continue
        if family == "gaussian":
            candidates.append(
                BivariateCopula("gaussian", tau_to_parameter("gaussian", tau))
            )
        elif family == "frank":
            candidates.append(
                BivariateCopula("frank", tau_to_parameter("frank", tau))
            )
        else:
            par = tau_to_parameter(family, tau)
            for rot in rotations:
                candidates.append(BivariateCopula(family, par, rotation=rot))
    return candidates


def fit_pair_copula(u, v, families=DEFAULT_FAMILIES) -> BivariateCopula:
    """Select and fit a bivariate copula on pseudo-observations.

    Starts every candidate at its tau-inverted parameter, refines it by
    golden-section likelihood search over the family's parameter range, and
    keeps the candidate with the highest log-likelihood. Falls back to the
    independence copula when the tau-based test cannot reject independence.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("u and v must have the same length")
    if u.size < 10:
        raise DegenerateInputError("pair-copula fitting needs at least 10 rows")
    for arr, name in ((u, "u"), (v, "v")):
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise ValueError(f"{name} must lie strictly inside (0, 1)")

    tau = kendall_tau(u, v)
    n = u.size
    if independence_test_statistic(tau, n) < INDEPENDENCE_CRITICAL:
        return replace(INDEPENDENCE, fitted_tau=tau)

    candidates = _candidate_copulas(tau, families)
    if not candidates:
        return replace(INDEPENDENCE, fitted_tau=tau)

    best = None
    best_ll = -math.inf
    for cand in candidates:
        lo, hi = _PAR_BOUNDS[cand.family]
        if cand.family == "frank":
            lo, hi = (1e-6, hi) if tau > 0 else (lo, -1e-6)

        def ll_at(par, _cand=cand):
            return replace(_cand, parameter=par).log_likelihood(u, v)

        refined = _golden_section_max(ll_at, lo, hi)
        fitted = replace(cand, parameter=refined, fitted_tau=tau)
        ll = fitted.log_likelihood(u, v)
        if ll > best_ll:
            best, best_ll = fitted, ll
    return best
