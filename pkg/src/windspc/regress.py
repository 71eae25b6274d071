"""Least-squares regression of health variables, all-subset selection, and
the correlation statistics used around it (Pearson, autocorrelation)."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import (
    DegenerateFullModel,
    InsufficientData,
    LengthMismatch,
    MissingField,
    RankDeficient,
    SeriesTooShort,
    TooManyCandidates,
    ZeroVariance,
)
from .ingest import Dataset, ScadaRecord

MODEL_FORMAT = "windspc.regression_model"
MODEL_VERSION = 1
MAX_CANDIDATES = 20


@dataclass(frozen=True, order=True)
class ModelTerm:
    """A single regressor: ``variable ** power``."""

    variable: str
    power: int = 1

    def __post_init__(self) -> None:
        if int(self.power) != self.power or self.power < 1:
            raise ValueError(f"term power must be a positive integer, got {self.power!r}")
        object.__setattr__(self, "power", int(self.power))

    @property
    def name(self) -> str:
        return self.variable if self.power == 1 else f"{self.variable}^{self.power}"

    def __str__(self) -> str:
        return self.name

    @classmethod
    def parse(cls, spec: Any) -> "ModelTerm":
        """Accept ``ModelTerm``, ``"var"``, ``"var^k"`` or ``[var, k]``."""
        if isinstance(spec, ModelTerm):
            return spec
        if isinstance(spec, str):
            var, _, power = spec.partition("^")
            return cls(var.strip(), int(power) if power else 1)
        var, power = spec
        return cls(str(var), int(power))


def parse_terms(specs: Iterable[Any]) -> tuple[ModelTerm, ...]:
    terms = tuple(ModelTerm.parse(s) for s in specs)
    if len(set(terms)) != len(terms):
        raise ValueError("duplicate (variable, power) in term set")
    return terms


@dataclass(frozen=True)
class RegressionModel:
    """Fitted linear model ``response ~ intercept + sum(coef * variable**power)``.

    ``std_errors``, ``t_values`` and ``p_values`` list the intercept first,
    then the terms in order.
    """

    response: str
    terms: tuple[ModelTerm, ...]
    intercept: float
    coefficients: tuple[float, ...]
    n: int
    sse: float
    sigma2_hat: float
    std_errors: tuple[float, ...] = ()
    t_values: tuple[float, ...] = ()
    p_values: tuple[float, ...] = ()
    dropped: int = 0

    @property
    def df_resid(self) -> int:
        return self.n - len(self.terms) - 1

    def coefficient_table(self) -> list[dict[str, Any]]:
        names = ["(Intercept)"] + [t.name for t in self.terms]
        est = (self.intercept,) + tuple(self.coefficients)
        return [
            {"term": nm, "estimate": e, "std_error": se, "t_value": tv, "p_value": pv}
            for nm, e, se, tv, pv in zip(names, est, self.std_errors, self.t_values, self.p_values)
        ]

    def evaluate(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        """Vectorised prediction from a mapping of variable arrays."""
        out = None
        for term, coef in zip(self.terms, self.coefficients):
            contrib = coef * np.asarray(columns[term.variable], dtype=float) ** term.power
            out = contrib if out is None else out + contrib
        if out is None:
            n = len(next(iter(columns.values()))) if columns else 0
            return np.full(n, self.intercept)
        return self.intercept + out

    # serialization

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "response": self.response,
            "terms": [[t.variable, t.power] for t in self.terms],
            "intercept": self.intercept,
            "coefficients": list(self.coefficients),
            "n": self.n,
            "sse": self.sse,
            "sigma2_hat": self.sigma2_hat,
            "std_errors": list(self.std_errors),
            "t_values": list(self.t_values),
            "p_values": list(self.p_values),
            "dropped": self.dropped,
            "table": self.coefficient_table(),
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "RegressionModel":
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError("not a regression model document")
        if doc.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')!r}")
        return cls(
            response=doc["response"],
            terms=parse_terms(doc["terms"]),
            intercept=float(doc["intercept"]),
            coefficients=tuple(float(c) for c in doc["coefficients"]),
            n=int(doc["n"]),
            sse=float(doc["sse"]),
            sigma2_hat=float(doc["sigma2_hat"]),
            std_errors=tuple(float(v) for v in doc.get("std_errors", ())),
            t_values=tuple(float(v) for v in doc.get("t_values", ())),
            p_values=tuple(float(v) for v in doc.get("p_values", ())),
            dropped=int(doc.get("dropped", 0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RegressionModel":
        return cls.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# least squares core


@dataclass
class _LstsqResult:
    beta: np.ndarray
    sse: float
    cov_unscaled: np.ndarray  # (X'X)^-1


def _lstsq(X: np.ndarray, y: np.ndarray, *, want_cov: bool = True) -> _LstsqResult:
    """Least squares through an SVD of the column-equilibrated design."""
    n, p = X.shape
    scale = np.sqrt(np.einsum("ij,ij->j", X, X))
    if np.any(scale == 0):
        raise RankDeficient("design matrix has an all-zero column")
    Xs = X / scale
    U, s, Vt = np.linalg.svd(Xs, full_matrices=False)
    tol = s[0] * max(n, p) * np.finfo(float).eps * 10
    if s[-1] <= tol:
        raise RankDeficient(
            f"design matrix is rank deficient (condition number {s[0] / max(s[-1], 1e-300):.3g})"
        )
    beta_s = Vt.T @ ((U.T @ y) / s)
    beta = beta_s / scale
    resid = y - X @ beta
    sse = float(resid @ resid)
    cov = None
    if want_cov:
        V = Vt.T / s
        cov = (V @ V.T) / np.outer(scale, scale)
    return _LstsqResult(beta, sse, cov)


def _design(columns: Mapping[str, np.ndarray], terms: Sequence[ModelTerm]) -> np.ndarray:
    n = len(next(iter(columns.values())))
    X = np.empty((n, len(terms) + 1))
    X[:, 0] = 1.0
    for j, t in enumerate(terms, start=1):
        X[:, j] = np.asarray(columns[t.variable], dtype=float) ** t.power
    return X


def _complete_cases(d: Dataset, response: str, terms: Sequence[ModelTerm]):
    names = [response] + sorted({t.variable for t in terms})
    for nm in names:
        if nm not in d.columns:
            raise MissingField(f"dataset has no field {nm!r}")
    cols = {nm: d.column(nm) for nm in names}
    mask = np.ones(len(d), dtype=bool)
    for arr in cols.values():
        mask &= np.isfinite(arr)
    return {k: v[mask] for k, v in cols.items()}, mask


def fit_arrays(X: np.ndarray, y: np.ndarray, response: str, terms: Sequence[ModelTerm],
               dropped: int = 0) -> RegressionModel:
    """Fit on a prepared design ``X`` (first column all ones)."""
    n, p = X.shape
    if n <= p:
        raise InsufficientData(f"need more than {p} complete observations, got {n}")
    res = _lstsq(X, y)
    df = n - p
    sigma2 = res.sse / df
    se = np.sqrt(np.maximum(np.diag(res.cov_unscaled) * sigma2, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = res.beta / se
    pvals = 2.0 * stats.t.sf(np.abs(tvals), df)
    return RegressionModel(
        response=response,
        terms=tuple(terms),
        intercept=float(res.beta[0]),
        coefficients=tuple(float(b) for b in res.beta[1:]),
        n=int(n),
        sse=res.sse,
        sigma2_hat=float(sigma2),
        std_errors=tuple(float(v) for v in se),
        t_values=tuple(float(v) for v in tvals),
        p_values=tuple(float(v) for v in pvals),
        dropped=int(dropped),
    )


def ols_fit(d: Dataset, response: str, terms: Iterable[Any]) -> RegressionModel:
    """Ordinary least squares of ``response`` on ``terms`` plus an intercept.

    Records missing the response or any term variable are dropped; the count
    is kept on the returned model as ``dropped``.

    Raises
    ------
    InsufficientData
        If no more than ``len(terms) + 1`` complete records remain.
    RankDeficient
        If the design matrix is (numerically) collinear.
    """
    terms = parse_terms(terms)
    cols, mask = _complete_cases(d, response, terms)
    X = _design(cols, terms)
    return fit_arrays(X, cols[response], response, terms, dropped=int((~mask).sum()))


# --------------------------------------------------------------------------
# prediction and residuals


def predict(m: RegressionModel, r: ScadaRecord | Mapping[str, Any]) -> float:
    """Point prediction for a single record."""
    value = m.intercept
    for term, coef in zip(m.terms, m.coefficients):
        x = r.get(term.variable)
        if x is None or (isinstance(x, float) and math.isnan(x)):
            raise MissingField(f"record lacks {term.variable!r}")
        value += coef * float(x) ** term.power
    return value


def predict_dataset(m: RegressionModel, d: Dataset) -> np.ndarray:
    """Predictions for every record; NaN where a term variable is missing."""
    for t in m.terms:
        if t.variable not in d.columns:
            raise MissingField(f"dataset has no field {t.variable!r}")
    if not m.terms:
        return np.full(len(d), m.intercept)
    return m.evaluate({t.variable: d.column(t.variable) for t in m.terms})


@dataclass(frozen=True)
class ResidualSeries:
    """Timestamped ``actual - predicted`` values; ``skipped`` counts records
    that lacked a required field."""

    timestamps: np.ndarray
    values: np.ndarray
    skipped: int = 0

    def __len__(self) -> int:
        return int(self.values.size)

    def between(self, start=None, end=None) -> "ResidualSeries":
        mask = np.ones(len(self), dtype=bool)
        if start is not None:
            mask &= self.timestamps >= np.datetime64(start, "s")
        if end is not None:
            mask &= self.timestamps <= np.datetime64(end, "s")
        return ResidualSeries(self.timestamps[mask], self.values[mask], 0)


def residual_series(m: RegressionModel, d: Dataset) -> ResidualSeries:
    if m.response not in d.columns:
        raise MissingField(f"dataset has no field {m.response!r}")
    resid = d.column(m.response) - predict_dataset(m, d)
    ok = np.isfinite(resid)
    return ResidualSeries(d.timestamps[ok], resid[ok], int((~ok).sum()))


# --------------------------------------------------------------------------
# subset selection


def mallows_cp(candidate_sse: float, p: int, full_sigma2: float, n: int) -> float:
    """Mallows' Cp for a candidate with ``p`` parameters (intercept included)."""
    if not full_sigma2 > 0:
        raise DegenerateFullModel("full-model residual variance is zero")
    if n <= p:
        raise InsufficientData(f"n={n} must exceed p={p}")
    return candidate_sse / full_sigma2 - n + 2 * p


@dataclass(frozen=True)
class SubsetCandidate:
    terms: tuple[ModelTerm, ...]
    cp: float
    sse: float

    @property
    def p(self) -> int:
        return len(self.terms) + 1

    def sort_key(self):
        return (self.cp, len(self.terms), tuple(sorted(self.terms)))


@dataclass
class SubsetSearch:
    """Outcome of exhaustive enumeration over a candidate set."""

    response: str
    candidates: tuple[ModelTerm, ...]
    evaluated: list[SubsetCandidate] = field(default_factory=list)
    skipped: int = 0
    full_sigma2: float = float("nan")
    n: int = 0

    @property
    def best(self) -> SubsetCandidate:
        return min(self.evaluated, key=SubsetCandidate.sort_key)


def enumerate_subsets(d: Dataset, response: str, candidates: Iterable[Any]) -> SubsetSearch:
    """Fit every subset of ``candidates`` (intercept always in) and score by Cp.

    All subsets share the complete-case rows of the full model so their SSEs
    are comparable. Rank-deficient subsets are skipped and counted.
    """
    candidates = parse_terms(candidates)
    if len(candidates) > MAX_CANDIDATES:
        raise TooManyCandidates(f"{len(candidates)} candidates exceed the limit of {MAX_CANDIDATES}")
    cols, _ = _complete_cases(d, response, candidates)
    X = _design(cols, candidates)
    y = cols[response]
    n, p_full = X.shape
    if n <= p_full:
        raise InsufficientData(f"need more than {p_full} complete observations, got {n}")
    full = _lstsq(X, y, want_cov=False)
    sigma2 = full.sse / (n - p_full)
    # an exact fit leaves only rounding noise in the SSE
    if not full.sse > (1e-12 * np.linalg.norm(y)) ** 2:
        raise DegenerateFullModel("full candidate model fits exactly; Cp is undefined")
    search = SubsetSearch(response, candidates, full_sigma2=sigma2, n=n)
    k = len(candidates)
    for size in range(k + 1):
        for idx in itertools.combinations(range(k), size):
            cols_idx = [0] + [i + 1 for i in idx]
            try:
                sse = _lstsq(X[:, cols_idx], y, want_cov=False).sse
            except RankDeficient:
                search.skipped += 1
                continue
            terms = tuple(candidates[i] for i in idx)
            search.evaluated.append(SubsetCandidate(terms, mallows_cp(sse, size + 1, sigma2, n), sse))
    return search


def best_subset(d: Dataset, response: str, candidates: Iterable[Any]) -> RegressionModel:
    """Fit the subset of ``candidates`` with the lowest Mallows' Cp.

    Ties go to fewer terms, then to the lexicographically smaller term set.
    """
    search = enumerate_subsets(d, response, candidates)
    return ols_fit(d, response, search.best.terms)


# --------------------------------------------------------------------------
# correlation statistics


def pearson_correlation(a, b) -> float:
    """Sample Pearson correlation over pairwise-complete observations."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size != b.size:
        raise LengthMismatch(f"series lengths differ ({a.size} vs {b.size})")
    ok = np.isfinite(a) & np.isfinite(b)
    a, b = a[ok], b[ok]
    if a.size < 2:
        raise SeriesTooShort("need at least 2 complete pairs")
    da = a - a.mean()
    db = b - b.mean()
    saa = da @ da
    sbb = db @ db
    if saa == 0 or sbb == 0:
        raise ZeroVariance("correlation undefined for a constant series")
    r = (da @ db) / math.sqrt(saa * sbb)
    return float(min(1.0, max(-1.0, r)))


def acf(x, max_lag: int) -> np.ndarray:
    """Biased sample autocorrelation ``r_0 .. r_max_lag``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if max_lag < 0 or x.size <= max_lag:
        raise SeriesTooShort(f"series of length {x.size} too short for lag {max_lag}")
    dx = x - x.mean()
    denom = dx @ dx
    if denom == 0:
        raise ZeroVariance("autocorrelation undefined for a constant series")
    n = x.size
    return np.array([(dx[: n - k] @ dx[k:]) / denom for k in range(max_lag + 1)])
