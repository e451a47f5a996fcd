"""End-to-end estimation: split, cross-fit, build influence values, estimate, aggregate."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_binary, check_features
from .data import Dataset, split_folds
from .estimators import (
    BoundEstimate,
    SeedAggregate,
    SensitivityParams,
    aggregate_seeds,
    bounds_bounded_risk,
    bounds_general,
    bounds_monotone,
    bounds_psi1,
    bounds_psi2_smooth,
    bounds_unconfounded,
    naive_estimate,
    point_ate,
    point_psi1,
    point_psi2,
)
from .influence import InfluenceMatrix, SmoothingSpec, influence_matrix
from .nuisance import LearnerSpec, cross_fit_nuisances

__all__ = ["ASSUMPTION_SETS", "required_params", "estimate_set", "fit_influence", "run_bounds", "CensoredBoundsEstimator"]

ASSUMPTION_SETS = (
    "naive",
    "general",
    "mono-pos",
    "mono-neg",
    "bounded-risk",
    "point",
    "psi1",
    "point-psi1",
    "psi2",
    "point-psi2",
    "unconfounded-psi0",
    "unconfounded-psi1",
)


def required_params(assumption: str, params: SensitivityParams) -> None:
    """Raise ``ValueError`` naming any parameter the assumption set needs but lacks."""
    if assumption not in ASSUMPTION_SETS:
        raise ValueError(f"unknown assumption set {assumption!r}")
    if assumption in ("bounded-risk", "point"):
        tau0, tau1 = params.taus()
        if assumption == "bounded-risk" and min(tau0, tau1) < 1:
            raise ValueError("bounded-risk needs tau >= 1")
        if assumption == "point" and min(tau0, tau1) <= 0:
            raise ValueError("point identification needs tau > 0")
    if assumption in ("point", "point-psi1"):
        params.deltas()
    if assumption == "point-psi2" and params.delta0 is None:
        raise ValueError("missing parameter: delta0")


def estimate_set(rows: InfluenceMatrix, assumption: str, params: SensitivityParams,
                 alpha_level: float = 0.05) -> BoundEstimate:
    """Dispatch an assumption-set name to its estimator."""
    required_params(assumption, params)
    if assumption == "naive":
        return naive_estimate(rows, alpha_level)
    if assumption == "general":
        return bounds_general(rows, alpha_level)
    if assumption in ("mono-pos", "mono-neg"):
        direction = "positive" if assumption == "mono-pos" else "negative"
        return bounds_monotone(rows, direction, params, alpha_level)
    if assumption == "bounded-risk":
        return bounds_bounded_risk(rows, params, alpha_level)
    if assumption == "point":
        return point_ate(rows, params, alpha_level)
    if assumption == "psi1":
        return bounds_psi1(rows, params, alpha_level)
    if assumption == "point-psi1":
        return point_psi1(rows, params, alpha_level)
    if assumption == "psi2":
        return bounds_psi2_smooth(rows, params, alpha_level)
    if assumption == "point-psi2":
        return point_psi2(rows, params, alpha_level)
    return bounds_unconfounded(rows, assumption.split("-")[1], params, alpha_level)


def fit_influence(d: Dataset, seed: int, folds: int = 2, learner: LearnerSpec | None = None,
                  epsilon: float = 0.05) -> InfluenceMatrix:
    """Cross-fitted influence matrix for one sample split."""
    d.check_estimable()
    assignment = split_folds(d.n, folds, seed)
    eta = cross_fit_nuisances(d, assignment, learner or LearnerSpec())
    return influence_matrix(d, eta, SmoothingSpec(epsilon))


@dataclass(frozen=True)
class _Job:
    d: Dataset
    assumptions: tuple[str, ...]
    params: SensitivityParams
    folds: int
    learner: LearnerSpec
    alpha_level: float


def _one_seed(job: _Job, seed: int) -> dict[str, BoundEstimate]:
    rows = fit_influence(job.d, seed, job.folds, job.learner, job.params.epsilon)
    return {a: estimate_set(rows, a, job.params, job.alpha_level) for a in job.assumptions}


def _run_seed(args):
    return _one_seed(*args)


def run_bounds(d: Dataset, assumptions, params: SensitivityParams | None = None, *, seeds=range(11),
               folds: int = 2, learner: LearnerSpec | None = None, alpha_level: float = 0.05,
               n_jobs: int = 1) -> dict[str, SeedAggregate]:
    """Estimate each assumption set once per sample-splitting seed and aggregate."""
    params = params or SensitivityParams()
    if isinstance(assumptions, str):
        assumptions = (assumptions,)
    assumptions = tuple(assumptions)
    for a in assumptions:
        required_params(a, params)
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("at least one seed is required")
    job = _Job(d, assumptions, params, folds, learner or LearnerSpec(), alpha_level)
    if n_jobs == 1:
        per_seed = [_one_seed(job, s) for s in seeds]
    else:
        with ProcessPoolExecutor(None if n_jobs < 1 else n_jobs) as ex:
            per_seed = list(ex.map(_run_seed, [(job, s) for s in seeds]))
    return {a: aggregate_seeds([r[a] for r in per_seed]) for a in assumptions}


class CensoredBoundsEstimator(BaseEstimator):
    """Scikit-learn style front end for :func:`run_bounds`.

    Parameters
    ----------
    assumption : str
        One of :data:`ASSUMPTION_SETS`.
    tau, tau0, tau1, delta0, delta1, delta_l0, delta_u0, delta_l1, delta_u1, epsilon
        Sensitivity parameters (see :class:`~censbounds.estimators.SensitivityParams`).
    learner : {"logistic", "kernel"}
    n_folds : int
    n_seeds : int
        Number of sample splits; seeds are ``random_state, random_state + 1, ...``.
    random_state : int
    alpha_level : float
    eps_clip : float

    Attributes
    ----------
    result_ : SeedAggregate
    estimate_ : BoundEstimate
        Median-aggregated estimate with adjusted intervals.

    Examples
    --------
    >>> est = CensoredBoundsEstimator(assumption="general").fit(X, y, a=a, c=c)  # doctest: +SKIP
    >>> est.estimate_.lower, est.estimate_.upper  # doctest: +SKIP
    """

    def __init__(self, assumption="general", *, tau=None, tau0=None, tau1=None, delta0=None, delta1=None,
                 delta_l0=0.0, delta_u0=1.0, delta_l1=0.0, delta_u1=1.0, epsilon=0.05, learner="logistic",
                 n_folds=2, n_seeds=11, random_state=0, alpha_level=0.05, eps_clip=0.01):
        self.assumption = assumption
        self.tau = tau
        self.tau0 = tau0
        self.tau1 = tau1
        self.delta0 = delta0
        self.delta1 = delta1
        self.delta_l0 = delta_l0
        self.delta_u0 = delta_u0
        self.delta_l1 = delta_l1
        self.delta_u1 = delta_u1
        self.epsilon = epsilon
        self.learner = learner
        self.n_folds = n_folds
        self.n_seeds = n_seeds
        self.random_state = random_state
        self.alpha_level = alpha_level
        self.eps_clip = eps_clip

    def _params(self) -> SensitivityParams:
        keys = ("tau", "tau0", "tau1", "delta0", "delta1", "delta_l0", "delta_u0", "delta_l1", "delta_u1", "epsilon")
        return SensitivityParams(**{k: getattr(self, k) for k in keys})

    def fit(self, X, y, *, a, c):
        """``y`` holds outcomes with ``NaN`` (or any value) where ``c == 1``."""
        X = check_features(X)
        a = check_binary(a, "a")
        c = check_binary(c, "c")
        y = np.where(c == 1, np.nan, np.asarray(y, dtype=float))
        d = Dataset(X, a, c, y)
        spec = LearnerSpec(kind=self.learner, eps_clip=self.eps_clip)
        seeds = range(self.random_state, self.random_state + self.n_seeds)
        self.result_ = run_bounds(d, self.assumption, self._params(), seeds=seeds, folds=self.n_folds,
                                  learner=spec, alpha_level=self.alpha_level)[self.assumption]  # fmt: skip
        self.estimate_ = self.result_.as_estimate()
        self.n_features_in_ = X.shape[1]
        return self

    def summary(self) -> dict:
        check_is_fitted(self, "estimate_")
        return self.estimate_.to_dict()
