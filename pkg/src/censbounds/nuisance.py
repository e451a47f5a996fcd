"""Nuisance functions: propensity, censoring probabilities, outcome regressions.

The nuisance vector is ``eta = {e, pi0, pi1, mu0, mu1}`` with

* ``e(x)    = P(A = 1 | X = x)``
* ``pi_a(x) = P(C = 1 | X = x, A = a)``
* ``mu_a(x) = E[Y | X = x, A = a, C = 0]``

Two self-contained learners are provided (an IRLS logistic model and a
Nadaraya-Watson smoother), both following the scikit-learn estimator
protocol.  ``cross_fit_nuisances`` evaluates every unit with models trained
on the other folds, and ``perturb_nuisance`` synthesises estimates with a
controlled error rate for simulation work.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
from scipy.special import expit, logit, xlogy
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_features, check_unit_interval
from .data import Dataset, FoldAssignment

__all__ = [
    "NUISANCE_NAMES",
    "EstimationError",
    "ConvergenceError",
    "SeparationError",
    "NuisanceValues",
    "LearnerSpec",
    "PerturbationSpec",
    "LogisticIRLS",
    "NadarayaWatson",
    "ConstantModel",
    "fit_logistic",
    "fit_kernel",
    "cross_fit_nuisances",
    "perturb_nuisance",
    "clip_probability",
]

NUISANCE_NAMES = ("e", "pi0", "pi1", "mu0", "mu1")


class EstimationError(RuntimeError):
    """A nuisance model or estimator could not be computed."""


class ConvergenceError(EstimationError):
    pass


class SeparationError(EstimationError):
    pass


def clip_probability(p, eps_clip: float = 0.01, kind: str = "propensity"):
    """Clip probabilities away from the boundary.

    ``kind="propensity"`` clips to ``[eps, 1 - eps]``; ``kind="censoring"``
    clips to ``[0, 1 - eps]``; ``kind="outcome"`` clips to ``[0, 1]``.
    Scalars in give scalars out.
    """
    if not 0.0 < eps_clip < 0.5:
        raise ValueError("eps_clip must lie in (0, 0.5)")
    if kind == "propensity":
        lo, hi = eps_clip, 1.0 - eps_clip
    elif kind == "censoring":
        lo, hi = 0.0, 1.0 - eps_clip
    elif kind == "outcome":
        lo, hi = 0.0, 1.0
    else:
        raise ValueError(f"unknown probability kind {kind!r}")
    out = np.clip(p, lo, hi)
    return float(out) if np.ndim(out) == 0 else out


_KIND_OF = {"e": "propensity", "pi0": "censoring", "pi1": "censoring", "mu0": "outcome", "mu1": "outcome"}


@dataclass(frozen=True)
class NuisanceValues:
    """Per-unit evaluations of the five nuisance functions."""

    e: np.ndarray
    pi0: np.ndarray
    pi1: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        arrays = {}
        for name in NUISANCE_NAMES:
            v = np.array(getattr(self, name), dtype=float, ndmin=1)
            v.setflags(write=False)
            arrays[name] = v
            object.__setattr__(self, name, v)
        if len({v.shape for v in arrays.values()}) != 1 or arrays["e"].ndim != 1:
            raise ValueError("all nuisance arrays must be one-dimensional with equal length")
        for name, v in arrays.items():
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite values in nuisance {name}")

    @property
    def n(self) -> int:
        return len(self.e)

    def __len__(self) -> int:
        return self.n

    def e_arm(self, a: int) -> np.ndarray:
        """``P(A = a | X)``."""
        return self.e if a == 1 else 1.0 - self.e

    def pi(self, a: int) -> np.ndarray:
        return self.pi1 if a == 1 else self.pi0

    def mu(self, a: int) -> np.ndarray:
        return self.mu1 if a == 1 else self.mu0

    def clipped(self, eps_clip: float = 0.01) -> "NuisanceValues":
        return replace(
            self, **{k: clip_probability(getattr(self, k), eps_clip, _KIND_OF[k]) for k in NUISANCE_NAMES}
        )

    def check_clipped(self, eps_clip: float) -> None:
        tol = 1e-12
        if np.any(self.e < eps_clip - tol) or np.any(self.e > 1 - eps_clip + tol):
            raise ValueError("propensity outside clipping bounds")
        for k in ("pi0", "pi1"):
            v = getattr(self, k)
            if np.any(v < 0) or np.any(v > 1 - eps_clip + tol):
                raise ValueError(f"{k} outside clipping bounds")
        for k in ("mu0", "mu1"):
            v = getattr(self, k)
            if np.any(v < 0) or np.any(v > 1):
                raise ValueError(f"{k} outside [0, 1]")

    def subset(self, idx) -> "NuisanceValues":
        return replace(self, **{k: getattr(self, k)[idx] for k in NUISANCE_NAMES})

    def as_dict(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in NUISANCE_NAMES}


# --------------------------------------------------------------------------
# learners


class LogisticIRLS(BaseEstimator):
    """Logit-linear model fit by iteratively reweighted least squares.

    Labels may be fractional in ``[0, 1]`` (quasi-binomial fit), which is how
    the outcome regressions are handled for non-binary outcomes.  Each Newton
    step is halved until the log-likelihood does not decrease, so the
    recorded ``loglik_path_`` is monotone.

    Parameters
    ----------
    max_iter : int
    tol : float
        Relative deviance change at which iteration stops.
    fit_intercept : bool
    """

    def __init__(self, max_iter: int = 100, tol: float = 1e-8, fit_intercept: bool = True):
        self.max_iter = max_iter
        self.tol = tol
        self.fit_intercept = fit_intercept

    def _design(self, X):
        X = check_features(X)
        if self.fit_intercept:
            X = np.column_stack([np.ones(X.shape[0]), X])
        return X

    @staticmethod
    def _loglik(y, eta):
        p = expit(eta)
        return float(np.sum(xlogy(y, p) + xlogy(1.0 - y, 1.0 - p)))

    def fit(self, X, y, offset=None):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        D = self._design(X)
        y = check_unit_interval(y, "labels")
        if len(y) != D.shape[0]:
            raise ValueError("X and y have inconsistent lengths")
        if not 0.0 < y.mean() < 1.0:
            raise ValueError("logistic fit needs at least one positive and one negative label")
        off = np.zeros(len(y)) if offset is None else np.asarray(offset, dtype=float)

        beta = np.zeros(D.shape[1])
        eta = off + D @ beta
        ll = self._loglik(y, eta)
        path = [ll]
        converged = False
        grad = D.T @ (y - expit(eta))
        for it in range(1, self.max_iter + 1):
            p = expit(eta)
            w = p * (1.0 - p)
            grad = D.T @ (y - p)
            H = D.T @ (D * w[:, None])
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
            t = 1.0
            for _ in range(40):
                cand = beta + t * step
                eta_c = off + D @ cand
                ll_c = self._loglik(y, eta_c)
                if ll_c >= ll - 1e-12 * abs(ll):
                    break
                t *= 0.5
            else:
                cand, eta_c, ll_c = beta, eta, ll
            if ll_c < path[-1] - 1e-9 * (abs(path[-1]) + 1.0):
                raise AssertionError("IRLS log-likelihood decreased")
            beta, eta = cand, eta_c
            change = abs(ll_c - ll) / (abs(ll_c) + 0.1)
            ll = ll_c
            path.append(ll)
            if change < self.tol:
                converged = True
                break
        self.n_iter_ = it
        self.loglik_path_ = np.array(path)
        linpred = eta - off
        binary = np.isin(y, (0.0, 1.0)).all()
        if (binary and -ll < 1e-6 * len(y)) or np.max(np.abs(linpred)) > 50:
            raise SeparationError(
                "coefficients diverge (the classes appear separated); try the kernel learner"
            )
        if not converged:
            raise ConvergenceError(
                f"IRLS did not converge in {self.max_iter} iterations; "
                f"final gradient norm {np.linalg.norm(grad):.3g}"
            )
        if self.fit_intercept:
            self.intercept_, self.coef_ = float(beta[0]), beta[1:].copy()
        else:
            self.intercept_, self.coef_ = 0.0, beta.copy()
        return self

    def decision_function(self, X, offset=None):
        check_is_fitted(self, "coef_")
        X = check_features(X)
        eta = self.intercept_ + X @ self.coef_
        return eta if offset is None else eta + np.asarray(offset, dtype=float)

    def predict_mean(self, X, offset=None):
        """Fitted probability ``P(label = 1 | X)``."""
        return expit(self.decision_function(X, offset))

    def predict_proba(self, X, offset=None):
        p = self.predict_mean(X, offset)
        return np.column_stack([1.0 - p, p])

    def predict(self, X, offset=None):
        return (self.predict_mean(X, offset) >= 0.5).astype(int)


def silverman_bandwidth(X) -> np.ndarray:
    """Per-covariate rule-of-thumb bandwidth ``0.9 min(sd, IQR/1.34) n^(-1/5)``."""
    X = check_features(X)
    n = X.shape[0]
    sd = X.std(axis=0, ddof=1) if n > 1 else np.zeros(X.shape[1])
    q75, q25 = np.percentile(X, [75, 25], axis=0)
    spread = np.minimum(sd, (q75 - q25) / 1.34)
    spread = np.where(spread > 0, spread, sd)
    spread = np.where(spread > 0, spread, 1.0)
    return 0.9 * spread * n ** (-0.2)


class NadarayaWatson(RegressorMixin, BaseEstimator):
    """Gaussian product-kernel local average.

    Parameters
    ----------
    bandwidth : "silverman", float or array of shape (p,)
    chunk_size : int
        Query rows processed per block (bounds memory use).

    Query points with zero total kernel weight receive the training mean;
    ``predict(..., return_fallback=True)`` reports which ones.
    """

    def __init__(self, bandwidth="silverman", chunk_size: int = 2048):
        self.bandwidth = bandwidth
        self.chunk_size = chunk_size

    def fit(self, X, y):
        X = check_features(X)
        y = check_unit_interval(y, "labels")
        if X.shape[0] < 2:
            raise ValueError("kernel regression needs at least two training points")
        if len(y) != X.shape[0]:
            raise ValueError("X and y have inconsistent lengths")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "silverman":
                raise ValueError(f"unknown bandwidth rule {self.bandwidth!r}")
            h = silverman_bandwidth(X)
        else:
            h = np.broadcast_to(np.asarray(self.bandwidth, dtype=float), (X.shape[1],)).copy()
            if np.any(h <= 0):
                raise ValueError("bandwidth must be positive")
        self.bandwidth_ = h
        self.X_ = X / h
        self.y_ = y
        self.global_mean_ = float(y.mean())
        return self

    def predict(self, X, return_fallback: bool = False):
        check_is_fitted(self, "X_")
        Q = check_features(X) / self.bandwidth_
        out = np.empty(Q.shape[0])
        fallback = np.zeros(Q.shape[0], dtype=bool)
        for start in range(0, Q.shape[0], self.chunk_size):
            q = Q[start : start + self.chunk_size]
            d2 = ((q[:, None, :] - self.X_[None, :, :]) ** 2).sum(axis=2)
            w = np.exp(-0.5 * d2)
            total = w.sum(axis=1)
            zero = total <= 0
            with np.errstate(invalid="ignore", divide="ignore"):
                est = (w @ self.y_) / total
            est[zero] = self.global_mean_
            out[start : start + len(q)] = est
            fallback[start : start + len(q)] = zero
        out = np.clip(out, 0.0, 1.0)
        return (out, fallback) if return_fallback else out

    def predict_mean(self, X):
        return self.predict(X)


class ConstantModel(BaseEstimator):
    """Predicts a fixed value; used when a training label vector is constant."""

    def __init__(self, value: float = 0.0):
        self.value = value

    def fit(self, X=None, y=None):
        return self

    def predict_mean(self, X):
        return np.full(check_features(X).shape[0], float(self.value))


def fit_logistic(features, labels, offset=None, *, max_iter: int = 100, tol: float = 1e-8) -> LogisticIRLS:
    return LogisticIRLS(max_iter=max_iter, tol=tol).fit(features, labels, offset)


def fit_kernel(features, labels, bandwidth="silverman") -> NadarayaWatson:
    return NadarayaWatson(bandwidth=bandwidth).fit(features, labels)


@dataclass(frozen=True)
class LearnerSpec:
    kind: str = "logistic"
    max_iter: int = 100
    tol: float = 1e-8
    bandwidth: str | float = "silverman"
    eps_clip: float = 0.01

    def __post_init__(self):
        if self.kind not in ("logistic", "kernel"):
            raise ValueError(f"learner kind must be 'logistic' or 'kernel', got {self.kind!r}")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not isinstance(self.bandwidth, str) and self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if not 0.0 < self.eps_clip < 0.5:
            raise ValueError("eps_clip must lie in (0, 0.5)")

    def make(self):
        if self.kind == "logistic":
            return LogisticIRLS(max_iter=self.max_iter, tol=self.tol)
        return NadarayaWatson(bandwidth=self.bandwidth)


def _fit(spec: LearnerSpec, X, y, notes: list, label: str):
    if y.min() == y.max():
        notes.append(f"{label}: constant labels, constant model used")
        return ConstantModel(float(y[0]))
    return spec.make().fit(X, y)


def cross_fit_nuisances(d: Dataset, folds: FoldAssignment, spec: LearnerSpec | None = None) -> NuisanceValues:
    """Out-of-fold predictions of all five nuisances, clipped by ``spec.eps_clip``."""
    spec = spec or LearnerSpec()
    if folds.n != d.n:
        raise ValueError("fold assignment does not match dataset size")
    X, a, c, y = d.x, d.a, d.c, d.y
    out = {k: np.full(d.n, np.nan) for k in NUISANCE_NAMES}
    notes: list[str] = []
    fallback = 0
    for f in range(folds.k):
        train = folds.train_index(f)
        test = folds.test_index(f)
        # honesty bookkeeping: a unit is never scored by a model that saw it
        assert not np.intersect1d(train, test).size
        for arm in (0, 1):
            in_arm = train[a[train] == arm]
            if in_arm.size == 0:
                raise EstimationError(f"fold {f}: training complement has no units in arm {arm}")
            if not np.any(c[in_arm] == 0):
                raise EstimationError(f"fold {f}: training complement has no uncensored units in arm {arm}")
        if np.all(a[train] == a[train][0]):
            raise EstimationError(f"fold {f}: treatment is constant in the training complement")
        try:
            m = _fit(spec, X[train], a[train].astype(float), notes, f"fold {f} e")
            out["e"][test] = m.predict_mean(X[test])
            for arm in (0, 1):
                idx = train[a[train] == arm]
                m = _fit(spec, X[idx], c[idx].astype(float), notes, f"fold {f} pi{arm}")
                out[f"pi{arm}"][test] = m.predict_mean(X[test])
                idx = idx[c[idx] == 0]
                m = _fit(spec, X[idx], y[idx], notes, f"fold {f} mu{arm}")
                if isinstance(m, NadarayaWatson):
                    pred, fb = m.predict(X[test], return_fallback=True)
                    fallback += int(fb.sum())
                else:
                    pred = m.predict_mean(X[test])
                out[f"mu{arm}"][test] = pred
        except ValueError as exc:
            raise EstimationError(f"fold {f}: {exc}") from exc
    diagnostics = {"learner": spec.kind, "folds": folds.k, "fold_seed": folds.seed, "notes": notes}
    if spec.kind == "kernel":
        diagnostics["kernel_fallbacks"] = fallback
    eta = NuisanceValues(**out, diagnostics=diagnostics).clipped(spec.eps_clip)
    eta.check_clipped(spec.eps_clip)
    return eta


# --------------------------------------------------------------------------
# perturbation


def _per_nuisance(value, name: str) -> dict[str, float]:
    if isinstance(value, Mapping):
        unknown = set(value) - set(NUISANCE_NAMES)
        if unknown:
            raise ValueError(f"{name}: unknown nuisance names {sorted(unknown)}")
        return {k: float(value.get(k, 1.0)) for k in NUISANCE_NAMES}
    return {k: float(value) for k in NUISANCE_NAMES}


@dataclass(frozen=True)
class PerturbationSpec:
    """``eta_hat = expit(logit(eta) + G)`` with ``G ~ N(c1 n^-alpha, c2 n^-2alpha)``.

    ``c1`` and ``c2`` may be scalars or mappings keyed by nuisance name
    (missing keys default to 1).  The perturbed propensity is ``e = P(A=1|X)``;
    ``1 - e`` follows from it.
    """

    alpha: float
    n: int
    c1: float | Mapping[str, float] = 1.0
    c2: float | Mapping[str, float] = 1.0
    seed: int | None = None
    eps_clip: float = 0.01

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.n < 1:
            raise ValueError("n must be positive")
        if any(v < 0 for v in self.c2_map.values()):
            raise ValueError("c2 must be non-negative")
        _per_nuisance(self.c1, "c1")

    @property
    def c1_map(self) -> dict[str, float]:
        return _per_nuisance(self.c1, "c1")

    @property
    def c2_map(self) -> dict[str, float]:
        return _per_nuisance(self.c2, "c2")

    def moments(self, name: str) -> tuple[float, float]:
        """Mean and standard deviation of the logit-scale shift for ``name``."""
        scale = self.n ** (-self.alpha)
        return self.c1_map[name] * scale, np.sqrt(self.c2_map[name]) * scale


def perturb_nuisance(true_values: NuisanceValues, spec: PerturbationSpec, rng=None) -> NuisanceValues:
    """Logit-scale Gaussian perturbation of every nuisance, then clipping.

    Draws are made nuisance by nuisance in the order ``e, pi0, pi1, mu0, mu1``
    from ``rng`` (or from ``default_rng(spec.seed)``).
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    out = {}
    for name in NUISANCE_NAMES:
        v = getattr(true_values, name)
        with np.errstate(divide="ignore"):
            z = logit(v)
        if not np.all(np.isfinite(z)):
            raise ValueError(f"nuisance {name} must lie strictly inside (0, 1) to be perturbed")
        loc, sd = spec.moments(name)
        out[name] = expit(z + rng.normal(loc, sd, size=v.shape))
    diagnostics = {"perturbation": {"alpha": spec.alpha, "n": spec.n}}
    return NuisanceValues(**out, diagnostics=diagnostics).clipped(spec.eps_clip)

