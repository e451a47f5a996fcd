"""Bounds, point estimates and Wald intervals from an influence matrix.

Every estimate here is ``P_n[a' phi]`` for a coefficient mapping ``a`` over
the influence columns, with standard error ``sd(a' phi) / sqrt(n)``.  The
coefficient mappings are built by the ``coefs_*`` functions, which form the
estimator catalog and are recorded in each result.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm

from ._validation import check_fraction
from .influence import InfluenceMatrix

__all__ = [
    "SensitivityParams",
    "BoundEstimate",
    "SeedAggregate",
    "estimate_functional",
    "bounds_general",
    "bounds_monotone",
    "bounds_bounded_risk",
    "point_ate",
    "bounds_psi1",
    "point_psi1",
    "bounds_psi2_smooth",
    "point_psi2",
    "bounds_unconfounded",
    "aggregate_seeds",
    "naive_estimate",
    "coefs_naive",
    "coefs_general",
    "coefs_monotone",
    "coefs_bounded_risk",
    "coefs_point_ate",
    "coefs_psi1",
    "coefs_point_psi1",
    "coefs_psi2",
    "coefs_point_psi2",
    "coefs_unconfounded",
]


@dataclass(frozen=True)
class SensitivityParams:
    """Sensitivity parameters.

    ``tau`` is the risk ratio between informatively censored and uncensored
    units (``tau0``/``tau1`` override it per arm).  ``delta0``/``delta1`` are
    the informative fractions of censoring used for point identification and
    ``delta_l*``/``delta_u*`` bound those fractions.  ``epsilon`` is the
    smoothing scale for the separable-direct-effect bounds.
    """

    tau: float | None = None
    tau0: float | None = None
    tau1: float | None = None
    delta0: float | None = None
    delta1: float | None = None
    delta_l0: float = 0.0
    delta_u0: float = 1.0
    delta_l1: float = 0.0
    delta_u1: float = 1.0
    epsilon: float = 0.05

    def __post_init__(self):
        for name in ("delta0", "delta1", "delta_l0", "delta_u0", "delta_l1", "delta_u1"):
            v = getattr(self, name)
            if v is not None:
                check_fraction(v, name)
        if self.delta_l0 > self.delta_u0 or self.delta_l1 > self.delta_u1:
            raise ValueError("lower informative fraction exceeds upper")
        for name in ("tau", "tau0", "tau1"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be a non-negative finite number")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError("epsilon must be positive")

    def taus(self) -> tuple[float, float]:
        """``(tau0, tau1)``, falling back to the common ``tau``."""
        t0 = self.tau0 if self.tau0 is not None else self.tau
        t1 = self.tau1 if self.tau1 is not None else self.tau
        if t0 is None or t1 is None:
            raise ValueError("missing parameter: tau (or tau0 and tau1)")
        return float(t0), float(t1)

    def deltas(self) -> tuple[float, float]:
        if self.delta0 is None or self.delta1 is None:
            raise ValueError("missing parameter: delta0 and delta1")
        return float(self.delta0), float(self.delta1)

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# coefficient catalog

Coefs = dict[str, float]


def _add(*parts: Mapping[str, float]) -> Coefs:
    out: Coefs = {}
    for part in parts:
        for k, v in part.items():
            out[k] = out.get(k, 0.0) + float(v)
    return out


def coefs_naive() -> Coefs:
    return {"phi1_1": 1.0, "phi1_0": -1.0}


def coefs_general() -> tuple[Coefs, Coefs]:
    lower = _add(coefs_naive(), {"phi3_1": -1.0, "phi2_0": -1.0, "phi3_0": 1.0})
    upper = _add(coefs_naive(), {"phi2_1": 1.0, "phi3_1": -1.0, "phi3_0": 1.0})
    return lower, upper


def coefs_monotone(direction: str, delta_u0: float, delta_u1: float) -> tuple[Coefs, Coefs]:
    if direction == "positive":
        lower = _add(coefs_naive(), {"phi2_0": -delta_u0, "phi3_0": delta_u0})
        upper = _add(coefs_naive(), {"phi2_1": delta_u1, "phi3_1": -delta_u1})
    elif direction == "negative":
        lower = _add(coefs_naive(), {"phi3_1": -delta_u1})
        upper = _add(coefs_naive(), {"phi3_0": delta_u0})
    else:
        raise ValueError("direction must be 'positive' or 'negative'")
    return lower, upper


def coefs_bounded_risk(tau0: float, tau1: float, delta_u0: float, delta_u1: float) -> tuple[Coefs, Coefs]:
    lower = _add(coefs_naive(), {"phi3_1": delta_u1 * (1 / tau1 - 1), "phi3_0": -delta_u0 * (tau0 - 1)})
    upper = _add(coefs_naive(), {"phi3_1": delta_u1 * (tau1 - 1), "phi3_0": -delta_u0 * (1 / tau0 - 1)})
    return lower, upper


def coefs_point_ate(tau0: float, tau1: float, delta0: float, delta1: float) -> Coefs:
    return _add(coefs_naive(), {"phi3_1": (tau1 - 1) * delta1, "phi3_0": -(tau0 - 1) * delta0})


def coefs_psi1(delta_l0: float, delta_u0: float, delta_l1: float, delta_u1: float) -> tuple[Coefs, Coefs]:
    lower = _add(
        coefs_naive(),
        {"phi2_1": delta_l1, "phi3_1": -delta_l1},
        {"phi2_0": -delta_u0, "phi3_0": delta_u0},
    )
    upper = _add(
        coefs_naive(),
        {"phi2_1": delta_u1, "phi3_1": -delta_u1},
        {"phi2_0": -delta_l0, "phi3_0": delta_l0},
    )
    return lower, upper


def coefs_point_psi1(delta0: float, delta1: float) -> Coefs:
    return coefs_psi1(delta0, delta0, delta1, delta1)[0]


def coefs_psi2(delta_u0: float) -> tuple[Coefs, Coefs]:
    # lower removes the positive part of pi_0 (mu_1 - mu_0), upper the negative part
    lower = _add(coefs_naive(), {"sde_upper": -delta_u0})
    upper = _add(coefs_naive(), {"sde_lower": -delta_u0})
    return lower, upper


def coefs_point_psi2(delta0: float) -> Coefs:
    return _add(coefs_naive(), {"phi3_01": -delta0, "phi3_0": delta0})


def coefs_unconfounded(target: str, params: SensitivityParams | None = None) -> tuple[Coefs, Coefs]:
    """Bounds that drop the no-unmeasured-confounding assumption.

    The unobserved arm of each unit is bounded by 0 and 1, so ``E[e_1]``
    (column ``phi7_1``) and ``E[e_0]`` (``phi7_0``) enter as Manski-type terms.
    """
    # observed-arm pieces: E[e_a (1 - pi_a) mu_a] and E[e_a pi_a (1 - mu_a)]
    def uncensored(a):
        return {f"phi4_{a}": 1.0, f"phi6_{a}": -1.0}

    def censored_fail(a, w):
        return {f"phi5_{a}": w, f"phi6_{a}": -w}

    def neg(c):
        return {k: -v for k, v in c.items()}

    if target == "psi0":
        lower = _add({"phi7_1": -1.0}, uncensored(1), neg(uncensored(0)), {"phi5_0": -1.0})
        upper = _add({"phi7_0": 1.0}, uncensored(1), {"phi5_1": 1.0}, neg(uncensored(0)))
    elif target == "psi1":
        p = params or SensitivityParams()
        # the composite outcome uses mu_a for every unit of the observed arm
        lower = _add(
            {"phi7_1": -1.0, "phi4_1": 1.0, "phi4_0": -1.0},
            censored_fail(1, p.delta_l1), censored_fail(0, -p.delta_u0),
        )  # fmt: skip
        upper = _add(
            {"phi7_0": 1.0, "phi4_1": 1.0, "phi4_0": -1.0},
            censored_fail(1, p.delta_u1), censored_fail(0, -p.delta_l0),
        )  # fmt: skip
    else:
        raise ValueError("target must be 'psi0' or 'psi1'")
    return lower, upper


# --------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class BoundEstimate:
    """An interval (or point) estimate with per-endpoint Wald intervals.

    For ``kind == "point"`` the lower and upper fields coincide.
    """

    kind: str
    lower: float
    upper: float
    se_lower: float
    se_upper: float
    ci_lower: tuple[float, float]
    ci_upper: tuple[float, float]
    alpha_level: float
    coefficients_used: dict = field(default_factory=dict)
    label: str = ""
    params: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def point(self) -> float:
        if self.kind != "point":
            raise AttributeError("interval estimates have no single point value")
        return self.lower

    @property
    def se(self) -> float:
        if self.kind != "point":
            raise AttributeError("interval estimates have per-endpoint standard errors")
        return self.se_lower

    @property
    def ci(self) -> tuple[float, float]:
        if self.kind != "point":
            raise AttributeError("interval estimates have per-endpoint intervals")
        return self.ci_lower

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "label": self.label,
            "alpha_level": self.alpha_level,
        }
        if self.kind == "point":
            d.update(point=self.lower, se=self.se_lower, ci=list(self.ci_lower))
        else:
            d.update(
                lower=self.lower,
                upper=self.upper,
                se_lower=self.se_lower,
                se_upper=self.se_upper,
                ci_lower=list(self.ci_lower),
                ci_upper=list(self.ci_upper),
            )
        d.update(params=self.params, coefficients_used=self.coefficients_used, diagnostics=self.diagnostics)
        return d


def _z(alpha_level: float) -> float:
    if not 0.0 < alpha_level < 1.0:
        raise ValueError("alpha_level must lie in (0, 1)")
    return float(norm.ppf(1.0 - alpha_level / 2.0))


def _mean_se(rows: InfluenceMatrix, coefs: Mapping[str, float]) -> tuple[float, float]:
    if rows.n < 2:
        raise ValueError("at least two units are needed for a standard error")
    v = rows.combine(coefs)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(rows.n))


def estimate_functional(rows: InfluenceMatrix, coefs: Mapping[str, float], alpha_level: float = 0.05,
                        *, label: str = "functional", params: dict | None = None) -> BoundEstimate:
    """One-step estimate of ``E[a' phi]`` with a Wald interval."""
    z = _z(alpha_level)
    est, se = _mean_se(rows, coefs)
    ci = (est - z * se, est + z * se)
    return BoundEstimate(
        kind="point", lower=est, upper=est, se_lower=se, se_upper=se, ci_lower=ci, ci_upper=ci,
        alpha_level=alpha_level, coefficients_used={"point": dict(coefs)}, label=label,
        params=params or {},
    )  # fmt: skip


def _interval(rows, lower_coefs, upper_coefs, alpha_level, label, params) -> BoundEstimate:
    z = _z(alpha_level)
    lo, se_lo = _mean_se(rows, lower_coefs)
    hi, se_hi = _mean_se(rows, upper_coefs)
    return BoundEstimate(
        kind="interval",
        lower=lo,
        upper=hi,
        se_lower=se_lo,
        se_upper=se_hi,
        ci_lower=(lo - z * se_lo, lo + z * se_lo),
        ci_upper=(hi - z * se_hi, hi + z * se_hi),
        alpha_level=alpha_level,
        coefficients_used={"lower": dict(lower_coefs), "upper": dict(upper_coefs)},
        label=label,
        params=params,
        diagnostics={"crossed": bool(lo > hi)},
    )


def naive_estimate(rows: InfluenceMatrix, alpha_level: float = 0.05) -> BoundEstimate:
    """Doubly robust estimate of the complete-case contrast ``E[mu_1 - mu_0]``."""
    return estimate_functional(rows, coefs_naive(), alpha_level, label="naive")


def bounds_general(rows: InfluenceMatrix, alpha_level: float = 0.05) -> BoundEstimate:
    """Assumption-free bounds on the ATE given only the censoring structure."""
    lower, upper = coefs_general()
    return _interval(rows, lower, upper, alpha_level, "general", {})


def bounds_monotone(rows: InfluenceMatrix, direction: str = "positive", params: SensitivityParams | None = None,
                    alpha_level: float = 0.05) -> BoundEstimate:
    """Bounds when informative censoring moves the outcome risk in a known direction."""
    p = params or SensitivityParams()
    lower, upper = coefs_monotone(direction, p.delta_u0, p.delta_u1)
    label = "mono-pos" if direction == "positive" else "mono-neg"
    return _interval(rows, lower, upper, alpha_level, label,
                     {"delta_u0": p.delta_u0, "delta_u1": p.delta_u1})  # fmt: skip


def bounds_bounded_risk(rows: InfluenceMatrix, params: SensitivityParams, alpha_level: float = 0.05) -> BoundEstimate:
    """Bounds when the censored-to-uncensored risk ratio lies in ``[1/tau, tau]``."""
    tau0, tau1 = params.taus()
    if tau0 < 1 or tau1 < 1:
        raise ValueError("bounded-risk bounds need tau >= 1")
    lower, upper = coefs_bounded_risk(tau0, tau1, params.delta_u0, params.delta_u1)
    return _interval(rows, lower, upper, alpha_level, "bounded-risk",
                     {"tau0": tau0, "tau1": tau1, "delta_u0": params.delta_u0, "delta_u1": params.delta_u1})  # fmt: skip


def point_ate(rows: InfluenceMatrix, params: SensitivityParams, alpha_level: float = 0.05) -> BoundEstimate:
    """ATE identified by a known risk ratio and known informative fractions.

    ``Psi_0 = naive + (tau_1 - 1) delta_1 E[pi_1 mu_1] - (tau_0 - 1) delta_0 E[pi_0 mu_0]``
    """
    tau0, tau1 = params.taus()
    delta0, delta1 = params.deltas()
    coefs = coefs_point_ate(tau0, tau1, delta0, delta1)
    return estimate_functional(rows, coefs, alpha_level, label="point",
                               params={"tau0": tau0, "tau1": tau1, "delta0": delta0, "delta1": delta1})  # fmt: skip


def bounds_psi1(rows: InfluenceMatrix, params: SensitivityParams | None = None, alpha_level: float = 0.05) -> BoundEstimate:
    p = params or SensitivityParams()
    lower, upper = coefs_psi1(p.delta_l0, p.delta_u0, p.delta_l1, p.delta_u1)
    return _interval(rows, lower, upper, alpha_level, "psi1",
                     {k: getattr(p, k) for k in ("delta_l0", "delta_u0", "delta_l1", "delta_u1")})  # fmt: skip


def point_psi1(rows: InfluenceMatrix, params: SensitivityParams, alpha_level: float = 0.05) -> BoundEstimate:
    delta0, delta1 = params.deltas()
    return estimate_functional(rows, coefs_point_psi1(delta0, delta1), alpha_level, label="point-psi1",
                               params={"delta0": delta0, "delta1": delta1})  # fmt: skip


def _check_epsilon(rows: InfluenceMatrix, params: SensitivityParams | None) -> float:
    eps = rows.smoothing.epsilon
    if params is not None and not math.isclose(params.epsilon, eps, rel_tol=1e-12):
        raise ValueError(
            f"influence matrix was built with epsilon={eps}, parameters ask for {params.epsilon}"
        )
    return eps


def bounds_psi2_smooth(rows: InfluenceMatrix, params: SensitivityParams | None = None,
                       alpha_level: float = 0.05) -> BoundEstimate:
    """Smoothed bounds on the separable direct effect.

    The positive and negative parts of ``mu_1 - mu_0`` are replaced by
    ``D Phi_eps(D)`` and ``D Phi_eps(-D)``, which makes the bounds pathwise
    differentiable.
    """
    eps = _check_epsilon(rows, params)
    delta_u0 = (params or SensitivityParams()).delta_u0
    lower, upper = coefs_psi2(delta_u0)
    return _interval(rows, lower, upper, alpha_level, "psi2", {"delta_u0": delta_u0, "epsilon": eps})


def point_psi2(rows: InfluenceMatrix, params: SensitivityParams, alpha_level: float = 0.05) -> BoundEstimate:
    if params.delta0 is None:
        raise ValueError("missing parameter: delta0")
    return estimate_functional(rows, coefs_point_psi2(params.delta0), alpha_level, label="point-psi2",
                               params={"delta0": params.delta0})  # fmt: skip


def bounds_unconfounded(rows: InfluenceMatrix, target: str = "psi0", params: SensitivityParams | None = None,
                        alpha_level: float = 0.05) -> BoundEstimate:
    """Bounds on ``Psi_0`` or ``Psi_1`` without assuming no unmeasured confounding."""
    lower, upper = coefs_unconfounded(target, params)
    used = {} if target == "psi0" else {
        k: getattr(params or SensitivityParams(), k) for k in ("delta_l0", "delta_u0", "delta_l1", "delta_u1")
    }  # fmt: skip
    return _interval(rows, lower, upper, alpha_level, f"unconfounded-{target}", used)


# --------------------------------------------------------------------------
# aggregation over sample-splitting seeds


@dataclass(frozen=True)
class SeedAggregate:
    """Median over seeds with a split-variability adjusted standard error."""

    per_seed: tuple[BoundEstimate, ...]
    kind: str
    lower: float
    upper: float
    se_lower: float
    se_upper: float
    alpha_level: float

    @property
    def point(self) -> float:
        if self.kind != "point":
            raise AttributeError("interval aggregates have no single point value")
        return self.lower

    def as_estimate(self) -> BoundEstimate:
        z = _z(self.alpha_level)
        first = self.per_seed[0]
        return replace(
            first,
            lower=self.lower,
            upper=self.upper,
            se_lower=self.se_lower,
            se_upper=self.se_upper,
            ci_lower=(self.lower - z * self.se_lower, self.lower + z * self.se_lower),
            ci_upper=(self.upper - z * self.se_upper, self.upper + z * self.se_upper),
            diagnostics={**first.diagnostics, "crossed": bool(self.lower > self.upper), "seeds": len(self.per_seed)},
        )


def _adjusted(values: np.ndarray, ses: np.ndarray) -> tuple[float, float]:
    med = float(np.median(values))
    return med, float(np.median(np.sqrt(ses**2 + (values - med) ** 2)))


def aggregate_seeds(per_seed: Sequence[BoundEstimate]) -> SeedAggregate:
    """Median endpoints and ``median_s sqrt(se_s^2 + (theta_s - median)^2)`` SEs."""
    per_seed = tuple(per_seed)
    if not per_seed:
        raise ValueError("at least one seed estimate is required")
    kinds = {e.kind for e in per_seed}
    labels = {e.label for e in per_seed}
    if len(kinds) != 1 or len(labels) != 1:
        raise ValueError("cannot aggregate estimates of different kinds")
    alphas = {e.alpha_level for e in per_seed}
    if len(alphas) != 1:
        raise ValueError("cannot aggregate estimates with different alpha levels")
    lo, se_lo = _adjusted(np.array([e.lower for e in per_seed]), np.array([e.se_lower for e in per_seed]))
    hi, se_hi = _adjusted(np.array([e.upper for e in per_seed]), np.array([e.se_upper for e in per_seed]))
    return SeedAggregate(per_seed, kinds.pop(), lo, hi, se_lo, se_hi, alphas.pop())
