"""Exact population values of every functional and bound.

A :class:`DiscretePopulation` tabulates the structural model at finitely many
covariate points: the informative (``pi_star``) and non-informative
(``pi_ni``) censoring probabilities, and the outcome risks without (``mu``)
and with (``mu_star``) informative censoring.  Everything in this module is
computed from those structural quantities by finite summation, independently
of the influence-function machinery it is used to check.  The continuous
simulation design is handled by turning a Gauss-Legendre rule into such a
population.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from .dgp import BREAKPOINTS, DOMAIN, DGPParams, informative_prob, noninformative_prob, outcome_risks, propensity
from .estimators import SensitivityParams
from .nuisance import NuisanceValues
from .sensitivity import delta_region, tipping_tau

__all__ = [
    "DiscretePopulation",
    "QuadratureSpec",
    "QuadratureError",
    "running_example",
    "population_functionals",
    "population_bounds",
    "observed_cells",
    "dgp_population",
    "population_truth_dgp",
    "running_example_report",
    "format_table",
]


@dataclass(frozen=True)
class DiscretePopulation:
    """Structural model on a finite covariate support (arrays indexed by support point)."""

    x: np.ndarray
    p: np.ndarray
    e: np.ndarray
    pi_star0: np.ndarray
    pi_star1: np.ndarray
    pi_ni0: np.ndarray
    pi_ni1: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    mu_star0: np.ndarray
    mu_star1: np.ndarray

    def __post_init__(self):
        k = len(np.asarray(self.p))
        for name in self.__dataclass_fields__:
            v = np.asarray(getattr(self, name), dtype=float)
            if name != "x" and v.shape != (k,):
                raise ValueError(f"{name} must have one entry per support point")
            object.__setattr__(self, name, v)
            if name != "x" and (np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v))):
                raise ValueError(f"{name} must lie in [0, 1]")
        if abs(self.p.sum() - 1.0) > 1e-12:
            raise ValueError("support probabilities must sum to 1")
        if np.any(self.pi0 >= 1) or np.any(self.pi1 >= 1):
            raise ValueError("composite censoring probability must be below 1")

    @property
    def pi0(self) -> np.ndarray:
        return self.pi_star0 + self.pi_ni0 - self.pi_star0 * self.pi_ni0

    @property
    def pi1(self) -> np.ndarray:
        return self.pi_star1 + self.pi_ni1 - self.pi_star1 * self.pi_ni1

    def arm(self, a: int) -> dict[str, np.ndarray]:
        if a == 1:
            return dict(e=self.e, pi=self.pi1, pi_star=self.pi_star1, mu=self.mu1, mu_star=self.mu_star1)
        return dict(e=1.0 - self.e, pi=self.pi0, pi_star=self.pi_star0, mu=self.mu0, mu_star=self.mu_star0)

    def expect(self, values) -> float:
        return float(np.dot(self.p, values))

    def nuisances(self) -> NuisanceValues:
        return NuisanceValues(e=self.e, pi0=self.pi0, pi1=self.pi1, mu0=self.mu0, mu1=self.mu1)


def running_example() -> DiscretePopulation:
    """Binary covariate with ``P(X = 1) = 0.7``.

    ``mu_0 = 0.1 + 0.05 x``, ``mu_1 = 2 mu_0``, informatively censored units
    have double the risk, and non-informative censoring has half the
    informative probabilities, composed independently.
    """
    x = np.array([0.0, 1.0])
    mu0 = 0.1 + 0.05 * x
    mu1 = 2 * mu0
    ps0 = np.array([0.07, 0.12])
    ps1 = np.array([0.14, 0.19])
    return DiscretePopulation(
        x=x, p=np.array([0.3, 0.7]), e=np.full(2, 0.5),
        pi_star0=ps0, pi_star1=ps1, pi_ni0=ps0 / 2, pi_ni1=ps1 / 2,
        mu0=mu0, mu1=mu1, mu_star0=2 * mu0, mu_star1=2 * mu1,
    )  # fmt: skip


def _smooth_part(delta, eps, sign):
    return delta * norm.cdf(sign * delta / eps)


def population_functionals(pop: DiscretePopulation, epsilon: float = 0.05) -> dict[str, float]:
    """Target parameters and the observed-data functionals they are built from."""
    E = pop.expect
    a1, a0 = pop.arm(1), pop.arm(0)
    # potential-outcome risks: informative censoring switches the risk to mu_star
    risk = {a: E(arm["pi_star"] * arm["mu_star"] + (1 - arm["pi_star"]) * arm["mu"]) for a, arm in ((1, a1), (0, a0))}
    # composite outcome: failure or informative censoring
    comp = {a: E(arm["pi_star"] + (1 - arm["pi_star"]) * arm["mu"]) for a, arm in ((1, a1), (0, a0))}
    d = pop.mu1 - pop.mu0
    return {
        "naive": E(d),
        "psi0": risk[1] - risk[0],
        "psi1": comp[1] - comp[0],
        # effect on the outcome with the informative-censoring mechanism held at control
        "psi2": E((1 - pop.pi_star0) * d),
        "E_mu0": E(pop.mu0),
        "E_mu1": E(pop.mu1),
        "omega1": E(pop.pi1),
        "omega2": E(pop.pi0),
        "omega3": E(pop.pi1 * pop.mu1),
        "omega4": E(pop.pi0 * pop.mu0),
        "omega5": E(pop.pi0 * _smooth_part(d, epsilon, 1.0)),
        "grave_mu0": E(pop.pi0 * pop.mu0),
        "grave_mu1": E(pop.pi1 * pop.mu1),
        "E_mu1_pi0": E(pop.mu1 * pop.pi0),
        "omega": E(pop.e),
        "censored_fraction": E(pop.e * pop.pi1 + (1 - pop.e) * pop.pi0),
        "informative_fraction": E(pop.e * pop.pi_star1 + (1 - pop.e) * pop.pi_star0)
        / E(pop.e * pop.pi1 + (1 - pop.e) * pop.pi0),
    }


def population_bounds(pop: DiscretePopulation, params: SensitivityParams | None = None) -> dict:
    """Every bound and point formula evaluated exactly on ``pop``.

    Entries needing parameters that ``params`` does not carry (``tau``,
    ``delta0``/``delta1``) are omitted.
    """
    params = params or SensitivityParams()
    E = pop.expect
    f = population_functionals(pop, params.epsilon)
    naive = f["naive"]
    pi0, pi1, mu0, mu1, e1 = pop.pi0, pop.pi1, pop.mu0, pop.mu1, pop.e
    e0 = 1 - e1
    g0, g1 = E(pi0 * mu0), E(pi1 * mu1)
    h0, h1 = E(pi0 * (1 - mu0)), E(pi1 * (1 - mu1))
    dl0, du0, dl1, du1 = params.delta_l0, params.delta_u0, params.delta_l1, params.delta_u1
    d = mu1 - mu0
    out = dict(f)
    # censored outcomes set to 0 (lower) or 1 (upper) in the favourable arm
    out["general"] = (naive - g1 - h0, naive + h1 + g0)
    out["mono-pos"] = (naive - du0 * h0, naive + du1 * h1)
    out["mono-neg"] = (naive - du1 * g1, naive + du0 * g0)
    out["psi1-bounds"] = (naive + dl1 * h1 - du0 * h0, naive + du1 * h1 - dl0 * h0)
    out["psi2-bounds"] = (naive - du0 * E(pi0 * np.maximum(d, 0)), naive + du0 * E(pi0 * np.maximum(-d, 0)))
    out["psi2-smooth"] = (
        naive - du0 * E(pi0 * _smooth_part(d, params.epsilon, 1.0)),
        naive - du0 * E(pi0 * _smooth_part(d, params.epsilon, -1.0)),
    )
    # without no-unmeasured-confounding: the unobserved arm contributes 0 or 1 per unit
    obs_fail1 = E(e1 * (1 - pi1) * mu1)
    obs_fail0 = E(e0 * (1 - pi0) * mu0)
    out["unconfounded-psi0"] = (
        obs_fail1 - (obs_fail0 + E(e0 * pi0)) - E(e1),
        obs_fail1 + E(e1 * pi1) + E(e0) - obs_fail0,
    )
    out["unconfounded-psi1"] = (
        E(e1 * mu1) + dl1 * E(e1 * pi1 * (1 - mu1)) - E(e0 * mu0) - du0 * E(e0 * pi0 * (1 - mu0)) - E(e1),
        E(e1 * mu1) + du1 * E(e1 * pi1 * (1 - mu1)) - E(e0 * mu0) - dl0 * E(e0 * pi0 * (1 - mu0)) + E(e0),
    )
    if params.tau is not None or (params.tau0 is not None and params.tau1 is not None):
        t0, t1 = params.taus()
        if t0 >= 1 and t1 >= 1:
            out["bounded-risk"] = (
                naive + du1 * (1 / t1 - 1) * g1 - du0 * (t0 - 1) * g0,
                naive + du1 * (t1 - 1) * g1 - du0 * (1 / t0 - 1) * g0,
            )
        if params.delta0 is not None and params.delta1 is not None:
            out["point"] = naive + (t1 - 1) * params.delta1 * g1 - (t0 - 1) * params.delta0 * g0
    if params.delta0 is not None and params.delta1 is not None:
        out["point-psi1"] = naive + params.delta1 * h1 - params.delta0 * h0
        out["point-psi2"] = naive - params.delta0 * E(pi0 * d)
    return out


def observed_cells(pop: DiscretePopulation):
    """Enumerate every observable ``(x, a, c, y)`` cell with its probability.

    Returns ``(a, c, y, weights, eta)`` where ``y`` is ``NaN`` for censored
    cells and ``eta`` holds the true nuisances of each cell.  A weighted mean
    of influence values over the cells is an exact population expectation.
    """
    a_out, c_out, y_out, w_out, idx = [], [], [], [], []
    for i in range(len(pop.p)):
        for a in (0, 1):
            arm = pop.arm(a)
            pa = pop.p[i] * arm["e"][i]
            cells = [(1, np.nan, arm["pi"][i])]
            cells += [(0, 1.0, (1 - arm["pi"][i]) * arm["mu"][i]), (0, 0.0, (1 - arm["pi"][i]) * (1 - arm["mu"][i]))]
            for c, y, q in cells:
                a_out.append(a)
                c_out.append(c)
                y_out.append(y)
                w_out.append(pa * q)
                idx.append(i)
    idx = np.array(idx)
    return (
        np.array(a_out),
        np.array(c_out),
        np.array(y_out),
        np.array(w_out),
        pop.nuisances().subset(idx),
    )


# --------------------------------------------------------------------------
# simulation design by quadrature


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    """``nodes`` points in total, spread over the smooth pieces of the integrand.

    The censoring curves have kinks at ``x = 0`` and ``x = 1``; integrating
    each piece separately keeps Gauss-Legendre at spectral accuracy.
    """

    nodes: int = 1024
    rule: str = "gauss-legendre"
    domain: tuple[float, float] = DOMAIN

    def __post_init__(self):
        if self.nodes < 64:
            raise ValueError("quadrature needs at least 64 nodes")
        if self.rule not in ("gauss-legendre", "midpoint"):
            raise ValueError("rule must be 'gauss-legendre' or 'midpoint'")

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.domain
        cuts = [lo, *[b for b in BREAKPOINTS if lo < b < hi], hi]
        xs, ws = [], []
        for left, right in zip(cuts[:-1], cuts[1:]):
            m = max(16, int(round(self.nodes * (right - left) / (hi - lo))))
            if self.rule == "gauss-legendre":
                t, w = np.polynomial.legendre.leggauss(m)
            else:
                t = (np.arange(m) + 0.5) / m * 2 - 1
                w = np.full(m, 2.0 / m)
            xs.append(left + (t + 1) * (right - left) / 2)
            ws.append(w * (right - left) / 2)
        return np.concatenate(xs), np.concatenate(ws)

    def refined(self) -> "QuadratureSpec":
        return QuadratureSpec(self.nodes * 2, self.rule, self.domain)


def dgp_population(dgp: DGPParams, quad: QuadratureSpec | None = None) -> DiscretePopulation:
    """The uniform-covariate design as a weighted population on quadrature nodes."""
    quad = quad or QuadratureSpec()
    x, w = quad.points()
    lo, hi = quad.domain
    p = w / (hi - lo)
    p = p / p.sum()
    mu = {a: outcome_risks(x, a, dgp) for a in (0, 1)}
    return DiscretePopulation(
        x=x, p=p, e=propensity(x),
        pi_star0=informative_prob(x, 0, dgp), pi_star1=informative_prob(x, 1, dgp),
        pi_ni0=noninformative_prob(x, 0, dgp), pi_ni1=noninformative_prob(x, 1, dgp),
        mu0=mu[0][0], mu1=mu[1][0], mu_star0=mu[0][1], mu_star1=mu[1][1],
    )  # fmt: skip


def _flatten(report: dict) -> dict[str, float]:
    flat = {}
    for k, v in report.items():
        if isinstance(v, tuple):
            flat[f"{k}.lower"], flat[f"{k}.upper"] = v
        else:
            flat[k] = v
    return flat


def population_truth_dgp(dgp: DGPParams | None = None, quad: QuadratureSpec | None = None,
                         params: SensitivityParams | None = None, tol: float = 1e-10) -> dict:
    """Quadrature truth for the simulation design, checked against a refined rule.

    ``params`` defaults to the design's own risk ratios and informative
    fractions.  The bounded-risk entry uses ``max(tau, 1/tau)`` per arm,
    the smallest ``tau`` whose assumption the design satisfies.
    """
    dgp = dgp or DGPParams()
    quad = quad or QuadratureSpec()
    if params is None:
        params = SensitivityParams(tau0=dgp.tau0, tau1=dgp.tau1, delta0=dgp.delta0, delta1=dgp.delta1)
    t0, t1 = params.taus() if params.tau0 is not None or params.tau is not None else (1.0, 1.0)
    risk_params = replace(params, tau=None, tau0=max(t0, 1 / t0), tau1=max(t1, 1 / t1))

    def evaluate(q):
        pop = dgp_population(dgp, q)
        values = population_bounds(pop, params)
        values["bounded-risk"] = population_bounds(pop, risk_params)["bounded-risk"]
        return _flatten(values)

    coarse, fine = evaluate(quad), evaluate(quad.refined())
    worst = max(abs(coarse[k] - fine[k]) for k in coarse)
    if worst > tol:
        raise QuadratureError(f"quadrature refinement changed a value by {worst:.3g} (> {tol:g})")
    coarse["bounded-risk.tau0"], coarse["bounded-risk.tau1"] = risk_params.taus()
    coarse["epsilon"] = params.epsilon
    coarse["quadrature_refinement_change"] = worst
    return coarse


def running_example_report() -> dict:
    """All quantities quoted for the running example, computed exactly."""
    pop = running_example()
    base = population_bounds(pop, SensitivityParams(tau=3.0, delta0=0.5, delta1=0.5, epsilon=0.01))
    d08 = population_bounds(pop, SensitivityParams(tau=3.0, delta_u0=0.8, delta_u1=0.8))
    naive, g0, g1 = base["naive"], base["grave_mu0"], base["grave_mu1"]
    region = delta_region(10.0, naive, g0, g1, grid=[0.0, 1.0])
    report = {
        "psi0": base["psi0"],
        "naive": naive,
        "psi1": base["psi1"],
        "psi2": base["psi2"],
        "grave_mu0": g0,
        "grave_mu1": g1,
        "censored_fraction": base["censored_fraction"],
        "informative_fraction": base["informative_fraction"],
        "general": base["general"],
        "mono-pos(delta=1)": base["mono-pos"],
        "mono-pos(delta=0.8)": d08["mono-pos"],
        "bounded-risk(tau=3,delta=1)": base["bounded-risk"],
        "bounded-risk(tau=3,delta=0.8)": d08["bounded-risk"],
        "psi1-bounds": base["psi1-bounds"],
        "psi2-bounds": base["psi2-bounds"],
        "psi2-smooth(eps=0.01)": base["psi2-smooth"],
        "unconfounded-psi0": base["unconfounded-psi0"],
        "unconfounded-psi1": base["unconfounded-psi1"],
        "tau_threshold": tipping_tau(naive, g0, g1),
        "region(tau=10).intercept": region.intercept,
        "region(tau=10).slope": region.slope,
        # informative fraction in arm 0 at which the monotone lower bound reaches 0
        "mono-pos.lower.sign_threshold": naive / (base["omega2"] - g0),
    }
    return _flatten(report)


def format_table(values: dict[str, float], digits: int = 4) -> str:
    width = max(len(k) for k in values)
    return "\n".join(f"{k:<{width}}  {v: .{digits}f}" for k, v in values.items()) + "\n"
