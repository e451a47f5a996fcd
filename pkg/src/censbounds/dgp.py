"""The simulation data-generating process.

``X ~ U(-3, 3)``, ``A | X ~ Bernoulli(expit(X))``.  Censoring in arm ``a`` is
the union of an informative component ``U_I(a)`` with probability
``delta_a pi_C(x, a)`` and a non-informative component ``U_NI(a)`` with
probability ``pi_C (1 - delta_a) / (1 - delta_a pi_C)``, chosen so that the
overall censoring probability is exactly ``pi_C(x, a)``, a piecewise logistic
curve with kinks at ``x = 0`` and ``x = 1``.  Outcomes have risk ``mu_a`` when
``U_I(a) = 0`` and ``mu*_a = tau_a mu_a`` when ``U_I(a) = 1``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from .nuisance import NuisanceValues

__all__ = [
    "DGPParams",
    "BREAKPOINTS",
    "DOMAIN",
    "propensity",
    "censoring_prob",
    "informative_prob",
    "noninformative_prob",
    "outcome_risks",
    "true_nuisances",
]

DOMAIN = (-3.0, 3.0)
BREAKPOINTS = (0.0, 1.0)


@dataclass(frozen=True)
class DGPParams:
    beta0: float = 1.0
    beta1: float = 1.0
    tau0: float = 0.5
    tau1: float = 0.5
    delta0: float = 0.5
    delta1: float = 0.5
    N: int = 2_000_000
    seed: int = 0

    def __post_init__(self):
        for name in ("delta0", "delta1"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        for name in ("tau0", "tau1"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.N < 1:
            raise ValueError("population size must be positive")

    def beta(self, a: int) -> float:
        return self.beta1 if a == 1 else self.beta0

    def tau(self, a: int) -> float:
        return self.tau1 if a == 1 else self.tau0

    def delta(self, a: int) -> float:
        return self.delta1 if a == 1 else self.delta0

    def to_dict(self) -> dict:
        return asdict(self)


def propensity(x):
    return expit(np.asarray(x, dtype=float))


_PIECES = {
    # (x < 0, 0 <= x < 1, x >= 1) as (intercept, slope) on the logit scale
    1: ((0.0, 1.0), (0.0, 0.8), (0.2, 0.6)),
    0: ((0.0, 0.6), (0.0, 0.5), (0.1, 0.4)),
}


def censoring_prob(x, a: int):
    """Overall censoring probability ``pi_C(x, a)``."""
    x = np.asarray(x, dtype=float)
    (b0, s0), (b1, s1), (b2, s2) = _PIECES[a]
    lin = np.where(x < 0, b0 + s0 * x, np.where(x < 1, b1 + s1 * x, b2 + s2 * x))
    return expit(lin)


def informative_prob(x, a: int, params: DGPParams):
    return params.delta(a) * censoring_prob(x, a)


def noninformative_prob(x, a: int, params: DGPParams):
    pc = censoring_prob(x, a)
    d = params.delta(a)
    return pc * (1.0 - d) / (1.0 - d * pc)


def outcome_risks(x, a: int, params: DGPParams):
    """``(mu_a, mu*_a)``: risk without and with informative censoring.

    Whichever of the two is larger follows ``expit(beta_a x)`` so both stay
    in ``[0, 1]`` with ratio ``tau_a``.
    """
    base = expit(params.beta(a) * np.asarray(x, dtype=float))
    tau = params.tau(a)
    if tau <= 1:
        return base, tau * base
    return base / tau, base


def true_nuisances(x, params: DGPParams) -> NuisanceValues:
    x = np.asarray(x, dtype=float)
    return NuisanceValues(
        e=propensity(x),
        pi0=censoring_prob(x, 0),
        pi1=censoring_prob(x, 1),
        mu0=outcome_risks(x, 0, params)[0],
        mu1=outcome_risks(x, 1, params)[0],
    )
