"""Tipping-point analysis for the point-identified ATE.

With a common risk ratio ``tau`` and informative fractions ``delta_a``,

    Psi_0 = naive + (tau - 1) (delta_1 g_1 - delta_0 g_0),   g_a = E[pi_a mu_a].

Setting this to zero gives the smallest ``tau`` that can explain away a
naive association and, for a fixed ``tau``, the line in the
``(delta_1, delta_0)`` plane beyond which the sign flips.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .estimators import coefs_naive
from .influence import InfluenceMatrix

__all__ = [
    "RegionCurve",
    "SignThreshold",
    "TippingResult",
    "tipping_tau",
    "delta_region",
    "region_csv",
    "max_delta_for_sign",
    "tipping_analysis",
    "tipping_from_rows",
]


def _check_graves(grave_mu0: float, grave_mu1: float) -> None:
    if not (grave_mu0 > 0 and grave_mu1 > 0):
        raise ValueError("grave means E[pi_a mu_a] must be positive")


def tipping_tau(naive: float, grave_mu0: float, grave_mu1: float) -> float:
    """Smallest risk ratio at which the identified ATE can reach zero."""
    _check_graves(grave_mu0, grave_mu1)
    if naive > 0:
        return 1.0 + naive / grave_mu0
    if naive < 0:
        return 1.0 - naive / grave_mu1
    return 1.0


@dataclass(frozen=True)
class RegionCurve:
    """Zero line of the identified ATE at a fixed ``tau``.

    For a positive naive estimate the grid is over ``delta1`` and
    ``threshold`` is the minimal ``delta0`` that explains the effect away;
    for a negative one the roles of the arms swap (``grid_arm == "delta0"``).
    """

    tau: float
    grid_arm: str
    grid: np.ndarray
    threshold: np.ndarray
    feasible: np.ndarray
    intercept: float
    slope: float

    @property
    def threshold_arm(self) -> str:
        return "delta0" if self.grid_arm == "delta1" else "delta1"

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "grid_arm": self.grid_arm,
            "intercept": self.intercept,
            "slope": self.slope,
            "any_feasible": bool(self.feasible.any()),
        }


def delta_region(tau: float, naive: float, grave_mu0: float, grave_mu1: float, grid=None) -> RegionCurve:
    if not tau > 1:
        raise ValueError("tau must exceed 1")
    _check_graves(grave_mu0, grave_mu1)
    grid = np.linspace(0.0, 1.0, 101) if grid is None else np.asarray(grid, dtype=float)
    shift = naive / (tau - 1.0)
    if naive >= 0:
        arm, intercept, slope = "delta1", shift / grave_mu0, grave_mu1 / grave_mu0
    else:
        arm, intercept, slope = "delta0", -shift / grave_mu1, grave_mu0 / grave_mu1
    threshold = intercept + slope * grid
    return RegionCurve(float(tau), arm, grid, threshold, threshold <= 1.0, float(intercept), float(slope))


def region_csv(curves) -> str:
    """Plot-ready CSV: ``tau, delta1, delta0_min, feasible`` (arms swapped for a negative naive)."""
    curves = list(curves)
    if not curves:
        raise ValueError("no region curves to write")
    arms = {c.grid_arm for c in curves}
    if len(arms) != 1:
        raise ValueError("curves mix orientations")
    first = curves[0]
    buf = io.StringIO()
    buf.write(f"tau,{first.grid_arm},{first.threshold_arm}_min,feasible\n")
    for c in curves:
        for g, t, f in zip(c.grid, c.threshold, c.feasible):
            buf.write(f"{c.tau!r},{float(g)!r},{float(t)!r},{int(f)}\n")
    return buf.getvalue()


@dataclass(frozen=True)
class SignThreshold:
    family: str
    endpoint: str
    parameter: str
    delta: float
    naive: float
    slope: float

    @property
    def robust(self) -> bool:
        """True when the endpoint keeps the naive sign for every fraction in [0, 1]."""
        return self.delta > 1.0 or self.delta < 0.0

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "endpoint": self.endpoint,
            "parameter": self.parameter,
            "delta": self.delta,
            "robust": self.robust,
            "naive": self.naive,
            "slope": self.slope,
        }


# endpoint = naive + sign * delta * E[column combination]
_SIGN_TABLE = {
    ("mono-pos", "lower"): ("delta_u0", -1.0, {"phi2_0": 1.0, "phi3_0": -1.0}),
    ("mono-pos", "upper"): ("delta_u1", 1.0, {"phi2_1": 1.0, "phi3_1": -1.0}),
    ("mono-neg", "lower"): ("delta_u1", -1.0, {"phi3_1": 1.0}),
    ("mono-neg", "upper"): ("delta_u0", 1.0, {"phi3_0": 1.0}),
}


def max_delta_for_sign(rows: InfluenceMatrix, bound_family: str, endpoint: str) -> SignThreshold:
    """Informative fraction at which a monotone-bound endpoint crosses zero."""
    try:
        parameter, sign, coefs = _SIGN_TABLE[(bound_family, endpoint)]
    except KeyError:
        raise ValueError(f"unsupported bound family/endpoint {bound_family!r}/{endpoint!r}") from None
    naive = float(rows.combine(coefs_naive()).mean())
    denom = float(rows.combine(coefs).mean())
    if not denom > 0:
        raise ValueError("degenerate denominator: the correction functional is not positive")
    return SignThreshold(bound_family, endpoint, parameter, -naive / (sign * denom), naive, sign * denom)


@dataclass(frozen=True)
class TippingResult:
    naive: float
    grave_mu0: float
    grave_mu1: float
    tau_threshold: float
    region_curves: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "naive": self.naive,
            "grave_mu0": self.grave_mu0,
            "grave_mu1": self.grave_mu1,
            "tau_threshold": self.tau_threshold,
            "region_curves": [c.to_dict() for c in self.region_curves],
        }


def tipping_analysis(naive: float, grave_mu0: float, grave_mu1: float, taus=(), grid=None) -> TippingResult:
    curves = [delta_region(t, naive, grave_mu0, grave_mu1, grid) for t in taus]
    return TippingResult(naive, grave_mu0, grave_mu1, tipping_tau(naive, grave_mu0, grave_mu1), curves)


def tipping_from_rows(rows: InfluenceMatrix, taus=(), grid=None) -> TippingResult:
    """Tipping analysis with the naive effect and grave means estimated from ``rows``."""
    return tipping_analysis(
        float(rows.combine(coefs_naive()).mean()),
        float(rows["phi3_0"].mean()),
        float(rows["phi3_1"].mean()),
        taus,
        grid,
    )
