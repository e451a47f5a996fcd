"""Uncentered influence-function values.

For each unit the matrix holds one column per functional; the empirical mean
of a column is the one-step (doubly robust) estimate of that functional and
any bound is a linear combination of columns.  With ``e_1 = e`` and
``e_0 = 1 - e``:

=============  ==============================  ==========================================
column         functional                      value
=============  ==============================  ==========================================
``phi1_a``     ``E[mu_a]``                     ``1{C=0,A=a}/((1-pi_a) e_a) (Y-mu_a) + mu_a``
``phi2_a``     ``E[pi_a]``                     ``1{A=a}/e_a (C-pi_a) + pi_a``
``phi3_a``     ``E[mu_a pi_a]``                product rule on phi1_a, phi2_a
``phi3_01``    ``E[mu_1 pi_0]``                product rule on phi1_1, phi2_0
``phi4_a``     ``E[mu_a e_a]``                 product rule on phi1_a, phi7_a
``phi5_a``     ``E[pi_a e_a]``                 product rule on phi2_a, phi7_a
``phi6_a``     ``E[mu_a pi_a e_a]``            product rule on phi3_a, phi7_a
``phi7_a``     ``E[e_a]``                      ``1{A=a}``
``sde_upper``  ``E[pi_0 D Phi_eps(D)]``        see :func:`phi_smooth_sde`
``sde_lower``  ``E[pi_0 D Phi_eps(-D)]``       see :func:`phi_smooth_sde`
=============  ==============================  ==========================================

where ``D = mu_1 - mu_0`` and the uncentered product rule is
``phi_fg = phi_f g + phi_g f - f g``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.stats import norm

from .data import Dataset, Observation
from .nuisance import NuisanceValues

__all__ = [
    "COLUMNS",
    "SmoothingSpec",
    "InfluenceMatrix",
    "influence_matrix",
    "influence_arrays",
    "influence_row",
    "phi_smooth_sde",
]

COLUMNS = (
    "phi1_0", "phi1_1",
    "phi2_0", "phi2_1",
    "phi3_0", "phi3_1", "phi3_01",
    "phi4_0", "phi4_1",
    "phi5_0", "phi5_1",
    "phi6_0", "phi6_1",
    "phi7_0", "phi7_1",
    "sde_lower", "sde_upper",
)  # fmt: skip

_INDEX = {name: j for j, name in enumerate(COLUMNS)}


@dataclass(frozen=True)
class SmoothingSpec:
    """Standard deviation of the normal-CDF smoother replacing ``1{D > 0}``."""

    epsilon: float = 0.05

    def __post_init__(self):
        if not (self.epsilon > 0 and np.isfinite(self.epsilon)):
            raise ValueError("epsilon must be a positive finite number")


class InfluenceMatrix:
    """An ``(n, len(COLUMNS))`` array of per-unit influence values."""

    def __init__(self, values: np.ndarray, smoothing: SmoothingSpec):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(COLUMNS):
            raise ValueError(f"influence matrix must have {len(COLUMNS)} columns")
        values.setflags(write=False)
        self.values = values
        self.smoothing = smoothing

    columns = COLUMNS

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[:, _INDEX[name]]

    def row(self, i: int) -> dict[str, float]:
        return {name: float(v) for name, v in zip(COLUMNS, self.values[i])}

    def coefficient_vector(self, coefs: Mapping[str, float]) -> np.ndarray:
        unknown = set(coefs) - set(COLUMNS)
        if unknown:
            raise KeyError(f"unknown influence columns {sorted(unknown)}")
        vec = np.zeros(len(COLUMNS))
        for name, w in coefs.items():
            vec[_INDEX[name]] = w
        return vec

    def combine(self, coefs: Mapping[str, float]) -> np.ndarray:
        """Per-unit values of ``a' phi`` for the coefficient mapping ``coefs``."""
        return self.values @ self.coefficient_vector(coefs)

    def means(self) -> dict[str, float]:
        return dict(zip(COLUMNS, (float(v) for v in self.values.mean(axis=0))))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(COLUMNS) + "\n")
        for r in self.values:
            buf.write(",".join(repr(float(v)) for v in r) + "\n")
        return buf.getvalue()


def _smooth_sde(R, c, a0, e0, pi0, delta, eps, side):
    s = 1.0 if side == "upper" else -1.0
    z = s * delta / eps
    cdf = norm.cdf(z)
    dens = norm.pdf(z) / eps
    return (
        R * pi0 * cdf
        + a0 / e0 * (c - pi0) * delta * cdf
        + s * delta * pi0 * dens * R
        + delta * pi0 * cdf
    )


def _compute(a, c, y, eta: NuisanceValues, eps: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    y = np.where(c == 0, y, 0.0)
    if not all(np.all(np.isfinite(v)) for v in eta.as_dict().values()):
        raise ValueError("non-finite nuisance input")
    ind = {1: a, 0: 1.0 - a}
    cols = {}
    for arm in (0, 1):
        e_a, pi_a, mu_a, A = eta.e_arm(arm), eta.pi(arm), eta.mu(arm), ind[arm]
        p1 = (1.0 - c) * A / ((1.0 - pi_a) * e_a) * (y - mu_a) + mu_a
        p2 = A / e_a * (c - pi_a) + pi_a
        p3 = p1 * pi_a + p2 * mu_a - mu_a * pi_a
        cols[f"phi1_{arm}"] = p1
        cols[f"phi2_{arm}"] = p2
        cols[f"phi3_{arm}"] = p3
        cols[f"phi7_{arm}"] = A
        cols[f"phi4_{arm}"] = p1 * e_a + A * mu_a - mu_a * e_a
        cols[f"phi5_{arm}"] = p2 * e_a + A * pi_a - pi_a * e_a
        cols[f"phi6_{arm}"] = p3 * e_a + A * mu_a * pi_a - mu_a * pi_a * e_a
    cols["phi3_01"] = cols["phi1_1"] * eta.pi0 + cols["phi2_0"] * eta.mu1 - eta.mu1 * eta.pi0
    delta = eta.mu1 - eta.mu0
    R = cols["phi1_1"] - cols["phi1_0"] - delta
    for side in ("lower", "upper"):
        cols[f"sde_{side}"] = _smooth_sde(R, c, ind[0], 1.0 - eta.e, eta.pi0, delta, eps, side)
    return np.column_stack([cols[name] for name in COLUMNS])


def influence_matrix(d: Dataset, eta: NuisanceValues, smooth: SmoothingSpec | None = None) -> InfluenceMatrix:
    """Influence values for every unit of ``d`` given its (cross-fitted) nuisances."""
    smooth = smooth or SmoothingSpec()
    if len(eta) != d.n:
        raise ValueError(f"nuisance length {len(eta)} does not match dataset size {d.n}")
    return InfluenceMatrix(_compute(d.a, d.c, d.y, eta, smooth.epsilon), smooth)


def influence_arrays(a, c, y, eta: NuisanceValues, smooth: SmoothingSpec | None = None) -> InfluenceMatrix:
    """As :func:`influence_matrix` but from raw ``a, c, y`` arrays."""
    smooth = smooth or SmoothingSpec()
    if not (len(a) == len(c) == len(y) == len(eta)):
        raise ValueError("length mismatch between data arrays and nuisances")
    if len(a) < 1:
        raise ValueError("at least one unit is required")
    return InfluenceMatrix(_compute(a, c, np.asarray(y, dtype=float), eta, smooth.epsilon), smooth)


def _single(o: Observation, eta: NuisanceValues, smooth: SmoothingSpec) -> InfluenceMatrix:
    if len(eta) != 1:
        raise ValueError("expected nuisance values for a single unit")
    y = np.nan if o.y is None else o.y
    return influence_arrays([o.a], [o.c], [y], eta, smooth)


def influence_row(o: Observation, eta: NuisanceValues, smooth: SmoothingSpec | None = None) -> dict[str, float]:
    """All influence values for one observation, keyed by column name."""
    return _single(o, eta, smooth or SmoothingSpec()).row(0)


def phi_smooth_sde(o: Observation, eta: NuisanceValues, smooth: SmoothingSpec, side: str) -> float:
    """Influence value of ``E[pi_0 D Phi_eps(+-D)]`` for one unit.

    ``side="upper"`` evaluates the smoother at ``D = mu_1 - mu_0`` and
    ``side="lower"`` at ``-D``.  The four terms are the corrections for
    ``mu_1 - mu_0``, for ``pi_0``, for the smoother's argument, and the
    plug-in value.
    """
    if side not in ("lower", "upper"):
        raise ValueError("side must be 'lower' or 'upper'")
    return _single(o, eta, smooth).row(0)[f"sde_{side}"]
