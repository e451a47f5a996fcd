import math

import numpy as np
import pytest

from censbounds.estimators import (
    BoundEstimate,
    SensitivityParams,
    aggregate_seeds,
    bounds_bounded_risk,
    bounds_general,
    bounds_monotone,
    bounds_psi1,
    bounds_psi2_smooth,
    bounds_unconfounded,
    coefs_point_ate,
    coefs_unconfounded,
    estimate_functional,
    naive_estimate,
    point_ate,
    point_psi1,
    point_psi2,
)
from censbounds.influence import SmoothingSpec, influence_arrays
from censbounds.nuisance import NuisanceValues
from censbounds.oracle import DiscretePopulation, observed_cells, population_bounds, running_example
from censbounds.pipeline import estimate_set


def _random_rows(rng, n=400, censor=True, eps=0.05):
    eta = NuisanceValues(
        rng.uniform(0.2, 0.8, n),
        rng.uniform(0.05, 0.4, n) if censor else np.zeros(n),
        rng.uniform(0.05, 0.4, n) if censor else np.zeros(n),
        rng.uniform(0.05, 0.5, n),
        rng.uniform(0.05, 0.5, n),
    )
    a = (rng.random(n) < eta.e).astype(int)
    c = (rng.random(n) < np.where(a == 1, eta.pi1, eta.pi0)).astype(int)
    y = np.where(c == 1, np.nan, (rng.random(n) < np.where(a == 1, eta.mu1, eta.mu0)).astype(float))
    return influence_arrays(a, c, y, eta, SmoothingSpec(eps))


def _cells_mean(pop, eps):
    a, c, y, w, eta = observed_cells(pop)
    rows = influence_arrays(a, c, y, eta, SmoothingSpec(eps))
    return lambda coefs: float(w @ rows.combine(coefs))


# --------------------------------------------------------------------------


def test_estimate_functional_indicator_mean(rng):
    rows = _random_rows(rng)
    est = estimate_functional(rows, {"phi7_1": 1.0})
    a = rows["phi7_1"]
    assert est.point == pytest.approx(a.mean())
    assert est.se == pytest.approx(math.sqrt(a.mean() * (1 - a.mean()) / (rows.n - 1)))
    lo, hi = est.ci
    assert hi - est.point == pytest.approx(1.959963984540054 * est.se)
    assert est == estimate_functional(rows, {"phi7_1": 1.0})


def test_interval_has_no_point_accessors(rng):
    b = bounds_general(_random_rows(rng))
    with pytest.raises(AttributeError):
        b.point
    assert set(b.to_dict()) >= {"lower", "upper", "ci_lower", "coefficients_used", "diagnostics"}


def test_collapses_are_exact(rng):
    rows = _random_rows(rng)
    naive = naive_estimate(rows).point
    for est in (
        point_ate(rows, SensitivityParams(tau=1.0, delta0=0.3, delta1=0.9)),
        point_ate(rows, SensitivityParams(tau=4.0, delta0=0.0, delta1=0.0)),
        point_psi1(rows, SensitivityParams(delta0=0.0, delta1=0.0)),
        point_psi2(rows, SensitivityParams(delta0=0.0)),
    ):
        assert est.point == naive
    z = SensitivityParams(tau=1.0, delta_u0=0.0, delta_u1=0.0)
    for est in (
        bounds_bounded_risk(rows, SensitivityParams(tau=1.0)),
        bounds_monotone(rows, "positive", z),
        bounds_monotone(rows, "negative", z),
        bounds_psi1(rows, z),
        bounds_psi2_smooth(rows, z),
        bounds_bounded_risk(rows, SensitivityParams(tau=3.0, delta_u0=0.0, delta_u1=0.0)),
    ):
        assert est.lower == naive and est.upper == naive


def test_no_censoring_general_bounds_collapse(rng):
    rows = _random_rows(rng, censor=False)
    b = bounds_general(rows)
    assert b.lower == pytest.approx(naive_estimate(rows).point, abs=1e-14)
    assert b.upper == pytest.approx(naive_estimate(rows).point, abs=1e-14)


def test_psi1_interval_collapses_to_point(rng):
    rows = _random_rows(rng)
    p = SensitivityParams(delta0=0.4, delta1=0.7, delta_l0=0.4, delta_u0=0.4, delta_l1=0.7, delta_u1=0.7)
    b = bounds_psi1(rows, p)
    assert b.lower == pytest.approx(point_psi1(rows, p).point, abs=1e-14)
    assert b.upper == pytest.approx(b.lower, abs=1e-14)


def test_unconfounded_manski_collapse():
    """No censoring and e = 1/2: width-one interval centred at E[mu1 - mu0]/2."""
    x = np.array([0.0, 1.0])
    mu0, mu1 = np.array([0.2, 0.4]), np.array([0.5, 0.6])
    zero = np.zeros(2)
    pop = DiscretePopulation(x=x, p=np.array([0.5, 0.5]), e=np.full(2, 0.5), pi_star0=zero, pi_star1=zero,
                             pi_ni0=zero, pi_ni1=zero, mu0=mu0, mu1=mu1, mu_star0=mu0, mu_star1=mu1)  # fmt: skip
    mean = _cells_mean(pop, 0.05)
    half = float(np.mean(mu1 / 2 - mu0 / 2))
    for target in ("psi0", "psi1"):
        lo, hi = coefs_unconfounded(target)
        assert mean(lo) == pytest.approx(-0.5 + half, abs=1e-12)
        assert mean(hi) == pytest.approx(0.5 + half, abs=1e-12)


def test_unconfounded_ordering(rng):
    rows = _random_rows(rng)
    for target in ("psi0", "psi1"):
        b = bounds_unconfounded(rows, target)
        assert b.lower <= b.upper


@pytest.mark.parametrize("eps", [0.01, 0.05])
def test_catalog_matches_direct_population_forms(eps):
    """Coefficient vectors averaged over the exact cell distribution equal the direct displays."""
    pop = running_example()
    params = SensitivityParams(tau=3.0, delta0=0.4, delta1=0.7, delta_l0=0.1, delta_u0=0.8, delta_l1=0.2,
                               delta_u1=0.9, epsilon=eps)  # fmt: skip
    truth = population_bounds(pop, params)
    a, c, y, w, eta = observed_cells(pop)
    rows = influence_arrays(a, c, y, eta, SmoothingSpec(eps))
    from censbounds.pipeline import ASSUMPTION_SETS

    names = {"psi1": "psi1-bounds", "psi2": "psi2-smooth"}
    for s in ASSUMPTION_SETS:
        est = estimate_set(rows, s, params)
        coefs = est.coefficients_used
        key = names.get(s, s)
        if est.kind == "point":
            value = float(w @ rows.combine(coefs["point"]))
            assert value == pytest.approx(truth[key], abs=1e-10), s
        else:
            lo = float(w @ rows.combine(coefs["lower"]))
            hi = float(w @ rows.combine(coefs["upper"]))
            assert (lo, hi) == pytest.approx(truth[key], abs=1e-10), s


def test_running_example_point_ate_hand_value():
    pop = running_example()
    mean = _cells_mean(pop, 0.05)
    value = mean(coefs_point_ate(2.0, 2.0, 0.7, 0.7))
    assert value == pytest.approx(0.135 + 0.7 * (0.0681 - 0.0212), abs=5e-4)


def test_nesting_on_random_configurations():
    checked = skipped = 0
    for k in range(100):
        rng = np.random.default_rng(k)
        rows = _random_rows(rng, n=200)
        tau = float(rng.uniform(1.0, 4.0))
        du0, du1 = rng.uniform(0, 1, 2)
        g = {a: rows[f"phi3_{a}"].mean() for a in (0, 1)}
        h = {a: rows[f"phi2_{a}"].mean() - g[a] for a in (0, 1)}
        # sign conditions, plus tau-scaled risk staying a probability in the mean
        ok = all(g[a] >= 0 and h[a] >= 0 and (tau - 1) * g[a] <= h[a] for a in (0, 1))
        if not ok:
            skipped += 1
            continue
        checked += 1
        p = SensitivityParams(tau=tau, delta0=du0, delta1=du1, delta_u0=du0, delta_u1=du1)
        gen = bounds_general(rows)
        pos = bounds_monotone(rows, "positive", p)
        br = bounds_bounded_risk(rows, p)
        pt = point_ate(rows, p).point
        tol = 1e-12
        assert gen.lower <= pos.lower + tol and pos.upper <= gen.upper + tol
        assert gen.lower <= br.lower + tol and br.upper <= gen.upper + tol
        assert br.lower - tol <= pt <= br.upper + tol
    assert checked >= 50, f"only {checked} configurations met the sign conditions ({skipped} skipped)"


def test_bounded_risk_width_monotone(rng):
    rows = _random_rows(rng)
    widths = []
    for tau in np.linspace(1, 5, 9):
        b = bounds_bounded_risk(rows, SensitivityParams(tau=float(tau), delta_u0=0.6, delta_u1=0.6))
        widths.append(b.upper - b.lower)
    assert np.all(np.diff(widths) >= -1e-14)
    widths = [
        (lambda b: b.upper - b.lower)(bounds_bounded_risk(rows, SensitivityParams(tau=2.0, delta_u0=d, delta_u1=d)))
        for d in np.linspace(0, 1, 6)
    ]
    assert np.all(np.diff(widths) >= -1e-14)


def test_parameter_validation(rng):
    rows = _random_rows(rng)
    with pytest.raises(ValueError, match="tau"):
        bounds_bounded_risk(rows, SensitivityParams())
    with pytest.raises(ValueError, match="tau >= 1"):
        bounds_bounded_risk(rows, SensitivityParams(tau=0.5))
    with pytest.raises(ValueError, match="delta0 and delta1"):
        point_ate(rows, SensitivityParams(tau=2.0))
    with pytest.raises(ValueError):
        SensitivityParams(delta_u0=1.5)
    with pytest.raises(ValueError):
        SensitivityParams(delta_l0=0.6, delta_u0=0.5)
    with pytest.raises(ValueError, match="epsilon"):
        bounds_psi2_smooth(rows, SensitivityParams(epsilon=0.1))
    with pytest.raises(ValueError):
        estimate_functional(_random_rows(rng, n=1), {"phi7_1": 1.0})


def test_crossed_bounds_are_reported_not_clamped():
    # one treated uncensored failure and one control uncensored success: naive = 1 - 0
    eta = NuisanceValues([0.5, 0.5], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0])
    rows = influence_arrays([1, 0], [0, 0], [0.0, 1.0], eta)
    b = bounds_bounded_risk(rows, SensitivityParams(tau=1.0))
    assert b.diagnostics["crossed"] is False
    fake = BoundEstimate("interval", 0.3, 0.1, 0.1, 0.1, (0, 0), (0, 0), 0.05)
    agg = aggregate_seeds([fake]).as_estimate()
    assert agg.diagnostics["crossed"] is True and agg.lower == 0.3


def _pt(v, se):
    return BoundEstimate("point", v, v, se, se, (v, v), (v, v), 0.05, label="x")


def test_aggregate_seeds_hand_value():
    agg = aggregate_seeds([_pt(0.1, 0.05), _pt(0.2, 0.05), _pt(0.3, 0.05)])
    assert agg.point == pytest.approx(0.2)
    assert agg.se_lower == pytest.approx(math.sqrt(0.0025 + 0.01))
    assert agg.se_lower == pytest.approx(0.1118, abs=1e-4)


def test_aggregate_seeds_trivial_cases():
    single = aggregate_seeds([_pt(0.4, 0.02)])
    assert single.point == 0.4 and single.se_lower == 0.02
    same = aggregate_seeds([_pt(0.4, 0.02)] * 5)
    assert same.se_lower == pytest.approx(0.02)
    with pytest.raises(ValueError):
        aggregate_seeds([])
    with pytest.raises(ValueError):
        aggregate_seeds([_pt(0.1, 0.1), BoundEstimate("interval", 0, 1, 1, 1, (0, 0), (0, 0), 0.05, label="x")])


def test_aggregate_median_within_range(rng):
    ests = [_pt(float(v), float(s)) for v, s in zip(rng.normal(size=11), rng.uniform(0.01, 0.1, 11))]
    agg = aggregate_seeds(ests)
    values = [e.lower for e in ests]
    assert min(values) <= agg.point <= max(values)
