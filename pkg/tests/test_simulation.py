import numpy as np
import pytest

from censbounds.dgp import DGPParams
from censbounds.nuisance import EstimationError
from censbounds.simulation import (
    ESTIMANDS,
    PRESETS,
    StudyConfig,
    generate_population,
    run_study,
    sample_dataset,
)


def test_population_structure(small_population):
    pop = small_population
    assert pop.N == 300_000
    assert np.all(np.isnan(pop.y[pop.c == 1]))
    assert np.array_equal(pop.c == 1, pop.u_informative | pop.u_noninformative)
    assert np.array_equal(pop.y[pop.c == 0], pop.y_latent[pop.c == 0])


def test_population_matches_truth(small_population, dgp_truth):
    pop = small_population
    e = 1 / (1 + np.exp(-pop.x))
    for a, key in ((1, "omega1"), (0, "omega2")):
        # E[pi_a] = E[1{A=a} C / P(A=a|X)]
        v = np.where(pop.a == a, pop.c / (e if a == 1 else 1 - e), 0.0)
        assert abs(v.mean() - dgp_truth[key]) < 4 * v.std() / np.sqrt(pop.N)


def test_generation_is_seeded():
    a = generate_population(DGPParams(N=1000, seed=3))
    b = generate_population(DGPParams(N=1000, seed=3))
    np.testing.assert_array_equal(a.c, b.c)
    d1, d2 = sample_dataset(a, 100, seed=1), sample_dataset(a, 100, seed=1)
    assert d1 == d2 and d1.n == 100
    with pytest.raises(ValueError):
        sample_dataset(a, 5000, seed=1)


def test_perturb_study_small(small_population, dgp_truth):
    cfg = StudyConfig(n=500, reps=60, alpha=0.3, seed=4)
    report = run_study(small_population, dgp_truth, cfg)
    assert list(report.summaries) == list(ESTIMANDS)
    for s in report.summaries.values():
        assert s.replications == 60 and 0 <= s.coverage <= 1
        assert s.rmse >= abs(s.bias)
    lines = report.to_csv().splitlines()
    assert lines[0] == "estimand,mode,alpha,n,reps,truth,bias,rmse,coverage,mean_se,sd,failures"
    assert len(lines) == 7
    d = report.to_dict()
    assert d["generator"] == "numpy.random.PCG64" and d["config"]["alpha"] == 0.3


def test_study_independent_of_worker_count(small_population, dgp_truth):
    cfg = StudyConfig(n=300, reps=8, alpha=0.3, seed=9, keep_replications=True)
    serial = run_study(small_population, dgp_truth, cfg)
    parallel = run_study(small_population, dgp_truth, StudyConfig(**{**cfg.__dict__, "n_jobs": 2}))
    for k in ESTIMANDS:
        np.testing.assert_array_equal(serial.replications[k]["estimate"], parallel.replications[k]["estimate"])


def test_learner_study_runs(small_population, dgp_truth):
    report = run_study(small_population, dgp_truth, StudyConfig(n=400, reps=5, mode="learner", seed=2))
    assert report.failures == 0
    assert "alpha" not in report.to_dict()["config"]


def test_config_validation(small_population, dgp_truth):
    with pytest.raises(ValueError):
        StudyConfig(mode="bogus")
    with pytest.raises(ValueError):
        StudyConfig(estimands=("omega9",))
    with pytest.raises(ValueError):
        StudyConfig(c2=-1.0)
    with pytest.raises(ValueError, match="epsilon"):
        run_study(small_population, dgp_truth, StudyConfig(reps=2, epsilon=0.1))
    assert set(PRESETS) >= {"unit"}


def test_failures_above_threshold_raise(small_population, dgp_truth, monkeypatch):
    import censbounds.simulation as sim

    monkeypatch.setattr(sim, "_replicate", lambda r: None)
    with pytest.raises(EstimationError, match="replications failed"):
        run_study(small_population, dgp_truth, StudyConfig(reps=3))


def test_presets_are_valid_perturbations():
    for c1, c2 in PRESETS.values():
        StudyConfig(alpha=0.3, c1=c1, c2=c2)
