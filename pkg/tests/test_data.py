import numpy as np
import pytest

from censbounds.data import DataValidationError, Dataset, Observation, load_dataset, save_dataset, split_folds


def _toy():
    return Dataset([[0.1], [0.2], [0.3], [0.4]], [0, 1, 0, 1], [0, 0, 1, 0], [1.0, 0.0, None, 0.5])


def test_dataset_basic_shape_and_readonly():
    d = _toy()
    assert d.n == len(d) == 4
    assert d.covariate_names == ["x1"]
    assert np.isnan(d.y[2])
    assert d.y_filled[2] == 0.0
    with pytest.raises(ValueError):
        d.x[0, 0] = 5.0


def test_observation_roundtrip():
    d = _toy()
    obs = d.observations
    assert obs[2] == Observation((0.3,), 0, 1, None)
    assert Dataset.from_observations(obs) == d


@pytest.mark.parametrize(
    "kwargs, message",
    [
        (dict(y=[1.0, 0.0, 0.5, 0.5]), "outcome present for censored unit, row 3"),
        (dict(y=[None, 0.0, None, 0.5]), "outcome absent for uncensored unit, row 1"),
        (dict(a=[0, 2, 0, 1]), "non-binary a at row 2"),
        (dict(y=[1.5, 0.0, None, 0.5]), "outside [0, 1], row 1"),
    ],
)
def test_dataset_validation_names_the_row(kwargs, message):
    base = dict(x=[[0.1], [0.2], [0.3], [0.4]], a=[0, 1, 0, 1], c=[0, 0, 1, 0], y=[1.0, 0.0, None, 0.5])
    base.update(kwargs)
    with pytest.raises(DataValidationError, match=message.replace("[", r"\[").replace("]", r"\]")):
        Dataset(**base)


def test_observation_validation():
    with pytest.raises(ValueError):
        Observation((0.0,), 1, 1, 0.5)
    with pytest.raises(ValueError):
        Observation((0.0,), 1, 0, None)


def test_check_estimable():
    d = Dataset([[0.0], [1.0]], [1, 1], [0, 0], [1.0, 0.0])
    with pytest.raises(DataValidationError, match="arm 0"):
        d.check_estimable()
    d = Dataset([[0.0], [1.0]], [0, 1], [0, 1], [1.0, None])
    with pytest.raises(DataValidationError, match="uncensored units in treatment arm 1"):
        d.check_estimable()


def test_csv_roundtrip_is_exact(tmp_path, rng):
    n = 50
    c = rng.integers(0, 2, n)
    y = np.where(c == 1, np.nan, rng.random(n))
    d = Dataset(rng.normal(size=(n, 2)), rng.integers(0, 2, n), c, y, ["age", "bmi"])
    path = tmp_path / "d.csv"
    save_dataset(d, path)
    assert load_dataset(path) == d
    assert path.read_text().splitlines()[0] == "y,a,c,age,bmi"


@pytest.mark.parametrize(
    "body, message",
    [
        ("y,a,c,x1\n0.5,1,0,0.1\n1,1,1,0.2\n", "row 2"),
        ("y,a,c,x1\n,0,0,0.1\n", "outcome absent for uncensored unit, row 1"),
        ("y,a,c,x1\n0.5,3,0,0.1\n", "non-binary a"),
        ("y,a,c,x1\n0.5,1,0\n", "expected 4 fields"),
        ("a,y,c,x1\n", "header"),
        ("", "empty"),
        ("y,a,c,x1\n", "no observations"),
        ("y,a,c,x1\n0.5,1,0,abc\n", "malformed"),
    ],
)
def test_load_dataset_errors(tmp_path, body, message):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(DataValidationError, match=message):
        load_dataset(path)


def test_split_folds_balanced_and_deterministic():
    f = split_folds(101, 2, seed=7)
    assert sorted(f.sizes().tolist()) == [50, 51]
    assert np.array_equal(f.fold_of, split_folds(101, 2, seed=7).fold_of)
    assert not np.array_equal(f.fold_of, split_folds(101, 2, seed=8).fold_of)
    for k in range(2):
        assert np.intersect1d(f.test_index(k), f.train_index(k)).size == 0
        assert len(f.test_index(k)) + len(f.train_index(k)) == 101


def test_split_folds_errors():
    with pytest.raises(ValueError):
        split_folds(10, 1)
    with pytest.raises(ValueError):
        split_folds(3, 5)
