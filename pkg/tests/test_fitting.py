import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quantal_hierarchy.data import EmptyObservations, ObservationSet, from_frequencies, observed_vector, sample_observations
from quantal_hierarchy.evaluation import rmse
from quantal_hierarchy.fitting import (
    SEARCH_SPACES,
    CVPlan,
    InsufficientData,
    Param,
    _Split,
    adaptive_search,
    cross_validate,
    fit_model,
    make_splits,
)
from quantal_hierarchy.games import get_experiment
from quantal_hierarchy.models import ModelSpec, parse_model, predict


@pytest.fixture(scope="module")
def ultimatum():
    return get_experiment("ultimatum:10-10")


@pytest.fixture(scope="module")
def centipede():
    return get_experiment("centipede:4")


# -- search space ------------------------------------------------------------------


@given(st.floats(0.0, 1.0))
def test_search_bounds(u):
    for fam, space in SEARCH_SPACES.items():
        for p in space.params:
            x = float(p.from_unit(np.array(u)))
            assert p.lo <= x <= p.hi
            if p.upper_open:
                assert x < p.hi
    gamma = SEARCH_SPACES["qh"].params[1]
    assert float(gamma.from_unit(np.array(1.0))) == 1.0
    assert float(gamma.from_unit(np.array(0.0))) == 0.0


def test_bounds_as_listed():
    qh = {p.name: (p.lo, p.hi, p.upper_open) for p in SEARCH_SPACES["qh"].params}
    assert qh == {"beta": (0.0, 100.0, True), "gamma": (0.0, 1.0, False)}
    assert [(p.lo, p.hi) for p in SEARCH_SPACES["qre"].params] == [(0.0, 100.0)]
    assert [(p.lo, p.hi) for p in SEARCH_SPACES["ch"].params] == [(0.0, 10.0)]


def test_warp_is_monotone():
    p = Param("x", 0.0, 100.0, warp=0.05)
    xs = p.from_unit(np.linspace(0, 1, 1001))
    assert np.all(np.diff(xs) > 0)
    assert xs[0] == 0.0


# -- adaptive search ---------------------------------------------------------------------


@pytest.mark.parametrize("budget", [1, 2, 7, 100, 333])
def test_search_uses_exact_budget(budget):
    calls = []

    def f(u):
        calls.append(u.copy())
        return float(np.sum((u - 0.3) ** 2))

    _, _, n = adaptive_search(f, 2, budget, np.random.default_rng(0))
    assert n == len(calls) == budget
    assert all(np.all((c >= 0) & (c <= 1)) for c in calls)


def test_search_finds_minimum():
    best, val, _ = adaptive_search(lambda u: float(np.sum((u - [0.3, 0.8]) ** 2)), 2, 400, np.random.default_rng(1))
    assert val < 1e-6
    np.testing.assert_allclose(best, [0.3, 0.8], atol=1e-3)


def test_search_deterministic():
    f = lambda u: float(np.sin(7 * u[0]) + u[0] ** 2)
    a = adaptive_search(f, 1, 50, np.random.default_rng(9))
    b = adaptive_search(f, 1, 50, np.random.default_rng(9))
    assert a[1] == b[1] and np.array_equal(a[0], b[0])


# -- fit_model ------------------------------------------------------------------------


def test_evaluation_counts(ultimatum):
    target = predict(ultimatum, parse_model("qh:beta=0.5,gamma=0.7"))
    assert fit_model("qre", ultimatum, target, budget=20).evaluations == 20
    assert fit_model("qh", ultimatum, target, budget=None).evaluations == 1000
    assert fit_model("levelk", ultimatum, target).evaluations == 101
    assert fit_model("nash", ultimatum, target).evaluations == 1


def test_qh_recovery_on_ultimatum(ultimatum):
    truth = predict(ultimatum, parse_model("qh:beta=0.5,gamma=0.7"))
    fit = fit_model("qh", ultimatum, truth, budget=300, seed=4)
    assert rmse(predict(ultimatum, fit.spec), truth) < 0.01


def test_uniform_data_is_level_zero(ultimatum):
    fit = fit_model("levelk", ultimatum, np.full(101, 1 / 101))
    assert fit.spec.params["k"] == 0
    assert fit.train_mse == pytest.approx(0.0, abs=1e-30)


def test_flat_market_data_is_level_zero():
    exp = get_experiment("market:block1")
    fit = fit_model("levelk", exp, np.full(10, 10.0))
    assert fit.spec.params["k"] == 0


def test_fit_is_deterministic(centipede):
    target = np.array([0.1, 0.4, 0.3, 0.1, 0.1])
    a = fit_model("ch", centipede, target, budget=30, seed=5)
    b = fit_model("ch", centipede, target, budget=30, seed=5)
    assert a == b


def test_fit_rejects_empty(centipede):
    obs = ObservationSet("centipede:4", ("all",), (np.arange(5.0),), (np.zeros(5, dtype=np.int64),))
    with pytest.raises(EmptyObservations):
        fit_model("qh", centipede, obs)


def test_more_budget_does_not_hurt(ultimatum):
    rng = np.random.default_rng(11)
    truth = predict(ultimatum, parse_model("qh:beta=0.3,gamma=0.4"))
    small, large = [], []
    for seed in range(20):
        target = observed_vector(sample_observations("ultimatum:10-10", truth, 200, rng), None)
        small.append(fit_model("qh", ultimatum, target, budget=100, seed=seed).train_mse)
        large.append(fit_model("qh", ultimatum, target, budget=1000, seed=seed).train_mse)
    assert np.mean(large) <= np.mean(small)


# -- cross-validation ---------------------------------------------------------------


@pytest.fixture(scope="module")
def centipede_obs():
    truth = predict(get_experiment("centipede:4"), parse_model("qh:beta=2,gamma=0.5"))
    return sample_observations("centipede:4", truth, 300, np.random.default_rng(2))


def test_plan_validation():
    with pytest.raises(ValueError):
        CVPlan(folds=3)
    with pytest.raises(ValueError):
        CVPlan(repeats=0)


def test_cv_has_ten_fits(centipede, centipede_obs):
    res = cross_validate("qre", centipede, centipede_obs, CVPlan(seed=1), budget=15)
    assert len(res.folds) == 10
    assert sorted({(f.repeat, f.fold) for f in res.folds}) == [(r, f) for r in range(5) for f in range(2)]
    assert res.rmse_mean == pytest.approx(np.mean([f.test_rmse for f in res.folds]))
    assert set(res.mean_params) == {"lambda"}


def test_cv_constant_model_error(centipede, centipede_obs):
    plan = CVPlan(seed=3)
    splits = make_splits(centipede_obs, plan)
    res = cross_validate("nash", centipede, centipede_obs, plan, splits=splits)
    const = predict(centipede, ModelSpec("nash"))
    want = [np.sqrt(np.mean((const - sp.vectors[1 - f]) ** 2)) for sp in splits for f in range(2)]
    assert res.rmse_mean == pytest.approx(np.mean(want), abs=1e-15)


def test_cv_duplicated_halves(centipede, centipede_obs):
    vec = observed_vector(centipede_obs)
    splits = [_Split(r, (centipede_obs, centipede_obs), (vec, vec)) for r in range(5)]
    res = cross_validate("ch", centipede, centipede_obs, CVPlan(), budget=12, splits=splits)
    for f in res.folds:
        assert f.test_rmse == pytest.approx(np.sqrt(f.fit.train_mse), rel=1e-12)


def test_cv_fold_swap_symmetry(centipede, centipede_obs):
    plan = CVPlan(seed=7, repeats=2)
    splits = make_splits(centipede_obs, plan)
    swapped = [_Split(sp.repeat, sp.halves[::-1], sp.vectors[::-1]) for sp in splits]
    a = cross_validate("qre", centipede, centipede_obs, plan, budget=15, splits=splits)
    b = cross_validate("qre", centipede, centipede_obs, plan, budget=15, splits=swapped)
    assert a.rmse_mean == b.rmse_mean
    assert sorted(f.test_rmse for f in a.folds) == sorted(f.test_rmse for f in b.folds)


def test_cv_deterministic(centipede, centipede_obs):
    a = cross_validate("qh", centipede, centipede_obs, CVPlan(seed=5, repeats=2), budget=10)
    b = cross_validate("qh", centipede, centipede_obs, CVPlan(seed=5, repeats=2), budget=10)
    assert [f.fit.spec for f in a.folds] == [f.fit.spec for f in b.folds]
    assert a.rmse_mean == b.rmse_mean


def test_cv_needs_data(centipede):
    tiny = from_frequencies("centipede:4", [1, 0, 0, 0, 0], 3)
    with pytest.raises(InsufficientData):
        make_splits(tiny, CVPlan())


def test_cv_smooths_halves_independently():
    obs = sample_observations("beauty:lab", np.full(101, 1 / 101), 80, np.random.default_rng(0))
    sp = make_splits(obs, CVPlan(repeats=1), "silverman")[0]
    np.testing.assert_allclose(sp.vectors[0], observed_vector(sp.halves[0], "silverman"))
    np.testing.assert_allclose(sp.vectors[1], observed_vector(sp.halves[1], "silverman"))
