import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from zubovnet import ZubovNetRegressor, ZubovValueFunction
from zubovnet.dynsys import DistanceSquared, linear


def test_value_function_linear_closed_form():
    est = ZubovValueFunction(system="linear", M=200.0).fit(np.zeros((1, 2)))
    X = np.array([[1.0, 0.0], [0.5, -2.0], [0.0, 0.0]])
    np.testing.assert_allclose(est.predict(X), np.tanh(0.05 * np.sum(X * X, axis=1)),
                               atol=1e-4)
    assert est.alpha_ == 0.1 and est.calibration_ is None
    assert est.predict_inside(X).all()


def test_value_function_calibrates():
    X = np.random.default_rng(0).uniform(-4, 4, size=(40, 2))
    est = ZubovValueFunction(system="vdp").fit(X)
    assert est.M_ == est.calibration_.M and est.alpha_ * est.M_ == 20.0
    assert len(est.I_sample_) == 40
    assert est.calibration_.n_exceeded > 0


def test_value_function_custom_system():
    est = ZubovValueFunction(system=linear(3), w=DistanceSquared(np.zeros(3)), M=100.0)
    est.fit(np.zeros((1, 3)))
    assert est.predict(np.array([[1.0, 1.0, 1.0]]))[0] == pytest.approx(math.tanh(0.2 * 1.5),
                                                                         abs=1e-4)
    with pytest.raises(ValueError):
        ZubovValueFunction(system=linear(2)).fit(np.zeros((1, 2)))


def test_value_function_feature_checks():
    est = ZubovValueFunction(system="vdp", M=200.0)
    with pytest.raises(NotFittedError):
        est.predict(np.zeros((1, 2)))
    with pytest.raises(ValueError):
        est.fit(np.zeros((2, 3)))
    est.fit(np.zeros((1, 2)))
    with pytest.raises(ValueError):
        est.predict(np.zeros((1, 3)))


def test_inconclusive_predicts_nan():
    est = ZubovValueFunction(system="linear", M=1e12, t_max=2.0, dt_chunk=1.0)
    est.fit(np.zeros((1, 2)))
    with pytest.warns(RuntimeWarning, match="inconclusive"):
        v = est.predict(np.array([[3.0, 0.0]]))
    assert math.isnan(v[0])


def test_params_round_trip_through_clone():
    est = ZubovValueFunction(system="vdp", M=150.0, delta_I=1e-5)
    c = clone(est)
    assert c.get_params() == est.get_params()
    reg = ZubovNetRegressor(hidden_layer_sizes=(3,), epochs=4)
    assert clone(reg).get_params()["hidden_layer_sizes"] == (3,)


@pytest.fixture(scope="module")
def toy():
    rng = np.random.default_rng(1)
    X = rng.uniform(-2, 2, size=(400, 2))
    return X, np.tanh(0.3 * np.sum(X * X, axis=1))


def test_regressor_fit_predict(toy):
    X, y = toy
    reg = ZubovNetRegressor(hidden_layer_sizes=(16, 16), learning_rate=3e-3, batch_size=32,
                            epochs=60, random_state=0).fit(X, y)
    assert reg.score(X, y) > 0.95
    assert reg.validation_.rmse == reg.history_.best_val_rmse
    assert reg.predict(X).shape == (400,)


def test_regressor_explicit_validation(toy):
    X, y = toy
    reg = ZubovNetRegressor(hidden_layer_sizes=(4,), epochs=3).fit(X[:300], y[:300],
                                                                     X[300:], y[300:])
    assert len(reg.history_.val_rmse) == 3
    with pytest.raises(ValueError):
        reg.fit(X, y, X[:, :1], y)


def test_regressor_checks(toy):
    X, y = toy
    reg = ZubovNetRegressor(hidden_layer_sizes=(4,), epochs=2)
    with pytest.raises(NotFittedError):
        reg.predict(X)
    with pytest.raises(ValueError):
        ZubovNetRegressor(validation_fraction=1.5).fit(X, y)
    reg.fit(X, y)
    with pytest.raises(ValueError):
        reg.predict(X[:, :1])


def test_regressor_save_and_reload(tmp_path, toy):
    X, y = toy
    reg = ZubovNetRegressor(hidden_layer_sizes=(5, 3), epochs=3, random_state=2).fit(X, y)
    path = tmp_path / "m.txt"
    reg.save(path)
    back = ZubovNetRegressor.from_file(path)
    assert np.array_equal(back.predict(X), reg.predict(X))
    assert back.hidden_layer_sizes == (5, 3)


def test_regressor_deterministic(toy):
    X, y = toy
    a = ZubovNetRegressor(hidden_layer_sizes=(4,), epochs=3, random_state=5).fit(X, y)
    b = ZubovNetRegressor(hidden_layer_sizes=(4,), epochs=3, random_state=5).fit(X, y)
    assert np.array_equal(a.predict(X), b.predict(X))
