import math

import numpy as np
import pytest

from zubovnet import mlp
from zubovnet.datagen import DataPoint, Dataset
from zubovnet.mlp import (MLPArchitecture, MLPParams, ModelFormatError, TrainConfig,
                          TrainingDivergedError)


def _unit_net(w1=1.0, b1=0.0, w2=2.0, b2=0.5):
    arch = MLPArchitecture(1, (1,))
    return MLPParams(arch, [np.array([[w1]]), np.array([[w2]])],
                     [np.array([b1]), np.array([b2])])


def _flat_grad(gW, gb):
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(gW, gb)])


def fd_check(p, batch):
    """Worst coordinate relative error of the analytic gradient."""
    g = _flat_grad(*mlp.gradient(p, batch))
    th = p.flat()
    worst = 0.0
    for k in range(th.size):
        h = 1e-5 * max(1.0, abs(th[k]))
        e = np.zeros_like(th)
        e[k] = h
        fd = (mlp.mse_loss(p.with_flat(th + e), batch)
              - mlp.mse_loss(p.with_flat(th - e), batch)) / (2 * h)
        denom = max(abs(g[k]), abs(fd))
        if denom > 0:
            worst = max(worst, abs(fd - g[k]) / denom)
    return worst


def test_init_is_deterministic():
    arch = MLPArchitecture(3, (5, 4))
    a, b = mlp.init_params(arch, 7), mlp.init_params(arch, 7)
    assert np.array_equal(a.flat(), b.flat())
    assert not np.array_equal(a.flat(), mlp.init_params(arch, 8).flat())


def test_init_zero_biases_and_shapes():
    p = mlp.init_params(MLPArchitecture(2, (40, 40, 40)), 0)
    assert all(np.all(b == 0) for b in p.b)
    assert [w.shape for w in p.W] == [(40, 2), (40, 40), (40, 40), (1, 40)]
    assert p.flat().size == p.arch.n_values


def test_init_variance():
    w = mlp.init_params(MLPArchitecture(1000, (1000,)), 0).W[0]
    target = 2.0 / 2000
    assert abs(w.var() - target) <= 0.2 * target
    assert np.max(np.abs(w)) <= math.sqrt(6.0 / 2000)


def test_architecture_validation():
    with pytest.raises(ValueError):
        MLPArchitecture(2, ())
    with pytest.raises(ValueError):
        MLPArchitecture(2, (3, 0))


def test_forward_zero_net():
    arch = MLPArchitecture(2, (3, 3))
    p = mlp.init_params(arch, 0).with_flat(np.zeros(arch.n_values))
    assert mlp.forward(p, np.array([0.3, -7.0])) == 0.0


def test_forward_examples():
    assert mlp.forward(_unit_net(1, 0, 1, 0), np.array([0.0])) == 0.0
    # 2 tanh(1) + 0.5 = 2.023188...
    assert mlp.forward(_unit_net(), np.array([1.0])) == pytest.approx(2.023188, abs=1e-6)
    assert mlp.forward(_unit_net(), np.array([1.0])) == 2 * math.tanh(1) + 0.5


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        mlp.forward(_unit_net(), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        mlp.predict(_unit_net(), np.zeros((4, 3)))


def test_hidden_activations_bounded():
    p = mlp.init_params(MLPArchitecture(2, (6,)), 1)
    p.W[0] *= 100
    X = np.random.default_rng(0).normal(size=(50, 2)) * 10
    out = mlp.predict(p, X)
    assert np.all(np.abs(out) <= np.abs(p.W[1]).sum() + abs(p.b[1][0]))


def test_mse_examples():
    p = _unit_net(0, 0, 0, 0)
    assert mlp.mse_loss(p, [DataPoint(np.array([1.0]), 0.0)]) == 0.0
    assert mlp.mse_loss(p, (np.zeros((3, 1)), np.ones(3))) == 1.0
    assert mlp.mse_loss(_unit_net(0, 0, 0, 0.1), (np.zeros((2, 1)), np.array([0.0, 0.4]))) \
        == pytest.approx(0.05, abs=1e-15)
    with pytest.raises(ValueError):
        mlp.mse_loss(p, [])


def test_gradient_zero_residuals():
    p = _unit_net()
    y = mlp.predict(p, np.array([[0.2], [-1.0]]))
    gW, gb = mlp.gradient(p, (np.array([[0.2], [-1.0]]), y))
    assert np.all(_flat_grad(gW, gb) == 0)


def test_gradient_single_unit_by_hand():
    p = _unit_net()
    yhat = 2 * math.tanh(1) + 0.5
    gW, gb = mlp.gradient(p, [DataPoint(np.array([1.0]), 0.0)])
    assert gW[1][0, 0] == pytest.approx(2 * yhat * math.tanh(1), rel=1e-14)
    assert gb[1][0] == pytest.approx(2 * yhat, rel=1e-14)
    assert gW[0][0, 0] == pytest.approx(2 * yhat * 2 * (1 - math.tanh(1) ** 2), rel=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    arch = MLPArchitecture(int(rng.integers(1, 4)),
                           tuple(int(w) for w in rng.integers(1, 9, size=rng.integers(1, 4))))
    p = mlp.init_params(arch, seed)
    p = p.with_flat(p.flat() + 0.1 * rng.standard_normal(arch.n_values))
    p.x_mean = rng.normal(size=arch.input_dim)
    p.x_scale = rng.uniform(0.5, 2.0, size=arch.input_dim)
    batch = (rng.normal(size=(9, arch.input_dim)), rng.uniform(size=9))
    assert fd_check(p, batch) < 1e-5


def test_constant_label_fit():
    X = np.linspace(-1, 1, 64)[:, None]
    y = np.full(64, 0.5)
    p0 = mlp.init_params(MLPArchitecture(1, (1,)), 0)
    cfg = TrainConfig(learning_rate=1e-2, batch_size=16, epochs=200)
    p, hist = mlp.train(p0, (X, y), (X, y), cfg)
    assert min(hist.train_loss) <= 1e-6
    assert mlp.mse_loss(p, (X, y)) <= 1e-6


def test_tanh_toy_regression():
    rng = np.random.default_rng(0)
    X = rng.uniform(-3, 3, size=(1000, 1))
    Xv = rng.uniform(-3, 3, size=(200, 1))
    p0 = mlp.init_params(MLPArchitecture(1, (16, 16)), 0)
    cfg = TrainConfig(learning_rate=3e-3, batch_size=32, epochs=300, lr_decay=0.99)
    p, hist = mlp.train(p0, (X, np.tanh(X[:, 0])), (Xv, np.tanh(Xv[:, 0])), cfg)
    assert mlp.validate(p, (Xv, np.tanh(Xv[:, 0]))).rmse < 1e-3
    assert hist.best_val_rmse == min(hist.val_rmse)


def test_training_is_deterministic():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(100, 2))
    y = np.tanh(X.sum(axis=1))
    p0 = mlp.init_params(MLPArchitecture(2, (5,)), 3)
    cfg = TrainConfig(epochs=5, batch_size=10, seed=4)
    a, ha = mlp.train(p0, (X, y), (X, y), cfg)
    b, hb = mlp.train(p0, (X, y), (X, y), cfg)
    assert ha.train_loss == hb.train_loss and ha.val_rmse == hb.val_rmse
    assert np.array_equal(a.flat(), b.flat())


def test_divergence_reports_learning_rate():
    X = np.linspace(-1, 1, 20)[:, None]
    y = np.full(20, 1e200)
    p0 = mlp.init_params(MLPArchitecture(1, (2,)), 0)
    with pytest.raises(TrainingDivergedError, match="learning_rate"):
        mlp.train(p0, (X, y), (X, y), TrainConfig(epochs=3))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_validate_perfect():
    p = _unit_net()
    X = np.array([[0.0], [1.0], [-2.0]])
    s = mlp.validate(p, (X, mlp.predict(p, X)))
    assert (s.rmse, s.p25, s.p75, s.max_abs_error) == (0.0, 0.0, 0.0, 0.0)


def test_validate_two_mass():
    p = _unit_net(0, 0, 0, 0)
    y = np.array([0.1] * 50 + [-0.1] * 50)
    s = mlp.validate(p, (np.zeros((100, 1)), y))
    assert s.rmse == pytest.approx(0.1, abs=1e-15)
    assert s.p25 == pytest.approx(-0.1) and s.p75 == pytest.approx(0.1)
    assert s.max_abs_error == pytest.approx(0.1)
    assert s.hist_counts.sum() == 100 and len(s.hist_counts) == 50
    assert "RMSE" in s.summary()


def test_validate_rmse_is_root_mse():
    rng = np.random.default_rng(2)
    p = mlp.init_params(MLPArchitecture(2, (4,)), 0)
    d = Dataset(rng.normal(size=(30, 2)), rng.uniform(size=30))
    s = mlp.validate(p, d)
    assert s.rmse == pytest.approx(math.sqrt(mlp.mse_loss(p, d)), rel=1e-14)
    assert s.p25 <= s.p75 and s.max_abs_error >= max(abs(s.p25), abs(s.p75))


def test_save_load_bit_identical(tmp_path):
    rng = np.random.default_rng(3)
    p = mlp.init_params(MLPArchitecture(3, (7, 5)), 9)
    p.x_mean = rng.normal(size=3)
    p.x_scale = rng.uniform(0.1, 4, size=3)
    path = tmp_path / "m.txt"
    mlp.save_model(p, path)
    q = mlp.load_model(path)
    X = rng.normal(size=(20, 3))
    assert np.array_equal(mlp.predict(p, X), mlp.predict(q, X))
    assert q.arch == p.arch
    assert path.read_text().splitlines()[0] == "zubovnet-mlp 1"


def test_truncated_model_file(tmp_path):
    p = mlp.init_params(MLPArchitecture(2, (3,)), 0)
    path = tmp_path / "m.txt"
    mlp.save_model(p, path)
    lines = path.read_text().splitlines(keepends=True)
    path.write_text("".join(lines[:-3]))
    with pytest.raises(ModelFormatError):
        mlp.load_model(path)


def test_model_version_mismatch(tmp_path):
    p = mlp.init_params(MLPArchitecture(2, (3,)), 0)
    path = tmp_path / "m.txt"
    mlp.save_model(p, path)
    path.write_text(path.read_text().replace("zubovnet-mlp 1", "zubovnet-mlp 9", 1))
    with pytest.raises(ModelFormatError):
        mlp.load_model(path)


def test_reloaded_model_same_validation(tmp_path):
    rng = np.random.default_rng(5)
    X = rng.normal(size=(80, 2))
    y = np.tanh(X[:, 0] * X[:, 1])
    p, _ = mlp.train(mlp.init_params(MLPArchitecture(2, (6,)), 0), (X, y), (X, y),
                     TrainConfig(epochs=3, batch_size=16))
    path = tmp_path / "m.txt"
    mlp.save_model(p, path)
    assert mlp.validate(mlp.load_model(path), (X, y)).rmse == mlp.validate(p, (X, y)).rmse
