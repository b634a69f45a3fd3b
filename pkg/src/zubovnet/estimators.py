"""scikit-learn style front ends: the integral value function and the network fit."""

import math
import warnings

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import mlp
from .odeint import SolverConfig
from .presets import preset
from .zubov import Verdict, ZubovConfig, calibrate, compute_many


class ZubovValueFunction(BaseEstimator):
    """V(x) = tanh(alpha * I(x)) evaluated by trajectory integration.

    ``fit`` integrates the sample with a provisional threshold and,
    unless ``M`` is given, picks M and alpha from the converged cluster.  There
    is nothing to learn beyond those two numbers; ``predict`` integrates again
    for every row.

    Parameters
    ----------
    system : {"vdp", "linear", "swing"} or SystemModel
    w : W variant or None
        None uses the preset's W (``system`` must then be a preset name).
    M : float or None
        Divergence threshold. None calibrates it in ``fit``.
    provisional_M : float
        Threshold used while calibrating; should sit well above the cluster.
    """

    def __init__(self, system="vdp", w=None, M=None, delta_I=1e-6, dt_chunk=1.0, t_max=500.0,
                 rel_tol=1e-6, abs_tol=1e-9, provisional_M=1000.0, params_path=None,
                 workers=1):
        self.system = system
        self.w = w
        self.M = M
        self.delta_I = delta_I
        self.dt_chunk = dt_chunk
        self.t_max = t_max
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol
        self.provisional_M = provisional_M
        self.params_path = params_path
        self.workers = workers

    def _resolve(self):
        if isinstance(self.system, str):
            pre = preset(self.system, self.params_path)
            return pre.system, self.w if self.w is not None else pre.w
        if self.w is None:
            raise ValueError("pass w when system is a SystemModel")
        return self.system, self.w

    def _config(self, M):
        return ZubovConfig.for_threshold(
            M, delta_I=self.delta_I, dt_chunk=self.dt_chunk, t_max=self.t_max,
            solver=SolverConfig(rel_tol=self.rel_tol, abs_tol=self.abs_tol))

    def fit(self, X, y=None):
        sys, w = self._resolve()
        X = check_array(X, dtype=float)
        if X.shape[1] != sys.dim:
            raise ValueError(f"X has {X.shape[1]} features, the system has {sys.dim}")
        self.n_features_in_ = X.shape[1]
        self.system_, self.w_ = sys, w
        if self.M is None:
            outs = compute_many(sys, w, X, self._config(self.provisional_M), self.workers)
            self.calibration_ = calibrate(outs)
            self.M_ = self.calibration_.M
            self.I_sample_ = np.array([o.I for o in outs])
        else:
            self.calibration_ = None
            self.M_ = float(self.M)
        self.alpha_ = 20.0 / self.M_
        self.config_ = self._config(self.M_)
        return self

    def integrate(self, X):
        check_is_fitted(self, "config_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return compute_many(self.system_, self.w_, X, self.config_, self.workers)

    def predict(self, X):
        """V at each row; NaN (with a warning) where the run was inconclusive."""
        outs = self.integrate(X)
        v = np.array([1.0 if o.verdict is Verdict.EXCEEDED
                      else math.tanh(self.alpha_ * o.z_final) if o.converged else math.nan
                      for o in outs])
        bad = int(np.isnan(v).sum())
        if bad:
            warnings.warn(f"{bad} point(s) inconclusive within t_max={self.t_max:g}; "
                          "returned as NaN", RuntimeWarning, stacklevel=2)
        return v

    def predict_inside(self, X):
        """True where the trajectory converged (V < 1)."""
        return np.array([o.converged for o in self.integrate(X)])


class ZubovNetRegressor(RegressorMixin, BaseEstimator):
    """Feedforward tanh network regressing V; inputs standardized on the training set.

    If no validation data is passed to ``fit``, ``validation_fraction`` of the
    rows (chosen with ``random_state``) are held out for model selection.
    """

    def __init__(self, hidden_layer_sizes=(40, 40, 40), learning_rate=1e-3, batch_size=256,
                 epochs=200, lr_decay=1.0, validation_fraction=0.1, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.lr_decay = lr_decay
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if X_val is None:
            if not 0 < self.validation_fraction < 1:
                raise ValueError("validation_fraction must lie in (0, 1)")
            rng = np.random.default_rng(self.random_state)
            order = rng.permutation(len(y))
            n_val = max(1, int(round(self.validation_fraction * len(y))))
            if n_val >= len(y):
                raise ValueError("not enough rows to hold out a validation set")
            X_val, y_val = X[order[:n_val]], y[order[:n_val]]
            X, y = X[order[n_val:]], y[order[n_val:]]
        else:
            X_val, y_val = check_X_y(X_val, y_val, dtype=float, y_numeric=True)
            if X_val.shape[1] != X.shape[1]:
                raise ValueError("validation data has a different number of features")
        self.n_features_in_ = X.shape[1]
        arch = mlp.MLPArchitecture(X.shape[1], tuple(self.hidden_layer_sizes))
        cfg = mlp.TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                              epochs=self.epochs, seed=self.random_state,
                              lr_decay=self.lr_decay)
        p0 = mlp.init_params(arch, self.random_state)
        self.params_, self.history_ = mlp.train(p0, (X, y), (X_val, y_val), cfg)
        self.validation_ = mlp.validate(self.params_, (X_val, y_val))
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return mlp.predict(self.params_, X)

    def save(self, path):
        check_is_fitted(self, "params_")
        mlp.save_model(self.params_, path)

    @classmethod
    def from_file(cls, path):
        p = mlp.load_model(path)
        est = cls(hidden_layer_sizes=p.arch.hidden_widths)
        est.params_ = p
        est.n_features_in_ = p.arch.input_dim
        return est

