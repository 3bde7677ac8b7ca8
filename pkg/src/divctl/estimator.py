"""scikit-learn style facade over the closed-form solver.

``fit`` solves the control problem for the estimator's parameters; nothing
is learned from data; ``X`` is accepted only for API compatibility.
``predict`` returns the value function and ``transform`` the optimal
controls, both at the aggregate surplus given by ``X``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .params import ModelParams
from .solver import solve
from .strategy import controls_arrays
from .valuefn import evaluate


def _aggregate(X) -> np.ndarray:
    """Aggregate surplus from ``(n,)``, ``(n, 1)`` or reserve pairs ``(n, 2)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return X
    if X.ndim == 2 and X.shape[1] == 1:
        return X[:, 0]
    if X.ndim == 2 and X.shape[1] == 2:
        return X.sum(axis=1)
    raise ValueError(f"X must have shape (n,), (n, 1) or (n, 2); got {X.shape}")


class DividendPolicy(TransformerMixin, BaseEstimator):
    """Optimal two-line dividend, reinsurance and injection policy.

    Parameters mirror :class:`~divctl.params.ModelParams`. After ``fit`` the
    solved policy is available as ``policy_`` and its switching points as
    ``w0_``, ``u1_`` and ``u2_``.

    >>> est = DividendPolicy(4, 2, 1.5, 1, 0.6, 0.5, 0.3, 3, 2).fit()
    >>> round(est.u2_, 2)
    1.49
    """

    def __init__(
        self,
        mu1=4.0,
        mu2=2.0,
        sigma1=1.5,
        sigma2=1.0,
        rho=0.6,
        beta=0.5,
        a=0.3,
        cbar1=3.0,
        cbar2=2.0,
        closure="published",
    ):
        self.mu1 = mu1
        self.mu2 = mu2
        self.sigma1 = sigma1
        self.sigma2 = sigma2
        self.rho = rho
        self.beta = beta
        self.a = a
        self.cbar1 = cbar1
        self.cbar2 = cbar2
        self.closure = closure

    def _params(self) -> ModelParams:
        return ModelParams(
            mu1=float(self.mu1),
            mu2=float(self.mu2),
            sigma1=float(self.sigma1),
            sigma2=float(self.sigma2),
            rho=float(self.rho),
            beta=float(self.beta),
            a=float(self.a),
            cbar1=float(self.cbar1),
            cbar2=float(self.cbar2),
        )

    def fit(self, X=None, y=None):
        self.policy_ = solve(self._params(), closure=self.closure)
        self.scenario_ = self.policy_.scenario.value
        self.w0_ = self.policy_.w0
        self.u1_ = self.policy_.u1
        self.u2_ = self.policy_.u2
        return self

    def predict(self, X) -> np.ndarray:
        """Value function at the aggregate surplus of each row."""
        check_is_fitted(self, "policy_")
        return np.asarray(evaluate(self.policy_, _aggregate(X)).g)

    def transform(self, X) -> np.ndarray:
        """Optimal ``(theta1, theta2, c1, c2)`` per row, shape ``(n, 4)``."""
        check_is_fitted(self, "policy_")
        return np.column_stack(controls_arrays(self.policy_, _aggregate(X)))

    def get_feature_names_out(self, input_features=None):
        return np.array(["theta1", "theta2", "c1", "c2"], dtype=object)
