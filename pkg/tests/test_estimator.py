import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from divctl.estimator import DividendPolicy
from divctl.strategy import controls_arrays
from divctl.valuefn import value


def test_fit_exposes_switching_points(fig2):
    est = DividendPolicy().fit()
    assert (est.w0_, est.u1_, est.u2_) == (fig2.w0, fig2.u1, fig2.u2)
    assert est.scenario_ == "T1_W0First"


def test_predict_and_transform(fig2):
    est = DividendPolicy().fit()
    x = np.array([0.2, 1.0, 3.0])
    assert np.allclose(est.predict(x), value(fig2, x))
    pairs = np.column_stack([x / 2, x / 2])
    assert np.array_equal(est.predict(pairs), est.predict(x[:, None]))
    out = est.transform(x)
    assert out.shape == (3, 4)
    assert np.array_equal(out, np.column_stack(controls_arrays(fig2, x)))
    assert list(est.get_feature_names_out()) == ["theta1", "theta2", "c1", "c2"]


def test_clone_and_params():
    est = DividendPolicy(cbar2=1.0, closure="consistent")
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    twin.set_params(cbar2=2.0)
    assert twin.fit().scenario_ == "T1_W0First"
    assert est.fit().scenario_ == "T2_W0Middle"


def test_unfitted_and_bad_shape():
    with pytest.raises(NotFittedError):
        DividendPolicy().predict([1.0])
    with pytest.raises(ValueError):
        DividendPolicy().fit().predict(np.zeros((2, 3)))
