"""Shared fixtures."""

import numpy as np
import pytest

from sr_granger.var_model import Partition, VarParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def bivariate():
    return Partition(1, 1)


@pytest.fixture
def causal_model():
    """Bivariate VAR(1) with a y -> x coupling and correlated residuals."""
    return VarParams(
        A=np.array([[0.3, 0.4], [0.0, 0.7]]),
        Sigma=np.array([[1.0, 0.5], [0.5, 1.0]]),
    )


@pytest.fixture
def null_model():
    """Bivariate VAR(1) without y -> x coupling."""
    return VarParams(
        A=np.array([[0.5, 0.0], [0.3, 0.6]]),
        Sigma=np.array([[1.0, 0.3], [0.3, 2.0]]),
    )


@pytest.fixture
def null_var2():
    """Trivariate VAR(2) null model, x = first variable."""
    lags = np.array(
        [
            [[0.4, 0.0, 0.0], [0.2, 0.3, 0.1], [-0.1, 0.2, 0.2]],
            [[-0.2, 0.0, 0.0], [0.1, -0.1, 0.0], [0.0, 0.1, -0.2]],
        ]
    )
    Sigma = np.array([[1.0, 0.2, 0.1], [0.2, 1.5, 0.3], [0.1, 0.3, 0.8]])
    return VarParams.from_lags(lags, Sigma)
