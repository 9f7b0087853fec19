import math

import numpy as np
import pytest

from koopmanlab.semiflow import DomainChart, Semiflow, logistic_field, make_ode_flow


def logistic_exact(t, x):
    """Closed-form logistic solution ``x e^t / (1 - x + x e^t)``."""
    x = np.asarray(x, dtype=float)
    et = np.exp(t)
    return x * et / (1.0 - x + x * et)


@pytest.fixture(scope="session")
def logistic_flow():
    return make_ode_flow(logistic_field(), DomainChart.interval(0.0, math.inf), 1e-3,
                         label="logistic")


@pytest.fixture(scope="session")
def coarse_logistic_flow():
    return make_ode_flow(logistic_field(), DomainChart.interval(0.0, math.inf), 1e-2,
                         label="logistic")


@pytest.fixture
def broken_flow():
    """``x + t**2``: identity holds but composition does not."""
    return Semiflow(DomainChart.half_line(), lambda t, X: X + t ** 2, "closed-form",
                    label="broken")
