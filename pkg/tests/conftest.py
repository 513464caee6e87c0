import itertools
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flexhca.capacity import series_from_residual

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")


@st.composite
def capacity_series(draw, min_T=2, max_T=20, nonneg=True, allow_zero_lhat=True):
    T = draw(st.integers(min_T, max_T))
    lo = 0.0 if nonneg else -5.0
    c_res = draw(arrays(np.float64, T, elements=st.floats(lo, 20.0, allow_nan=False, width=32)))
    lhat_lo = 0.0 if allow_zero_lhat else 0.0625
    lhat = draw(arrays(np.float64, T, elements=st.floats(lhat_lo, 1.0, allow_nan=False, width=32)))
    return series_from_residual(c_res, lhat)


def brute_force_cf(c_res, lhat, K):
    """Best capacity over every set of at most K freely curtailed slots."""
    c_res = np.asarray(c_res, float)
    lhat = np.asarray(lhat, float)
    T = c_res.size
    best = -np.inf
    for S in itertools.combinations(range(T), K):
        keep = np.ones(T, bool)
        keep[list(S)] = False
        if np.any(c_res[~keep] < 0):
            continue
        on = keep & (lhat > 0)
        if np.any(keep & (lhat == 0) & (c_res < 0)):
            continue
        cap = np.min(c_res[on] / lhat[on]) if on.any() else np.inf
        best = max(best, cap)
    return best


@pytest.fixture(scope="session")
def year():
    from flexhca.fixtures import year_case

    return year_case()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
