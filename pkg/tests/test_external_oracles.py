"""Cross-checks against statsmodels where it is installed.

These duplicate oracles that already exist in closed form elsewhere in the
suite, but through an entirely independent implementation.
"""

import numpy as np
import pytest

sm = pytest.importorskip("statsmodels.api")

from rctweights import fit_ancova, fit_logistic, huber_white_ancova
from tests.conftest import make_dataset


def test_logistic_mle_matches_statsmodels():
    for seed in (1, 2, 3):
        ds = make_dataset(seed, n=120, p=3)
        fit = fit_logistic(ds)
        ref = sm.Logit(ds.z, sm.add_constant(ds.x)).fit(disp=0, tol=1e-12)
        assert np.max(np.abs(fit.coef - ref.params)) < 1e-8
        assert np.max(np.abs(fit.propensities - ref.predict())) < 1e-8


def test_ancova_hc0_matches_statsmodels():
    ds = make_dataset(4, n=150, p=3)
    fit = fit_ancova(ds, with_interactions=True)
    ref = sm.OLS(ds.y, fit.design).fit(cov_type="HC0")
    assert np.allclose(fit.coef, ref.params, atol=1e-10)
    want = ref.cov_params()[fit.z_index, fit.z_index]
    assert huber_white_ancova(fit) == pytest.approx(want, rel=1e-10)
