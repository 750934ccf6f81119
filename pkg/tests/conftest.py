import numpy as np
import pytest

from rctweights import TrialDataset


def make_dataset(seed, n=60, p=3, binary=False, effect=0.4, r=0.5):
    """Randomized two-arm dataset with prognostic covariates."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    z = (rng.random(n) < r).astype(int)
    while z.sum() in (0, n):
        z = (rng.random(n) < r).astype(int)
    slopes = rng.standard_normal(p)
    linear = x @ slopes + effect * z
    if binary:
        from scipy.special import expit

        y = (rng.random(n) < expit(linear)).astype(float)
    else:
        y = linear + rng.standard_normal(n)
    return TrialDataset(
        y=y, z=z, x=x, outcome_kind="binary" if binary else "continuous"
    )


@pytest.fixture(scope="session")
def seed1_dataset():
    """Small continuous dataset referenced by several frozen-oracle tests."""
    return make_dataset(1, n=20, p=2)


@pytest.fixture(scope="session")
def seed2_binary_dataset():
    return make_dataset(2, n=200, p=3, binary=True)
