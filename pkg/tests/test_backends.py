import subprocess
import sys

import numpy as np
import pytest

from rctweights import _backend, _irls_py
from tests.conftest import make_dataset


@pytest.mark.skipif(
    "c" not in _backend.available_backends(), reason="compiled kernel not built"
)
class TestCompiledKernel:
    def test_matches_python_kernel(self):
        from rctweights import _irls

        for seed in range(10):
            ds = make_dataset(seed, n=120, p=4)
            design = np.column_stack([np.ones(ds.n), ds.x])
            z = ds.z.astype(np.float64)
            c_coef, c_probs, c_iters, c_score, c_status = _irls.irls_logistic(
                design, z, 1e-8, 100, 1e-12, 10
            )
            p_coef, p_probs, p_iters, p_score, p_status = _irls_py.irls_logistic(
                design, z, 1e-8, 100, 1e-12, 10
            )
            assert c_status == p_status
            assert c_iters == p_iters
            assert np.allclose(c_coef, p_coef, atol=1e-10)
            assert np.allclose(c_probs, p_probs, atol=1e-12)

    def test_rank_deficiency_agrees(self):
        from rctweights import _irls

        rng = np.random.default_rng(4)
        x = rng.standard_normal(50)
        design = np.ascontiguousarray(np.column_stack([np.ones(50), x, 3.0 * x]))
        z = (rng.random(50) < 0.5).astype(np.float64)
        *_, c_status = _irls.irls_logistic(design, z, 1e-8, 100, 1e-12, 10)
        *_, p_status = _irls_py.irls_logistic(design, z, 1e-8, 100, 1e-12, 10)
        assert c_status == p_status == _irls_py.STATUS_RANK_DEFICIENT


def test_backend_env_override_forces_python():
    code = (
        "import rctweights; "
        "assert rctweights.backend_name() == 'python', rctweights.backend_name()"
    )
    result = subprocess.run(
        [sys.executable, "-c", code],
        capture_output=True,
        text=True,
        env={"RCTWEIGHTS_BACKEND": "python", "PATH": "/usr/bin:/bin:/usr/local/bin"},
        timeout=120,
    )
    assert result.returncode == 0, result.stderr


def test_full_suite_runs_on_python_backend():
    # a fit through the public API under the forced fallback
    code = (
        "import numpy as np\n"
        "import rctweights as rw\n"
        "rng = np.random.default_rng(0)\n"
        "x = rng.standard_normal((80, 3))\n"
        "z = (rng.random(80) < 0.5).astype(int)\n"
        "y = x @ np.ones(3) + z + rng.standard_normal(80)\n"
        "ds = rw.TrialDataset(y=y, z=z, x=x)\n"
        "fit = rw.fit_logistic(ds)\n"
        "assert rw.check_exact_balance(ds, fit) < 1e-8\n"
        "eff = rw.estimate_weighted(ds, rw.OVERLAP, rw.Estimand.RD, fit)\n"
        "assert np.isfinite(eff.variance)\n"
    )
    result = subprocess.run(
        [sys.executable, "-c", code],
        capture_output=True,
        text=True,
        env={"RCTWEIGHTS_BACKEND": "python", "PATH": "/usr/bin:/bin:/usr/local/bin"},
        timeout=120,
    )
    assert result.returncode == 0, result.stderr
