"""Pure-numpy Newton/IRLS kernel for logistic regression.

Mirrors the compiled kernel in ``_irls.pyx``: same iteration, same
step-halving rule, same pivot-based rank check, so either backend can be
selected at import time with matching semantics.
"""

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import expit

STATUS_OK = 0
STATUS_MAX_ITER = 1
STATUS_RANK_DEFICIENT = 2

PIVOT_RTOL = 1e-10


def _loglik(z, probs):
    return float(np.sum(z * np.log(probs) + (1.0 - z) * np.log(1.0 - probs)))


def irls_logistic(design, z, tol, max_iter, clamp, max_halvings):
    """Maximize the Bernoulli log-likelihood of ``z`` on ``design``.

    Returns ``(coef, probs, iterations, max_score, status)`` where
    ``max_score`` is the max-norm of the score vector at the returned
    coefficients and ``status`` is one of the ``STATUS_*`` codes.
    Probabilities are clamped to ``[clamp, 1 - clamp]`` throughout.
    """
    design = np.ascontiguousarray(design, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    n, k = design.shape
    coef = np.zeros(k)
    probs = np.clip(expit(np.zeros(n)), clamp, 1.0 - clamp)
    loglik = _loglik(z, probs)
    iterations = 0
    rank_deficient = False

    for _ in range(max_iter):
        score = design.T @ (z - probs)
        if np.max(np.abs(score)) <= tol:
            break
        w = probs * (1.0 - probs)
        gram = (design * w[:, None]).T @ design
        max_diag = float(np.max(np.diagonal(gram)))
        try:
            chol = np.linalg.cholesky(gram)
        except np.linalg.LinAlgError:
            rank_deficient = True
            break
        if float(np.min(np.diagonal(chol)) ** 2) < PIVOT_RTOL * max_diag:
            rank_deficient = True
            break
        step = cho_solve((chol, True), score, check_finite=False)
        iterations += 1

        scale = 1.0
        for halving in range(max_halvings + 1):
            cand = coef + scale * step
            probs_cand = np.clip(expit(design @ cand), clamp, 1.0 - clamp)
            loglik_cand = _loglik(z, probs_cand)
            if loglik_cand >= loglik - 1e-12 * (abs(loglik) + 1.0):
                break
            if halving < max_halvings:
                scale *= 0.5
        coef = cand
        probs = probs_cand
        loglik = loglik_cand

    max_score = float(np.max(np.abs(design.T @ (z - probs))))
    if rank_deficient:
        status = STATUS_RANK_DEFICIENT
    elif max_score <= tol:
        status = STATUS_OK
    else:
        status = STATUS_MAX_ITER
    return coef, probs, iterations, max_score, status
