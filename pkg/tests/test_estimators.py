import numpy as np
import pytest
from scipy.special import expit

from rctweights import (
    ATT,
    IPW,
    MATCHING,
    OVERLAP,
    BoundaryMean,
    Estimand,
    PropensityFit,
    TrialDataset,
    estimate_aipw,
    estimate_outcome_regression,
    estimate_unadjusted,
    estimate_weighted,
    fit_ancova,
    fit_arm_logistic,
    fit_logistic,
)
from rctweights.estimators import aipw_means, standardized_means, transform_means
from tests.conftest import make_dataset


class TestUnadjusted:
    def test_difference_in_means(self):
        ds = TrialDataset(y=[1.0, 3.0, 2.0, 4.0], z=[1, 1, 0, 0], x=np.empty((4, 0)))
        mu1, mu0, tau = estimate_unadjusted(ds)
        assert (mu1, mu0, tau) == (2.0, 3.0, -1.0)

    def test_identical_arms(self):
        ds = TrialDataset(y=[2.0, 2.0, 2.0, 2.0], z=[1, 0, 1, 0], x=np.empty((4, 0)))
        assert estimate_unadjusted(ds)[2] == 0.0


class TestTransform:
    def test_equal_means_give_zero_ratios(self):
        assert transform_means(0.3, 0.3, Estimand.LOG_RR) == 0.0
        assert transform_means(0.3, 0.3, Estimand.LOG_OR) == 0.0

    def test_rr_consistency(self):
        mu1, mu0 = 0.42, 0.17
        log_rr = transform_means(mu1, mu0, Estimand.LOG_RR)
        assert np.exp(log_rr) * mu0 == pytest.approx(mu1, rel=1e-12)

    def test_boundary_raises_with_signed_point(self):
        with pytest.raises(BoundaryMean) as info:
            transform_means(0.0, 0.4, Estimand.LOG_RR)
        assert info.value.point == -np.inf
        with pytest.raises(BoundaryMean):
            transform_means(0.2, 1.0, Estimand.LOG_OR)


class TestWeightedEstimators:
    def test_constant_propensity_matches_unadjusted(self):
        ds = make_dataset(8, n=40, p=0)
        fit = fit_logistic(ds)
        _, _, tau = estimate_unadjusted(ds)
        for scheme in (IPW, OVERLAP, ATT, MATCHING):
            effect = estimate_weighted(ds, scheme, Estimand.RD, fit)
            assert effect.point == pytest.approx(tau, abs=1e-12)

    def test_ow_matches_direct_transcription(self, seed1_dataset):
        ds = seed1_dataset
        fit = fit_logistic(ds)
        effect = estimate_weighted(ds, OVERLAP, Estimand.RD, fit)
        e = fit.propensities
        z = ds.z
        top1 = sum((1 - e[i]) * ds.y[i] for i in range(ds.n) if z[i] == 1)
        bot1 = sum(1 - e[i] for i in range(ds.n) if z[i] == 1)
        top0 = sum(e[i] * ds.y[i] for i in range(ds.n) if z[i] == 0)
        bot0 = sum(e[i] for i in range(ds.n) if z[i] == 0)
        assert effect.point == pytest.approx(top1 / bot1 - top0 / bot0, abs=1e-12)

    def test_treatment_label_symmetry(self, seed1_dataset):
        ds = seed1_dataset
        fit = fit_logistic(ds)
        effect = estimate_weighted(ds, OVERLAP, Estimand.RD, fit)
        flipped_ds = TrialDataset(y=ds.y, z=1 - ds.z, x=ds.x, covariate_names=ds.covariate_names)
        flipped_fit = PropensityFit(
            coef=-fit.coef,
            propensities=1.0 - fit.propensities,
            design=fit.design,
            covariate_names=fit.covariate_names,
            converged=True,
            iterations=fit.iterations,
            max_score=fit.max_score,
        )
        flipped = estimate_weighted(flipped_ds, OVERLAP, Estimand.RD, flipped_fit)
        assert flipped.point == -effect.point

    def test_label_symmetry_for_log_rr(self, seed2_binary_dataset):
        ds = seed2_binary_dataset
        fit = fit_logistic(ds)
        effect = estimate_weighted(ds, OVERLAP, Estimand.LOG_RR, fit)
        flipped_ds = TrialDataset(
            y=ds.y, z=1 - ds.z, x=ds.x, outcome_kind="binary"
        )
        flipped_fit = PropensityFit(
            coef=-fit.coef,
            propensities=1.0 - fit.propensities,
            design=fit.design,
            covariate_names=fit.covariate_names,
            converged=True,
            iterations=fit.iterations,
            max_score=fit.max_score,
        )
        flipped = estimate_weighted(flipped_ds, OVERLAP, Estimand.LOG_RR, flipped_fit)
        mu1 = effect.diagnostics["mu1"]
        mu0 = effect.diagnostics["mu0"]
        assert flipped.point == pytest.approx(np.log(mu0 / mu1), abs=1e-12)


class TestAncova:
    def test_no_covariates_reduces_to_unadjusted(self):
        ds = make_dataset(4, n=30, p=0)
        fit = fit_ancova(ds, with_interactions=False)
        assert fit.treatment_coef == pytest.approx(estimate_unadjusted(ds)[2], abs=1e-12)

    def test_noiseless_interacted_truth_recovered(self):
        rng = np.random.default_rng(12)
        n = 50
        x = rng.standard_normal((n, 2))
        z = (rng.random(n) < 0.5).astype(int)
        beta0 = np.array([1.5, -2.0])
        beta1 = np.array([0.5, 0.25])
        alpha = 0.75
        xc = x - x.mean(axis=0)
        y = alpha * z + x @ beta0 + z * (x @ beta1)
        ds = TrialDataset(y=y, z=z, x=x)
        fit = fit_ancova(ds, with_interactions=True)
        # with centered interactions the treatment coefficient targets the
        # sample-average effect alpha + mean(x) @ beta1
        target = alpha + x.mean(axis=0) @ beta1
        assert fit.treatment_coef == pytest.approx(target, abs=1e-10)
        assert np.allclose(fit.mu1_fitted - fit.mu0_fitted, alpha + x @ beta1, atol=1e-9)

    def test_matches_normal_equations_oracle(self, seed1_dataset):
        ds = seed1_dataset
        fit = fit_ancova(ds, with_interactions=True)
        xc = ds.x - ds.x.mean(axis=0)
        design = np.column_stack(
            [np.ones(ds.n), ds.z, xc, ds.z[:, None] * xc]
        )
        coef, *_ = np.linalg.lstsq(design, ds.y, rcond=None)
        assert fit.treatment_coef == pytest.approx(coef[1], abs=1e-10)

    def test_interacted_fitted_means_equal_arm_regressions(self, seed1_dataset):
        ds = seed1_dataset
        fit = fit_ancova(ds, with_interactions=True)
        raw = np.column_stack([np.ones(ds.n), ds.x])
        for arm, fitted in ((1, fit.mu1_fitted), (0, fit.mu0_fitted)):
            mask = ds.z == arm
            coef, *_ = np.linalg.lstsq(raw[mask], ds.y[mask], rcond=None)
            assert np.allclose(fitted, raw @ coef, atol=1e-9)


class TestOutcomeRegression:
    def test_continuous_equals_interacted_ancova(self, seed1_dataset):
        ds = seed1_dataset
        effect = estimate_outcome_regression(ds, Estimand.RD)
        fit = fit_ancova(ds, with_interactions=True)
        assert effect.point == pytest.approx(fit.treatment_coef, abs=1e-12)

    def test_binary_null_model_gives_arm_means(self):
        rng = np.random.default_rng(6)
        y = (rng.random(60) < 0.4).astype(float)
        z = np.tile([1, 0], 30)
        ds = TrialDataset(y=y, z=z, x=np.empty((60, 0)), outcome_kind="binary")
        arm_fit = fit_arm_logistic(ds)
        mu1, mu0 = standardized_means(arm_fit)
        assert mu1 == pytest.approx(y[z == 1].mean(), abs=1e-9)
        assert mu0 == pytest.approx(y[z == 0].mean(), abs=1e-9)

    def test_binary_standardization_matches_bruteforce(self, seed2_binary_dataset):
        ds = seed2_binary_dataset
        arm_fit = fit_arm_logistic(ds)
        mu1, mu0 = standardized_means(arm_fit)
        # brute force: loop every unit through both fitted arm models
        preds1 = []
        preds0 = []
        for i in range(ds.n):
            row = np.concatenate([[1.0], ds.x[i]])
            preds1.append(expit(row @ arm_fit.coef_treated))
            preds0.append(expit(row @ arm_fit.coef_control))
        assert mu1 == pytest.approx(np.mean(preds1), abs=1e-12)
        assert mu0 == pytest.approx(np.mean(preds0), abs=1e-12)


class TestAipw:
    def test_zero_augmentation_is_horvitz_thompson(self, seed1_dataset):
        ds = seed1_dataset
        fit = fit_logistic(ds)

        class ZeroOutcome:
            mu1_fitted = np.zeros(ds.n)
            mu0_fitted = np.zeros(ds.n)

        mu1, mu0 = aipw_means(ds, fit, ZeroOutcome())
        z = ds.z
        e = fit.propensities
        assert mu1 == pytest.approx(np.mean(z * ds.y / e), abs=1e-12)
        assert mu0 == pytest.approx(np.mean((1 - z) * ds.y / (1 - e)), abs=1e-12)

    def test_saturated_two_by_two_matches_standardization(self):
        # intercept-only propensity + outcome saturated on a binary covariate
        rng = np.random.default_rng(44)
        n = 80
        x = (rng.random(n) < 0.5).astype(float).reshape(-1, 1)
        z = np.tile([1, 0], n // 2)
        y = 1.0 + 0.8 * x[:, 0] + 0.5 * z + rng.standard_normal(n)
        ds = TrialDataset(y=y, z=z, x=x)
        fit = fit_logistic(ds, covariates=())
        outcome = fit_ancova(ds, with_interactions=True)
        mu1, mu0 = aipw_means(ds, fit, outcome)
        assert mu1 == pytest.approx(np.mean(outcome.mu1_fitted), abs=1e-10)
        assert mu0 == pytest.approx(np.mean(outcome.mu0_fitted), abs=1e-10)

    def test_matches_direct_transcription(self, seed1_dataset):
        ds = seed1_dataset
        fit = fit_logistic(ds)
        outcome = fit_ancova(ds, with_interactions=True)
        effect = estimate_aipw(ds, fit, outcome, Estimand.RD)
        z = ds.z
        e = fit.propensities
        total1 = 0.0
        total0 = 0.0
        for i in range(ds.n):
            total1 += z[i] * ds.y[i] / e[i] - (z[i] - e[i]) * outcome.mu1_fitted[i] / e[i]
            total0 += (1 - z[i]) * ds.y[i] / (1 - e[i]) + (z[i] - e[i]) * outcome.mu0_fitted[i] / (1 - e[i])
        assert effect.point == pytest.approx(total1 / ds.n - total0 / ds.n, abs=1e-12)
