import numpy as np
import pytest

from drsim import causality
from drsim.dataio import HIGH, LOW, NORMAL


def planted_series(n=400, seed=0, xi=(0.4, 0.0, -0.3), sigma=(0.08, 0.1, 0.12),
                   f=lambda tau: 0.25 * np.sin(tau / 4.0)):
    """One half-hour series with a smooth temperature effect and known offsets."""
    rng = np.random.default_rng(seed)
    tau = rng.uniform(-2.0, 22.0, size=n)
    tariff = rng.integers(0, 3, size=n).astype(np.int8)
    xi = np.asarray(xi)
    sigma = np.asarray(sigma)
    y = 1.0 + f(tau) + xi[tariff] + sigma[tariff] * rng.standard_normal(n)
    return y, tau, tariff


class TestFitLocationScale:
    def test_recovers_tariff_contrasts(self):
        y, tau, tariff = planted_series()
        model = causality.fit_location_scale(y, tau, tariff)
        coef = model.tariff_coef
        assert coef[LOW] - coef[NORMAL] == pytest.approx(0.4, abs=0.05)
        assert coef[HIGH] - coef[NORMAL] == pytest.approx(-0.3, abs=0.05)

    def test_recovers_scales_within_20_percent(self):
        y, tau, tariff = planted_series(n=900, seed=3)
        model = causality.fit_location_scale(y, tau, tariff)
        for code, truth in zip((LOW, NORMAL, HIGH), (0.08, 0.1, 0.12)):
            assert model.scale[code] == pytest.approx(truth, rel=0.2)

    def test_predict_mean_tracks_nonlinear_effect(self):
        y, tau, tariff = planted_series(n=800, seed=5)
        model = causality.fit_location_scale(y, tau, tariff)
        grid = np.linspace(0.0, 20.0, 50)
        pred = model.predict_mean(grid, NORMAL)
        truth = 1.0 + 0.25 * np.sin(grid / 4.0)
        assert np.max(np.abs(pred - truth)) < 0.06

    def test_unobserved_tariff_marked_unavailable(self):
        y, tau, tariff = planted_series(seed=7)
        tariff[tariff == HIGH] = NORMAL
        model = causality.fit_location_scale(y, tau, tariff)
        assert not model.available(HIGH)
        assert np.isnan(model.tariff_coef[HIGH]) and np.isnan(model.scale[HIGH])
        with pytest.raises(causality.FitError):
            model.predict_mean(np.array([10.0]), HIGH)

    def test_noiseless_series_hits_scale_floor(self):
        rng = np.random.default_rng(2)
        tau = rng.uniform(0.0, 20.0, size=200)
        tariff = np.full(200, NORMAL, dtype=np.int8)
        y = np.full(200, 1.5)
        model = causality.fit_location_scale(y, tau, tariff)
        assert model.scale[NORMAL] == causality.SCALE_FLOOR

    def test_scale_is_half_normal_moment_of_residuals(self):
        y, tau, tariff = planted_series(seed=9)
        model = causality.fit_location_scale(y, tau, tariff)
        resid = y - (model.spline.design(tau) @ model.spline_coef
                     + model.tariff_coef[tariff])
        for code in (LOW, NORMAL, HIGH):
            expected = np.abs(resid[tariff == code]).mean() * np.sqrt(np.pi / 2.0)
            assert model.scale[code] == pytest.approx(expected, rel=1e-12)

    def test_too_few_observations_raises(self):
        with pytest.raises(causality.FitError, match="observations"):
            causality.fit_location_scale(
                np.ones(5), np.linspace(0, 1, 5), np.zeros(5, dtype=np.int8)
            )

    def test_shape_mismatch_raises(self):
        with pytest.raises(causality.FitError):
            causality.fit_location_scale(np.ones(10), np.ones(9), np.zeros(10, dtype=np.int8))

    def test_level_shift_moves_offsets_not_spline(self):
        y, tau, tariff = planted_series(seed=11)
        a = causality.fit_location_scale(y, tau, tariff)
        b = causality.fit_location_scale(y + 5.0, tau, tariff)
        np.testing.assert_allclose(b.spline_coef, a.spline_coef, atol=1e-6)
        np.testing.assert_allclose(b.tariff_coef, a.tariff_coef + 5.0, atol=1e-6)


class TestTariffProfile:
    def fit_small_entity(self, seed=0, n_days=120):
        rng = np.random.default_rng(seed)
        tau = rng.uniform(2.0, 18.0, size=(n_days, 48))
        tariff = rng.integers(0, 3, size=(n_days, 48)).astype(np.int8)
        base = np.linspace(0.4, 0.9, 48)
        kwh = base + 0.01 * tau + np.array([0.2, 0.0, -0.1])[tariff]
        kwh = kwh + 0.05 * rng.standard_normal(kwh.shape)
        models = causality.fit_entity(kwh, tau, tariff)
        return models, tau

    def test_profile_is_day_average_of_predictions(self):
        models, tau = self.fit_small_entity()
        prof = causality.tariff_profile("hh", models, tau)
        assert prof.mu.shape == (3, 48) and prof.sigma.shape == (3, 48)
        for h in (0, 17, 47):
            expected = np.mean(models[h].predict_mean(tau[:, h], LOW))
            assert prof.mu[LOW, h] == expected
            assert prof.sigma[LOW, h] == models[h].scale[LOW]

    def test_unavailable_tariff_substitutes_normal(self):
        models, tau = self.fit_small_entity(seed=4)
        models[10].tariff_coef[HIGH] = np.nan
        models[10].scale[HIGH] = np.nan
        prof = causality.tariff_profile("hh", models, tau)
        assert prof.mu[HIGH, 10] == prof.mu[NORMAL, 10]
        assert prof.sigma[HIGH, 10] == prof.sigma[NORMAL, 10]
        assert prof.mu[HIGH, 11] != prof.mu[NORMAL, 11]

    def test_missing_normal_raises(self):
        models, tau = self.fit_small_entity(seed=6)
        models[3].tariff_coef[NORMAL] = np.nan
        with pytest.raises(causality.FitError, match="half-hour 4"):
            causality.tariff_profile("hh", models, tau)

    def test_wrong_model_count_raises(self):
        with pytest.raises(causality.FitError):
            causality.tariff_profile("hh", [], np.zeros((5, 48)))

    def test_csv_round_trip_exact(self, tmp_path):
        models, tau = self.fit_small_entity(seed=8, n_days=60)
        prof = causality.tariff_profile("tou042", models, tau)
        path = tmp_path / "profiles.csv"
        causality.export_profiles_csv([prof], path)
        loaded = causality.read_profiles_csv(path)
        assert len(loaded) == 1 and loaded[0].entity == "tou042"
        np.testing.assert_array_equal(loaded[0].mu, prof.mu)
        np.testing.assert_array_equal(loaded[0].sigma, prof.sigma)

    def test_csv_header_validation(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("entity,tariff,hour,mu,sigma\n")
        with pytest.raises(causality.FitError):
            causality.read_profiles_csv(path)


class TestEndToEndRecovery:
    def test_planted_deltas_from_population(self, small_population):
        """The full chain (synth -> fits -> profiles) recovers who responds."""
        pop = small_population
        saver, flat = 0, 4  # archetype blocks of four households each
        tau = pop.tau
        profiles = {}
        for i in (saver, flat):
            models = causality.fit_entity(pop.kwh[i], tau, pop.tariff[i])
            profiles[i] = causality.tariff_profile(pop.household_ids[i], models, tau)
        window = slice(9, 19)
        saver_shift = (profiles[saver].mu[LOW] - profiles[saver].mu[NORMAL])[window].mean()
        flat_shift = (profiles[flat].mu[LOW] - profiles[flat].mu[NORMAL])[window].mean()
        assert saver_shift == pytest.approx(0.5, abs=0.1)
        assert abs(flat_shift) < 0.1
