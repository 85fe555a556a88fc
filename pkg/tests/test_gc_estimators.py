"""Tests for the Granger-causality estimators."""

import math

import numpy as np
import pytest

from sr_granger.errors import DimensionMismatch
from sr_granger.gc_estimators import (
    FULL_BAND,
    FrequencyBand,
    GcKind,
    band_quadrature,
    gc_band,
    gc_spectral,
    gc_spectrum,
    gc_time_lr,
    gc_time_sr,
    partial_covariance,
    reduced_sigma,
)
from sr_granger.sampling import simulate
from sr_granger.var_model import Partition, TargetGC, random_var


@pytest.mark.unit
class TestFrequencyBand:
    """Test frequency band validation."""

    def test_bounds(self):
        """Bands must satisfy 0 <= lo < hi <= 2 pi."""
        with pytest.raises(ValueError):
            FrequencyBand(1.0, 1.0)
        with pytest.raises(ValueError):
            FrequencyBand(-0.1, 1.0)
        with pytest.raises(ValueError):
            FrequencyBand(0.0, 7.0)

    def test_from_hz(self):
        """Hz convert to radians per sample."""
        band = FrequencyBand.from_hz(10.0, 20.0, 100.0)
        assert band.lo == pytest.approx(0.2 * math.pi)
        assert band.hi == pytest.approx(0.4 * math.pi)

    def test_quadrature_weights(self):
        """Normalized weights sum to one and nodes stay inside the band."""
        band = FrequencyBand(0.5, 2.0)
        nodes, weights = band_quadrature(band)
        assert weights.sum() == pytest.approx(1.0)
        assert nodes.min() > 0.5
        assert nodes.max() < 2.0


@pytest.mark.unit
class TestTimeDomain:
    """Test the single-regression and dual-regression time-domain GC."""

    def test_null_model_is_zero(self, null_model, bivariate):
        """No y -> x coupling means zero GC."""
        result = gc_time_sr(null_model, bivariate)
        assert result.value == 0.0
        assert result.kind is GcKind.TIME_SR

    def test_causal_model_positive(self, causal_model, bivariate):
        """Coupling gives a positive GC."""
        assert gc_time_sr(causal_model, bivariate).value > 0.01

    def test_reduced_sigma_dominates(self, causal_model, bivariate):
        """Dropping y never lowers the x innovations variance."""
        assert reduced_sigma(causal_model, bivariate)[0, 0] >= causal_model.Sigma[0, 0]

    def test_partial_covariance(self, causal_model, bivariate):
        """Sigma_yy|x = Sigma_yy - Sigma_yx^2 / Sigma_xx in the bivariate case."""
        np.testing.assert_allclose(partial_covariance(causal_model, bivariate), [[0.75]])

    def test_partition_must_match(self, causal_model):
        """A mismatched partition raises DimensionMismatch."""
        with pytest.raises(DimensionMismatch):
            gc_time_sr(causal_model, Partition(1, 2))

    def test_lr_close_to_population(self, causal_model, bivariate):
        """The dual-regression estimate approaches the population value."""
        data = simulate(causal_model, 20000, np.random.default_rng(2))
        estimate = gc_time_lr(data, 1, bivariate)
        population = gc_time_sr(causal_model, bivariate).value
        assert estimate.kind is GcKind.TIME_LR
        assert estimate.value == pytest.approx(population, abs=0.025)

    def test_multivariate_var(self, rng):
        """Random models built at a target GC report it back."""
        part = Partition(2, 3)
        model = random_var(5, 3, part, 0.9, 1.0, TargetGC(0.02), rng)
        assert gc_time_sr(model, part).value == pytest.approx(0.02, abs=1e-6)


@pytest.mark.unit
class TestFrequencyDomain:
    """Test spectral and band-limited GC."""

    def test_spectrum_integrates_to_time_value(self, causal_model, bivariate):
        """The spectral GC averages to the time-domain GC over [0, 2 pi)."""
        omegas = np.linspace(0.0, 2 * math.pi, 2048, endpoint=False)
        average = gc_spectrum(causal_model, bivariate, omegas).mean()
        assert average == pytest.approx(gc_time_sr(causal_model, bivariate).value, rel=1e-6)

    def test_spectrum_symmetric(self, causal_model, bivariate):
        """f(w) = f(2 pi - w) for a real process."""
        a = gc_spectral(causal_model, bivariate, 0.7).value
        b = gc_spectral(causal_model, bivariate, 2 * math.pi - 0.7).value
        assert a == pytest.approx(b, rel=1e-10)

    def test_spectrum_null_zero(self, null_model, bivariate):
        """A null model has zero spectral GC everywhere."""
        values = gc_spectrum(null_model, bivariate, np.linspace(0, math.pi, 9))
        np.testing.assert_allclose(values, 0.0, atol=1e-12)

    def test_full_band_equals_time_value(self, causal_model, bivariate):
        """Averaging over the full band reproduces the time-domain GC."""
        result = gc_band(causal_model, bivariate, FULL_BAND)
        assert result.kind is GcKind.BAND
        assert result.value == pytest.approx(
            gc_time_sr(causal_model, bivariate).value, rel=1e-8
        )
        assert result.warnings == ()

    def test_band_is_average_of_spectrum(self, causal_model, bivariate):
        """A sub-band value lies between the spectrum's extremes on it."""
        band = FrequencyBand(0.2, 1.0)
        values = gc_spectrum(causal_model, bivariate, np.linspace(0.2, 1.0, 200))
        result = gc_band(causal_model, bivariate, band).value
        assert values.min() <= result <= values.max()
        assert result == pytest.approx(values.mean(), rel=1e-2)

    def test_to_dict(self, causal_model, bivariate):
        """Band results carry their band."""
        band = FrequencyBand(0.2, 1.0)
        out = gc_band(causal_model, bivariate, band).to_dict()
        assert out["kind"] == "band"
        assert out["band"] == [0.2, 1.0]
