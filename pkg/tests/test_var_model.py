"""Tests for VAR model types, autocovariance, spectra and random model generation."""

from types import SimpleNamespace

import numpy as np
import pytest

from sr_granger.errors import (
    DimensionMismatch,
    InvalidModel,
    NonConvergent,
    Unachievable,
    UnstableFit,
)
from sr_granger.gc_estimators import gc_time_sr
from sr_granger.var_model import (
    Null,
    Partition,
    TargetGC,
    VarParams,
    autocovariance,
    cpsd,
    random_correlation,
    random_var,
    spectral_point,
    transfer_function,
)


@pytest.mark.unit
class TestPartition:
    """Test variable partitions."""

    def test_slices(self):
        """x comes first, y after it."""
        part = Partition(2, 3)
        assert part.n == 5
        assert part.x == slice(0, 2)
        assert part.y == slice(2, 5)

    def test_lagged_indices(self):
        """Stacked indices are lag-major."""
        part = Partition(1, 2)
        np.testing.assert_array_equal(part.lagged_x(2), [0, 3])
        np.testing.assert_array_equal(part.lagged_y(2), [1, 2, 4, 5])

    def test_empty_block_rejected(self):
        """Both blocks must be non-empty."""
        with pytest.raises(DimensionMismatch):
            Partition(0, 2)
        with pytest.raises(DimensionMismatch):
            Partition.from_nx(3, 3)

    def test_check_dimension(self):
        """A partition must cover exactly n variables."""
        with pytest.raises(DimensionMismatch, match="does not match"):
            Partition(1, 1).check(3)


@pytest.mark.unit
class TestVarParams:
    """Test the model record and its invariants."""

    def test_lags_round_trip(self, null_var2):
        """from_lags and lags are inverse layouts."""
        rebuilt = VarParams.from_lags(null_var2.lags, null_var2.Sigma)
        np.testing.assert_array_equal(rebuilt.A, null_var2.A)
        assert null_var2.p == 2
        assert null_var2.n == 3

    def test_arrays_read_only(self, causal_model):
        """Model arrays cannot be mutated in place."""
        with pytest.raises(ValueError):
            causal_model.A[0, 0] = 1.0

    def test_shape_validation(self):
        """A must be n x pn."""
        with pytest.raises(DimensionMismatch):
            VarParams(A=np.zeros((2, 3)), Sigma=np.eye(2))

    def test_check_names_invariant(self):
        """check() reports the violated invariant."""
        with pytest.raises(InvalidModel, match="positive-definite"):
            VarParams(A=np.zeros((2, 2)), Sigma=np.diag([1.0, -1.0])).check()
        with pytest.raises(InvalidModel, match="symmetric"):
            VarParams(A=np.zeros((2, 2)), Sigma=np.array([[1.0, 0.1], [0.0, 1.0]])).check()
        with pytest.raises(InvalidModel, match="spectral radius"):
            VarParams(A=np.eye(2), Sigma=np.eye(2)).check()

    def test_ensure_stable(self):
        """Unstable models raise UnstableFit."""
        with pytest.raises(UnstableFit):
            VarParams(A=1.2 * np.eye(2), Sigma=np.eye(2)).ensure_stable()

    def test_is_null(self, causal_model, null_model, bivariate):
        """Null means every A_k,xy block is zero."""
        assert null_model.is_null(bivariate)
        assert not causal_model.is_null(bivariate)

    def test_log_generalised_correlation(self):
        """gamma is zero for a diagonal Sigma and positive otherwise."""
        diag = VarParams(A=np.zeros((2, 2)), Sigma=np.diag([2.0, 3.0]))
        assert diag.log_generalised_correlation() == pytest.approx(0.0, abs=1e-14)
        corr = VarParams(A=np.zeros((2, 2)), Sigma=np.array([[1.0, 0.6], [0.6, 1.0]]))
        assert corr.log_generalised_correlation() == pytest.approx(-np.log(1 - 0.36))


@pytest.mark.unit
class TestAutocovariance:
    """Test stationary autocovariances."""

    def test_var1_lag_zero(self):
        """Scalar AR(1) variance is sigma^2 / (1 - a^2)."""
        model = VarParams(A=[[0.5]], Sigma=[[1.0]])
        assert autocovariance(model).lag(0)[0, 0] == pytest.approx(4.0 / 3.0)

    def test_yule_walker_extension(self, null_var2):
        """Gamma_k = sum_j A_j Gamma_{k-j} holds beyond the stacked block."""
        acov = autocovariance(null_var2)
        seq = acov.sequence(5)
        lags = null_var2.lags
        for k in range(2, 6):
            expected = lags[0] @ seq[k - 1] + lags[1] @ seq[k - 2]
            np.testing.assert_allclose(seq[k], expected, atol=1e-12)
        np.testing.assert_allclose(acov.lag(3), seq[3])

    def test_negative_lag_is_transpose(self, null_var2):
        """Gamma_{-k} = Gamma_k^T."""
        acov = autocovariance(null_var2)
        np.testing.assert_allclose(acov.lag(-1), acov.lag(1).T)


@pytest.mark.unit
class TestSpectra:
    """Test transfer functions and the cross-power spectral density."""

    def test_phi_psi_inverse(self, causal_model):
        """Psi inverts Phi at every grid point."""
        Phi, Psi = transfer_function(causal_model, np.linspace(0, np.pi, 7))
        for a, b in zip(Phi, Psi, strict=True):
            np.testing.assert_allclose(a @ b, np.eye(2), atol=1e-12)

    def test_cpsd_integrates_to_gamma0(self, causal_model):
        """The CPSD averaged over [0, 2pi) equals Gamma_0."""
        omegas = np.linspace(0.0, 2 * np.pi, 4096, endpoint=False)
        S = cpsd(causal_model, omegas)
        np.testing.assert_allclose(
            S.mean(axis=0).real, autocovariance(causal_model).lag(0), atol=1e-10
        )

    def test_spectral_point_hermitian(self, causal_model):
        """S(w) is Hermitian."""
        point = spectral_point(causal_model, 1.3)
        np.testing.assert_allclose(point.S, point.S.conj().T)


@pytest.mark.unit
class TestRandomModels:
    """Test random correlation matrices and random VAR models."""

    @pytest.mark.parametrize("gamma", [0.1, 1.0, 3.0])
    def test_correlation_hits_gamma(self, rng, gamma):
        """The random correlation matrix has the requested gamma."""
        corr = random_correlation(5, gamma, rng)
        np.testing.assert_allclose(np.diag(corr), 1.0)
        achieved = -np.linalg.slogdet(corr)[1]
        assert achieved == pytest.approx(gamma, abs=1e-6)
        assert np.all(np.linalg.eigvalsh(corr) > 0)

    def test_null_model(self, rng):
        """Null mode zeroes the y -> x blocks and sets the spectral radius."""
        part = Partition(2, 3)
        model = random_var(5, 3, part, 0.9, 1.0, Null(), rng)
        assert model.is_null(part)
        assert model.spectral_radius == pytest.approx(0.9, abs=1e-9)
        assert model.log_generalised_correlation() == pytest.approx(1.0, abs=1e-6)

    def test_target_gc(self, rng):
        """TargetGC mode reaches the requested population GC."""
        part = Partition(2, 2)
        model = random_var(4, 2, part, 0.8, 0.5, TargetGC(0.05), rng)
        assert gc_time_sr(model, part).value == pytest.approx(0.05, abs=1e-6)
        assert model.spectral_radius == pytest.approx(0.8, abs=1e-9)

    def test_same_seed_same_model(self):
        """Generation is deterministic given the generator state."""
        part = Partition(1, 2)
        a = random_var(3, 2, part, 0.7, 1.0, Null(), np.random.default_rng(7))
        b = random_var(3, 2, part, 0.7, 1.0, Null(), np.random.default_rng(7))
        np.testing.assert_array_equal(a.A, b.A)
        np.testing.assert_array_equal(a.Sigma, b.Sigma)

    def test_target_gc_must_be_positive(self):
        """A non-positive target is rejected at construction."""
        with pytest.raises(ValueError):
            TargetGC(0.0)

    def test_target_gc_failed_evaluation_is_unachievable(self, rng, mocker):
        """A DARE failure during the search surfaces as Unachievable."""
        mocker.patch(
            "sr_granger.gc_estimators.gc_time_sr",
            side_effect=NonConvergent("Riccati recursion did not converge"),
        )
        with pytest.raises(Unachievable) as excinfo:
            random_var(2, 1, Partition(1, 1), 0.8, 0.5, TargetGC(0.1), rng)
        assert isinstance(excinfo.value.__cause__, NonConvergent)

    def test_target_gc_non_monotone_is_unachievable(self, rng, mocker):
        """A midpoint GC outside the bracket values stops the chop."""
        # scale 1.0 brackets the target; the midpoint 0.5 overshoots it
        mocker.patch(
            "sr_granger.gc_estimators.gc_time_sr",
            side_effect=[SimpleNamespace(value=0.5), SimpleNamespace(value=0.9)],
        )
        with pytest.raises(Unachievable, match="not monotone"):
            random_var(2, 1, Partition(1, 1), 0.8, 0.5, TargetGC(0.1), rng)

    def test_target_gc_decreasing_bracket_is_unachievable(self, rng, mocker):
        """GC falling while the scale doubles stops the bracket search."""
        mocker.patch(
            "sr_granger.gc_estimators.gc_time_sr",
            side_effect=[SimpleNamespace(value=0.05), SimpleNamespace(value=0.01)],
        )
        with pytest.raises(Unachievable, match="decreased"):
            random_var(2, 1, Partition(1, 1), 0.8, 0.5, TargetGC(0.1), rng)
