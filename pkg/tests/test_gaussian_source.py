"""
Unit tests for the Gaussian EPR source, channel and calibration
"""

import math

import numpy as np
import pytest
from scipy import stats

from src.core.gaussian_source import (
    Basis,
    CalibrationError,
    ChannelModel,
    PartyRecords,
    QuadratureRecord,
    SourceMode,
    SourceModel,
    TimingConfig,
    alice_estimate,
    apply_channel,
    basis_schedule,
    calibrate,
    conditional_variance,
    covariance_4d,
    estimate_channel,
    measure,
    sample_pairs,
    squeezing_db,
    variance_from_r,
)

PHI = (1.0 + math.sqrt(5.0)) / 2.0


class TestSourceModel:
    """Tests for source parameters."""

    def test_variance_from_r(self):
        assert variance_from_r(0.0) == 1.0
        assert variance_from_r(0.5) == pytest.approx(math.cosh(1.0))

    def test_negative_r_rejected(self):
        with pytest.raises(ValueError):
            variance_from_r(-0.1)

    @pytest.mark.parametrize("r, expected", [(0.355, -3.08), (0.347, -3.01)])
    def test_squeezing_levels(self, r, expected):
        """Correlation squeezing of the two bench sources."""
        assert squeezing_db(r) == pytest.approx(expected, abs=0.01)

    def test_unphysical_variance_rejected(self):
        with pytest.raises(ValueError, match="V >= 1"):
            SourceModel(V=0.5)

    def test_minimum_uncertainty_needs_cosh(self):
        with pytest.raises(ValueError):
            SourceModel(V=8.35, r=0.3, mode=SourceMode.MINIMUM_UNCERTAINTY)
        model = SourceModel.from_r(0.3)
        assert model.V == pytest.approx(math.cosh(0.6))

    def test_effective_derives_r(self):
        model = SourceModel.effective(8.35)
        assert math.cosh(2 * model.r) == pytest.approx(8.35)
        assert model.mode is SourceMode.EFFECTIVE

    def test_derived_quantities(self):
        model = SourceModel.effective(8.35)
        assert model.alpha ** 2 * model.V == pytest.approx(model.alice_variance)
        assert model.alice_variance == pytest.approx(8.35 - 1 / 8.35)
        assert model.conditional_variance == pytest.approx(1 / 8.35)
        assert conditional_variance(4.0) == 0.25

    def test_alice_estimate_scale(self):
        assert alice_estimate(2.0, 1.0) == 0.0
        assert alice_estimate(1.0, 8.35) == pytest.approx(math.sqrt(8.35 ** 2 - 1) / 8.35)


class TestSampler:
    """Tests for phase-space sampling."""

    def test_covariance_shape(self):
        cov = covariance_4d(SourceModel.effective(8.35))
        assert cov.shape == (4, 4)
        np.testing.assert_allclose(cov, cov.T)
        assert cov[0, 2] < 0 < cov[1, 3]
        assert np.all(np.linalg.eigvalsh(cov) > 0)

    def test_vacuum_is_identity(self):
        np.testing.assert_allclose(covariance_4d(SourceModel(V=1.0)), np.eye(4))

    def test_empirical_covariance(self):
        """Every covariance entry within 4.5 standard errors."""
        model = SourceModel.effective(8.35)
        n = 200_000
        pts = sample_pairs(model, n, rng_seed=11)
        cov = covariance_4d(model)
        emp = pts.T @ pts / n
        se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov ** 2) / n)
        assert np.all(np.abs(emp - cov) < 4.5 * se)

    def test_conditional_variance_monte_carlo(self):
        model = SourceModel.effective(8.35)
        n = 200_000
        pts = sample_pairs(model, n, rng_seed=5)
        residual = pts[:, 3] - model.alpha * pts[:, 1]
        target = 1.0 / model.V
        assert abs(residual.var() - target) < 4.5 * target * math.sqrt(2.0 / n)

    def test_worker_count_does_not_change_output(self):
        model = SourceModel.effective(3.0)
        serial = sample_pairs(model, 5000, rng_seed=3, block_size=700)
        parallel = sample_pairs(model, 5000, rng_seed=3, block_size=700, workers=4)
        np.testing.assert_array_equal(serial, parallel)

    def test_seeded(self):
        model = SourceModel.effective(3.0)
        a = sample_pairs(model, 100, rng_seed=1)
        b = sample_pairs(model, 100, rng_seed=1)
        c = sample_pairs(model, 100, rng_seed=2)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            sample_pairs(SourceModel(V=2.0), 0, rng_seed=0)


class TestChannel:
    """Tests for the lossy channel."""

    def test_validation(self):
        with pytest.raises(ValueError):
            ChannelModel(eta=0.0)
        with pytest.raises(ValueError):
            ChannelModel(eta=1.2)
        with pytest.raises(ValueError):
            ChannelModel(eta=0.5, delta=-0.1)

    def test_from_efficiencies(self):
        ch = ChannelModel.from_efficiencies(0.89, 0.90, delta=0.14)
        assert ch.eta == pytest.approx(0.801)
        assert ChannelModel.from_efficiencies(0.45, 0.90).eta == pytest.approx(0.405)

    def test_validity(self):
        assert ChannelModel(eta=0.8, delta=0.14).is_valid
        assert not ChannelModel(eta=0.05, delta=0.2).is_valid

    def test_output_variance(self):
        ch = ChannelModel(eta=0.8, delta=0.14)
        rng = np.random.default_rng(0)
        b = rng.normal(0.0, math.sqrt(8.35), size=200_000)
        out, tap = apply_channel(b, ch, np.random.default_rng(1))
        expected = 0.8 * 8.35 + 0.2 + 0.14
        assert abs(out.var() - expected) < 4.5 * expected * math.sqrt(2.0 / len(b))
        assert tap.shape == b.shape

    def test_tap_variance_and_covariance(self):
        var, eta = 8.35, 0.8
        b = np.random.default_rng(3).normal(0.0, math.sqrt(var), size=200_000)
        out, tap = apply_channel(b, ChannelModel(eta=eta, delta=0.14), np.random.default_rng(4))
        n = len(b)

        tap_var = (1.0 - eta) * var + eta
        assert abs(tap.var() - tap_var) < 4.5 * tap_var * math.sqrt(2.0 / n)

        cov = math.sqrt(eta * (1.0 - eta)) * (var - 1.0)
        out_var = eta * var + 1.0 - eta + 0.14
        cov_se = math.sqrt((out_var * tap_var + cov * cov) / n)
        assert abs(np.cov(out, tap)[0, 1] - cov) < 4.5 * cov_se

    def test_output_is_gaussian(self):
        b = np.random.default_rng(5).normal(0.0, math.sqrt(8.35), size=200_000)
        out, _ = apply_channel(b, ChannelModel(eta=0.4, delta=0.11), np.random.default_rng(6), with_tap=False)
        assert abs(stats.kurtosis(out)) < 3.0 * math.sqrt(24.0 / len(out))

    def test_bench_40_output_variance(self):
        b = np.random.default_rng(7).normal(0.0, math.sqrt(8.35), size=200_000)
        out, _ = apply_channel(b, ChannelModel(eta=0.4, delta=0.11), np.random.default_rng(8))
        assert 0.4 * 8.35 + 0.6 + 0.11 == pytest.approx(4.05, abs=0.001)
        assert out.var() == pytest.approx(4.05, rel=0.02)

    def test_scalar_and_no_tap(self):
        out, tap = apply_channel(1.0, ChannelModel(eta=1.0), np.random.default_rng(0), with_tap=False)
        assert out == 1.0
        assert tap is None

    def test_lossless_tap_carries_no_signal(self):
        b = np.linspace(-3, 3, 7)
        _, tap = apply_channel(b, ChannelModel(eta=1.0), np.random.default_rng(0))
        g1 = np.random.default_rng(0).standard_normal(b.shape)
        np.testing.assert_allclose(tap, -g1)


class TestCalibration:
    """Tests for calibration from measured variances."""

    def test_bench_80(self):
        rep = calibrate(6.78, 7.02, 0.8)
        assert rep.V == pytest.approx(8.35, abs=0.01)
        assert rep.V_s == pytest.approx(0.12, abs=0.005)
        assert rep.delta == pytest.approx(0.14, abs=0.01)

    def test_bench_40(self):
        rep = calibrate(3.89, 4.05, 0.4)
        assert rep.V == pytest.approx(8.35, abs=0.01)
        assert rep.delta == pytest.approx(0.11, abs=0.01)

    def test_golden_ratio_lossless(self):
        rep = calibrate(1.0, PHI, 1.0)
        assert rep.V == pytest.approx(PHI)
        assert rep.V_s == pytest.approx(PHI - 1.0)
        assert rep.delta == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("V", [1.5, 4.0, 8.35, 20.0])
    @pytest.mark.parametrize("eta", [0.1, 0.4, 0.8, 1.0])
    @pytest.mark.parametrize("delta", [0.0, 0.05, 0.14, 0.5])
    def test_inverts_forward_model(self, V, eta, delta):
        V_A = V - 1.0 / V
        V_A_meas = eta * V_A + 1.0 - eta
        V_B_meas = eta * V_A + eta / V + 1.0 - eta + delta
        rep = calibrate(V_A_meas, V_B_meas, eta)
        assert rep.V == pytest.approx(V, rel=1e-9)
        assert rep.V_s == pytest.approx(1.0 / V, rel=1e-9)
        assert rep.delta == pytest.approx(delta, abs=1e-9)
        assert rep.eta == eta

    def test_negative_excess_noise_rejected(self):
        with pytest.raises(CalibrationError):
            calibrate(1.0, 1.0, 1.0)

    def test_below_loss_floor_rejected(self):
        with pytest.raises(CalibrationError):
            calibrate(0.1, 1.0, 0.8)

    def test_report_builds_models(self):
        rep = calibrate(6.78, 7.02, 0.8)
        assert rep.channel().eta == 0.8
        assert rep.source().V == pytest.approx(rep.V)


class TestTimingAndMeasurement:
    """Tests for basis schedules and the two-detector measurement."""

    def test_default_block_length(self):
        assert TimingConfig().block_length == 10_000

    def test_bad_timing(self):
        with pytest.raises(ValueError):
            TimingConfig(dt_switch=1e-7, dT_sample=5e-7)

    def test_schedule_constant_within_blocks(self):
        timing = TimingConfig(dt_switch=5e-5)
        bases = basis_schedule(timing, 1050, np.random.default_rng(0))
        assert len(bases) == 1050
        for start in range(0, 1050, 100):
            assert len(set(bases[start:start + 100].tolist())) == 1

    def test_measure_correlations(self):
        timing = TimingConfig(dt_switch=5e-5)
        alice, bob = measure(
            SourceModel.effective(8.35), ChannelModel(0.8, 0.14), timing, 50_000, 4,
            np.random.default_rng(1), np.random.default_rng(2),
        )
        assert len(alice) == len(bob) == 50_000
        np.testing.assert_array_equal(alice.index, bob.index)
        assert bob.tap is not None and alice.tap is None

        amp = (alice.basis == Basis.AMPLITUDE) & (bob.basis == Basis.AMPLITUDE)
        pha = (alice.basis == Basis.PHASE) & (bob.basis == Basis.PHASE)
        assert np.corrcoef(alice.value[amp], bob.value[amp])[0, 1] < -0.9
        assert np.corrcoef(alice.value[pha], bob.value[pha])[0, 1] > 0.9

    def test_estimate_channel(self):
        timing = TimingConfig(dt_switch=5e-5)
        alice, bob = measure(
            SourceModel.effective(8.35), ChannelModel(0.8, 0.14), timing, 400_000, 9,
            np.random.default_rng(1), np.random.default_rng(2),
        )
        same = alice.basis == bob.basis
        est = estimate_channel(alice.value[same], bob.value[same], basis=alice.basis[same])
        assert est.V == pytest.approx(8.35, abs=0.15)
        assert est.eta == pytest.approx(0.8, abs=0.03)
        assert est.delta == pytest.approx(0.14, abs=0.3)

    def test_records_view(self):
        records = PartyRecords(
            index=np.array([0, 1]), basis=np.array([0, 1], dtype=np.int8), value=np.array([0.5, -1.0]),
        )
        first = records[0]
        assert first == QuadratureRecord(0, Basis.AMPLITUDE, 0.5, None)
        assert [r.basis.symbol for r in records] == ["X", "Y"]
        assert len(PartyRecords.from_records(list(records))) == 2

    def test_misaligned_columns(self):
        with pytest.raises(ValueError):
            PartyRecords(index=np.arange(3), basis=np.zeros(2, dtype=np.int8), value=np.zeros(3))
