import numpy as np
import pytest

from radarcloak import (
    InfeasibleGeometryError,
    ServoSpec,
    ValidationError,
    amplitude_to_displacement,
    displacement_to_angle,
    emit_schedule,
    feasibility_check,
    write_schedule_csv,
)
from conftest import dominant_frequency_hz


def servo(arm_mm=250.0, **kwargs):
    return ServoSpec(arm_radius_mm=arm_mm, **kwargs)


class TestAmplitudeToDisplacement:
    @pytest.mark.parametrize("bins,mm", [(25.0, 225.0), (0.0, 0.0), (3.0, 27.0)])
    def test_nine_mm_per_bin(self, bins, mm):
        assert amplitude_to_displacement(bins, 0.009) == pytest.approx(mm)

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            amplitude_to_displacement(-1.0, 0.009)


class TestDisplacementToAngle:
    def test_arcsine(self):
        assert displacement_to_angle(225.0, 250.0) == pytest.approx(64.158, abs=1e-3)

    def test_zero(self):
        assert displacement_to_angle(0.0, 250.0) == 0.0

    def test_beyond_arm_rejected(self):
        with pytest.raises(InfeasibleGeometryError):
            displacement_to_angle(260.0, 250.0)

    def test_round_trip_recovers_displacement(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            arm = rng.uniform(100.0, 400.0)
            a_bins = rng.uniform(0.0, 25.0)
            displacement = amplitude_to_displacement(a_bins, 0.009)
            if displacement > arm:
                continue
            theta = displacement_to_angle(displacement, arm)
            back = arm * np.sin(np.radians(theta))
            assert back == pytest.approx(displacement, rel=1e-9, abs=1e-12)


class TestFeasibility:
    def test_speed_violation_at_full_swing(self):
        violations = feasibility_check(98.0, 64.16, servo())
        assert len(violations) == 1
        assert "658.5" in violations[0] or "658.4" in violations[0]

    def test_moderate_swing_ok(self):
        assert feasibility_check(98.0, 30.0, servo()) == []
        # peak speed 307.9 deg/s
        assert 30.0 * 2 * np.pi * 98.0 / 60.0 == pytest.approx(307.9, abs=0.05)

    def test_zero_amplitude_always_ok(self):
        for f in (1.0, 98.0, 10000.0):
            assert feasibility_check(f, 0.0, servo()) == []

    def test_range_violation(self):
        violations = feasibility_check(5.0, 100.0, servo())
        assert any("range" in v for v in violations)

    def test_invalid_inputs(self):
        with pytest.raises(ValidationError):
            feasibility_check(0.0, 10.0, servo())
        with pytest.raises(ValidationError):
            feasibility_check(60.0, -1.0, servo())

    def test_servo_spec_validation(self):
        with pytest.raises(ValidationError):
            ServoSpec(arm_radius_mm=0.0)
        with pytest.raises(ValidationError):
            ServoSpec(arm_radius_mm=100.0, max_angle_deg=400.0)


class TestEmitSchedule:
    def test_sample_count_and_rest_pose(self):
        schedule = emit_schedule(98.0, 30.0, 2.0, servo())
        assert len(schedule.t_ms) == 101
        assert schedule.angle_deg[0] == pytest.approx(90.0)
        assert schedule.t_ms[0] == 0 and schedule.t_ms[1] == 20

    def test_waveform_quarter_period(self):
        # continuous waveform: 90 + 30 sin(2 pi (98/60) t) reaches 120 at
        # the quarter period 153.06 ms
        t = 0.153
        angle = 90.0 + 30.0 * np.sin(2 * np.pi * (98.0 / 60.0) * t)
        assert angle == pytest.approx(120.0, abs=0.01)

    def test_zero_amplitude_constant(self):
        schedule = emit_schedule(98.0, 0.0, 1.0, servo())
        np.testing.assert_array_equal(schedule.angle_deg,
                                      np.full(len(schedule.t_ms), 90.0))

    def test_two_samples_for_one_period_of_updates(self):
        schedule = emit_schedule(60.0, 10.0, 1.0 / 50.0, servo())
        assert len(schedule.t_ms) == 2

    def test_infeasible_rejected_with_detail(self):
        with pytest.raises(ValidationError, match="peak speed"):
            emit_schedule(98.0, 64.16, 2.0, servo())

    def test_angles_within_swing(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            f = rng.uniform(50.0, 100.0)
            amp = rng.uniform(0.0, 25.0)
            schedule = emit_schedule(f, amp, 6.0, servo())
            assert np.all(schedule.angle_deg >= 90.0 - amp - 0.005)
            assert np.all(schedule.angle_deg <= 90.0 + amp + 0.005)
            assert np.all(schedule.angle_deg >= 0.0)
            assert np.all(schedule.angle_deg <= 180.0)
            assert np.all(np.diff(schedule.t_ms) > 0)

    def test_peak_to_peak_excursion(self):
        # long window: sampling phase precesses, so the quantized extremes
        # land within one 0.01 deg step of the true swing
        schedule = emit_schedule(98.0, 20.0, 30.0, servo())
        swing = schedule.angle_deg.max() - schedule.angle_deg.min()
        assert abs(swing - 40.0) <= 0.01

    def test_spectral_peak(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            f = rng.uniform(50.0, 100.0)
            schedule = emit_schedule(f, 15.0, 12.0, servo())
            rate = 50.0
            f_peak = dominant_frequency_hz(schedule.angle_deg, rate)
            assert abs(f_peak - f / 60.0) <= rate / len(schedule.angle_deg)


class TestScheduleCsv:
    def test_format(self, tmp_path):
        schedule = emit_schedule(98.0, 30.0, 0.1, servo())
        path = tmp_path / "schedule.csv"
        write_schedule_csv(schedule, path)
        lines = path.read_text().splitlines()
        meta = [l for l in lines if l.startswith("#")]
        assert len(meta) == 4
        assert meta[0] == "# f_rpm=98.000000"
        assert any("displacement_mm=" in l for l in meta)
        header_idx = lines.index("t_ms,angle_deg")
        rows = lines[header_idx + 1:]
        assert len(rows) == len(schedule.t_ms)
        t0, a0 = rows[0].split(",")
        assert t0 == "0" and a0 == "90.00"
