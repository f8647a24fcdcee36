"""Servo angle schedules that realize an optimized oscillation.

The reflector sits on an arm of radius r; swinging the horn by +/- theta
about the perpendicular rest pose moves the reflector r*sin(theta) along
the radar boresight.  A requested range-bin amplitude therefore maps to
displacement = amplitude * bin_scale and theta = arcsin(displacement / r),
and the swing is feasible only if the servo can sustain the peak angular
speed theta * 2*pi*f/60 and the 2*theta total travel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleGeometryError, ValidationError


@dataclass(frozen=True)
class ServoSpec:
    """Actuator limits; defaults are hobby-servo class (180 deg, 0.1 s/60 deg)."""

    arm_radius_mm: float
    max_angle_deg: float = 180.0
    max_speed_deg_per_s: float = 600.0
    update_rate_hz: float = 50.0

    def __post_init__(self):
        for name in ("arm_radius_mm", "max_angle_deg", "max_speed_deg_per_s",
                     "update_rate_hz"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"ServoSpec.{name} must be > 0")
        if self.max_angle_deg > 360.0:
            raise ValidationError("max_angle_deg must be <= 360")


@dataclass
class Schedule:
    """Timestamped angle commands plus the oscillation they encode."""

    t_ms: np.ndarray       # int64, strictly increasing
    angle_deg: np.ndarray  # quantized to 0.01 deg
    f_rpm: float
    amplitude_deg: float
    arm_radius_mm: float
    displacement_mm: float

    @property
    def samples(self) -> list[tuple[int, float]]:
        return list(zip(self.t_ms.tolist(), self.angle_deg.tolist()))


def amplitude_to_displacement(a_bins: float, bin_scale_m: float) -> float:
    """Peak radial excursion (mm) for an amplitude in range bins."""
    if a_bins < 0:
        raise ValidationError("amplitude must be >= 0")
    return a_bins * bin_scale_m * 1000.0


def displacement_to_angle(displacement_mm: float, arm_radius_mm: float) -> float:
    """Swing half-angle (degrees) whose boresight travel matches the
    displacement: arcsin(displacement / arm radius)."""
    if displacement_mm < 0:
        raise ValidationError("displacement must be >= 0")
    if displacement_mm > arm_radius_mm:
        raise InfeasibleGeometryError(
            f"displacement {displacement_mm:g} mm exceeds arm radius "
            f"{arm_radius_mm:g} mm"
        )
    return float(np.degrees(np.arcsin(displacement_mm / arm_radius_mm)))


def feasibility_check(f_rpm: float, amplitude_deg: float,
                      servo: ServoSpec) -> list[str]:
    """Empty list when the swing is achievable, else violation details."""
    if not f_rpm > 0:
        raise ValidationError("f_rpm must be > 0")
    if amplitude_deg < 0:
        raise ValidationError("amplitude_deg must be >= 0")
    violations = []
    peak_speed = amplitude_deg * 2 * np.pi * f_rpm / 60.0
    if peak_speed > servo.max_speed_deg_per_s:
        violations.append(
            f"peak speed {peak_speed:.1f} deg/s exceeds servo limit "
            f"{servo.max_speed_deg_per_s:.1f} deg/s"
        )
    if 2 * amplitude_deg > servo.max_angle_deg:
        violations.append(
            f"swing {2 * amplitude_deg:.1f} deg exceeds mechanical range "
            f"{servo.max_angle_deg:.1f} deg"
        )
    return violations


def emit_schedule(f_rpm: float, amplitude_deg: float, duration_s: float,
                  servo: ServoSpec) -> Schedule:
    """Sampled sinusoid angle(t) = center + amplitude * sin(2 pi f/60 t)
    about the mid-range rest pose, at the servo update rate.

    Angles are quantized to 0.01 deg and times to 1 ms; the sample count
    is floor(duration * rate) + 1.  Infeasible requests are rejected with
    the violation detail.
    """
    if not duration_s > 0:
        raise ValidationError("duration_s must be > 0")
    violations = feasibility_check(f_rpm, amplitude_deg, servo)
    if violations:
        raise ValidationError("infeasible schedule: " + "; ".join(violations))
    count = int(np.floor(duration_s * servo.update_rate_hz)) + 1
    t = np.arange(count) / servo.update_rate_hz
    center = servo.max_angle_deg / 2.0
    angle = center + amplitude_deg * np.sin(2 * np.pi * (f_rpm / 60.0) * t)
    displacement = servo.arm_radius_mm * np.sin(np.radians(amplitude_deg))
    return Schedule(
        t_ms=np.round(t * 1000.0).astype(np.int64),
        angle_deg=np.round(angle, 2),
        f_rpm=float(f_rpm),
        amplitude_deg=float(amplitude_deg),
        arm_radius_mm=servo.arm_radius_mm,
        displacement_mm=float(displacement),
    )


def write_schedule_csv(schedule: Schedule, path) -> None:
    """Metadata comment lines, a header, then fixed-point command rows."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# f_rpm={schedule.f_rpm:.6f}\n")
        fh.write(f"# amplitude_deg={schedule.amplitude_deg:.6f}\n")
        fh.write(f"# arm_radius_mm={schedule.arm_radius_mm:.6f}\n")
        fh.write(f"# displacement_mm={schedule.displacement_mm:.6f}\n")
        fh.write("t_ms,angle_deg\n")
        for t, angle in zip(schedule.t_ms, schedule.angle_deg):
            fh.write(f"{int(t)},{angle:.2f}\n")
