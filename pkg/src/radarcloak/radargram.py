"""Synthesis, perturbation, and serialization of UWB impulse radargrams.

A radargram is an M x N complex matrix: rows are successive scans (slow
time, rate Fs), columns are range bins (fast time, one bin = bin_scale
meters of radial distance).  A point target at range-bin position d
produces a Gaussian-modulated sinusoidal pulse in fast time,

    row[n] = exp(-((n - d) / (omega0/Ts))^2) * exp(i 2 pi f0 Ts (n - d)),

and vital-sign motion modulates d over slow time as a sum of sinusoids
around the target's resting offset.  Scenes with several targets (or an
injected masking oscillator) superpose linearly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ValidationError

SPEED_OF_LIGHT = 299_792_458.0

DEFAULT_F0 = 4.3e9            # pulse carrier, Hz
DEFAULT_BIN_SCALE = 0.009     # meters of range per fast-time bin
DEFAULT_FS = 20.0             # slow-time scan rate, Hz
DEFAULT_M = 1200              # scans (60 s at 20 Hz)
DEFAULT_N = 256               # range bins
ENVELOPE_BINS = 5.0           # default Gaussian envelope scale, in bins

_RGRM_MAGIC = b"RGRM"
_RGRM_VERSION = 1
_RGRM_HEADER = struct.Struct("<4sHIIddddd")  # magic, ver, M, N, Fs, Ts, f0, omega0, bin_scale


@dataclass(frozen=True)
class RadarConfig:
    """Acquisition geometry and pulse parameters.

    Ts defaults to the two-way travel time across one range bin
    (2 * bin_scale / c) and omega0 to an envelope scale of five bins;
    both follow bin_scale unless given explicitly.
    """

    f0: float = DEFAULT_F0
    bin_scale: float = DEFAULT_BIN_SCALE
    Ts: float | None = None
    omega0: float | None = None
    Fs: float = DEFAULT_FS
    M: int = DEFAULT_M
    N: int = DEFAULT_N

    def __post_init__(self):
        if self.Ts is None:
            object.__setattr__(self, "Ts", 2.0 * self.bin_scale / SPEED_OF_LIGHT)
        if self.omega0 is None:
            object.__setattr__(self, "omega0", ENVELOPE_BINS * self.Ts)
        for name in ("f0", "Ts", "omega0", "Fs", "bin_scale"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"RadarConfig.{name} must be > 0")
        if self.M < 2 or self.N < 2:
            raise ValidationError("RadarConfig needs M >= 2 and N >= 2")

    @property
    def envelope_bins(self) -> float:
        """Gaussian envelope scale omega0/Ts, in range bins."""
        return self.omega0 / self.Ts

    @property
    def cycles_per_bin(self) -> float:
        """Carrier phase advance per range bin, f0 * Ts, in cycles."""
        return self.f0 * self.Ts

    @property
    def duration_s(self) -> float:
        return self.M / self.Fs


@dataclass(frozen=True)
class MotionComponent:
    """One sinusoidal displacement term: amplitude (bins), frequency (rpm)."""

    amplitude: float
    freq_rpm: float
    phase: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValidationError("MotionComponent.amplitude must be >= 0")
        if not self.freq_rpm > 0:
            raise ValidationError("MotionComponent.freq_rpm must be > 0")


@dataclass(frozen=True)
class TargetSpec:
    """A point reflector: resting range bin, path amplitude, summed motions."""

    offset: float
    reflectivity: float = 1.0
    components: tuple[MotionComponent, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.reflectivity > 0:
            raise ValidationError("TargetSpec.reflectivity must be > 0")

    @property
    def total_amplitude(self) -> float:
        return sum(c.amplitude for c in self.components)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive complex white Gaussian noise, SNR in dB relative to the
    peak pulse magnitude of the strongest target."""

    snr_db: float


@dataclass(eq=False)
class Radargram:
    """M x N complex sample matrix plus its acquisition parameters."""

    data: np.ndarray
    config: RadarConfig

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.shape != (self.config.M, self.config.N):
            raise ValidationError(
                f"data shape {self.data.shape} != (M, N) = "
                f"({self.config.M}, {self.config.N})"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("radargram contains non-finite samples")


def _check_excursion(target: TargetSpec, config: RadarConfig) -> None:
    lo = target.offset - target.total_amplitude
    hi = target.offset + target.total_amplitude
    if lo < 0 or hi >= config.N:
        raise ValidationError(
            f"target excursion [{lo:g}, {hi:g}] leaves the window [0, {config.N})"
        )


def displacement_series(target: TargetSpec, config: RadarConfig) -> np.ndarray:
    """Range-bin position of a target for scans m = 1..M.

    d(m) = offset + sum_c A_c * sin(2 pi f_c / (60 Fs) * m + phi_c).
    Scan indices are 1-based in the motion phase.
    """
    _check_excursion(target, config)
    m = np.arange(1, config.M + 1, dtype=np.float64)
    d = np.full(config.M, float(target.offset))
    for c in target.components:
        d += c.amplitude * np.sin(2 * np.pi * c.freq_rpm / (60.0 * config.Fs) * m + c.phase)
    return d


def _pulse_matrix(d: np.ndarray, config: RadarConfig) -> np.ndarray:
    """Stack of Gaussian-modulated pulses, one row per entry of d."""
    n = np.arange(config.N, dtype=np.float64)
    nd = n[None, :] - np.asarray(d, dtype=np.float64)[:, None]
    scale = config.envelope_bins
    return np.exp(-((nd / scale) ** 2) + 1j * (2 * np.pi * config.cycles_per_bin) * nd)


def synthesize_pulse_row(d: float, config: RadarConfig) -> np.ndarray:
    """Single fast-time scan of a point target centered at range bin d.

    Peak magnitude is 1 at n = d and the envelope is symmetric about d.
    """
    return _pulse_matrix(np.array([float(d)]), config)[0]


def synthesize_radargram(
    scene: list[TargetSpec],
    config: RadarConfig,
    noise: NoiseSpec | None = None,
    seed: int = 0,
) -> Radargram:
    """Superpose every target's reflectivity-weighted pulse track, plus noise.

    Parameters
    ----------
    scene : list of TargetSpec
        Targets; an empty scene gives an all-zero radargram.
    config : RadarConfig
    noise : NoiseSpec, optional
        When given, complex white Gaussian noise is added with power set
        by snr_db relative to the strongest target's peak magnitude.
    seed : int
        Noise seed; identical seeds give identical radargrams.
    """
    data = np.zeros((config.M, config.N), dtype=np.complex128)
    for target in scene:
        d = displacement_series(target, config)
        data += target.reflectivity * _pulse_matrix(d, config)
    if noise is not None:
        rng = np.random.default_rng(seed)
        peak = max((t.reflectivity for t in scene), default=1.0)
        sigma = peak * 10.0 ** (-noise.snr_db / 20.0)
        data += (sigma / np.sqrt(2.0)) * (
            rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape)
        )
    return Radargram(data, config)


def remove_clutter(x: Radargram) -> Radargram:
    """Subtract each range bin's slow-time mean (static-scene suppression)."""
    return Radargram(x.data - x.data.mean(axis=0, keepdims=True), x.config)


def add_radargrams(x: Radargram, delta: Radargram) -> Radargram:
    """Element-wise complex sum; configs must match."""
    if x.config != delta.config:
        raise ValidationError("radargram configs differ")
    return Radargram(x.data + delta.data, x.config)


def write_radargram(x: Radargram, path) -> None:
    """Write the binary container: 54-byte header then M*N complex samples
    as little-endian interleaved f32 pairs, row-major (slow time outer)."""
    c = x.config
    header = _RGRM_HEADER.pack(
        _RGRM_MAGIC, _RGRM_VERSION, c.M, c.N, c.Fs, c.Ts, c.f0, c.omega0, c.bin_scale
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(x.data.astype("<c8")).tobytes())


def read_radargram(path) -> Radargram:
    """Read the binary container back; inverse of write_radargram."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _RGRM_HEADER.size:
        raise FormatError("truncated header")
    magic, version, m, n, fs, ts, f0, omega0, bin_scale = _RGRM_HEADER.unpack_from(raw)
    if magic != _RGRM_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != _RGRM_VERSION:
        raise FormatError(f"unsupported version {version}")
    expected = _RGRM_HEADER.size + m * n * 8
    if len(raw) != expected:
        raise FormatError(f"payload is {len(raw)} bytes, expected {expected}")
    try:
        config = RadarConfig(
            f0=f0, bin_scale=bin_scale, Ts=ts, omega0=omega0, Fs=fs, M=m, N=n
        )
    except ValidationError as exc:
        raise FormatError(f"invalid header fields: {exc}") from exc
    data = np.frombuffer(raw, dtype="<c8", offset=_RGRM_HEADER.size).reshape(m, n)
    if not np.all(np.isfinite(data)):
        raise FormatError("non-finite samples in payload")
    return Radargram(data.astype(np.complex128), config)


def write_radargram_csv(x: Radargram, path) -> None:
    """Magnitude-only CSV export (header m,n,magnitude), for plotting."""
    mag = np.abs(x.data)
    with open(path, "w", newline="") as fh:
        fh.write("m,n,magnitude\n")
        for m in range(x.config.M):
            row = mag[m]
            fh.writelines(f"{m},{n},{row[n]:.8g}\n" for n in range(x.config.N))
