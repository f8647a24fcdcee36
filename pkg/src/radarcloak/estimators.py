"""Heart-rate estimators over radargrams.

Three estimators share one spectral front end (target-bin selection by
slow-time magnitude variance, triangular-weighted magnitude extraction,
mean removal, Hann window, 4x zero-padded power spectrum restricted to
the physiological band):

* ``FftEstimator`` - classic peak picking with parabolic sub-bin
  interpolation; not differentiable.
* ``SoftSpecEstimator`` - softmax-weighted expected frequency over the
  normalized band power; smooth in the radargram samples, with an exact
  analytic input gradient.
* ``MlpEstimator`` - a small trained regressor (one tanh hidden layer)
  on the log band power; also analytically differentiable.

Bin selection is frozen (treated as a constant) when differentiating.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import FormatError, NoTargetError, NumericalError, ValidationError
from .radargram import Radargram

DEFAULT_HALF_WIDTH = 2    # extraction window half-width, bins
PAD_FACTOR = 4            # zero-padding factor for the power spectrum
LOG_POWER_EPS = 1e-12     # floor inside log() for MLP features

_MLPW_MAGIC = b"MLPW"
_MLPW_VERSION = 1
_MLPW_HEADER = struct.Struct("<4sHII")


@dataclass(frozen=True)
class FrequencyBand:
    """Search band in Hz; defaults to the physiological 50-100 bpm range."""

    lo_hz: float = 50.0 / 60.0
    hi_hz: float = 100.0 / 60.0

    def __post_init__(self):
        if not 0 < self.lo_hz < self.hi_hz:
            raise ValidationError("FrequencyBand needs 0 < lo_hz < hi_hz")

    @property
    def lo_bpm(self) -> float:
        return 60.0 * self.lo_hz

    @property
    def hi_bpm(self) -> float:
        return 60.0 * self.hi_hz


@dataclass
class EstimatorOutput:
    """Estimate plus the evidence it was read from."""

    hr_bpm: float
    selected_bin: int
    spectrum: np.ndarray  # (K, 2) array of (frequency Hz, power) rows


@dataclass(frozen=True)
class SoftSpecParams:
    """Softmax sharpness and affine output calibration.

    temperature applies to the unit-sum normalized band power, so its
    scale is independent of signal energy.
    """

    temperature: float = 0.01
    calib_scale: float = 1.0
    calib_offset: float = 0.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValidationError("temperature must be > 0")


@dataclass
class MlpParams:
    """Weights of the spectral regressor, including the feature
    standardization learned with them."""

    feat_mu: np.ndarray   # (K,)
    feat_sd: np.ndarray   # (K,)
    w1: np.ndarray        # (H, K)
    b1: np.ndarray        # (H,)
    w2: np.ndarray        # (H,)
    b2: float

    def __post_init__(self):
        self.feat_mu = np.asarray(self.feat_mu, dtype=np.float64)
        self.feat_sd = np.asarray(self.feat_sd, dtype=np.float64)
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = float(self.b2)
        k, h = self.n_features, self.n_hidden
        if (
            self.feat_mu.shape != (k,)
            or self.feat_sd.shape != (k,)
            or self.w1.shape != (h, k)
            or self.b1.shape != (h,)
            or self.w2.shape != (h,)
        ):
            raise ValidationError("inconsistent MLP parameter shapes")
        arrays = (self.feat_mu, self.feat_sd, self.w1, self.b1, self.w2)
        if not all(np.all(np.isfinite(a)) for a in arrays) or not np.isfinite(self.b2):
            raise ValidationError("non-finite MLP parameters")

    @property
    def n_features(self) -> int:
        return self.w1.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.w1.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.02
    epochs: int = 300
    batch_size: int = 32
    seed: int = 0


# ---------------------------------------------------------------------------
# core operations


def select_target_bin(x: Radargram) -> int:
    """Range bin with the largest slow-time variance of sample magnitude.

    Ties break toward the lowest index.  Raises NoTargetError when no bin
    shows any magnitude variation (e.g. an all-zero radargram).
    """
    mag = np.abs(x.data)
    var = np.var(mag, axis=0)
    # static scenes leave only summation rounding noise in the variance
    if np.max(var) <= 1e-18 * np.max(mag) ** 2:
        raise NoTargetError("no oscillating target: zero slow-time variance everywhere")
    return int(np.argmax(var))


def extract_slow_time_signal(x: Radargram, bin: int, half_width: int) -> np.ndarray:
    """Triangular-weighted magnitude around a range bin, one value per scan.

    s(m) = sum_{|k| <= half_width} |x[m][bin+k]| w(k), with w triangular
    and normalized to sum 1 (half_width 0 reduces to |x[m][bin]|).
    """
    if half_width < 0:
        raise ValidationError("half_width must be >= 0")
    if bin - half_width < 0 or bin + half_width >= x.config.N:
        raise ValidationError(
            f"window [{bin - half_width}, {bin + half_width}] outside [0, {x.config.N})"
        )
    k = np.arange(-half_width, half_width + 1)
    w = (half_width + 1 - np.abs(k)).astype(np.float64)
    w /= w.sum()
    return np.abs(x.data[:, bin - half_width : bin + half_width + 1]) @ w


def estimate_hr_fft(s: np.ndarray, Fs: float, band: FrequencyBand) -> float:
    """Peak-picking heart-rate estimate of a real slow-time signal, in bpm.

    The signal is mean-removed, Hann-windowed and zero-padded 4x; the
    power spectrum is restricted to the band and the discrete peak is
    refined by three-point parabolic interpolation (exact ties break
    toward the lower frequency).  The result is clamped to the band.
    """
    s = np.asarray(s, dtype=np.float64)
    if band.hi_hz >= Fs / 2:
        raise ValidationError("band extends beyond the Nyquist frequency")
    min_len = int(np.ceil(2.0 * Fs / band.lo_hz))
    if len(s) < min_len:
        raise ValidationError(f"signal too short: {len(s)} < {min_len} samples")
    z = (s - s.mean()) * np.hanning(len(s))
    if not np.any(z):
        raise ValidationError("all-zero signal")
    nfft = PAD_FACTOR * len(s)
    power = np.abs(np.fft.rfft(z, nfft)) ** 2
    freqs = np.fft.rfftfreq(nfft, 1.0 / Fs)
    in_band = np.nonzero((freqs >= band.lo_hz) & (freqs <= band.hi_hz))[0]
    k = in_band[np.argmax(power[in_band])]
    delta = 0.0
    if 0 < k < len(power) - 1:
        a, b, g = power[k - 1], power[k], power[k + 1]
        den = a - 2 * b + g
        if den != 0.0:
            delta = float(np.clip(0.5 * (a - g) / den, -0.5, 0.5))
    f_peak = (k + delta) * Fs / nfft
    return float(np.clip(60.0 * f_peak, band.lo_bpm, band.hi_bpm))


# ---------------------------------------------------------------------------
# shared spectral front end (with adjoint, for the differentiable estimators)


@lru_cache(maxsize=8)
def _band_grid(m: int, fs: float, lo: float, hi: float):
    nfft = PAD_FACTOR * m
    k_lo = int(np.ceil(lo * nfft / fs - 1e-9))
    k_hi = int(np.floor(hi * nfft / fs + 1e-9))
    if k_hi <= k_lo:
        raise ValidationError("band too narrow for this window length")
    kb = np.arange(k_lo, k_hi + 1)
    return kb, kb * fs / nfft, nfft


@lru_cache(maxsize=8)
def _band_dft_matrix(m: int, nfft: int, k_lo: int, k_hi: int) -> np.ndarray:
    kb = np.arange(k_lo, k_hi + 1)
    return np.exp(-2j * np.pi * np.outer(kb, np.arange(m)) / nfft)


def band_frequencies(config, band: FrequencyBand) -> np.ndarray:
    """Frequency grid (Hz) of the band-limited spectrum for a config."""
    _, freqs, _ = _band_grid(config.M, config.Fs, band.lo_hz, band.hi_hz)
    return freqs


def _triangular_weights(half_width: int) -> np.ndarray:
    k = np.arange(-half_width, half_width + 1)
    w = (half_width + 1 - np.abs(k)).astype(np.float64)
    return w / w.sum()


class _FrontEndCache:
    """Intermediates of the band-power computation kept for the adjoint."""

    __slots__ = ("x", "bin", "s", "window", "dft", "weights", "spectrum",
                 "power", "freqs", "half_width")

    def __init__(self, x, bin, s, window, dft, weights, spectrum, power, freqs,
                 half_width):
        self.x = x
        self.bin = bin
        self.s = s
        self.window = window
        self.dft = dft
        self.weights = weights
        self.spectrum = spectrum
        self.power = power
        self.freqs = freqs
        self.half_width = half_width


def _band_power(x: Radargram, band: FrequencyBand, half_width: int) -> _FrontEndCache:
    """Band-limited power spectrum of the selected-bin magnitude signal."""
    if band.hi_hz >= x.config.Fs / 2:
        raise ValidationError("band extends beyond the Nyquist frequency")
    bin = select_target_bin(x)
    bin = min(max(bin, half_width), x.config.N - 1 - half_width)
    s = extract_slow_time_signal(x, bin, half_width)
    window = np.hanning(x.config.M)
    z = window * (s - s.mean())
    kb, freqs, nfft = _band_grid(x.config.M, x.config.Fs, band.lo_hz, band.hi_hz)
    dft = _band_dft_matrix(x.config.M, nfft, int(kb[0]), int(kb[-1]))
    spectrum = dft @ z
    power = np.abs(spectrum) ** 2
    return _FrontEndCache(x, bin, s, window, dft, _triangular_weights(half_width),
                          spectrum, power, freqs, half_width)


def _band_power_adjoint(cache: _FrontEndCache, d_power: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. band power back to the radargram samples.

    Returns an M x N complex matrix g with g = d/dRe + i d/dIm, treating
    the selected bin as fixed.
    """
    # power -> windowed signal: p_k = |S_k|^2, S = E z
    g_z = 2.0 * np.real((d_power * np.conj(cache.spectrum)) @ cache.dft)
    # z = window * (s - mean(s))
    gw = g_z * cache.window
    g_s = gw - gw.mean()
    # s(m) = sum_k w_k |x[m, bin+k]|;  d|u|/du = u/|u| (0 at u = 0)
    x = cache.x
    lo = cache.bin - cache.half_width
    hi = cache.bin + cache.half_width + 1
    win = x.data[:, lo:hi]
    mag = np.abs(win)
    unit = np.divide(win, mag, out=np.zeros_like(win), where=mag > 0)
    grad = np.zeros((x.config.M, x.config.N), dtype=np.complex128)
    grad[:, lo:hi] = g_s[:, None] * cache.weights[None, :] * unit
    return grad


# ---------------------------------------------------------------------------
# softmax spectral estimator


def _softspec_head(power: np.ndarray, freqs_hz: np.ndarray, params: SoftSpecParams):
    total = power.sum()
    if not total > 0:
        raise ValidationError("all-zero band spectrum")
    q = power / total
    logits = q / params.temperature
    e = np.exp(logits - logits.max())
    sigma = e / e.sum()
    hr = params.calib_scale * 60.0 * float(freqs_hz @ sigma) + params.calib_offset
    return hr, q, total, sigma


def softspec_forward(
    x: Radargram,
    params: SoftSpecParams,
    band: FrequencyBand = FrequencyBand(),
    half_width: int = DEFAULT_HALF_WIDTH,
):
    """Differentiable heart-rate estimate, plus cached intermediates.

    The band power is normalized to unit sum, sharpened by a softmax at
    the given temperature, and read out as the calibrated expected
    frequency: smooth in every radargram sample for a fixed selected bin.
    """
    cache = _band_power(x, band, half_width)
    hr, q, total, sigma = _softspec_head(cache.power, cache.freqs, params)
    return hr, (cache, q, total, sigma)


def softspec_grad_input(
    x: Radargram,
    params: SoftSpecParams,
    band: FrequencyBand = FrequencyBand(),
    half_width: int = DEFAULT_HALF_WIDTH,
) -> np.ndarray:
    """Exact gradient of softspec_forward's output w.r.t. every sample."""
    return _softspec_value_and_grad(x, params, band, half_width)[1]


def _softspec_value_and_grad(x, params, band, half_width):
    hr, (cache, q, total, sigma) = softspec_forward(x, params, band, half_width)
    a = params.calib_scale * 60.0 * cache.freqs
    d_q = sigma * (a - float(a @ sigma)) / params.temperature
    d_power = (d_q - float(d_q @ q)) / total
    return hr, _band_power_adjoint(cache, d_power)


# ---------------------------------------------------------------------------
# trained spectral regressor


def _mlp_features(power: np.ndarray) -> np.ndarray:
    return np.log(power + LOG_POWER_EPS)


def _mlp_head(features: np.ndarray, params: MlpParams):
    if features.shape != (params.n_features,):
        raise ValidationError(
            f"feature length {features.shape[0]} != trained {params.n_features} "
            "(window length / band mismatch)"
        )
    fn = (features - params.feat_mu) / params.feat_sd
    hidden = np.tanh(params.w1 @ fn + params.b1)
    return float(params.w2 @ hidden + params.b2), fn, hidden


def mlp_forward(
    x: Radargram,
    params: MlpParams,
    band: FrequencyBand = FrequencyBand(),
    half_width: int = DEFAULT_HALF_WIDTH,
) -> float:
    """Regressor output in bpm, from the same front end as softspec."""
    cache = _band_power(x, band, half_width)
    return _mlp_head(_mlp_features(cache.power), params)[0]


def mlp_grad_input(
    x: Radargram,
    params: MlpParams,
    band: FrequencyBand = FrequencyBand(),
    half_width: int = DEFAULT_HALF_WIDTH,
) -> np.ndarray:
    """Analytic gradient of mlp_forward w.r.t. every radargram sample."""
    return _mlp_value_and_grad(x, params, band, half_width)[1]


def _mlp_value_and_grad(x, params, band, half_width):
    cache = _band_power(x, band, half_width)
    power = cache.power
    pred, _, hidden = _mlp_head(_mlp_features(power), params)
    d_fn = params.w1.T @ (params.w2 * (1.0 - hidden**2))
    d_features = d_fn / params.feat_sd
    d_power = d_features / (power + LOG_POWER_EPS)
    return pred, _band_power_adjoint(cache, d_power)


def train_mlp(
    dataset: list[tuple[Radargram, float]],
    hyper: TrainConfig = TrainConfig(),
    band: FrequencyBand = FrequencyBand(),
    half_width: int = DEFAULT_HALF_WIDTH,
    hidden: int = 32,
) -> MlpParams:
    """Fit the regressor to (radargram, true bpm) pairs by mini-batch
    gradient descent on the mean squared error, with manual backprop.

    Deterministic for a given seed.  Requires at least 100 examples.
    Raises NumericalError (with the epoch index) if the loss diverges.
    """
    if len(dataset) < 100:
        raise ValidationError(f"need >= 100 training examples, got {len(dataset)}")
    feats = np.array([_mlp_features(_band_power(x, band, half_width).power)
                      for x, _ in dataset])
    targets = np.array([float(bpm) for _, bpm in dataset])

    mu = feats.mean(axis=0)
    sd = feats.std(axis=0) + 1e-8
    fn = (feats - mu) / sd

    rng = np.random.default_rng(hyper.seed)
    k = feats.shape[1]
    w1 = rng.normal(0.0, 1.0 / np.sqrt(k), (hidden, k))
    b1 = np.zeros(hidden)
    w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), hidden)
    b2 = float(targets.mean())

    lr = hyper.learning_rate
    count = len(dataset)
    for epoch in range(hyper.epochs):
        order = rng.permutation(count)
        for start in range(0, count, hyper.batch_size):
            j = order[start : start + hyper.batch_size]
            xb, yb = fn[j], targets[j]
            act = np.tanh(xb @ w1.T + b1)
            pred = act @ w2 + b2
            d_out = 2.0 * (pred - yb) / len(j)
            g_w2 = d_out @ act
            g_b2 = d_out.sum()
            d_act = np.outer(d_out, w2) * (1.0 - act**2)
            w1 -= lr * (d_act.T @ xb)
            b1 -= lr * d_act.sum(axis=0)
            w2 -= lr * g_w2
            b2 -= lr * g_b2
        if not np.isfinite(pred).all():
            raise NumericalError(f"training diverged at epoch {epoch}")
    return MlpParams(mu, sd, w1, b1, w2, b2)


# ---------------------------------------------------------------------------
# estimator objects (uniform predict / input_gradient interface)


class FftEstimator:
    """Peak-picking estimator; predict only (no input gradient)."""

    name = "fft"

    def __init__(self, band: FrequencyBand = FrequencyBand(),
                 half_width: int = DEFAULT_HALF_WIDTH):
        self.band = band
        self.half_width = half_width

    def _signal(self, x: Radargram):
        bin = select_target_bin(x)
        bin = min(max(bin, self.half_width), x.config.N - 1 - self.half_width)
        return bin, extract_slow_time_signal(x, bin, self.half_width)

    def predict(self, x: Radargram) -> float:
        bin, s = self._signal(x)
        return estimate_hr_fft(s, x.config.Fs, self.band)

    def estimate(self, x: Radargram) -> EstimatorOutput:
        bin, s = self._signal(x)
        hr = estimate_hr_fft(s, x.config.Fs, self.band)
        z = (s - s.mean()) * np.hanning(len(s))
        nfft = PAD_FACTOR * len(s)
        power = np.abs(np.fft.rfft(z, nfft)) ** 2
        freqs = np.fft.rfftfreq(nfft, 1.0 / x.config.Fs)
        keep = (freqs >= self.band.lo_hz) & (freqs <= self.band.hi_hz)
        return EstimatorOutput(hr, bin, np.column_stack([freqs[keep], power[keep]]))


class SoftSpecEstimator:
    """Differentiable softmax-spectrum estimator."""

    name = "softspec"

    def __init__(self, params: SoftSpecParams = SoftSpecParams(),
                 band: FrequencyBand = FrequencyBand(),
                 half_width: int = DEFAULT_HALF_WIDTH):
        self.params = params
        self.band = band
        self.half_width = half_width

    def predict(self, x: Radargram) -> float:
        return softspec_forward(x, self.params, self.band, self.half_width)[0]

    def input_gradient(self, x: Radargram):
        """Returns (prediction, M x N complex gradient) in one pass."""
        return _softspec_value_and_grad(x, self.params, self.band, self.half_width)

    def estimate(self, x: Radargram) -> EstimatorOutput:
        hr, (cache, *_rest) = softspec_forward(x, self.params, self.band,
                                               self.half_width)
        return EstimatorOutput(hr, cache.bin,
                               np.column_stack([cache.freqs, cache.power]))


class MlpEstimator:
    """Trained spectral regressor."""

    name = "mlp"

    def __init__(self, params: MlpParams,
                 band: FrequencyBand = FrequencyBand(),
                 half_width: int = DEFAULT_HALF_WIDTH):
        self.params = params
        self.band = band
        self.half_width = half_width

    def predict(self, x: Radargram) -> float:
        return mlp_forward(x, self.params, self.band, self.half_width)

    def input_gradient(self, x: Radargram):
        return _mlp_value_and_grad(x, self.params, self.band, self.half_width)

    def estimate(self, x: Radargram) -> EstimatorOutput:
        cache = _band_power(x, self.band, self.half_width)
        pred = _mlp_head(_mlp_features(cache.power), self.params)[0]
        # reported value clamped to the physiological band
        hr = float(np.clip(pred, self.band.lo_bpm, self.band.hi_bpm))
        return EstimatorOutput(hr, cache.bin,
                               np.column_stack([cache.freqs, cache.power]))


# ---------------------------------------------------------------------------
# serialization


def write_mlp_params(params: MlpParams, path) -> None:
    """Versioned binary container for trained weights (bit-exact round trip).

    Payload after the header is little-endian f64, in order: feature mean
    (K), feature std (K), W1 (H x K row-major), b1 (H), W2 (H), b2 (1).
    """
    header = _MLPW_HEADER.pack(_MLPW_MAGIC, _MLPW_VERSION,
                               params.n_features, params.n_hidden)
    payload = np.concatenate([
        params.feat_mu, params.feat_sd, params.w1.ravel(),
        params.b1, params.w2, [params.b2],
    ]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def read_mlp_params(path) -> MlpParams:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _MLPW_HEADER.size:
        raise FormatError("truncated header")
    magic, version, k, h = _MLPW_HEADER.unpack_from(raw)
    if magic != _MLPW_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != _MLPW_VERSION:
        raise FormatError(f"unsupported version {version}")
    n_values = 2 * k + h * k + 2 * h + 1
    expected = _MLPW_HEADER.size + 8 * n_values
    if len(raw) != expected:
        raise FormatError(f"payload is {len(raw)} bytes, expected {expected}")
    vals = np.frombuffer(raw, dtype="<f8", offset=_MLPW_HEADER.size)
    pos = 0
    def take(count):
        nonlocal pos
        out = vals[pos : pos + count]
        pos += count
        return np.array(out)
    mu, sd = take(k), take(k)
    w1 = take(h * k).reshape(h, k)
    b1, w2, b2 = take(h), take(h), take(1)
    try:
        return MlpParams(mu, sd, w1, b1, w2, float(b2[0]))
    except ValidationError as exc:
        raise FormatError(str(exc)) from exc


def write_dataset_manifest(entries: list[tuple[str, float]], path) -> None:
    """CSV manifest of (radargram path, true bpm) pairs."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["radargram", "true_bpm"])
        for rg_path, bpm in entries:
            writer.writerow([rg_path, f"{bpm:.6f}"])


def read_dataset_manifest(path) -> list[tuple[str, float]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["radargram", "true_bpm"]:
        raise FormatError("manifest must start with header: radargram,true_bpm")
    try:
        return [(r[0], float(r[1])) for r in rows[1:]]
    except (IndexError, ValueError) as exc:
        raise FormatError(f"malformed manifest row: {exc}") from exc
