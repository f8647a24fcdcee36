import numpy as np
import pytest

from radarcloak import (
    MotionComponent,
    NoiseSpec,
    RadarConfig,
    TargetSpec,
    synthesize_radargram,
)


@pytest.fixture(scope="session")
def default_config():
    return RadarConfig()


@pytest.fixture(scope="session")
def small_config():
    # 20 s window, fewer bins: fast enough for unit tests, still resolves
    # the heart-rate band (DFT bin 0.75 bpm after 4x padding)
    return RadarConfig(M=400, N=128)


def make_victim(hr_bpm, br_rpm=18.0, heart_amp=0.4, breath_amp=1.2,
                offset=111.1, heart_phase=1.1, breath_phase=0.4):
    return TargetSpec(
        offset=offset,
        reflectivity=1.0,
        components=(
            MotionComponent(heart_amp, hr_bpm, heart_phase),
            MotionComponent(breath_amp, br_rpm, breath_phase),
        ),
    )


def make_scene(config, hr_bpm=72.0, snr_db=20.0, seed=0, **victim_kwargs):
    noise = None if snr_db is None else NoiseSpec(snr_db)
    return synthesize_radargram([make_victim(hr_bpm, **victim_kwargs)],
                                config, noise, seed=seed)


def dominant_frequency_hz(signal, fs, skip_dc=True):
    """Independent peak finder: plain rfft argmax of the mean-removed signal."""
    z = np.asarray(signal, dtype=np.float64)
    z = z - z.mean()
    power = np.abs(np.fft.rfft(z)) ** 2
    freqs = np.fft.rfftfreq(len(z), 1.0 / fs)
    start = 1 if skip_dc else 0
    return float(freqs[start + int(np.argmax(power[start:]))])
