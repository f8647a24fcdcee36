"""Projected gradient optimization of a sinusoidal masking oscillation.

The perturbation is the radargram of a unit-reflectivity point target
sweeping a bins around a fixed offset at f rpm.  Both parameters are
driven by gradient descent on the squared error between a differentiable
estimator's output on the perturbed radargram and a chosen target heart
rate, and are clipped into a feasibility box after every step, so every
iterate stays physically plausible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .estimators import select_target_bin
from .radargram import (
    MotionComponent,
    RadarConfig,
    Radargram,
    TargetSpec,
    add_radargrams,
    synthesize_radargram,
)

# rpm and bin units differ by roughly an order of magnitude in loss
# sensitivity; the amplitude step is scaled down accordingly.
AMPLITUDE_STEP_RATIO = 0.1


@dataclass(frozen=True)
class ConstraintSet:
    """Box bounds on oscillation frequency (rpm) and spatial amplitude (bins)."""

    f_min: float = 50.0
    f_max: float = 100.0
    a_min: float = 0.5
    a_max: float = 25.0

    def __post_init__(self):
        if not 0 < self.f_min < self.f_max:
            raise ValidationError("need 0 < f_min < f_max")
        if not 0 < self.a_min < self.a_max:
            raise ValidationError("need 0 < a_min < a_max")


@dataclass(frozen=True)
class DefenseConfig:
    """Optimizer settings; target_bpm is the heart rate to steer toward."""

    alpha: float = 0.5
    iterations: int = 200
    target_bpm: float | None = None
    perturbation_offset: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError("alpha must be > 0")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")


@dataclass
class DefenseResult:
    f_opt: float
    a_opt: float
    perturbed: Radargram
    loss_trace: np.ndarray
    final_estimate: float
    target_bpm: float
    f_trace: np.ndarray   # per-iteration values after clipping
    a_trace: np.ndarray


def make_perturbation(a: float, f: float, offset: float,
                      config: RadarConfig) -> Radargram:
    """Perturbation radargram: one unit-reflectivity target, one motion
    component of amplitude a (bins) at f (rpm), zero phase, about offset.

    Shares the synthesis code path with ordinary scene generation.
    """
    target = TargetSpec(offset=offset, reflectivity=1.0,
                        components=(MotionComponent(a, f, 0.0),))
    return synthesize_radargram([target], config)


def _partials_given(delta: Radargram, a: float, f: float, offset: float):
    """Chain-rule factors for d(delta)/da and d(delta)/df."""
    config = delta.config
    m = np.arange(1, config.M + 1, dtype=np.float64)
    omega = 2 * np.pi * f / (60.0 * config.Fs)
    d = a * np.sin(omega * m) + offset
    nd = np.arange(config.N, dtype=np.float64)[None, :] - d[:, None]
    scale = config.envelope_bins
    d_delta_dd = delta.data * (2.0 * nd / scale**2
                               - 1j * 2 * np.pi * config.cycles_per_bin)
    dd_da = np.sin(omega * m)
    dd_df = a * np.cos(omega * m) * 2 * np.pi * m / (60.0 * config.Fs)
    return d_delta_dd * dd_da[:, None], d_delta_dd * dd_df[:, None]


def perturbation_partials(a: float, f: float, offset: float,
                          config: RadarConfig):
    """Closed-form (d delta/da, d delta/df) as two M x N complex matrices."""
    delta = make_perturbation(a, f, offset, config)
    return _partials_given(delta, a, f, offset)


def loss(pred: float, y: float) -> float:
    """Squared error between prediction and target, both in bpm."""
    return float(pred - y) ** 2


def _evaluate(a, f, x, estimator, y, offset):
    """Prediction, loss, and (G_A, G_f) at one (a, f) point."""
    delta = make_perturbation(a, f, offset, x.config)
    perturbed = add_radargrams(x, delta)
    pred, grad = estimator.input_gradient(perturbed)
    d_da, d_df = _partials_given(delta, a, f, offset)
    prefactor = 2.0 * (pred - y)
    g_a = prefactor * float(np.sum(np.real(np.conj(grad) * d_da)))
    g_f = prefactor * float(np.sum(np.real(np.conj(grad) * d_df)))
    return pred, g_a, g_f


def defense_gradient(a: float, f: float, x: Radargram, estimator,
                     y: float, offset: float):
    """Gradient of loss(estimator(x + delta(a, f)), y) w.r.t. (a, f).

    The estimator must expose input_gradient(x) -> (prediction, M x N
    complex sample gradient); the inner product with the perturbation
    partials is taken over the real and imaginary parts.
    """
    _require_differentiable(estimator)
    _, g_a, g_f = _evaluate(a, f, x, estimator, y, offset)
    return g_a, g_f


def clip_params(f: float, a: float, c: ConstraintSet):
    """Component-wise projection onto the constraint box (idempotent)."""
    return (
        float(np.clip(f, c.f_min, c.f_max)),
        float(np.clip(a, c.a_min, c.a_max)),
    )


def choose_target_hr(true_bpm: float, c: ConstraintSet,
                     margin: float = 12.0) -> float:
    """Target heart rate a fixed margin away from the truth.

    Prefers true + margin; falls back to true - margin when that would
    leave the band, and clamps the result into [f_min, f_max].
    """
    if not margin > 0:
        raise ValidationError("margin must be > 0")
    if margin > c.f_max - c.f_min:
        raise ValidationError(
            f"margin {margin:g} is wider than the band [{c.f_min:g}, {c.f_max:g}]"
        )
    y = true_bpm + margin if true_bpm + margin <= c.f_max else true_bpm - margin
    return float(np.clip(y, c.f_min, c.f_max))


def _require_differentiable(estimator):
    if not hasattr(estimator, "input_gradient"):
        raise ValidationError(
            f"estimator {getattr(estimator, 'name', type(estimator).__name__)!r} "
            "does not provide input gradients"
        )


def run_defense(x: Radargram, estimator, cfg: DefenseConfig,
                c: ConstraintSet) -> DefenseResult:
    """Projected gradient descent over (frequency, amplitude).

    Frequency starts uniformly random in [f_min, f_max] (from cfg.seed),
    amplitude at the box midpoint.  Each iteration rebuilds the
    perturbation, evaluates the estimator on x + delta, descends with
    per-parameter steps (alpha for f, alpha/10 for a), and clips back
    into the box, so constraints hold at every iterate.  Deterministic
    for a given seed.
    """
    _require_differentiable(estimator)
    if cfg.target_bpm is None:
        raise ValidationError("DefenseConfig.target_bpm is required")
    y = float(cfg.target_bpm)
    if not c.f_min <= y <= c.f_max:
        raise ValidationError(f"target_bpm {y:g} outside [{c.f_min:g}, {c.f_max:g}]")

    offset = cfg.perturbation_offset
    if offset is None:
        offset = float(select_target_bin(x))

    rng = np.random.default_rng(cfg.seed)
    f_opt = float(rng.uniform(c.f_min, c.f_max))
    a_opt = 0.5 * (c.a_min + c.a_max)

    losses = np.empty(cfg.iterations)
    f_trace = np.empty(cfg.iterations)
    a_trace = np.empty(cfg.iterations)
    for t in range(cfg.iterations):
        pred, g_a, g_f = _evaluate(a_opt, f_opt, x, estimator, y, offset)
        value = loss(pred, y)
        if not np.isfinite(value):
            raise NumericalError(f"non-finite loss at iteration {t + 1}")
        losses[t] = value
        f_opt, a_opt = clip_params(f_opt - cfg.alpha * g_f,
                                   a_opt - AMPLITUDE_STEP_RATIO * cfg.alpha * g_a,
                                   c)
        f_trace[t] = f_opt
        a_trace[t] = a_opt

    perturbed = add_radargrams(x, make_perturbation(a_opt, f_opt, offset, x.config))
    final_estimate = float(estimator.predict(perturbed))
    return DefenseResult(f_opt, a_opt, perturbed, losses, final_estimate, y,
                         f_trace, a_trace)


def write_defense_report(result: DefenseResult, path) -> None:
    """Plain-text summary of an optimization run."""
    lines = [
        f"f_opt_rpm: {result.f_opt:.6f}",
        f"a_opt_bins: {result.a_opt:.6f}",
        f"target_bpm: {result.target_bpm:.6f}",
        f"final_estimate_bpm: {result.final_estimate:.6f}",
        f"iterations: {len(result.loss_trace)}",
        f"final_loss: {result.loss_trace[-1]:.6e}",
        "loss_trace: " + " ".join(f"{v:.6e}" for v in result.loss_trace),
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
