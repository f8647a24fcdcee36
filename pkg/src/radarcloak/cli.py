"""Command-line front end.

Subcommands: synth, estimate, train, defend, eval, schedule.  Config and
preset files are flat ``key = value`` text ('#' comments allowed); see
the README for the recognized keys.  Exit codes: 0 success, 1 usage
error, 2 data/validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .defense import ConstraintSet, DefenseConfig, run_defense, write_defense_report
from .errors import NumericalError, ValidationError
from .estimators import (
    FftEstimator,
    MlpEstimator,
    SoftSpecEstimator,
    SoftSpecParams,
    TrainConfig,
    read_mlp_params,
    train_mlp,
    write_mlp_params,
)
from .evaluation import ScenePreset, generate_dataset, run_experiment, write_report
from .radargram import (
    MotionComponent,
    NoiseSpec,
    RadarConfig,
    TargetSpec,
    read_radargram,
    synthesize_radargram,
    write_radargram,
)
from .servo import (
    ServoSpec,
    amplitude_to_displacement,
    displacement_to_angle,
    emit_schedule,
    write_schedule_csv,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_kv(path) -> dict[str, str]:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _pop_float(kv, key, default=None):
    if key in kv:
        try:
            return float(kv.pop(key))
        except ValueError as exc:
            raise ValidationError(f"bad number for {key!r}: {exc}") from exc
    return default


def _pop_int(kv, key, default=None):
    value = _pop_float(kv, key, default)
    return value if value is None else int(value)


def _reject_unknown(kv, context):
    if kv:
        raise ValidationError(f"unknown {context} keys: {', '.join(sorted(kv))}")


_CONFIG_KEYS = ("f0", "bin_scale", "ts", "omega0", "fs", "m", "n")


def _config_from_kv(kv) -> RadarConfig:
    return RadarConfig(
        f0=_pop_float(kv, "f0", RadarConfig.f0),
        bin_scale=_pop_float(kv, "bin_scale", RadarConfig.bin_scale),
        Ts=_pop_float(kv, "ts"),
        omega0=_pop_float(kv, "omega0"),
        Fs=_pop_float(kv, "fs", RadarConfig.Fs),
        M=_pop_int(kv, "m", RadarConfig.M),
        N=_pop_int(kv, "n", RadarConfig.N),
    )


def _scene_from_kv(kv):
    offset = _pop_float(kv, "offset", 111.1)
    reflectivity = _pop_float(kv, "reflectivity", 1.0)
    components = []
    hr = _pop_float(kv, "hr_bpm", 72.0)
    heart_amp = _pop_float(kv, "heart_amp", 0.4)
    heart_phase = _pop_float(kv, "heart_phase", 0.0)
    if heart_amp > 0:
        components.append(MotionComponent(heart_amp, hr, heart_phase))
    br = _pop_float(kv, "br_rpm", 18.0)
    breath_amp = _pop_float(kv, "breath_amp", 1.2)
    breath_phase = _pop_float(kv, "breath_phase", 0.0)
    if breath_amp > 0:
        components.append(MotionComponent(breath_amp, br, breath_phase))
    snr_db = _pop_float(kv, "snr_db")
    noise = None if snr_db is None else NoiseSpec(snr_db)
    return TargetSpec(offset, reflectivity, tuple(components)), noise


def _preset_from_kv(kv) -> ScenePreset:
    return ScenePreset(
        hr_lo=_pop_float(kv, "hr_lo", ScenePreset.hr_lo),
        hr_hi=_pop_float(kv, "hr_hi", ScenePreset.hr_hi),
        br_lo=_pop_float(kv, "br_lo", ScenePreset.br_lo),
        br_hi=_pop_float(kv, "br_hi", ScenePreset.br_hi),
        heart_amp=_pop_float(kv, "heart_amp", ScenePreset.heart_amp),
        breath_amp=_pop_float(kv, "breath_amp", ScenePreset.breath_amp),
        offset=_pop_float(kv, "offset", ScenePreset.offset),
        snr_db=_pop_float(kv, "snr_db", ScenePreset.snr_db),
        window_s=_pop_float(kv, "window_s", ScenePreset.window_s),
        count=_pop_int(kv, "count", ScenePreset.count),
    )


def _softspec_params_from(path) -> SoftSpecParams:
    if path is None:
        return SoftSpecParams()
    kv = _read_kv(path)
    params = SoftSpecParams(
        temperature=_pop_float(kv, "temperature", SoftSpecParams.temperature),
        calib_scale=_pop_float(kv, "calib_scale", SoftSpecParams.calib_scale),
        calib_offset=_pop_float(kv, "calib_offset", SoftSpecParams.calib_offset),
    )
    _reject_unknown(kv, "softspec params")
    return params


def _make_estimator(model: str, params_path):
    if model == "fft":
        return FftEstimator()
    if model == "softspec":
        return SoftSpecEstimator(_softspec_params_from(params_path))
    if model == "mlp":
        if params_path is None:
            raise ValidationError("--params is required for the mlp model")
        return MlpEstimator(read_mlp_params(params_path))
    raise ValidationError(f"unknown model {model!r}")


def _cmd_synth(args) -> int:
    kv = _read_kv(args.config)
    config = _config_from_kv(kv)
    target, noise = _scene_from_kv(kv)
    _reject_unknown(kv, "synth config")
    x = synthesize_radargram([target], config, noise, seed=args.seed)
    write_radargram(x, args.out)
    print(f"wrote radargram {config.M}x{config.N} to {args.out}")
    return 0


def _cmd_estimate(args) -> int:
    x = read_radargram(args.infile)
    estimator = _make_estimator(args.model, args.params)
    output = estimator.estimate(x)
    print(f"model: {args.model}")
    print(f"hr_bpm: {output.hr_bpm:.4f}")
    print(f"selected_bin: {output.selected_bin}")
    return 0


def _cmd_train(args) -> int:
    preset = _preset_from_kv(_read_kv(args.preset))
    dataset = generate_dataset(preset, args.seed)
    params = train_mlp(dataset, TrainConfig(seed=args.seed))
    write_mlp_params(params, args.out)
    preds = [MlpEstimator(params).predict(x) for x, _ in dataset]
    train_mae = float(np.mean([abs(p - t) for p, (_, t) in zip(preds, dataset)]))
    print(f"trained on {len(dataset)} records; training MAE {train_mae:.3f} bpm")
    print(f"wrote weights to {args.out}")
    return 0


def _cmd_defend(args) -> int:
    if args.model == "fft":
        raise ValidationError(
            "the fft model has no input gradient; defend with softspec or mlp"
        )
    x = read_radargram(args.infile)
    estimator = _make_estimator(args.model, args.params)
    cfg = DefenseConfig(
        alpha=args.alpha,
        iterations=args.iters,
        target_bpm=args.target_bpm,
        seed=args.seed,
    )
    result = run_defense(x, estimator, cfg, ConstraintSet())
    write_defense_report(result, args.report)
    if args.out:
        write_radargram(result.perturbed, args.out)
    print(f"f_opt: {result.f_opt:.4f} rpm, a_opt: {result.a_opt:.4f} bins")
    print(f"final estimate: {result.final_estimate:.4f} bpm "
          f"(target {result.target_bpm:.4f})")
    return 0


def _cmd_eval(args) -> int:
    preset = _preset_from_kv(_read_kv(args.preset))
    estimator = _make_estimator(args.model, args.params)
    report = run_experiment(preset, estimator, DefenseConfig(), ConstraintSet(),
                            seed=args.seed)
    write_report(report, args.report, args.records)
    print(f"clean MAE {report.clean_mae:.3f} bpm, "
          f"defended MAE {report.defended_mae:.3f} bpm, "
          f"ratio {report.degradation_ratio:.2f}")
    return 0


def _cmd_schedule(args) -> int:
    displacement = amplitude_to_displacement(args.a_bins, args.bin_scale)
    servo = ServoSpec(arm_radius_mm=args.arm_mm)
    amplitude_deg = displacement_to_angle(displacement, servo.arm_radius_mm)
    schedule = emit_schedule(args.f_rpm, amplitude_deg, args.duration_s, servo)
    write_schedule_csv(schedule, args.out)
    print(f"amplitude {amplitude_deg:.2f} deg ({displacement:.1f} mm), "
          f"{len(schedule.t_ms)} samples -> {args.out}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="radarcloak")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a radargram from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("estimate", help="estimate heart rate from a radargram")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--model", choices=("fft", "softspec", "mlp"), required=True)
    p.add_argument("--params")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("train", help="train the mlp regressor on a preset")
    p.add_argument("--preset", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("defend", help="optimize a masking oscillation")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--model", choices=("fft", "softspec", "mlp"), required=True)
    p.add_argument("--params")
    p.add_argument("--target-bpm", type=float, required=True)
    p.add_argument("--iters", type=int, default=DefenseConfig.iterations)
    p.add_argument("--alpha", type=float, default=DefenseConfig.alpha)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_defend)

    p = sub.add_parser("eval", help="with/without-masking experiment on a preset")
    p.add_argument("--preset", required=True)
    p.add_argument("--model", choices=("fft", "softspec", "mlp"), required=True)
    p.add_argument("--params")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--records", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("schedule", help="export a servo angle schedule")
    p.add_argument("--f-rpm", type=float, required=True)
    p.add_argument("--a-bins", type=float, required=True)
    p.add_argument("--arm-mm", type=float, required=True)
    p.add_argument("--duration-s", type=float, required=True)
    p.add_argument("--bin-scale", type=float, default=RadarConfig.bin_scale)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_schedule)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
