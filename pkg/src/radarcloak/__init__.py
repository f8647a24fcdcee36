"""radarcloak: simulate UWB vital-sign radargrams, estimate heart rate,
and optimize physically realizable oscillations that mask it.

The package is organized around five pieces:

* :mod:`radarcloak.radargram` - pulse/motion synthesis, clutter removal,
  and the RGRM binary container.
* :mod:`radarcloak.estimators` - FFT peak picking plus two differentiable
  heart-rate estimators with exact input gradients.
* :mod:`radarcloak.defense` - projected gradient descent over the masking
  oscillation's frequency and spatial amplitude.
* :mod:`radarcloak.evaluation` - synthetic corpora, MAE / Bland-Altman
  statistics, and with/without-masking experiments.
* :mod:`radarcloak.servo` - feasibility checks and angle schedules for
  the wrist-worn reflector actuator.
"""

from .defense import (
    ConstraintSet,
    DefenseConfig,
    DefenseResult,
    choose_target_hr,
    clip_params,
    defense_gradient,
    loss,
    make_perturbation,
    perturbation_partials,
    run_defense,
    write_defense_report,
)
from .errors import (
    FormatError,
    InfeasibleGeometryError,
    NoTargetError,
    NumericalError,
    ValidationError,
)
from .estimators import (
    EstimatorOutput,
    FftEstimator,
    FrequencyBand,
    MlpEstimator,
    MlpParams,
    SoftSpecEstimator,
    SoftSpecParams,
    TrainConfig,
    estimate_hr_fft,
    extract_slow_time_signal,
    mlp_forward,
    mlp_grad_input,
    read_dataset_manifest,
    read_mlp_params,
    select_target_bin,
    softspec_forward,
    softspec_grad_input,
    train_mlp,
    write_dataset_manifest,
    write_mlp_params,
)
from .evaluation import (
    BlandAltman,
    EvalRecord,
    ExperimentReport,
    ScenePreset,
    bland_altman,
    generate_dataset,
    mae,
    run_experiment,
    write_report,
)
from .radargram import (
    MotionComponent,
    NoiseSpec,
    RadarConfig,
    Radargram,
    TargetSpec,
    add_radargrams,
    displacement_series,
    read_radargram,
    remove_clutter,
    synthesize_pulse_row,
    synthesize_radargram,
    write_radargram,
    write_radargram_csv,
)
from .servo import (
    Schedule,
    ServoSpec,
    amplitude_to_displacement,
    displacement_to_angle,
    emit_schedule,
    feasibility_check,
    write_schedule_csv,
)

__version__ = "0.1.0"
