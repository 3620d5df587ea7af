"""Perception-defined control-invariant safe sets for visuomotor policies,
with a minimum-norm runtime recovery filter and a kinematic rollout harness."""

from .camera import CameraModel, Projection, fov_score, project
from .estimator import SafeSetEstimator, poses_from_array
from .geometry import (
    Pose,
    SphericalCoord,
    cart2sph,
    quat_angle,
    quat_from_euler,
    quat_multiply,
    sph2cart,
)
from .perception import (
    DefaultPerceptionModel,
    Observation,
    Primitive,
    ReferenceDistribution,
    Scene,
    embed_default,
    fit_reference,
    mahalanobis_sq,
    recog_score,
    render_synthetic,
)
from .recovery import FilterDecision, RecoveryParams, nagumo_ok, qp_oracle, recover
from .safeset import (
    ConstraintParams,
    GoalSpec,
    PerturbationParams,
    SafetyField,
    build_field,
    evaluate_h,
    field_gradient,
    field_query,
    generate_candidates,
    low_dim_filter,
    tune_constraints,
)
from .sim import (
    Disturbance,
    NominalPolicy,
    RolloutResult,
    SimConfig,
    VisuomotorPolicy,
    evaluate,
    nominal_policy,
    rollout,
    step,
)

__version__ = "0.1.0"
