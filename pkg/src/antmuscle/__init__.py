"""Simulation, identification and torque-stiffness decoupling control of
antagonistic artificial-muscle joints."""

from .muscle import (
    ActivationMap,
    MuscleDynamicParams,
    MuscleState,
    PadeCoefficients,
    activation_from_command,
    base_force,
    base_force_derivative,
    muscle_step,
    validate_shape_constraints,
)
from .joint import (
    CoContractionBias,
    JointModel,
    JointParams,
    JointState,
    MuscleModel,
    from_co_contraction_bias,
    gravity_stiffness,
    gravity_torque,
    joint_step,
    joint_stiffness_step,
    muscle_torque,
    strain_of,
    to_co_contraction_bias,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationMap",
    "CoContractionBias",
    "JointModel",
    "JointParams",
    "JointState",
    "MuscleDynamicParams",
    "MuscleModel",
    "MuscleState",
    "PadeCoefficients",
    "activation_from_command",
    "base_force",
    "base_force_derivative",
    "from_co_contraction_bias",
    "gravity_stiffness",
    "gravity_torque",
    "joint_step",
    "joint_stiffness_step",
    "muscle_step",
    "muscle_torque",
    "strain_of",
    "to_co_contraction_bias",
    "validate_shape_constraints",
]
