"""Reference parameter sets.

The muscle numbers come from experimental identification of a HASEL
actuator; the joint numbers describe the desk-scale simulated link the
controller experiments run on.
"""

from __future__ import annotations

from .joint import JointModel, JointParams, MuscleModel
from .muscle import ActivationMap, MuscleDynamicParams, PadeCoefficients

#: Identified base-curve coefficients of a single HASEL unit (N).
HASEL_COEFFS = PadeCoefficients(c0=6.804, c1=-171.076, c2=1087.818, d1=5.674)

#: Identified series-branch and drive parameters of a single HASEL unit.
HASEL_DYNAMICS = MuscleDynamicParams(k_s=2370.9, eta=64.98, tau_a=0.040)

#: Command map used on the identification testbed (normalized voltage).
HASEL_MAP = ActivationMap.hasel_voltage(1.0)

#: Joint and link parameters of the simulated single-DOF testbed.
JOINT_PARAMS = JointParams(
    r=0.03,
    L0=0.16,
    J_eq=0.2,
    B_j=1.0,
    K_j=1.0,
    m_l=1.0,
    l_c=0.1,
    theta_g=0.0,
    g_acc=9.81,
    F_pre=0.5,
)


def reference_muscle(
    units: float = 1.0,
    strain_limits: tuple[float, float] = (-0.02, 0.12),
    amap: ActivationMap | None = None,
) -> MuscleModel:
    """One muscle assembly built from the identified unit parameters."""
    return MuscleModel(
        coeffs=HASEL_COEFFS,
        params=HASEL_DYNAMICS,
        amap=amap if amap is not None else HASEL_MAP,
        units=units,
        strain_limits=strain_limits,
    )


def reference_joint(
    units: float = 1.0,
    strain_limits: tuple[float, float] = (-0.02, 0.12),
    params: JointParams = JOINT_PARAMS,
) -> JointModel:
    """Symmetric antagonistic joint; commands are normalized activations."""
    from .muscle import NORMALIZED_COMMAND

    muscle = MuscleModel(
        coeffs=HASEL_COEFFS,
        params=HASEL_DYNAMICS,
        amap=NORMALIZED_COMMAND,
        units=units,
        strain_limits=strain_limits,
    )
    return JointModel(params=params, muscle_1=muscle, muscle_2=muscle)
