"""Antagonistic single-DOF joint: strain kinematics, gravity, equation of
motion, discrete-time joint stiffness and co-contraction/bias coordinates.

Two pull-only muscles act across a revolute joint with moment arm r and
reference length L0. Contraction strain maps as eps_i = (-1)^i (r/L0) theta
(muscle 1 is stretched by positive rotation, muscle 2 contracted) and the
net muscle torque is r (F1 - F2). Joint dynamics:

    J_eq dd(theta) + B_j d(theta) + K_j theta + tau_g(theta)
        = r (F1 - F2) + tau_ext,    tau_g = m_l g l_c sin(theta - theta_g)

A muscle assembly may consist of `units` identical actuator units in
parallel (stacked films for electrohydraulic/dielectric muscles, bundled
fibers for pneumatic ones). Parallel units multiply force, series
stiffness and series damping by the same factor and leave the strain
dynamics untouched.

Per-muscle discrete-time stiffness combines the active-element slope with
the series branch harmonically; over a control interval dt the damper
contributes eta/dt:

    k_act = alpha * units * |F_base'(x)|
    K_s   = units * (k_s + eta/dt)
    K_step = k_act K_s / (k_act + K_s)

and the joint total adds passive and gravity terms:

    K_tot = r (r/L0) (K_1 + K_2) + K_j + dtau_g/dtheta.

The magnitude of the active slope is used: the base curve falls with
contraction, and with the strain convention above that slope acts as a
restoring (positive) stiffness at the joint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import (
    ConfigurationError,
    DomainError,
    FeasibilityError,
    InstabilityError,
)
from .muscle import (
    ActivationMap,
    MuscleDynamicParams,
    MuscleState,
    NORMALIZED_COMMAND,
    PadeCoefficients,
    base_force,
    base_force_derivative,
    quasi_static_deformation,
)

#: Default trip point for the runaway-velocity guard (rad/s); far above
#: any sane trajectory for a desk-scale joint.
DEFAULT_OMEGA_LIMIT = 100.0


@dataclass(frozen=True)
class JointParams:
    """Geometry, passive elements and gravity of the joint."""

    r: float = 0.03            # moment arm (m)
    L0: float = 0.16           # muscle reference length (m)
    J_eq: float = 0.2          # equivalent inertia (kg m^2)
    B_j: float = 1.0           # viscous damping (N m s/rad)
    K_j: float = 1.0           # passive stiffness (N m/rad)
    m_l: float = 1.0           # link mass (kg)
    l_c: float = 0.1           # center-of-mass distance (m)
    theta_g: float = 0.0       # gravity reference angle (rad)
    g_acc: float = 9.81        # gravitational acceleration (m/s^2)
    F_pre: float = 0.5         # minimum tendon preload force (N)

    def __post_init__(self):
        if self.r <= 0.0 or self.L0 <= 0.0 or self.J_eq <= 0.0:
            raise ConfigurationError("r, L0 and J_eq must be positive")
        if self.B_j < 0.0 or self.K_j < 0.0 or self.F_pre < 0.0:
            raise ConfigurationError("B_j, K_j and F_pre must be non-negative")

    @property
    def xi(self) -> float:
        """Strain per radian of joint rotation."""
        return self.r / self.L0


@dataclass(frozen=True)
class MuscleModel:
    """One side of the antagonistic pair: curve, dynamics, command map and
    the number of identical units in parallel."""

    coeffs: PadeCoefficients
    params: MuscleDynamicParams
    amap: ActivationMap = NORMALIZED_COMMAND
    units: float = 1.0
    strain_limits: tuple[float, float] = (-0.02, 0.12)

    def __post_init__(self):
        if self.units <= 0.0:
            raise ConfigurationError("units must be positive")
        lo, hi = self.strain_limits
        if not lo < hi:
            raise ConfigurationError("empty strain interval")
        if self.coeffs.d1 > 0.0 and 1.0 + self.coeffs.d1 * lo <= 0.0:
            raise ConfigurationError(
                "strain interval crosses the pole of the base force curve"
            )


@dataclass(frozen=True)
class JointState:
    theta: float
    theta_dot: float
    muscle_1: MuscleState
    muscle_2: MuscleState


@dataclass(frozen=True)
class CoContractionBias:
    c: float
    b: float


def strain_of(params: JointParams, theta: float, muscle_index: int) -> float:
    """Contraction strain of one muscle at joint angle theta."""
    if muscle_index not in (1, 2):
        raise ConfigurationError(f"muscle_index must be 1 or 2, got {muscle_index}")
    sign = -1.0 if muscle_index == 1 else 1.0
    return sign * params.xi * theta


def gravity_torque(params: JointParams, theta: float) -> float:
    """Gravity load torque at the joint."""
    return params.m_l * params.g_acc * params.l_c * math.sin(theta - params.theta_g)


def gravity_stiffness(params: JointParams, theta: float) -> float:
    """d tau_g / d theta."""
    return params.m_l * params.g_acc * params.l_c * math.cos(theta - params.theta_g)


def muscle_torque(params: JointParams, F1: float, F2: float) -> float:
    """Net joint torque of the antagonistic pair; tendons pull only."""
    if F1 < 0.0 or F2 < 0.0:
        raise FeasibilityError(
            f"muscle forces must be non-negative (got F1={F1:.6g}, F2={F2:.6g}): "
            "slack tendon or missing preload"
        )
    return params.r * (F1 - F2)


def to_co_contraction_bias(alpha1: float, alpha2: float) -> CoContractionBias:
    """Half-sum / half-difference coordinates of an activation pair."""
    if not (0.0 <= alpha1 <= 1.0 and 0.0 <= alpha2 <= 1.0):
        raise FeasibilityError(
            f"activations must lie in [0, 1], got ({alpha1:.6g}, {alpha2:.6g})"
        )
    return CoContractionBias(c=0.5 * (alpha1 + alpha2), b=0.5 * (alpha1 - alpha2))


def from_co_contraction_bias(c: float, b: float) -> tuple[float, float]:
    """Inverse of :func:`to_co_contraction_bias`; the pair must be feasible."""
    limit = min(c, 1.0 - c)
    if c < 0.0 or c > 1.0:
        raise FeasibilityError(f"co-contraction c={c:.6g} outside [0, 1]")
    if abs(b) > limit + 1e-15:
        raise FeasibilityError(
            f"bias |b|={abs(b):.6g} exceeds min(c, 1-c)={limit:.6g}"
        )
    return c + b, c - b


def per_muscle_step_stiffness(
    muscle: MuscleModel, alpha: float, x: float, dt: float
) -> float:
    """Discrete-time stiffness of one muscle assembly (force per strain)."""
    k_act = alpha * muscle.units * abs(base_force_derivative(muscle.coeffs, x))
    K_s = muscle.units * (muscle.params.k_s + muscle.params.eta / dt)
    if k_act + K_s <= 0.0:
        raise ConfigurationError(
            "degenerate series stiffness: k_act + K_s <= 0 "
            f"(k_act={k_act:.6g}, K_s={K_s:.6g})"
        )
    if k_act == 0.0:
        return 0.0
    return k_act * K_s / (k_act + K_s)


@dataclass(frozen=True)
class JointModel:
    """Plant bundle: joint parameters plus both muscle assemblies."""

    params: JointParams
    muscle_1: MuscleModel
    muscle_2: MuscleModel
    omega_limit: float = DEFAULT_OMEGA_LIMIT

    def strains(self, theta: float) -> tuple[float, float]:
        return (
            strain_of(self.params, theta, 1),
            strain_of(self.params, theta, 2),
        )

    def muscle_forces(self, state: JointState) -> tuple[float, float]:
        """Tendon forces at the current state (N)."""
        a1 = _clamp01(state.muscle_1.a)
        a2 = _clamp01(state.muscle_2.a)
        f1 = self.muscle_1.units * a1 * base_force(self.muscle_1.coeffs, state.muscle_1.x)
        f2 = self.muscle_2.units * a2 * base_force(self.muscle_2.coeffs, state.muscle_2.x)
        return f1, f2

    def net_muscle_torque(self, state: JointState) -> float:
        f1, f2 = self.muscle_forces(state)
        return muscle_torque(self.params, f1, f2)

    def equilibrium_state(
        self, theta: float, alpha: tuple[float, float]
    ) -> JointState:
        """State with drive and deformation settled at the given pose."""
        e1, e2 = self.strains(theta)
        x1 = quasi_static_deformation(
            self.muscle_1.coeffs, self.muscle_1.params.k_s, alpha[0], e1
        )
        x2 = quasi_static_deformation(
            self.muscle_2.coeffs, self.muscle_2.params.k_s, alpha[1], e2
        )
        return JointState(
            theta=theta,
            theta_dot=0.0,
            muscle_1=MuscleState(a=alpha[0], x=x1),
            muscle_2=MuscleState(a=alpha[1], x=x2),
        )


def joint_stiffness_step(
    model: JointModel,
    state: JointState,
    alpha: tuple[float, float],
    dt: float,
) -> float:
    """Total discrete-time joint stiffness at the given activations (N m/rad)."""
    if dt <= 0.0:
        raise ConfigurationError(f"dt must be > 0, got {dt}")
    k1 = per_muscle_step_stiffness(model.muscle_1, alpha[0], state.muscle_1.x, dt)
    k2 = per_muscle_step_stiffness(model.muscle_2, alpha[1], state.muscle_2.x, dt)
    p = model.params
    return p.r * p.xi * (k1 + k2) + p.K_j + gravity_stiffness(p, state.theta)


def _clamp01(v: float) -> float:
    return 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)


def joint_step(
    model: JointModel,
    state: JointState,
    u: tuple[float, float],
    tau_ext: float,
    dt: float,
) -> JointState:
    """Advance the coupled 6-state system (theta, theta_dot, a1, x1, a2, x2)
    by one step of size dt under held commands and external torque.

    The drive states follow their exact zero-order-hold solution; the
    mechanical states use classic RK4. Raises InstabilityError if the
    velocity guard trips or a strain leaves its muscle's operating interval.
    """
    if dt <= 0.0:
        raise ConfigurationError(f"dt must be > 0, got {dt}")
    p = model.params
    m1, m2 = model.muscle_1, model.muscle_2
    if m1.params.eta <= 0.0 or m2.params.eta <= 0.0:
        raise ConfigurationError("joint_step requires eta > 0 in both muscles")

    t1 = m1.amap.drive_target(u[0])
    t2 = m2.amap.drive_target(u[1])
    a1_0, a2_0 = state.muscle_1.a, state.muscle_2.a
    tau1, tau2 = m1.params.tau_a, m2.params.tau_a
    xi = p.xi
    mgl = p.m_l * p.g_acc * p.l_c

    def a_at(s: float) -> tuple[float, float]:
        a1 = t1 + (a1_0 - t1) * math.exp(-s / tau1)
        a2 = t2 + (a2_0 - t2) * math.exp(-s / tau2)
        return a1, a2

    def rhs(s, th, om, x1, x2):
        a1, a2 = a_at(s)
        al1, al2 = _clamp01(a1), _clamp01(a2)
        e1, e2 = -xi * th, xi * th
        de1, de2 = -xi * om, xi * om
        f1u = base_force(m1.coeffs, x1)
        f2u = base_force(m2.coeffs, x2)
        x1dot = de1 + (m1.params.k_s * (e1 - x1) - al1 * f1u) / m1.params.eta
        x2dot = de2 + (m2.params.k_s * (e2 - x2) - al2 * f2u) / m2.params.eta
        tau_m = p.r * (m1.units * al1 * f1u - m2.units * al2 * f2u)
        tau_g = mgl * math.sin(th - p.theta_g)
        om_dot = (tau_m + tau_ext - p.B_j * om - p.K_j * th - tau_g) / p.J_eq
        return om, om_dot, x1dot, x2dot

    th0, om0 = state.theta, state.theta_dot
    x1_0, x2_0 = state.muscle_1.x, state.muscle_2.x
    h = dt

    try:
        return _rk4_mechanical(model, state, a_at, rhs, h)
    except DomainError as err:
        # an integration stage overshot the force-law pole: the step size
        # cannot resolve the local dynamics
        raise InstabilityError(
            f"integration stage left the force-law domain: {err}",
            diagnostics={"theta": th0, "theta_dot": om0},
        ) from err


def _rk4_mechanical(model, state, a_at, rhs, h):
    p = model.params
    m1, m2 = model.muscle_1, model.muscle_2
    xi = p.xi
    th0, om0 = state.theta, state.theta_dot
    x1_0, x2_0 = state.muscle_1.x, state.muscle_2.x

    k1 = rhs(0.0, th0, om0, x1_0, x2_0)
    k2 = rhs(
        0.5 * h,
        th0 + 0.5 * h * k1[0],
        om0 + 0.5 * h * k1[1],
        x1_0 + 0.5 * h * k1[2],
        x2_0 + 0.5 * h * k1[3],
    )
    k3 = rhs(
        0.5 * h,
        th0 + 0.5 * h * k2[0],
        om0 + 0.5 * h * k2[1],
        x1_0 + 0.5 * h * k2[2],
        x2_0 + 0.5 * h * k2[3],
    )
    k4 = rhs(
        h,
        th0 + h * k3[0],
        om0 + h * k3[1],
        x1_0 + h * k3[2],
        x2_0 + h * k3[3],
    )
    s6 = h / 6.0
    th1 = th0 + s6 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    om1 = om0 + s6 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    x1_1 = x1_0 + s6 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    x2_1 = x2_0 + s6 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
    a1_1, a2_1 = a_at(h)

    if not math.isfinite(th1) or abs(om1) > model.omega_limit:
        raise InstabilityError(
            f"velocity guard tripped: |theta_dot| = {abs(om1):.4g} rad/s "
            f"exceeds {model.omega_limit:.4g}",
            diagnostics={"theta": th1, "theta_dot": om1},
        )
    e1, e2 = -xi * th1, xi * th1
    for name, strain, mm in (("muscle 1", e1, m1), ("muscle 2", e2, m2)):
        lo, hi = mm.strain_limits
        if not lo <= strain <= hi:
            raise InstabilityError(
                f"{name} strain {strain:.5g} left its operating interval "
                f"[{lo:.5g}, {hi:.5g}] at theta = {th1:.5g}",
                diagnostics={"theta": th1, "theta_dot": om1, "strain": strain},
            )

    return JointState(
        theta=th1,
        theta_dot=om1,
        muscle_1=MuscleState(a=a1_1, x=x1_1),
        muscle_2=MuscleState(a=a2_1, x=x2_1),
    )


def mechanical_energy(model: JointModel, state: JointState) -> float:
    """Kinetic + gravitational + passive-spring + series-spring energy of
    the passive system (active-element work excluded)."""
    p = model.params
    e1, e2 = model.strains(state.theta)
    ek = 0.5 * p.J_eq * state.theta_dot**2
    ep = 0.5 * p.K_j * state.theta**2
    eg = p.m_l * p.g_acc * p.l_c * (1.0 - math.cos(state.theta - p.theta_g))
    es1 = 0.5 * model.muscle_1.units * model.muscle_1.params.k_s * (e1 - state.muscle_1.x) ** 2
    es2 = 0.5 * model.muscle_2.units * model.muscle_2.params.k_s * (e2 - state.muscle_2.x) ** 2
    return ek + ep + eg + es1 + es2


def scaled(muscle: MuscleModel, units: float) -> MuscleModel:
    """The same muscle with a different parallel-unit count."""
    return replace(muscle, units=units)
