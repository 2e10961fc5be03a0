"""Cascaded torque-stiffness controller.

Outer loop (optional): impedance law on position references,

    T_des = K_imp (theta_r - theta) + D_imp (dtheta_r - dtheta) + tau_g_hat.

Inner loop: solve for the activation pair that realizes the targets
(T_des, K_des) through the within-tick output map

    y(alpha) = [ r (n1 a1 Fb(x1) - n2 a2 Fb(x2)),
                 r xi (K_1,step + K_2,step) ]

with the internal deformations x_i frozen for the duration of the tick
(they evolve between ticks through the muscle dynamics). The target vector
is y_des = [T_des, K_des - K_j - K_g(theta)]. A damped Gauss-Newton
update

    d_alpha = -(J^T J + lam I)^{-1} J^T e,   lam = 1e-4

runs on channel-scaled residuals (1 N m torque scale, 10 N m/rad
stiffness scale) until the scaled error norm drops below tolerance or the
iteration budget is spent; warm-started solves typically converge in one
or two iterations. Infeasible targets produce a best-effort boundary
solution with a flag.

Feedback (optional): PI terms on the realized-output errors act in
co-contraction/bias coordinates, bias correcting torque and co-contraction
correcting stiffness, with direction-aware integrator freezing when the
downstream commands saturate. Gains are placed on the
lag-plus-integrator loop of each channel: with channel sensitivity s and
drive time constant tau_a, closing PI around s/(s tau_a + 1)/s gives the
characteristic polynomial s^2 + (1 + s K_p)/tau_a s + s K_i / tau_a, so

    K_i = w^2 tau_a / s,   K_p = max(0, 2 zeta w tau_a - 1) / s,  w = 2 pi f

places the poles at the requested bandwidth and damping and yields a
monotone (overshoot-free) step response at zeta = 1.2.

Commands pass through saturation, per-channel slew limiting, and finally
a minimal co-contraction raise that keeps both quasi-static tendon
forces at or above the configured preload.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import ConfigurationError
from .joint import (
    JointModel,
    JointState,
    gravity_stiffness,
    gravity_torque,
    per_muscle_step_stiffness,
)
from .muscle import base_force, base_force_derivative

#: Channel scales used to balance the torque and stiffness residuals.
TORQUE_SCALE = 1.0       # N m
STIFFNESS_SCALE = 10.0   # N m / rad


class ControlMode(Enum):
    DIRECT_TARGETS = "direct"
    IMPEDANCE = "impedance"


@dataclass(frozen=True)
class ImpedanceGains:
    K_imp: float
    D_imp: float

    def __post_init__(self):
        if self.K_imp < 0.0 or self.D_imp < 0.0:
            raise ConfigurationError("impedance gains must be non-negative")


@dataclass(frozen=True)
class ControlTargets:
    T_des: float
    K_des: float


@dataclass(frozen=True)
class CommandLimits:
    alpha_min: tuple[float, float] = (0.0, 0.0)
    alpha_max: tuple[float, float] = (1.0, 1.0)
    slew_max: float = 20.0  # 1/s per activation channel

    def __post_init__(self):
        for lo, hi in zip(self.alpha_min, self.alpha_max):
            if lo > hi:
                raise ConfigurationError("alpha_min must not exceed alpha_max")
        if self.slew_max <= 0.0:
            raise ConfigurationError("slew_max must be positive")


@dataclass(frozen=True)
class PIState:
    """Gains, integrators and anti-windup bounds of the two PI loops."""

    gains: tuple[float, float, float, float]  # K_pT, K_iT, K_pK, K_iK
    integrators: tuple[float, float] = (0.0, 0.0)
    bounds: tuple[float, float] = (0.5, 0.5)
    prev_errors: tuple[float, float] | None = None

    def __post_init__(self):
        if any(g < 0.0 for g in self.gains):
            raise ConfigurationError("PI gains must be non-negative")


def outer_impedance(
    theta_r: float,
    theta_dot_r: float,
    theta: float,
    theta_dot: float,
    gains: ImpedanceGains,
    params,
) -> float:
    """Desired torque from position errors plus gravity compensation."""
    return (
        gains.K_imp * (theta_r - theta)
        + gains.D_imp * (theta_dot_r - theta_dot)
        + gravity_torque(params, theta)
    )


def plant_outputs(
    model: JointModel,
    alpha: tuple[float, float],
    state: JointState,
    dt: float,
) -> tuple[float, float]:
    """Muscle torque and active step stiffness at the given activations,
    deformations held at their current values."""
    p = model.params
    m1, m2 = model.muscle_1, model.muscle_2
    x1, x2 = state.muscle_1.x, state.muscle_2.x
    T = p.r * (
        m1.units * alpha[0] * base_force(m1.coeffs, x1)
        - m2.units * alpha[1] * base_force(m2.coeffs, x2)
    )
    k1 = per_muscle_step_stiffness(m1, alpha[0], x1, dt)
    k2 = per_muscle_step_stiffness(m2, alpha[1], x2, dt)
    return T, p.r * p.xi * (k1 + k2)


def output_jacobian(
    model: JointModel,
    alpha: tuple[float, float],
    state: JointState,
    dt: float,
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Analytic partials of the within-tick outputs w.r.t. (alpha1, alpha2)."""
    p = model.params
    rows_T = []
    rows_K = []
    for m, a, x, sign in (
        (model.muscle_1, alpha[0], state.muscle_1.x, 1.0),
        (model.muscle_2, alpha[1], state.muscle_2.x, -1.0),
    ):
        fb = base_force(m.coeffs, x)
        slope = m.units * abs(base_force_derivative(m.coeffs, x))
        K_s = m.units * (m.params.k_s + m.params.eta / dt)
        k_act = a * slope
        frac = K_s / (k_act + K_s)
        rows_T.append(sign * p.r * m.units * fb)
        rows_K.append(p.r * p.xi * slope * frac * frac)
    return (rows_T[0], rows_T[1]), (rows_K[0], rows_K[1])


@dataclass(frozen=True)
class InnerSolveResult:
    alpha: tuple[float, float]
    iterations: int
    residual: float          # scaled error norm at the solution
    feasible: bool
    error: tuple[float, float]  # raw (e_T, e_K) at the solution


def inner_solve(
    model: JointModel,
    targets: ControlTargets,
    state: JointState,
    warm_start: tuple[float, float],
    dt: float,
    max_iter: int = 8,
    lam: float = 1e-4,
    tol: float = 1e-3,
) -> InnerSolveResult:
    """Damped Gauss-Newton inversion of the within-tick output map.

    The stiffness target is reduced by the passive and gravity terms before
    the solve; the result is clamped to the unit box each iteration, so
    unreachable targets end at the feasibility boundary with the flag down.
    """
    p = model.params
    y2_des = targets.K_des - p.K_j - gravity_stiffness(p, state.theta)
    a1, a2 = warm_start
    a1 = 0.0 if a1 < 0.0 else (1.0 if a1 > 1.0 else a1)
    a2 = 0.0 if a2 < 0.0 else (1.0 if a2 > 1.0 else a2)

    e_t = e_k = 0.0
    norm = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        T, K = plant_outputs(model, (a1, a2), state, dt)
        e_t = (T - targets.T_des) / TORQUE_SCALE
        e_k = (K - y2_des) / STIFFNESS_SCALE
        norm = math.hypot(e_t, e_k)
        if norm <= tol:
            return InnerSolveResult(
                (a1, a2), it, norm, True,
                (e_t * TORQUE_SCALE, e_k * STIFFNESS_SCALE),
            )
        (jt1, jt2), (jk1, jk2) = output_jacobian(model, (a1, a2), state, dt)
        jt1 /= TORQUE_SCALE
        jt2 /= TORQUE_SCALE
        jk1 /= STIFFNESS_SCALE
        jk2 /= STIFFNESS_SCALE
        # normal equations of the damped step
        m11 = jt1 * jt1 + jk1 * jk1 + lam
        m22 = jt2 * jt2 + jk2 * jk2 + lam
        m12 = jt1 * jt2 + jk1 * jk2
        g1 = jt1 * e_t + jk1 * e_k
        g2 = jt2 * e_t + jk2 * e_k
        det = m11 * m22 - m12 * m12
        if det <= 0.0 or not math.isfinite(det):
            break
        d1 = -(m22 * g1 - m12 * g2) / det
        d2 = -(m11 * g2 - m12 * g1) / det
        a1 += d1
        a2 += d2
        a1 = 0.0 if a1 < 0.0 else (1.0 if a1 > 1.0 else a1)
        a2 = 0.0 if a2 < 0.0 else (1.0 if a2 > 1.0 else a2)

    T, K = plant_outputs(model, (a1, a2), state, dt)
    e_t = (T - targets.T_des) / TORQUE_SCALE
    e_k = (K - y2_des) / STIFFNESS_SCALE
    norm = math.hypot(e_t, e_k)
    return InnerSolveResult(
        (a1, a2), it, norm, norm <= tol,
        (e_t * TORQUE_SCALE, e_k * STIFFNESS_SCALE),
    )


def pi_update(
    pi: PIState,
    e_T: float,
    e_K: float,
    dt: float,
    freeze_T_pos: bool = False,
    freeze_T_neg: bool = False,
    freeze_K_pos: bool = False,
    freeze_K_neg: bool = False,
) -> tuple[float, float, PIState]:
    """Trapezoidal PI update in (c, b) coordinates.

    Returns (delta_c, delta_b, new_state). The torque loop drives bias,
    the stiffness loop drives co-contraction. An integrator is frozen when
    the downstream command is already saturated in the error's direction,
    and both are clamped to their anti-windup bounds.
    """
    if dt <= 0.0:
        raise ConfigurationError(f"dt must be > 0, got {dt}")
    k_pT, k_iT, k_pK, k_iK = pi.gains
    i_T, i_K = pi.integrators
    b_T, b_K = pi.bounds
    prev = pi.prev_errors if pi.prev_errors is not None else (e_T, e_K)

    if not ((e_T > 0.0 and freeze_T_pos) or (e_T < 0.0 and freeze_T_neg)):
        i_T += 0.5 * dt * (prev[0] + e_T)
    if not ((e_K > 0.0 and freeze_K_pos) or (e_K < 0.0 and freeze_K_neg)):
        i_K += 0.5 * dt * (prev[1] + e_K)

    if k_iT > 0.0:
        i_T = max(-b_T / k_iT, min(b_T / k_iT, i_T))
    if k_iK > 0.0:
        i_K = max(-b_K / k_iK, min(b_K / k_iK, i_K))

    delta_b = k_pT * e_T + k_iT * i_T
    delta_c = k_pK * e_K + k_iK * i_K
    new = replace(pi, integrators=(i_T, i_K), prev_errors=(e_T, e_K))
    return delta_c, delta_b, new


def design_pi_gains(
    sensitivities: tuple[float, float],
    f_T: float,
    f_K: float,
    zeta: float,
    tau_a: float,
) -> tuple[float, float, float, float]:
    """Per-channel PI gains from diagonal (c, b) plant sensitivities.

    sensitivities = (s_b, s_c): torque per unit bias and stiffness per unit
    co-contraction at the design point. Cross-couplings are treated as
    disturbances. Returns (K_pT, K_iT, K_pK, K_iK).
    """
    s_b, s_c = sensitivities
    if s_b <= 0.0 or s_c <= 0.0:
        raise ConfigurationError(
            "zero diagonal sensitivity: plant locally uncontrollable "
            f"(s_b={s_b:.6g}, s_c={s_c:.6g})"
        )
    if tau_a <= 0.0:
        raise ConfigurationError("tau_a must be positive")
    gains = []
    for f, s in ((f_T, s_b), (f_K, s_c)):
        w = 2.0 * math.pi * f
        k_p = max(0.0, 2.0 * zeta * w * tau_a - 1.0) / s
        k_i = w * w * tau_a / s
        gains.extend((k_p, k_i))
    return tuple(gains)


def command_limits(
    limits: CommandLimits,
    alpha_proposed: tuple[float, float],
    alpha_prev: tuple[float, float],
    dt: float,
) -> tuple[float, float]:
    """Clamp to the activation box, then rate-limit against the previous
    command."""
    if dt <= 0.0:
        raise ConfigurationError(f"dt must be > 0, got {dt}")
    max_step = limits.slew_max * dt
    out = []
    for i in range(2):
        a = alpha_proposed[i]
        a = max(limits.alpha_min[i], min(limits.alpha_max[i], a))
        prev = alpha_prev[i]
        if a > prev + max_step:
            a = prev + max_step
        elif a < prev - max_step:
            a = prev - max_step
        out.append(a)
    return out[0], out[1]


def preload_alpha_floor(model: JointModel, theta: float) -> tuple[float, float]:
    """Smallest activation per muscle whose quasi-static tendon force
    meets the joint's preload requirement at the given pose."""
    p = model.params
    floors = []
    for m, sign in ((model.muscle_1, -1.0), (model.muscle_2, 1.0)):
        f_unit = p.F_pre / m.units
        if f_unit <= 0.0:
            floors.append(0.0)
            continue
        eps = sign * p.xi * theta
        x_star = eps - f_unit / m.params.k_s
        fb = base_force(m.coeffs, x_star)
        floors.append(min(1.0, f_unit / fb) if fb > 0.0 else 1.0)
    return floors[0], floors[1]


def apply_preload(
    model: JointModel, theta: float, alpha: tuple[float, float]
) -> tuple[float, float]:
    """Raise activations minimally so both quasi-static tendon forces reach
    the preload.

    Each muscle is floored independently: this raises co-contraction by the
    least amount that keeps both tendons taut, and near a slack pose it
    perturbs the net torque by at most r * F_pre rather than dragging the
    strong antagonist up with the weak one.
    """
    f1, f2 = preload_alpha_floor(model, theta)
    return max(alpha[0], f1), max(alpha[1], f2)


@dataclass(frozen=True)
class ControllerConfig:
    mode: ControlMode = ControlMode.DIRECT_TARGETS
    fb_enabled: bool = True
    impedance: ImpedanceGains = ImpedanceGains(K_imp=10.0, D_imp=1.0)
    limits: CommandLimits = CommandLimits()
    f_T: float = 3.0          # torque loop bandwidth (Hz)
    f_K: float = 1.0          # stiffness loop bandwidth (Hz)
    zeta: float = 1.2
    newton_max_iter: int = 8
    newton_lambda: float = 1e-4
    newton_tol: float = 1e-3
    integrator_bounds: tuple[float, float] = (0.5, 0.5)
    design_co_contraction: float = 0.5


@dataclass(frozen=True)
class ControlRefs:
    """Per-tick references. Direct mode uses (T_des, K_des); impedance
    mode derives T_des from the position references instead."""

    T_des: float = 0.0
    K_des: float = 0.0
    theta_r: float = 0.0
    theta_dot_r: float = 0.0


@dataclass(frozen=True)
class TickDiagnostics:
    T_des: float
    K_des: float
    T_hat: float
    K_hat: float
    e_T: float
    e_K: float
    alpha_ff: tuple[float, float]
    alpha_cmd: tuple[float, float]
    iterations: int
    residual: float
    feasible: bool
    saturated: tuple[bool, bool]


@dataclass
class Controller:
    """One controller instance per joint; strictly sequential ticking."""

    model: JointModel
    cfg: ControllerConfig = field(default_factory=ControllerConfig)

    def __post_init__(self):
        self.pi: PIState | None = None
        c0 = self.cfg.design_co_contraction
        self._warm: tuple[float, float] = (c0, c0)
        self._prev_cmd: tuple[float, float] | None = None
        self._sat_hi = (False, False)
        self._sat_lo = (False, False)

    def design_feedback(self, dt: float) -> PIState:
        """Design the PI gains around a symmetric operating point."""
        c0 = self.cfg.design_co_contraction
        state = self.model.equilibrium_state(0.0, (c0, c0))
        (jt1, jt2), (jk1, jk2) = output_jacobian(self.model, (c0, c0), state, dt)
        s_b = jt1 - jt2
        s_c = jk1 + jk2
        tau_a = max(
            self.model.muscle_1.params.tau_a, self.model.muscle_2.params.tau_a
        )
        gains = design_pi_gains(
            (s_b, s_c), self.cfg.f_T, self.cfg.f_K, self.cfg.zeta, tau_a
        )
        return PIState(gains=gains, bounds=self.cfg.integrator_bounds)

    def reset(self):
        self.__post_init__()

    def tick(
        self, refs: ControlRefs, measured: JointState, dt: float
    ) -> tuple[float, float, TickDiagnostics]:
        """One control step; returns the muscle commands and diagnostics."""
        cfg = self.cfg
        model = self.model
        p = model.params

        if cfg.mode is ControlMode.IMPEDANCE:
            T_des = outer_impedance(
                refs.theta_r,
                refs.theta_dot_r,
                measured.theta,
                measured.theta_dot,
                cfg.impedance,
                p,
            )
        else:
            T_des = refs.T_des
        K_des = refs.K_des

        # realized outputs at the measured state
        a1 = _clamp01(measured.muscle_1.a)
        a2 = _clamp01(measured.muscle_2.a)
        T_hat, K_act = plant_outputs(model, (a1, a2), measured, dt)
        K_hat = K_act + p.K_j + gravity_stiffness(p, measured.theta)

        result = inner_solve(
            model,
            ControlTargets(T_des=T_des, K_des=K_des),
            measured,
            self._warm,
            dt,
            max_iter=cfg.newton_max_iter,
            lam=cfg.newton_lambda,
            tol=cfg.newton_tol,
        )
        ff1, ff2 = result.alpha
        c_cmd = 0.5 * (ff1 + ff2)
        b_cmd = 0.5 * (ff1 - ff2)

        e_T = T_des - T_hat
        e_K = K_des - K_hat
        if cfg.fb_enabled:
            if self.pi is None:
                self.pi = self.design_feedback(dt)
            hi, lo = self._sat_hi, self._sat_lo
            dc, db, self.pi = pi_update(
                self.pi,
                e_T,
                e_K,
                dt,
                freeze_T_pos=hi[0] or lo[1],
                freeze_T_neg=lo[0] or hi[1],
                freeze_K_pos=hi[0] or hi[1],
                freeze_K_neg=lo[0] or lo[1],
            )
            c_cmd += dc
            b_cmd += db

        # keep the bias, move co-contraction as little as possible
        b_cmd = max(-0.5, min(0.5, b_cmd))
        c_cmd = max(abs(b_cmd), min(1.0 - abs(b_cmd), c_cmd))
        proposed = (c_cmd + b_cmd, c_cmd - b_cmd)

        prev = self._prev_cmd if self._prev_cmd is not None else proposed
        limited = command_limits(cfg.limits, proposed, prev, dt)
        final = apply_preload(model, measured.theta, limited)

        eps_box = 1e-12
        self._sat_hi = tuple(
            final[i] >= cfg.limits.alpha_max[i] - eps_box for i in range(2)
        )
        self._sat_lo = tuple(
            final[i] <= cfg.limits.alpha_min[i] + eps_box for i in range(2)
        )
        self._prev_cmd = final
        self._warm = result.alpha

        u1 = _command_for(model.muscle_1.amap, final[0])
        u2 = _command_for(model.muscle_2.amap, final[1])
        diag = TickDiagnostics(
            T_des=T_des,
            K_des=K_des,
            T_hat=T_hat,
            K_hat=K_hat,
            e_T=e_T,
            e_K=e_K,
            alpha_ff=result.alpha,
            alpha_cmd=final,
            iterations=result.iterations,
            residual=result.residual,
            feasible=result.feasible,
            saturated=(self._sat_hi[0] or self._sat_lo[0],
                       self._sat_hi[1] or self._sat_lo[1]),
        )
        return u1, u2, diag


def _command_for(amap, alpha: float) -> float:
    """Inverse of the activation map on [0, 1]."""
    if amap.kind == "pam":
        return alpha * amap.u_max
    return math.sqrt(alpha) * amap.u_max


def _clamp01(v: float) -> float:
    return 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)
