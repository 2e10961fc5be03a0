"""Contact-interaction experiments: spring-damper surfaces, stiffness
policies, the contact-mode torque law, trial execution and metrics.

A trial launches the link toward an angular surface at a fixed approach
velocity and runs the direct torque-stiffness controller through impact,
penetration and hold. The commanded torque is policy-independent,

    T_des = F_preload + tau_g(theta) - B_eff theta_dot - D_imp theta_dot,

(the last term is the shared policy-level damping), while the commanded
stiffness comes from one of three policies:

    depth-adaptive:  K_des(delta) = K_low + (K_high - K_low) / (1 + a delta)
    fixed low/high:  constant

with penetration depth delta = max(0, theta - theta_contact). The adaptive
formula starts at K_high on first touch and relaxes toward K_low with
depth; a configuration switch selects the inverted profile
K_low + (K_high - K_low) a delta / (1 + a delta), which instead stiffens
with depth.

The surface is a piecewise-linear spring-damper engaged past
theta_contact, clamped so it can push but never pull the link inward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import ControlRefs, Controller, ControllerConfig, ControlMode
from .errors import ConfigurationError, InstabilityError
from .joint import JointModel, gravity_torque, joint_step
from .presets import reference_joint


@dataclass(frozen=True)
class Surface:
    K_env: float            # N m / rad
    D_env: float            # N m s / rad
    theta_contact: float    # rad

    def __post_init__(self):
        if self.K_env < 0.0 or self.D_env < 0.0:
            raise ConfigurationError("surface stiffness and damping must be >= 0")


#: Reference soft (foam/sand-like) and rigid (wood/metal-like) surfaces.
SOFT_SURFACE = Surface(K_env=5.0, D_env=0.5, theta_contact=0.20)
RIGID_SURFACE = Surface(K_env=500.0, D_env=0.5, theta_contact=0.20)


@dataclass(frozen=True)
class StiffnessPolicy:
    """Commanded-stiffness policy as a function of penetration depth."""

    kind: str                   # 'depth_adaptive' | 'fixed'
    K_low: float = 6.0
    K_high: float = 20.0
    alpha_d: float = 25.0       # 1/rad
    inverted: bool = False      # stiffen (rather than relax) with depth

    def __post_init__(self):
        if self.kind not in ("depth_adaptive", "fixed"):
            raise ConfigurationError(f"unknown policy kind {self.kind!r}")
        if self.K_low > self.K_high:
            raise ConfigurationError("K_low must not exceed K_high")
        if self.alpha_d <= 0.0:
            raise ConfigurationError("alpha_d must be positive")

    @classmethod
    def depth_adaptive(cls, K_low=6.0, K_high=20.0, alpha_d=25.0, inverted=False):
        return cls("depth_adaptive", K_low, K_high, alpha_d, inverted)

    @classmethod
    def fixed_low(cls, K=6.0):
        return cls("fixed", K, K)

    @classmethod
    def fixed_high(cls, K=20.0):
        return cls("fixed", K, K)


def desired_stiffness(policy: StiffnessPolicy, delta: float) -> float:
    """Commanded total joint stiffness at penetration depth delta >= 0."""
    d = max(0.0, delta)
    if policy.kind == "fixed":
        return policy.K_low
    ratio = policy.alpha_d * d / (1.0 + policy.alpha_d * d)
    if policy.inverted:
        return policy.K_low + (policy.K_high - policy.K_low) * ratio
    return policy.K_low + (policy.K_high - policy.K_low) * (1.0 - ratio)


def contact_torque(surface: Surface, theta: float, theta_dot: float) -> float:
    """Reaction torque of the surface; zero out of contact, never adhesive."""
    delta = theta - surface.theta_contact
    if delta <= 0.0:
        return 0.0
    reaction = -(surface.K_env * delta + surface.D_env * theta_dot)
    return min(reaction, 0.0)


@dataclass(frozen=True)
class ContactTaskConfig:
    """Shared task setup for every policy in a comparison sweep."""

    F_preload: float = 0.5      # torque-valued preload term (N m)
    B_eff: float = 0.5          # task damping in the torque law (N m s/rad)
    D_imp: float = 3.0          # policy-level damping, identical by design
    dt: float = 1e-3
    horizon: float = 5.0
    approach_offset: float = 0.05   # start this far before the surface (rad)
    approach_speed: float = 4.0     # rad/s
    units: float = 20.0
    strain_limits: tuple[float, float] = (-0.172, 0.35)
    fb_enabled: bool = True
    init_co_contraction: float = 0.3


def desired_torque_contact(
    theta: float, theta_dot: float, cfg: ContactTaskConfig, model: JointModel
) -> float:
    """Task torque: preload plus gravity hold minus task damping. The
    shared policy-level damping is added separately by the trial loop."""
    return (
        cfg.F_preload
        + gravity_torque(model.params, theta)
        - cfg.B_eff * theta_dot
    )


@dataclass
class TrialLog:
    """Time series of one contact trial, one row per control step."""

    t: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    T_des: np.ndarray
    K_des: np.ndarray
    tau_ext: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    K_est: np.ndarray
    surface: Surface = field(default=SOFT_SURFACE)

    COLUMNS = ("t", "theta", "theta_dot", "T_des", "K_des",
               "tau_ext", "alpha1", "alpha2", "K_est")

    def rows(self):
        for i in range(len(self.t)):
            yield (
                self.t[i], self.theta[i], self.theta_dot[i], self.T_des[i],
                self.K_des[i], self.tau_ext[i], self.alpha1[i],
                self.alpha2[i], self.K_est[i],
            )

    def __len__(self):
        return len(self.t)


@dataclass(frozen=True)
class ContactMetrics:
    peak: float        # N m
    impulse: float     # N m s
    t90: float         # s, from first contact
    tau_exp: float     # s
    stability: float   # %
    theta_ss: float    # rad


def run_contact_trial(
    policy: StiffnessPolicy, surface: Surface, cfg: ContactTaskConfig
) -> TrialLog:
    """Simulate one approach-impact-hold trial under the given policy."""
    model = reference_joint(units=cfg.units, strain_limits=cfg.strain_limits)
    controller = Controller(
        model,
        ControllerConfig(mode=ControlMode.DIRECT_TARGETS, fb_enabled=cfg.fb_enabled),
    )
    theta0 = surface.theta_contact - cfg.approach_offset
    c0 = cfg.init_co_contraction
    state = model.equilibrium_state(theta0, (c0, c0))
    state = type(state)(
        theta=theta0,
        theta_dot=cfg.approach_speed,
        muscle_1=state.muscle_1,
        muscle_2=state.muscle_2,
    )

    n = int(round(cfg.horizon / cfg.dt))
    cols = {name: np.zeros(n) for name in TrialLog.COLUMNS}
    for k in range(n):
        t = k * cfg.dt
        delta = max(0.0, state.theta - surface.theta_contact)
        K_des = desired_stiffness(policy, delta)
        T_des = (
            desired_torque_contact(state.theta, state.theta_dot, cfg, model)
            - cfg.D_imp * state.theta_dot
        )
        tau_ext = contact_torque(surface, state.theta, state.theta_dot)
        u1, u2, diag = controller.tick(
            ControlRefs(T_des=T_des, K_des=K_des), state, cfg.dt
        )
        cols["t"][k] = t
        cols["theta"][k] = state.theta
        cols["theta_dot"][k] = state.theta_dot
        cols["T_des"][k] = T_des
        cols["K_des"][k] = K_des
        cols["tau_ext"][k] = tau_ext
        cols["alpha1"][k] = diag.alpha_cmd[0]
        cols["alpha2"][k] = diag.alpha_cmd[1]
        cols["K_est"][k] = diag.K_hat
        try:
            state = joint_step(model, state, (u1, u2), tau_ext, cfg.dt)
        except InstabilityError as err:
            partial = TrialLog(
                **{name: cols[name][: k + 1] for name in TrialLog.COLUMNS},
                surface=surface,
            )
            err.diagnostics["log"] = partial
            raise
    return TrialLog(**cols, surface=surface)


def _envelope_peaks(t: np.ndarray, dev: np.ndarray):
    """Peak |deviation| between consecutive zero crossings of the signed
    deviation."""
    peaks_t, peaks_v = [], []
    sign = np.sign(dev)
    start = 0
    for i in range(1, len(dev)):
        if sign[i] != 0.0 and sign[i] != sign[start] and sign[start] != 0.0:
            seg = np.abs(dev[start:i])
            j = int(np.argmax(seg))
            peaks_t.append(t[start + j])
            peaks_v.append(seg[j])
            start = i
        elif sign[start] == 0.0:
            start = i
    if start < len(dev) - 1:
        seg = np.abs(dev[start:])
        j = int(np.argmax(seg))
        peaks_t.append(t[start + j])
        peaks_v.append(seg[j])
    return np.asarray(peaks_t), np.asarray(peaks_v)


def _fit_decay_constant(t: np.ndarray, amp: np.ndarray) -> float:
    """Least-squares exponential decay constant of a positive envelope."""
    mask = amp > 1e-12
    if mask.sum() < 2:
        return 0.0
    x = t[mask]
    y = np.log(amp[mask])
    slope = np.polyfit(x, y, 1)[0]
    if slope >= 0.0:
        return float("inf")
    return -1.0 / slope


def compute_metrics(log: TrialLog, cfg: ContactTaskConfig) -> ContactMetrics:
    """Six summary metrics of one trial.

    peak      max |tau_ext| in the first 20 ms after first contact
    impulse   integral of |tau_ext| over [0.3 s, end] (trapezoidal)
    t90       first time from contact with |theta - theta_ss| within 10%
              of the contact-to-rest step
    tau_exp   exponential decay constant of the |theta - theta_ss| envelope
    stability % of samples after 0.5 s inside the 2% tolerance band
    theta_ss  mean angle over the final 0.5 s
    """
    t = log.t
    theta = log.theta
    tau = log.tau_ext
    theta_c = log.surface.theta_contact

    contact_idx = np.nonzero(theta > theta_c)[0]
    if contact_idx.size == 0:
        raise ConfigurationError("no contact event in log: metrics undefined")
    i_fc = int(contact_idx[0])
    t_fc = t[i_fc]

    w_peak = (t >= t_fc) & (t <= t_fc + 0.020)
    peak = float(np.max(np.abs(tau[w_peak])))

    w_hold = t >= 0.3
    impulse = float(np.trapezoid(np.abs(tau[w_hold]), t[w_hold]))

    w_ss = t >= t[-1] - 0.5
    theta_ss = float(np.mean(theta[w_ss]))

    theta_step = theta_ss - theta_c
    band90 = 0.1 * abs(theta_step)
    dev = theta - theta_ss
    inside = np.nonzero((t >= t_fc) & (np.abs(dev) <= band90))[0]
    t90 = float(t[inside[0]] - t_fc) if inside.size else float(t[-1] - t_fc)

    band_ref = max(abs(theta_step), 0.05)
    w_stab = t >= 0.5
    if np.any(w_stab):
        in_band = np.abs(dev[w_stab]) <= 0.02 * band_ref
        stability = float(100.0 * np.mean(in_band))
    else:
        stability = 0.0  # log too short to assess the hold phase

    w_fit = t >= t_fc
    pk_t, pk_v = _envelope_peaks(t[w_fit], dev[w_fit])
    if pk_v.size >= 3:
        tau_exp = _fit_decay_constant(pk_t, pk_v)
    else:
        w_tail = t >= t_fc + t90
        tau_exp = _fit_decay_constant(t[w_tail], np.abs(dev[w_tail]))
    if not math.isfinite(tau_exp):
        tau_exp = float(t[-1])

    return ContactMetrics(
        peak=peak,
        impulse=impulse,
        t90=t90,
        tau_exp=float(tau_exp),
        stability=stability,
        theta_ss=theta_ss,
    )
