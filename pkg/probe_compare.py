"""Scratch probe: open vs closed loop torque tracking under disturbance pulses."""
import math
import numpy as np
from antmuscle import joint_step
from antmuscle.control import Controller, ControllerConfig, ControlRefs, ControlMode
from antmuscle.presets import reference_joint

DT = 5e-4
T_END = 10.0


def ramp_profile(t, knots, rate):
    """Piecewise-constant levels approached at a bounded rate."""
    level = knots[0][1]
    val = knots[0][1]
    for tk, lv in knots:
        if t < tk:
            break
        level = lv
    # integrate the rate limit analytically: value chases level from the most
    # recent knot; emulate by stepping through knots
    val = knots[0][1]
    t_prev = 0.0
    for tk, lv in knots[1:]:
        seg_end = min(t, tk)
        if seg_end > t_prev:
            pass
        t_prev = tk
    return level


class RateLimited:
    def __init__(self, rate, init):
        self.rate = rate
        self.val = init

    def step(self, target, dt):
        d = max(-self.rate * dt, min(self.rate * dt, target - self.val))
        self.val += d
        return self.val


def t_level(t):
    if t < 1.0:
        return 0.0
    if t < 5.0:
        return 0.4      # positive during the -amp pulse window? see schedule
    if t < 9.0:
        return -0.3
    return 0.0


def k_level(t):
    if t < 3.5:
        return 10.0
    if t < 7.5:
        return 16.0
    return 12.0


def dist_profile(t, amp):
    # +amp while T_des is negative-going later; -amp while T_des positive
    if 2.0 <= t < 3.0:
        return -amp
    if 6.0 <= t < 7.0:
        return +amp
    return 0.0


def run(units, amp, fb, t_rate=0.3, k_rate=3.0):
    model = reference_joint(units=units, strain_limits=(-0.16, 0.30))
    cfg = ControllerConfig(mode=ControlMode.DIRECT_TARGETS, fb_enabled=fb)
    ctl = Controller(model, cfg)
    state = model.equilibrium_state(0.0, (0.3, 0.3))
    n = int(T_END / DT)
    t_ref = RateLimited(t_rate, 0.0)
    k_ref = RateLimited(k_rate, 10.0)
    errs_T, errs_K = [], []
    th_min, th_max = 0.0, 0.0
    for k in range(n):
        t = k * DT
        refs = ControlRefs(T_des=t_ref.step(t_level(t), DT),
                           K_des=k_ref.step(k_level(t), DT))
        u1, u2, diag = ctl.tick(refs, state, DT)
        state = joint_step(model, state, (u1, u2), dist_profile(t, amp), DT)
        errs_T.append(diag.T_des - diag.T_hat)
        errs_K.append(diag.K_des - diag.K_hat)
        th_min, th_max = min(th_min, state.theta), max(th_max, state.theta)
    rmse_T = math.sqrt(np.mean(np.square(errs_T)))
    rmse_K = math.sqrt(np.mean(np.square(errs_K)))
    return rmse_T, rmse_K, th_min, th_max


for units in (20.0,):
    for amp in (0.0, 0.5, 1.0, 1.5):
        o = run(units, amp, fb=False)
        c = run(units, amp, fb=True)
        ratio = o[0] / c[0] if c[0] > 0 else float("inf")
        print(f"units={units} amp={amp}: open T={o[0]:.5f} K={o[1]:.4f} | "
              f"closed T={c[0]:.5f} K={c[1]:.4f} | T-ratio={ratio:.1f} | "
              f"theta range [{o[2]:.2f},{o[3]:.2f}]")
