"""Two-stage muscle parameter identification from force/position data.

Stage 1 fits the base-curve coefficients to quasi-static samples (slow,
high-activation sweeps). The raw force-strain samples are biased by the
series compliance (at equilibrium the internal deformation sits at
x = eps - F/k_s rather than at eps), so the fit minimizes the residual
against the quasi-static force balance with the series stiffness carried
as a nuisance parameter; shape constraints are enforced by penalty with a
final feasibility check.

Stage 2 fits the series parameters (k_s, eta, tau_a) by full forward
simulation of the transient dataset against measured force (simulation
error), with the stage-1 coefficients frozen.

Both stages use bounded Nelder-Mead restarts from a deterministic set of
seeded starting points; the best feasible solution wins, ties broken by
start index.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .errors import (
    ConfigurationError,
    FitError,
    InsufficientDataError,
    TrajectoryParseError,
    TrajectorySchemaError,
)
from .muscle import (
    ActivationMap,
    MuscleDynamicParams,
    PadeCoefficients,
    validate_shape_constraints,
)

TRAJECTORY_COLUMNS = ("t", "u", "F", "eps", "eps_dot")

#: Samples are quasi-static when |eps_dot| is below this rate (1/s) and
#: activation above this level.
QS_RATE_LIMIT = 0.01
QS_ACTIVATION_FLOOR = 0.7

#: Minimum samples per free parameter before a fit is attempted.
MIN_SAMPLES_PER_PARAM = 8


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled muscle testbed record."""

    t: np.ndarray
    u: np.ndarray
    F: np.ndarray
    eps: np.ndarray
    eps_dot: np.ndarray
    rate: float  # Hz

    def __len__(self):
        return len(self.t)

    def rows(self):
        for i in range(len(self.t)):
            yield (self.t[i], self.u[i], self.F[i], self.eps[i], self.eps_dot[i])


@dataclass(frozen=True)
class FitReport:
    rmse: float
    r_squared: float
    residuals: np.ndarray
    constraint_report: object


def make_trajectory(t, u, F, eps, eps_dot) -> Trajectory:
    """Validate arrays and bundle them as a Trajectory."""
    arrs = [np.asarray(a, dtype=float) for a in (t, u, F, eps, eps_dot)]
    n = len(arrs[0])
    if any(len(a) != n for a in arrs):
        raise TrajectorySchemaError("trajectory columns have unequal lengths")
    if n < 2:
        raise TrajectorySchemaError("trajectory needs at least two samples")
    for name, a in zip(TRAJECTORY_COLUMNS, arrs):
        if not np.all(np.isfinite(a)):
            bad = int(np.nonzero(~np.isfinite(a))[0][0])
            raise TrajectoryParseError(
                f"non-finite value in column {name!r} at row {bad + 1}"
            )
    t_arr = arrs[0]
    dt = np.diff(t_arr)
    if np.any(dt <= 0.0):
        bad = int(np.nonzero(dt <= 0.0)[0][0])
        raise TrajectorySchemaError(
            f"non-increasing timestamps at row {bad + 2}"
        )
    if np.max(np.abs(dt - dt[0])) > 1e-6:
        raise TrajectorySchemaError("timestamps are not uniformly spaced")
    return Trajectory(*arrs, rate=1.0 / float(dt[0]))


def load_trajectory(path) -> Trajectory:
    """Read a trajectory CSV (header t,u,F,eps,eps_dot; SI units)."""
    path = Path(path)
    cols = {name: [] for name in TRAJECTORY_COLUMNS}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TrajectoryParseError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != TRAJECTORY_COLUMNS:
            raise TrajectorySchemaError(
                f"{path}: expected header {','.join(TRAJECTORY_COLUMNS)}, "
                f"got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(TRAJECTORY_COLUMNS):
                raise TrajectoryParseError(
                    f"{path}:{lineno}: expected {len(TRAJECTORY_COLUMNS)} "
                    f"fields, got {len(row)}"
                )
            try:
                values = [float(v) for v in row]
            except ValueError as err:
                raise TrajectoryParseError(f"{path}:{lineno}: {err}") from None
            for name, v in zip(TRAJECTORY_COLUMNS, values):
                if not math.isfinite(v):
                    raise TrajectoryParseError(
                        f"{path}: non-finite value in column {name!r} "
                        f"at line {lineno}"
                    )
                cols[name].append(v)
    try:
        return make_trajectory(*(cols[name] for name in TRAJECTORY_COLUMNS))
    except (TrajectoryParseError, TrajectorySchemaError) as err:
        raise type(err)(f"{path}: {err}") from None


def save_trajectory(traj: Trajectory, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_COLUMNS)
        for row in traj.rows():
            writer.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# fast scalar muscle simulation (inner loop of the dynamic fit)

def simulate_force(
    coeffs: PadeCoefficients,
    params: MuscleDynamicParams,
    amap: ActivationMap,
    t: np.ndarray,
    u: np.ndarray,
    eps: np.ndarray,
    eps_dot: np.ndarray,
    dt_sim: float,
) -> np.ndarray:
    """Forward-simulate the two-state muscle over a sampled input record.

    Inputs are held/interpolated between samples (zero-order command,
    linear strain). The integrator matches `muscle.muscle_step` (exact
    drive lag + RK4 deformation) but runs as an inlined scalar loop so the
    dynamic fit can afford thousands of trajectory evaluations.
    """
    c0, c1, c2, d1 = coeffs.c0, coeffs.c1, coeffs.c2, coeffs.d1
    k_s, eta, tau_a = params.k_s, params.eta, params.tau_a
    n = len(t)
    out = np.empty(n)
    dt_data = float(t[1] - t[0])
    sub = max(1, int(round(dt_data / dt_sim)))
    h = dt_data / sub

    targets = [amap.drive_target(float(v)) for v in u]

    a = targets[0]
    x = float(eps[0])
    out[0] = _clamp01(a) * ((c0 + c1 * x + c2 * x * x) / (1.0 + d1 * x))
    lag_half = math.exp(-0.5 * h / tau_a)

    stiff = eta <= 0.0 or (k_s + 400.0) / max(eta, 1e-300) * h > 2.0

    for i in range(n - 1):
        target = targets[i]
        e0 = float(eps[i])
        de = float(eps_dot[i])
        for j in range(sub):
            # drive state at the RK4 stage times (exact zero-order hold)
            a_half = target + (a - target) * lag_half
            a_end = target + (a_half - target) * lag_half
            al0 = 0.0 if a < 0.0 else (1.0 if a > 1.0 else a)
            alh = 0.0 if a_half < 0.0 else (1.0 if a_half > 1.0 else a_half)
            al1 = 0.0 if a_end < 0.0 else (1.0 if a_end > 1.0 else a_end)
            a = a_end
            e_end = e0 + de * (j + 1) * h
            if stiff:
                x = _qs_x(c0, c1, c2, d1, k_s, al1, e_end)
                continue
            es = e0 + de * j * h
            k1 = de + (k_s * (es - x) - al0 * ((c0 + c1 * x + c2 * x * x) / (1.0 + d1 * x))) / eta
            xm = x + 0.5 * h * k1
            em = es + 0.5 * h * de
            k2 = de + (k_s * (em - xm) - alh * ((c0 + c1 * xm + c2 * xm * xm) / (1.0 + d1 * xm))) / eta
            xm = x + 0.5 * h * k2
            k3 = de + (k_s * (em - xm) - alh * ((c0 + c1 * xm + c2 * xm * xm) / (1.0 + d1 * xm))) / eta
            xm = x + h * k3
            k4 = de + (k_s * (e_end - xm) - al1 * ((c0 + c1 * xm + c2 * xm * xm) / (1.0 + d1 * xm))) / eta
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        al = 0.0 if a < 0.0 else (1.0 if a > 1.0 else a)
        out[i + 1] = al * ((c0 + c1 * x + c2 * x * x) / (1.0 + d1 * x))
    return out


def _qs_x(c0, c1, c2, d1, k_s, alpha, eps):
    if alpha <= 0.0:
        return eps
    A = alpha * c2 + k_s * d1
    B = alpha * c1 + k_s - k_s * d1 * eps
    C = alpha * c0 - k_s * eps
    disc = B * B - 4.0 * A * C
    if A == 0.0 or disc < 0.0:
        return eps
    sq = math.sqrt(disc)
    q = -0.5 * (B + math.copysign(sq, B))
    best = None
    for x in (q / A, C / q if q != 0.0 else None):
        if x is None or 1.0 + d1 * x <= 0.0 or x > eps + 1e-12:
            continue
        if best is None or x > best:
            best = x
    return best if best is not None else eps


def _clamp01(v):
    return 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)


# ---------------------------------------------------------------------------
# synthetic data generation

def synthesize_trajectory(
    coeffs: PadeCoefficients,
    params: MuscleDynamicParams,
    amap: ActivationMap,
    t: np.ndarray,
    u: np.ndarray,
    eps: np.ndarray,
    noise_std: float = 0.0,
    seed: int = 0,
    dt_sim: float = 5e-4,
) -> Trajectory:
    """Forward-simulate a muscle over the given command/strain profiles
    (common uniform grid) and add seeded Gaussian force noise."""
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if not (len(t) == len(u) == len(eps)):
        raise ConfigurationError("command and strain profiles must share the grid")
    dt = np.diff(t)
    if len(dt) == 0 or np.max(np.abs(dt - dt[0])) > 1e-9:
        raise ConfigurationError("profile grid must be uniform")
    eps_dot = np.gradient(eps, t)
    F = simulate_force(coeffs, params, amap, t, u, eps, eps_dot, dt_sim)
    if noise_std > 0.0:
        rng = np.random.default_rng(seed)
        F = F + rng.normal(0.0, noise_std, size=len(F))
    return make_trajectory(t, u, F, eps, eps_dot)


# ---------------------------------------------------------------------------
# stage 1: quasi-static base-curve fit

def quasi_static_slices(
    traj: Trajectory,
    amap: ActivationMap,
    rate_limit: float = QS_RATE_LIMIT,
    activation_floor: float = QS_ACTIVATION_FLOOR,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(eps, alpha, F) of the slow, high-activation samples."""
    alpha = np.array([amap.drive_target(float(v)) for v in traj.u])
    mask = (np.abs(traj.eps_dot) < rate_limit) & (alpha > activation_floor)
    return traj.eps[mask], alpha[mask], traj.F[mask]


def _qs_force_model(theta, eps, alpha):
    """Vectorized quasi-static force of the candidate (c0,c1,c2,d1,k_s)."""
    c0, c1, c2, d1, k_s = theta
    A = alpha * c2 + k_s * d1
    B = alpha * c1 + k_s - k_s * d1 * eps
    C = alpha * c0 - k_s * eps
    disc = B * B - 4.0 * A * C
    bad = (disc < 0.0) | (np.abs(A) < 1e-12)
    disc = np.where(bad, 0.0, disc)
    sq = np.sqrt(disc)
    q = -0.5 * (B + np.copysign(sq, B))
    with np.errstate(divide="ignore", invalid="ignore"):
        x1 = q / A
        x2 = np.where(q != 0.0, C / q, np.nan)

    def admissible(x):
        return (
            np.isfinite(x)
            & (1.0 + d1 * x > 1e-9)
            & (x <= eps + 1e-12)
        )

    ok1, ok2 = admissible(x1), admissible(x2)
    x = np.where(ok1 & ok2, np.maximum(x1, x2), np.where(ok1, x1, x2))
    invalid = bad | ~np.isfinite(x)
    x = np.where(invalid, eps, x)
    den = 1.0 + d1 * x
    F = alpha * (c0 + c1 * x + c2 * x * x) / den
    return F, invalid


def _shape_penalty(coeffs: PadeCoefficients, interval, n_grid=256):
    """Smooth penalty for shape-constraint violations on a coarse grid."""
    z = np.linspace(interval[0], interval[1], n_grid)
    den = 1.0 + coeffs.d1 * z
    pen = float(np.sum(np.square(np.minimum(den - 1e-3, 0.0))))
    if np.any(den <= 0.0):
        return 1e6 * (1.0 + pen)
    num = coeffs.c0 + coeffs.c1 * z + coeffs.c2 * z * z
    f = num / den
    pen += float(np.sum(np.square(np.minimum(f, 0.0))))
    f_max = float(np.max(f))
    floor = 0.1 * max(f_max, 0.0)
    dnum = (coeffs.c1 - coeffs.d1 * coeffs.c0) + 2.0 * coeffs.c2 * z \
        + coeffs.d1 * coeffs.c2 * z * z
    slope = dnum / (den * den)
    mono_viol = np.where(f >= floor, np.maximum(slope, 0.0), 0.0)
    pen += float(np.sum(np.square(mono_viol))) * 1e-4
    pen += max(0.0, float(f[-1]) - floor) ** 2 * 10.0
    return pen


def fit_quasi_static(
    traj: Trajectory,
    amap: ActivationMap,
    interval: tuple[float, float],
    n_starts: int = 16,
    seed: int = 0,
) -> PadeCoefficients:
    """Fit the base-curve coefficients to the slow, high-activation slices
    of a trajectory, subject to the shape constraints on `interval`.

    The residual is (F - F_qs(alpha, eps)) / alpha with the series
    stiffness co-estimated as a nuisance parameter, which removes the
    series-compliance bias from the recovered curve. The denominator
    coefficient is bounded to [0, 8]: the saturation term of every actuator
    family is non-negative, and allowing d1 < 0 opens a spurious
    pole-cancellation parametrization of polynomial curves.
    """
    eps, alpha, F = quasi_static_slices(traj, amap)
    n_params = 4
    if len(F) < MIN_SAMPLES_PER_PARAM * n_params:
        raise InsufficientDataError(
            f"{len(F)} quasi-static samples < "
            f"{MIN_SAMPLES_PER_PARAM * n_params} required"
        )

    f_scale = float(np.max(np.abs(F))) or 1.0
    span = float(interval[1] - interval[0]) or 0.1

    def objective(theta):
        pred, invalid = _qs_force_model(theta, eps, alpha)
        r = (F - pred) / alpha
        sse = float(np.mean(np.square(r)))
        sse += 10.0 * f_scale**2 * float(np.mean(invalid))
        coeffs = PadeCoefficients(*theta[:4])
        return sse + _shape_penalty(coeffs, interval)

    # heuristic anchor: endpoint force, secant slope, mild curvature
    c0_0 = float(np.max(F / alpha))
    slope_0 = -c0_0 / span
    anchor = np.array([c0_0, slope_0, 0.0, 1.0, 2000.0])
    scales = np.array([c0_0, abs(slope_0), abs(slope_0) / span, 4.0, 2000.0])
    bounds = [
        (0.0, None),
        (None, None),
        (None, None),
        (0.0, 8.0),
        (100.0, 1e5),
    ]

    rng = np.random.default_rng(seed)
    starts = [anchor]
    for _ in range(n_starts - 1):
        starts.append(anchor + scales * rng.uniform(-0.9, 0.9, size=5))

    best = None
    diagnostics = []
    for idx, x0 in enumerate(starts):
        x0 = np.array([
            min(max(v, lo if lo is not None else v),
                hi if hi is not None else v)
            for v, (lo, hi) in zip(x0, bounds)
        ])
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            bounds=bounds,
            options={"maxiter": 2500, "xatol": 1e-10, "fatol": 1e-14},
        )
        coeffs = PadeCoefficients(*res.x[:4])
        feasible = validate_shape_constraints(coeffs, interval).all_passed
        diagnostics.append((idx, res.fun, feasible, res.x))
        if feasible and (best is None or res.fun < best[1]):
            best = (idx, res.fun, res.x)
    if best is None:
        raise FitError(
            "no feasible base-curve fit among starts", details=diagnostics
        )
    # polish the winner
    res = minimize(
        objective,
        best[2],
        method="Nelder-Mead",
        bounds=bounds,
        options={"maxiter": 2500, "xatol": 1e-12, "fatol": 1e-16},
    )
    coeffs = PadeCoefficients(*res.x[:4])
    if res.fun <= best[1] and validate_shape_constraints(coeffs, interval).all_passed:
        return coeffs
    return PadeCoefficients(*best[2][:4])


# ---------------------------------------------------------------------------
# stage 2: dynamic fit

def fit_dynamics(
    traj: Trajectory,
    coeffs: PadeCoefficients,
    amap: ActivationMap,
    n_starts: int = 8,
    seed: int = 0,
    dt_sim: float = 1e-3,
) -> MuscleDynamicParams:
    """Fit (k_s, eta, tau_a) by simulation error over the trajectory with
    the base curve frozen. Parameters are searched in log space with
    positivity enforced by construction."""
    n_params = 3
    if len(traj) < MIN_SAMPLES_PER_PARAM * n_params:
        raise InsufficientDataError(
            f"{len(traj)} samples < {MIN_SAMPLES_PER_PARAM * n_params} required"
        )
    if not np.any(np.abs(np.diff(traj.F)) > 1e-6):
        raise FitError("trajectory carries no transient content")

    t, u, eps, eps_dot, F = traj.t, traj.u, traj.eps, traj.eps_dot, traj.F

    def objective(logs):
        k_s, eta, tau_a = (math.exp(v) for v in logs)
        params = MuscleDynamicParams(k_s=k_s, eta=eta, tau_a=tau_a)
        pred = simulate_force(coeffs, params, amap, t, u, eps, eps_dot, dt_sim)
        return float(np.mean(np.square(F - pred)))

    anchor = np.log([2000.0, 50.0, 0.05])
    rng = np.random.default_rng(seed)
    starts = [anchor]
    for _ in range(n_starts - 1):
        starts.append(anchor + rng.uniform(-1.5, 1.5, size=3))

    best = None
    diagnostics = []
    for idx, x0 in enumerate(starts):
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={"maxiter": 200, "xatol": 1e-7, "fatol": 1e-12},
        )
        diagnostics.append((idx, res.fun, res.x))
        if best is None or res.fun < best[1]:
            best = (idx, res.fun, res.x)
    if best is None or not np.all(np.isfinite(best[2])):
        raise FitError("dynamic fit did not converge", details=diagnostics)
    res = minimize(
        objective,
        best[2],
        method="Nelder-Mead",
        options={"maxiter": 400, "xatol": 1e-9, "fatol": 1e-14},
    )
    final = res.x if res.fun <= best[1] else best[2]
    k_s, eta, tau_a = (float(math.exp(v)) for v in final)
    return MuscleDynamicParams(k_s=k_s, eta=eta, tau_a=tau_a)


# ---------------------------------------------------------------------------
# evaluation

def rmse(pred: np.ndarray, meas: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(meas - pred))))


def r_squared(pred: np.ndarray, meas: np.ndarray) -> float:
    ss_res = float(np.sum(np.square(meas - pred)))
    ss_tot = float(np.sum(np.square(meas - np.mean(meas))))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else -math.inf
    return 1.0 - ss_res / ss_tot


def evaluate_fit(
    coeffs: PadeCoefficients,
    params: MuscleDynamicParams,
    traj: Trajectory,
    amap: ActivationMap,
    interval: tuple[float, float] = (-0.02, 0.12),
    dt_sim: float = 5e-4,
) -> FitReport:
    """Full forward simulation against held-out data."""
    pred = simulate_force(
        coeffs, params, amap, traj.t, traj.u, traj.eps, traj.eps_dot, dt_sim
    )
    residuals = traj.F - pred
    return FitReport(
        rmse=rmse(pred, traj.F),
        r_squared=r_squared(pred, traj.F),
        residuals=residuals,
        constraint_report=validate_shape_constraints(coeffs, interval),
    )
