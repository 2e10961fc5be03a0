"""Single-muscle model: rational base force law, activation mappings and
two-state (drive + viscoelastic) dynamics.

The active force is separable, F = alpha * F_base(z), with F_base a [2/1]
rational function of contraction strain z:

    F_base(z) = (c0 + c1 z + c2 z^2) / (1 + d1 z)

A first-order drive state `a` filters the normalized command, and a
series Kelvin-Voigt branch (spring k_s, damper eta) introduces an internal
deformation state `x`:

    da/dt  = (phi(u) - a) / tau_a,          alpha = clamp(a, 0, 1)
    F      = k_s (eps - x) + eta (deps - dx)
    eta dx = eta deps + k_s (eps - x) - alpha F_base(x)

Substituting the x-dynamics into the force expression gives the algebraic
identity F = alpha * F_base(x), which holds at every accepted step and is
asserted by the test suite.

Integration notes: the drive state has an exact zero-order-hold solution,
which is used instead of an explicit stage update so that arbitrarily
small tau_a remains stable. The deformation state is integrated with
classic RK4; when the local linearized relaxation rate makes an explicit
step unstable (tiny eta and/or huge k_s), the step falls back to the
quasi-static force balance k_s (eps - x) = alpha F_base(x), which is a
quadratic in x and solved in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError, DomainError

# Default operating strain interval for a single muscle. The identified
# coefficients give near-zero force around z ~ 0.1; the small negative
# margin covers a stretched antagonist.
DEFAULT_STRAIN_INTERVAL = (-0.02, 0.12)

# Explicit RK4 on dx/dt = -lam*x is stable for lam*dt < ~2.78; switch to
# the algebraic branch well before that.
_RK4_STIFF_LIMIT = 2.0

# Fraction of the interval's peak force below which the curve counts as
# "near zero": the monotonicity requirement is waived there (the slack
# tail of the curve may turn upward) and the force at maximal contraction
# must sit below it.
NEAR_ZERO_FRACTION = 0.10


@dataclass(frozen=True)
class PadeCoefficients:
    """Coefficients (c0, c1, c2, d1) of the rational base force curve."""

    c0: float
    c1: float
    c2: float
    d1: float

    def small_strain_slope(self) -> float:
        """Slope of the base curve at z = 0 (unit activation)."""
        return self.c1 - self.c0 * self.d1


@dataclass(frozen=True)
class MuscleDynamicParams:
    """Series-branch and drive parameters.

    k_s: series stiffness, force per unit strain (N)
    eta: series damping, force per unit strain rate (N s)
    tau_a: drive time constant (s)
    """

    k_s: float
    eta: float
    tau_a: float

    def __post_init__(self):
        if self.k_s < 0.0:
            raise ConfigurationError(f"k_s must be >= 0, got {self.k_s}")
        if self.eta < 0.0:
            raise ConfigurationError(f"eta must be >= 0, got {self.eta}")
        if self.tau_a <= 0.0:
            raise ConfigurationError(f"tau_a must be > 0, got {self.tau_a}")
        if self.eta == 0.0 and self.k_s == 0.0:
            raise ConfigurationError(
                "k_s and eta cannot both be zero: the series branch would "
                "transmit no force"
            )


@dataclass(frozen=True)
class MuscleState:
    """Dynamic state of one muscle: drive level a and internal deformation x."""

    a: float
    x: float


@dataclass(frozen=True)
class ActivationMap:
    """Command-to-activation normalization for a specific actuator family.

    kind:
      'pam'   - linear in pressure,   alpha = u / u_max
      'hasel' - quadratic in voltage, alpha = (u / u_max)^2
      'dea'   - quadratic in field,   alpha = (u / u_max)^2
    """

    kind: str
    u_max: float

    _KINDS = ("pam", "hasel", "dea")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ConfigurationError(f"unknown activation map kind {self.kind!r}")
        if self.u_max <= 0.0:
            raise ConfigurationError(f"u_max must be > 0, got {self.u_max}")

    @classmethod
    def pam_pressure(cls, p_max: float) -> "ActivationMap":
        return cls("pam", p_max)

    @classmethod
    def hasel_voltage(cls, v_max: float) -> "ActivationMap":
        return cls("hasel", v_max)

    @classmethod
    def dea_field(cls, e_max: float) -> "ActivationMap":
        return cls("dea", e_max)

    def drive_target(self, u: float) -> float:
        """phi(u) clamped to [0, 1] (the drive electronics saturate)."""
        alpha, _ = activation_from_command(self, u)
        return alpha


#: Identity-like map used when commands are already normalized activations.
NORMALIZED_COMMAND = ActivationMap.pam_pressure(1.0)


def activation_from_command(amap: ActivationMap, u: float) -> tuple[float, bool]:
    """Map a raw command to a normalized activation in [0, 1].

    Returns (alpha, saturated); commands outside the declared range are
    clamped and flagged rather than rejected.
    """
    if amap.kind == "pam":
        phi = u / amap.u_max
    else:
        ratio = u / amap.u_max
        phi = ratio * ratio
        if u < 0.0:
            # negative voltage/field still actuates quadratically, but lies
            # outside the declared command range
            return min(phi, 1.0), True
    if phi < 0.0:
        return 0.0, True
    if phi > 1.0:
        return 1.0, True
    return phi, False


def base_force(coeffs: PadeCoefficients, z: float) -> float:
    """Active force of the base curve at contraction strain z (unit activation)."""
    den = 1.0 + coeffs.d1 * z
    if den <= 0.0:
        raise DomainError(
            f"base force denominator 1 + d1*z = {den:.6g} <= 0 at z = {z:.6g}"
        )
    return (coeffs.c0 + coeffs.c1 * z + coeffs.c2 * z * z) / den


def base_force_derivative(coeffs: PadeCoefficients, z: float) -> float:
    """d F_base / dz at strain z."""
    den = 1.0 + coeffs.d1 * z
    if den <= 0.0:
        raise DomainError(
            f"base force denominator 1 + d1*z = {den:.6g} <= 0 at z = {z:.6g}"
        )
    num = (
        (coeffs.c1 - coeffs.d1 * coeffs.c0)
        + 2.0 * coeffs.c2 * z
        + coeffs.d1 * coeffs.c2 * z * z
    )
    return num / (den * den)


def quasi_static_deformation(
    coeffs: PadeCoefficients, k_s: float, alpha: float, eps: float
) -> float:
    """Solve the static force balance k_s (eps - x) = alpha F_base(x) for x.

    Multiplying out the rational term gives a quadratic in x; the physical
    root is the one with x <= eps (tension only) and a positive denominator.
    Falls back to bisection when the quadratic degenerates.
    """
    if k_s <= 0.0:
        raise ConfigurationError("quasi-static balance requires k_s > 0")
    if alpha <= 0.0:
        return eps
    c0, c1, c2, d1 = coeffs.c0, coeffs.c1, coeffs.c2, coeffs.d1
    A = alpha * c2 + k_s * d1
    B = alpha * c1 + k_s - k_s * d1 * eps
    C = alpha * c0 - k_s * eps

    roots: list[float] = []
    if abs(A) > 1e-12 * max(1.0, abs(B), abs(C)):
        disc = B * B - 4.0 * A * C
        if disc >= 0.0:
            sq = math.sqrt(disc)
            # numerically stable pair
            q = -0.5 * (B + math.copysign(sq, B))
            roots.append(q / A)
            if q != 0.0:
                roots.append(C / q)
    elif abs(B) > 0.0:
        roots.append(-C / B)

    best = None
    for x in roots:
        if 1.0 + d1 * x <= 0.0:
            continue
        if x > eps + 1e-12:
            continue
        # force balance must hold with non-negative force
        if k_s * (eps - x) < -1e-9:
            continue
        if best is None or x > best:
            # the physical branch is the largest admissible root (closest
            # to eps, continuous with alpha -> 0 where x = eps)
            best = x
    if best is not None:
        return best
    return _quasi_static_bisect(coeffs, k_s, alpha, eps)


def _quasi_static_bisect(coeffs, k_s, alpha, eps, tol=1e-10):
    """Bracketed bisection fallback for the static force balance."""

    def h(x):
        return k_s * (eps - x) - alpha * base_force(coeffs, x)

    hi = eps
    h_hi = h(hi)
    if abs(h_hi) <= tol * k_s:
        return hi
    # expand downward until the balance changes sign; stay above the pole
    pole = -1.0 / coeffs.d1 if coeffs.d1 > 0.0 else -math.inf
    span = max(1e-6, alpha * abs(base_force(coeffs, eps)) / k_s)
    lo = eps - span
    for _ in range(200):
        if lo <= pole:
            lo = pole + 1e-12 if math.isfinite(pole) else lo
            break
        if h(lo) >= 0.0:
            break
        span *= 2.0
        lo = eps - span
    else:
        raise DomainError("could not bracket the quasi-static force balance")
    if h(lo) < 0.0:
        raise DomainError("could not bracket the quasi-static force balance")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def _drive_advance(a: float, target: float, tau_a: float, dt: float) -> float:
    """Exact zero-order-hold solution of the first-order drive lag."""
    return target + (a - target) * math.exp(-dt / tau_a)


def _clamp01(v: float) -> float:
    return 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)


def muscle_step(
    state: MuscleState,
    params: MuscleDynamicParams,
    coeffs: PadeCoefficients,
    u: float,
    eps: float,
    eps_dot: float,
    dt: float,
    amap: ActivationMap = NORMALIZED_COMMAND,
) -> tuple[MuscleState, float]:
    """Advance one muscle by dt under held command u and linearly varying
    strain eps(t) = eps + eps_dot * t. Returns the new state and the force
    at the end of the step.
    """
    if dt <= 0.0:
        raise ConfigurationError(f"dt must be > 0, got {dt}")
    target = amap.drive_target(u)
    tau_a = params.tau_a
    k_s, eta = params.k_s, params.eta

    a0, x0 = state.a, state.x
    a1 = _drive_advance(a0, target, tau_a, dt)
    eps_end = eps + eps_dot * dt

    algebraic = eta == 0.0
    if not algebraic:
        # local relaxation rate of the deformation state; the active slope
        # only ever adds to it, so include it at the current point
        slope = abs(base_force_derivative(coeffs, x0))
        rate = (k_s + _clamp01(a0) * slope) / eta
        algebraic = rate * dt > _RK4_STIFF_LIMIT

    if algebraic:
        if k_s == 0.0:
            raise ConfigurationError(
                "algebraic deformation branch requires k_s > 0"
            )
        alpha1 = _clamp01(a1)
        x1 = quasi_static_deformation(coeffs, k_s, alpha1, eps_end)
        force = k_s * (eps_end - x1)
        return MuscleState(a=a1, x=x1), force

    def xdot(s: float, x: float) -> float:
        a_s = _drive_advance(a0, target, tau_a, s)
        alpha = _clamp01(a_s)
        e = eps + eps_dot * s
        return eps_dot + (k_s * (e - x) - alpha * base_force(coeffs, x)) / eta

    h = dt
    k1 = xdot(0.0, x0)
    k2 = xdot(0.5 * h, x0 + 0.5 * h * k1)
    k3 = xdot(0.5 * h, x0 + 0.5 * h * k2)
    k4 = xdot(h, x0 + h * k3)
    x1 = x0 + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    xdot1 = xdot(h, x1)
    force = k_s * (eps_end - x1) + eta * (eps_dot - xdot1)
    return MuscleState(a=a1, x=x1), force


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    passed: bool
    worst_z: float
    worst_value: float


@dataclass(frozen=True)
class ShapeConstraintReport:
    checks: tuple[ConstraintCheck, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> ConstraintCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate_shape_constraints(
    coeffs: PadeCoefficients,
    interval: tuple[float, float],
    n_grid: int = 1001,
    near_zero_fraction: float = NEAR_ZERO_FRACTION,
) -> ShapeConstraintReport:
    """Check the physical-plausibility constraints of a base curve on a
    dense strain grid.

    Checks, each reported with its worst violating strain:
      denominator  - 1 + d1 z > 0 everywhere
      positivity   - F_base(z) >= 0 everywhere
      monotone     - F_base non-increasing wherever the force is above the
                     near-zero floor (the slack tail may turn upward)
      near_zero    - force at maximal contraction below the floor
                     (near_zero_fraction of the interval's peak force)
    """
    z_lo, z_hi = interval
    if not z_lo < z_hi:
        raise ConfigurationError(f"invalid strain interval [{z_lo}, {z_hi}]")
    n_grid = max(int(n_grid), 1001)

    step = (z_hi - z_lo) / (n_grid - 1)
    zs = [z_lo + i * step for i in range(n_grid)]

    den_ok, den_worst_z, den_worst = True, z_lo, math.inf
    for z in zs:
        den = 1.0 + coeffs.d1 * z
        if den < den_worst:
            den_worst, den_worst_z = den, z
        if den <= 0.0:
            den_ok = False
    checks = [ConstraintCheck("denominator", den_ok, den_worst_z, den_worst)]

    if not den_ok:
        # remaining constraints are undefined past the pole
        for name in ("positivity", "monotone", "near_zero"):
            checks.append(ConstraintCheck(name, False, den_worst_z, math.nan))
        return ShapeConstraintReport(tuple(checks))

    forces = [base_force(coeffs, z) for z in zs]
    f_max = max(forces)

    f_min = min(forces)
    pos_worst_z = zs[forces.index(f_min)]
    checks.append(ConstraintCheck("positivity", f_min >= 0.0, pos_worst_z, f_min))

    floor = near_zero_fraction * max(f_max, 0.0)
    slope_tol = 1e-9 * max(1.0, abs(coeffs.small_strain_slope()))
    mono_ok, mono_worst_z, mono_worst = True, z_lo, -math.inf
    for z, f in zip(zs, forces):
        if f < floor:
            continue
        s = base_force_derivative(coeffs, z)
        if s > mono_worst:
            mono_worst, mono_worst_z = s, z
        if s > slope_tol:
            mono_ok = False
    checks.append(ConstraintCheck("monotone", mono_ok, mono_worst_z, mono_worst))

    f_end = forces[-1]
    checks.append(ConstraintCheck("near_zero", f_end <= floor, z_hi, f_end))

    return ShapeConstraintReport(tuple(checks))
