"""Per-snapshot variational constants: F-entropy infimum, Yamabe quotient, Sobolev pairs, kappa_0.

All minimisations run over rotationally symmetric functions on the meridian
grid, using the forms in :mod:`ricci_diameter.operators`.  For the F-entropy
this is exact (the positive ground state inherits the symmetry); for the
Yamabe quotient it gives an upper bound.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ricci_diameter import operators as ops
from ricci_diameter.distance import DistanceField
from ricci_diameter.geometry import Profile, ball_volume_euclidean, scalar_curvature, sup_norms

log = logging.getLogger(__name__)

STRATEGIES = ("yamabe_derived", "probe_fit")


class ConstantsError(RuntimeError):
    pass


def yamabe_coefficient(n: int) -> float:
    return 4.0 * (n - 1) / (n - 2)


def sobolev_exponent(n: int) -> float:
    return 2.0 * n / (n - 2)


@dataclass(frozen=True)
class TestFunction:
    """Rotationally symmetric function sampled on the meridian grid."""

    __test__ = False  # not a pytest class

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("test function has non-finite values")

    @classmethod
    def unit(cls, profile: Profile, values: np.ndarray) -> "TestFunction":
        m = ops.dual_weights(profile)
        v = np.asarray(values, float)
        return cls(v / math.sqrt(float(np.dot(m, v * v))), True)

    def l2_norm(self, profile: Profile) -> float:
        return math.sqrt(float(np.dot(ops.dual_weights(profile), self.values**2)))


# ---------------------------------------------------------------- F-entropy


@dataclass(frozen=True)
class Eigenpair:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int


def f_entropy_form(profile: Profile) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(edge weights of 4|grad v|^2, potential R*m, mass m) of the reduced operator."""
    m = ops.dual_weights(profile)
    c = 4.0 * ops.conductances(profile)
    return c, scalar_curvature(profile) * m, m


def f_entropy_ground_state(
    profile: Profile, tol: float = 1e-6, max_iter: int = 50_000
) -> Eigenpair:
    """Smallest eigenpair of -4 Delta + R by inverse iteration with a fixed shift.

    The shift min(R) - 1 sits strictly below the spectrum, so the iteration
    converges to the ground state from the constant start vector.
    """
    c, pot, m = f_entropy_form(profile)
    R = pot / m
    shift = float(R.min()) - 1.0
    ab = ops.banded(c, pot - shift * m)
    v = np.ones_like(m)
    v /= math.sqrt(np.dot(m, v * v))
    res = math.inf
    lam = math.nan
    for it in range(1, max_iter + 1):
        y = ops.solve(ab, m * v)
        y /= math.sqrt(np.dot(m, y * y))
        Ay = ops.stiffness_apply(c, y) + pot * y
        lam = float(np.dot(y, Ay))
        r = Ay - lam * m * y
        res = math.sqrt(float(np.dot(r, r / m)))
        v = y
        if res <= tol:
            return Eigenpair(lam, v, res, it)
    raise ConstantsError(f"inverse iteration did not converge: residual {res:.3e} after {max_iter} iterations")


def f_entropy_infimum(profile: Profile, tol: float = 1e-6) -> float:
    """inf of int (4|grad v|^2 + R v^2) dg over unit-L^2 v."""
    return f_entropy_ground_state(profile, tol).value


# ---------------------------------------------------------------- Yamabe


def yamabe_quotient(profile: Profile, v: np.ndarray) -> float:
    n = profile.n
    m = ops.dual_weights(profile)
    num = yamabe_coefficient(n) * ops.dirichlet_energy(profile, v) + float(np.dot(scalar_curvature(profile) * m, v * v))
    p = sobolev_exponent(n)
    den = float(np.dot(m, np.abs(v) ** p)) ** (2.0 / p)
    return num / den


@dataclass(frozen=True)
class YamabeResult:
    value: float
    minimizer: np.ndarray
    iterations: int
    gradient_norm: float


def yamabe_minimize(
    profile: Profile,
    rel_tol: float = 1e-8,
    window: int = 50,
    max_iter: int = 20_000,
) -> YamabeResult:
    """Minimise the Yamabe quotient over positive symmetric functions.

    Projected, H^1-preconditioned gradient descent with Armijo backtracking,
    started from the constant function.  Converged once the quotient changes
    by at most ``rel_tol`` (relative) over ``window`` iterations.
    """
    n = profile.n
    p = sobolev_exponent(n)
    cn = yamabe_coefficient(n)
    m = ops.dual_weights(profile)
    c = cn * ops.conductances(profile)
    pot = scalar_curvature(profile) * m
    scale = max(1.0, float(np.abs(pot / m).max()))
    precond = ops.banded(c, scale * m)

    def parts(v):
        Av = ops.stiffness_apply(c, v) + pot * v
        N = float(np.dot(v, Av))
        D = float(np.dot(m, v**p))
        return N / D ** (2.0 / p), Av, N, D

    v = np.ones_like(m)
    v /= float(np.dot(m, v**p)) ** (1.0 / p)
    Q, Av, N, D = parts(v)
    history = [Q]
    tau = 1.0
    gnorm = math.inf
    for it in range(1, max_iter + 1):
        g = 2.0 * D ** (-2.0 / p) * (Av - (N / D) * m * v ** (p - 1))
        d = -ops.solve(precond, g)
        gnorm = math.sqrt(max(float(-np.dot(g, d)), 0.0))
        floor = 1e-12 * float(v.max())
        accepted = False
        tau = min(2.0 * tau, 1e3)
        for _ in range(60):
            trial = np.maximum(v + tau * d, floor)
            Qt, Avt, Nt, Dt = parts(trial)
            if Qt <= Q + 1e-4 * float(np.dot(g, trial - v)):
                accepted = True
                break
            tau *= 0.5
        if accepted:
            k = Dt ** (-1.0 / p)
            v = trial * k
            Q, Av, N, D = Qt, Avt * k, Nt * k * k, 1.0
        history.append(Q)
        if not accepted or (it >= window and abs(history[-1 - window] - Q) <= rel_tol * abs(Q)):
            return YamabeResult(Q, v, it, gnorm)
    raise ConstantsError(f"Yamabe descent did not converge: quotient {Q:.8g}, gradient norm {gnorm:.3e}")


def yamabe_upper(profile: Profile) -> float:
    """Symmetric Yamabe quotient minimum: an upper bound for Y(g), equal on round spheres."""
    return yamabe_minimize(profile).value


# ---------------------------------------------------------------- Sobolev pairs


@dataclass(frozen=True)
class Probe:
    """Integrals of one test function entering the Sobolev inequality."""

    label: str
    lhs: float  # (int v^p)^{2/p}
    grad: float  # int |grad v|^2
    Rv2: float  # int R v^2
    v2: float  # int v^2

    @property
    def F(self) -> float:
        return 4.0 * self.grad + self.Rv2

    def margin(self, A: float, B: float) -> float:
        return A * self.F + B * self.v2 - self.lhs


def grid_probe(profile: Profile, v: np.ndarray, label: str) -> Probe:
    n = profile.n
    p = sobolev_exponent(n)
    m = ops.dual_weights(profile)
    R = scalar_curvature(profile)
    return Probe(
        label,
        float(np.dot(m, np.abs(v) ** p)) ** (2.0 / p),
        ops.dirichlet_energy(profile, v),
        float(np.dot(R * m, v * v)),
        float(np.dot(m, v * v)),
    )


def cone_probe(field: DistanceField, r: float) -> Probe:
    """Probe for v = (r - d(x, .))_+, for which |grad v| = 1 on B(x, r)."""
    p = sobolev_exponent(field.n)
    cone = lambda d: np.maximum(r - d, 0.0)  # noqa: E731
    return Probe(
        f"cone(s={field.center_s:.6g},r={r:.6g})",
        field.integrate_radial(lambda d: cone(d) ** p) ** (2.0 / p),
        float(field.ball_volume(r)),
        field.integrate_radial_R(lambda d: cone(d) ** 2),
        field.integrate_radial(lambda d: cone(d) ** 2),
    )


@dataclass(frozen=True)
class SobolevPair:
    A: float
    B: float
    strategy: str
    probes: tuple[Probe, ...]
    margins: np.ndarray

    @property
    def margin_min(self) -> float:
        return float(self.margins.min()) if self.margins.size else math.nan


def sobolev_pair(
    profile: Profile,
    strategy: str,
    cones: list[tuple[DistanceField, float]] = (),
    Y: YamabeResult | None = None,
    ground: Eigenpair | None = None,
) -> SobolevPair:
    """A Sobolev pair (A, B) checked on constants, cone functions and both minimisers.

    ``yamabe_derived`` converts the symmetric Yamabe constant:
    c_n|grad v|^2 + R v^2 <= (c_n/4)(4|grad v|^2 + R v^2) + (c_n/4 - 1)||R_-|| v^2.
    ``probe_fit`` fixes B = V^{-2/n} and takes the least A passing every probe.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown Sobolev strategy {strategy!r}; expected one of {STRATEGIES}")
    n = profile.n
    Y = Y or yamabe_minimize(profile)
    ground = ground or f_entropy_ground_state(profile)
    probes = [
        grid_probe(profile, np.ones(profile.m + 1), "constant"),
        grid_probe(profile, Y.minimizer, "yamabe_minimizer"),
        grid_probe(profile, np.abs(ground.vector), "f_entropy_ground_state"),
    ]
    probes += [cone_probe(f, r) for f, r in cones]

    if strategy == "yamabe_derived":
        if Y.value <= 0:
            raise ConstantsError(f"Y_sym = {Y.value:.6g} <= 0; use the probe_fit strategy")
        cn4 = yamabe_coefficient(n) / 4.0
        _, r_minus = sup_norms(profile)
        A = cn4 / Y.value
        B = (cn4 - 1.0) * r_minus / Y.value
    else:
        B = float(np.dot(ops.dual_weights(profile), np.ones(profile.m + 1))) ** (-2.0 / n)
        A = 0.0
        for pr in probes:
            need = pr.lhs - B * pr.v2
            if pr.F > 0:
                A = max(A, need / pr.F)
            elif need > 0:
                raise ConstantsError(f"probe {pr.label} has F <= 0 and cannot be satisfied with B = V^(-2/n)")
        A = max(A, 1e-12) * (1.0 + 1e-9)
    margins = np.array([pr.margin(A, B) for pr in probes])
    return SobolevPair(A, B, strategy, tuple(probes), margins)


# ---------------------------------------------------------------- kappa_0


def kappa0(A: float, B: float, n: int) -> float:
    """min{(128 A + 16 B)^{-n/2}, omega_n / 2}."""
    if A <= 0:
        raise ValueError("A must be positive")
    if B < 0:
        raise ValueError("B must be nonnegative")
    return min((128.0 * A + 16.0 * B) ** (-n / 2.0), ball_volume_euclidean(n) / 2.0)


@dataclass
class ConstantsReport:
    t: float
    A: float
    B: float
    Y_sym: float
    lambda_F: float
    kappa0: float
    omega_n: float
    strategy: str
    probe_margin_min: float
    probes: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        keys = ("t", "A", "B", "Y_sym", "lambda_F", "kappa0", "strategy", "probe_margin_min")
        return {k: getattr(self, k) for k in keys}


def compute_constants(
    profile: Profile,
    strategy: str = "probe_fit",
    cones: list[tuple[DistanceField, float]] = (),
) -> ConstantsReport:
    ground = f_entropy_ground_state(profile)
    Y = yamabe_minimize(profile)
    pair = sobolev_pair(profile, strategy, cones, Y, ground)
    report = ConstantsReport(
        t=profile.time,
        A=pair.A,
        B=pair.B,
        Y_sym=Y.value,
        lambda_F=ground.value,
        kappa0=kappa0(pair.A, pair.B, profile.n),
        omega_n=ball_volume_euclidean(profile.n),
        strategy=strategy,
        probe_margin_min=pair.margin_min,
        probes=[dict(asdict(pr), margin=float(mg)) for pr, mg in zip(pair.probes, pair.margins)],
    )
    if pair.margin_min < 0:
        log.warning("Sobolev pair (%s) fails a probe at t=%.6g: margin %.3e", strategy, profile.time, pair.margin_min)
    return report
