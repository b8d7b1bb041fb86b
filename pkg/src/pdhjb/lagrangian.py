"""Running costs, their Hamiltonians, and numeric hypothesis checks.

A running cost maps (t, a) to an extended real, is convex and superlinear
in the velocity a, and dominates a coercive minorant phi with
phi(r)/r -> infinity.  The Hamiltonian is the infimal transform
H(t, p) = inf_a [a.p + cost(t, a)], concave in p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import DivergenceError, DomainError, UnsupportedError
from .extreal import ExtendedReal

_BRACKET_DOUBLING_CAP = 60


@dataclass(frozen=True)
class Lagrangian:
    """Running cost with convexity metadata and coercive minorant.

    eval_fn takes (t, a) with a a length-dim array and returns an
    ExtendedReal.  conjugate, when present, is the closed-form
    Hamiltonian (t, p) -> float.
    """

    eval_fn: Callable[[float, np.ndarray], ExtendedReal]
    dim: int
    horizon: float
    minorant: Callable[[float], float]
    convex_in_a: bool = True
    continuous: bool = True
    finite_valued: bool = True
    conjugate: Optional[Callable[[float, np.ndarray], float]] = None
    # Vectorized evaluation over (m,) times and (m, dim) velocities -> (m,)
    # floats (may contain +inf).  Solvers fall back to eval_fn when absent.
    eval_batch: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = "custom"

    def __call__(self, t: float, a) -> ExtendedReal:
        return eval_lagrangian(self, t, a)


@dataclass(frozen=True)
class Hamiltonian:
    eval_fn: Callable[[float, np.ndarray], float]
    provenance: str  # "closed_form" | "numeric"

    def __call__(self, t: float, p) -> float:
        return self.eval_fn(t, np.atleast_1d(np.asarray(p, dtype=float)))


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-10
    restarts: int = 20
    seed: int = 0


@dataclass
class HypothesisReport:
    violations: list = field(default_factory=list)
    running_cost_at_zero: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class SampleSpec:
    """Grids on which hypotheses are probed numerically."""

    t_nodes: Sequence[float]
    velocities: np.ndarray  # shape (m, dim)
    growth_threshold: float = 10.0
    convexity_tol: float = 1e-9


def eval_lagrangian(lag: Lagrangian, t: float, a) -> ExtendedReal:
    """Evaluate the running cost at time t and velocity a."""
    if not 0.0 <= t <= lag.horizon:
        raise DomainError(f"time {t} outside [0, {lag.horizon}]")
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.shape != (lag.dim,):
        raise DomainError(f"velocity shape {a.shape} does not match dim {lag.dim}")
    if not np.all(np.isfinite(a)):
        raise DomainError("velocity must be finite")
    return ExtendedReal.of(lag.eval_fn(t, a))


def _bracket_radius(lag: Lagrangian, t: float, p: np.ndarray) -> float:
    """Smallest doubling radius R with phi(R) >= (|p|+1) R, expanded until the
    boundary of [-R, R]^d cannot contain the minimizer.

    Superlinearity of the minorant guarantees the objective a.p + cost(t, a)
    grows once |a| is large enough; this makes attainment constructive.
    """
    pnorm = float(np.linalg.norm(p))
    r = 1.0
    for _ in range(_BRACKET_DOUBLING_CAP):
        if lag.minorant(r) >= (pnorm + 1.0) * r:
            break
        r *= 2.0
    else:
        raise DivergenceError("minorant bracket expansion exceeded doubling cap")

    center = float(eval_lagrangian(lag, t, np.zeros(lag.dim)))
    for _ in range(_BRACKET_DOUBLING_CAP):
        edge = np.full(lag.dim, r / math.sqrt(lag.dim))
        hi = float(edge @ p) + float(eval_lagrangian(lag, t, edge))
        lo = float(-edge @ p) + float(eval_lagrangian(lag, t, -edge))
        if hi > center and lo > center:
            return r
        r *= 2.0
    raise DivergenceError("boundary values never exceeded center; objective may be unbounded")


def hamiltonian(lag: Lagrangian, t: float, p, opts: SolverOptions = SolverOptions()) -> float:
    """inf_a [a.p + cost(t, a)], closed form when available, else bracketed
    minimization licensed by superlinearity."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.shape != (lag.dim,):
        raise DomainError(f"costate shape {p.shape} does not match dim {lag.dim}")
    if lag.conjugate is not None:
        return float(lag.conjugate(t, p))
    return _numeric_hamiltonian(lag, t, p, opts)


def _numeric_hamiltonian(lag: Lagrangian, t: float, p: np.ndarray, opts: SolverOptions) -> float:
    if not lag.convex_in_a:
        raise UnsupportedError("numeric Hamiltonian requires a convex running cost")
    radius = _bracket_radius(lag, t, p)

    if lag.dim == 1:
        def obj(a):
            return a * p[0] + float(eval_lagrangian(lag, t, np.array([a])))

        res = optimize.minimize_scalar(
            obj, bounds=(-radius, radius), method="bounded",
            options={"xatol": max(opts.tolerance, 1e-12)})
        return float(res.fun)

    # General d: multi-start local minimization inside the bracket box.
    def obj(a):
        return float(a @ p) + float(eval_lagrangian(lag, t, a))

    rng = np.random.default_rng(opts.seed)
    best = obj(np.zeros(lag.dim))
    bounds = [(-radius, radius)] * lag.dim
    starts = [np.zeros(lag.dim)] + [rng.uniform(-radius, radius, lag.dim)
                                    for _ in range(opts.restarts)]
    for x0 in starts:
        res = optimize.minimize(obj, x0, method="L-BFGS-B", bounds=bounds)
        if res.fun < best:
            best = float(res.fun)
    return best


def numeric_hamiltonian(lag: Lagrangian, t: float, p,
                        opts: SolverOptions = SolverOptions()) -> float:
    """Force the numeric route even when a closed form exists (cross-check)."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    return _numeric_hamiltonian(lag, t, p, opts)


def make_hamiltonian(lag: Lagrangian, opts: SolverOptions = SolverOptions()) -> Hamiltonian:
    if lag.conjugate is not None:
        return Hamiltonian(lambda t, p: float(lag.conjugate(t, p)), "closed_form")
    return Hamiltonian(lambda t, p: _numeric_hamiltonian(lag, t, p, opts), "numeric")


def check_hypotheses(lag: Lagrangian, spec: SampleSpec) -> HypothesisReport:
    """Probe coercivity, convexity, superlinearity, and integrability of the
    zero-velocity cost on the sample grids.  Report-valued: never raises on a
    violation."""
    report = HypothesisReport()
    vels = np.atleast_2d(np.asarray(spec.velocities, dtype=float))

    for t in spec.t_nodes:
        vals = [lag.eval_fn(t, a) for a in vels]
        for a, v in zip(vels, vals):
            v = ExtendedReal.of(v)
            lower = lag.minorant(float(np.linalg.norm(a)))
            if v.is_finite and v.value < lower - 1e-12:
                report.violations.append(
                    f"minorant violated at t={t}, a={a.tolist()}: {v.value} < {lower}")
        if lag.convex_in_a:
            for i in range(len(vels)):
                for j in range(i + 1, len(vels)):
                    vi, vj = ExtendedReal.of(vals[i]), ExtendedReal.of(vals[j])
                    if not (vi.is_finite and vj.is_finite):
                        continue
                    mid = ExtendedReal.of(lag.eval_fn(t, 0.5 * (vels[i] + vels[j])))
                    avg = 0.5 * (vi.value + vj.value)
                    if float(mid) > avg + spec.convexity_tol:
                        report.violations.append(
                            f"midpoint convexity violated at t={t} between "
                            f"{vels[i].tolist()} and {vels[j].tolist()}")

    radii = np.linalg.norm(vels, axis=1)
    r_max = float(radii.max()) if radii.size else 0.0
    if r_max > 0 and lag.minorant(r_max) / r_max < spec.growth_threshold:
        report.violations.append(
            f"superlinearity smoke test failed: phi(r)/r = "
            f"{lag.minorant(r_max) / r_max:.6g} < {spec.growth_threshold} at r={r_max}")

    # Proxy for integrability of t -> cost(t, 0): trapezoid sum stays finite.
    total = 0.0
    t_nodes = list(spec.t_nodes)
    zero = np.zeros(lag.dim)
    for t_lo, t_hi in zip(t_nodes, t_nodes[1:]):
        v_lo, v_hi = ExtendedReal.of(lag.eval_fn(t_lo, zero)), ExtendedReal.of(lag.eval_fn(t_hi, zero))
        if v_lo.is_infinite or v_hi.is_infinite:
            report.violations.append(f"cost at zero velocity infinite near t={t_lo}")
            total = math.inf
            break
        total += 0.5 * (v_lo.value + v_hi.value) * (t_hi - t_lo)
    report.running_cost_at_zero = total
    if not math.isfinite(total):
        report.violations.append("integral of cost at zero velocity diverges on sample grid")
    return report


# ---------------------------------------------------------------------------
# Builtin registry


def _quadratic(dim: int, horizon: float) -> Lagrangian:
    return Lagrangian(
        eval_fn=lambda t, a: ExtendedReal.finite(0.5 * float(a @ a)),
        dim=dim,
        horizon=horizon,
        minorant=lambda r: 0.5 * r * r,
        conjugate=lambda t, p: -0.5 * float(p @ p),
        eval_batch=lambda ts, vels: 0.5 * np.sum(vels * vels, axis=-1),
        name="quadratic",
    )


def _power(exponent: float, dim: int, horizon: float) -> Lagrangian:
    if exponent <= 1.0:
        raise DomainError("power builtin requires exponent > 1 for superlinearity")

    def conj(t, p):
        q = float(np.linalg.norm(p))
        if q == 0.0:
            return 0.0
        r = (q / exponent) ** (1.0 / (exponent - 1.0))
        return -q * r + r ** exponent

    return Lagrangian(
        eval_fn=lambda t, a: ExtendedReal.finite(float(np.linalg.norm(a)) ** exponent),
        dim=dim,
        horizon=horizon,
        minorant=lambda r: r ** exponent,
        conjugate=conj,
        eval_batch=lambda ts, vels: np.linalg.norm(vels, axis=-1) ** exponent,
        name=f"power:{exponent:g}",
    )


def make_lagrangian(name: str, dim: int = 1, horizon: float = 1.0) -> Lagrangian:
    """Builtin registry keyed by name: "quadratic" or "power:<exponent>"."""
    if name == "quadratic":
        return _quadratic(dim, horizon)
    if name.startswith("power:"):
        return _power(float(name.split(":", 1)[1]), dim, horizon)
    raise DomainError(f"unknown builtin running cost {name!r}")
