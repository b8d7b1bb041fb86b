"""Finite-delta estimators for path derivatives and integral-inequality checks.

True liminf/limsup limits are unobservable; the estimators evaluate
difference quotients over a geometric delta schedule and report min/max
tails plus a divergence classifier.  The sub/supersolution checkers test
the integral characterizations on sampled points and report violations
instead of asserting, so the caller separates numerics from policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bolza import BolzaProblem, DocOptions, TerminalCost, solve_doc, \
    solve_doc_constrained
from .errors import DomainError
from .extreal import ExtendedReal
from .lagrangian import Lagrangian
from .paths import Control, DiscretePath, TimeGrid, action, apply_control, stop_path
from .stochastic import LatticeSpec, simulate_scaled_brownian_batch, solve_soc_tree


@dataclass(frozen=True)
class DeltaSchedule:
    deltas: tuple = tuple(0.1 * 2.0 ** -k for k in range(11))
    tail: int = 4
    growth_factor: float = 4.0
    substeps: int = 4        # simulation cells per delta (stochastic estimator)

    def __post_init__(self):
        if any(b >= a for a, b in zip(self.deltas, self.deltas[1:])):
            raise DomainError("delta schedule must be strictly decreasing")


@dataclass
class DiniEstimate:
    quotients: list                    # [(delta, quotient)] in schedule order
    extrapolated: Optional[float]
    diverged: bool
    inconclusive: bool = False
    standard_errors: Optional[list] = None
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PathFunctional:
    """Candidate solution u(t, path) with provenance metadata."""

    u: Callable[[float, DiscretePath], "float | ExtendedReal"]
    provenance: str    # "analytic" | "bolza_value" | "soc_value"
    # Optional accessor returning the minimizing continuation from (t0, x0)
    # (value-function provenance); used as a structured witness candidate.
    minimizer: Optional[Callable[[float, DiscretePath], DiscretePath]] = None

    def __call__(self, t: float, x: DiscretePath) -> ExtendedReal:
        return ExtendedReal.of(self.u(t, x))


def _path_key(t: float, x: DiscretePath) -> tuple:
    s = stop_path(x, min(t, x.grid.horizon))
    nodes = np.round(s.grid.nodes, 12)
    values = np.round(s.values, 12)
    return (round(t, 12), nodes.tobytes(), values.tobytes())


def bolza_value_functional(prob: BolzaProblem, cells: int,
                           opts: DocOptions = DocOptions()) -> PathFunctional:
    """v_0 as a PathFunctional; solver calls cached on rounded inputs."""
    cache: dict = {}

    def solve(t, x):
        key = _path_key(t, x)
        if key not in cache:
            if prob.terminal_cost.kind == "constrained":
                est = solve_doc_constrained(prob, t, x, cells, opts)
                cache[key] = (est.value, None)
            else:
                est, minimizer = solve_doc(prob, t, x, cells, opts)
                cache[key] = (est.value, minimizer)
        return cache[key]

    return PathFunctional(
        u=lambda t, x: ExtendedReal.of(solve(t, x)[0]),
        provenance="bolza_value",
        minimizer=lambda t, x: solve(t, x)[1])


def soc_value_functional(prob: BolzaProblem, n: int, spec: LatticeSpec) -> PathFunctional:
    """v_n as a PathFunctional backed by cached tree solves."""
    cache: dict = {}

    def evaluate(t, x):
        key = _path_key(t, x)
        if key not in cache:
            cache[key] = solve_soc_tree(prob, t, x, n, spec).value
        return cache[key]

    return PathFunctional(u=evaluate, provenance="soc_value")


def _classify(quotients, schedule: DeltaSchedule, mode: str):
    """Tail extrapolation (liminf/limsup proxy) plus divergence detection."""
    finite = [(d, q) for d, q in quotients if math.isfinite(q)]
    if any(not math.isfinite(q) for _, q in quotients):
        return None, True
    tail = [q for _, q in finite[-schedule.tail:]]
    qs = [abs(q) for _, q in finite]
    diverged = False
    if len(qs) >= 3:
        a, b, c = qs[-3], qs[-2], qs[-1]
        if c > schedule.growth_factor * b and b > schedule.growth_factor * a:
            diverged = True
    extrapolated = (min(tail) if mode == "min" else max(tail)) if tail else None
    return extrapolated, diverged


def _one_sided_dini(u: PathFunctional, t0: float, x0: DiscretePath, a,
                    schedule: DeltaSchedule, mode: str) -> DiniEstimate:
    horizon = x0.grid.horizon
    if t0 >= horizon:
        raise DomainError("Dini derivative needs t0 < horizon")
    base = u(t0, x0)
    if base.is_infinite:
        raise DomainError("functional infinite at the base point")
    perturbed = apply_control(x0, t0, Control.constant(a))
    quotients = []
    for delta in schedule.deltas:
        if t0 + delta > horizon:
            continue
        val = u(t0 + delta, perturbed)
        q = math.inf if val.is_infinite else (val.value - base.value) / delta
        quotients.append((delta, q))
    extrapolated, diverged = _classify(quotients, schedule, mode)
    return DiniEstimate(quotients, extrapolated, diverged,
                        metadata={"mode": mode, "t0": t0})


def lower_dini(u: PathFunctional, t0: float, x0: DiscretePath, a,
               schedule: DeltaSchedule = DeltaSchedule()) -> DiniEstimate:
    """liminf difference quotient along the constant-velocity perturbation
    (min tail proxy)."""
    return _one_sided_dini(u, t0, x0, a, schedule, "min")


def upper_dini(u: PathFunctional, t0: float, x0: DiscretePath, a,
               schedule: DeltaSchedule = DeltaSchedule()) -> DiniEstimate:
    """limsup counterpart of lower_dini (max tail proxy)."""
    return _one_sided_dini(u, t0, x0, a, schedule, "max")


def stochastic_upper_dini(u: PathFunctional, t0: float, x0: DiscretePath, a,
                          n: int, schedule: DeltaSchedule = DeltaSchedule(),
                          samples: int = 2000, seed=0) -> DiniEstimate:
    """Averaged difference quotient under the scaled Wiener measure with the
    control drift applied; per-delta standard errors attached."""
    horizon = x0.grid.horizon
    if t0 >= horizon:
        raise DomainError("stochastic Dini derivative needs t0 < horizon")
    base = u(t0, x0)
    if base.is_infinite:
        raise DomainError("functional infinite at the base point")
    a = np.atleast_1d(np.asarray(a, dtype=float))
    rng = np.random.default_rng(seed)

    quotients, ses = [], []
    for delta in schedule.deltas:
        if t0 + delta > horizon:
            continue
        grid = TimeGrid.uniform(t0, t0 + delta, schedule.substeps)
        drift = np.broadcast_to(a, (schedule.substeps, a.size)).copy()
        times, values, _ = simulate_scaled_brownian_batch(
            t0, x0, n, grid, samples, rng, drift)
        tg = TimeGrid(times)
        vals = np.array([float(u(t0 + delta, DiscretePath(tg, v))) for v in values])
        mean = float(np.mean(vals))
        se = float(np.std(vals, ddof=1)) / math.sqrt(samples)
        quotients.append((delta, (mean - base.value) / delta))
        ses.append(se / delta)
    extrapolated, diverged = _classify(quotients, schedule, "max")
    tail_q = [abs(q) for _, q in quotients[-schedule.tail:]]
    tail_se = ses[-schedule.tail:]
    inconclusive = bool(tail_se) and min(tail_se) > max(max(tail_q), 1e-12)
    return DiniEstimate(quotients, extrapolated, diverged, inconclusive,
                        standard_errors=ses, metadata={"samples": samples, "n": n})


# ---------------------------------------------------------------------------
# Integral characterizations


@dataclass
class CheckReport:
    entries: list = field(default_factory=list)
    scope_notes: list = field(default_factory=list)

    @property
    def violations(self) -> list:
        return [e for e in self.entries if e.get("violation")]

    @property
    def ok(self) -> bool:
        return not self.violations


def _target_value(u: PathFunctional, terminal: Optional[TerminalCost],
                  horizon: Optional[float], t: float, x: DiscretePath) -> ExtendedReal:
    """u(t, x), except at the horizon where the integral characterizations
    compare against the terminal cost itself (so a shifted candidate fails
    the terminal condition)."""
    if terminal is not None and horizon is not None and t >= horizon - 1e-15:
        return ExtendedReal.of(terminal(x))
    return u(t, x)


def check_subsolution_soc(u: PathFunctional, lag: Lagrangian, n: int,
                          samples: Sequence, tol: float, mc_samples: int = 200,
                          substeps: int = 2, seed=0,
                          terminal: Optional[TerminalCost] = None,
                          horizon: Optional[float] = None) -> CheckReport:
    """Second-order integral subsolution inequality on sampled
    (t0, x0, t, a): u(t0, x0) <= E[int cost(s, a) ds + u(t, X + drift)].
    A violation is recorded when the left side exceeds the Monte-Carlo
    right side by more than tol + 3 SE."""
    report = CheckReport()
    rng = np.random.default_rng(seed)
    for t0, x0, t, a in samples:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        lhs = float(u(t0, x0))
        run = float(action(lag, apply_control(x0, t0, Control.constant(a)), t0, t))
        if t <= t0 + 1e-15:
            rhs_mean, se = float(u(t0, x0)), 0.0
        else:
            grid = TimeGrid.uniform(t0, t, substeps)
            drift = np.broadcast_to(a, (substeps, a.size)).copy()
            times, values, _ = simulate_scaled_brownian_batch(
                t0, x0, n, grid, mc_samples, rng, drift)
            tg = TimeGrid(times)
            vals = np.array([float(_target_value(u, terminal, horizon, t,
                                                 DiscretePath(tg, v)))
                             for v in values])
            rhs_mean = run + float(np.mean(vals))
            se = float(np.std(vals, ddof=1)) / math.sqrt(mc_samples)
        slack = rhs_mean - lhs
        report.entries.append({
            "t0": t0, "t": t, "a": a.tolist(), "lhs": lhs, "rhs": rhs_mean,
            "se": se, "slack": slack,
            "violation": bool(lhs > rhs_mean + tol + 3.0 * se)})
    return report


def check_minimax_super(u: PathFunctional, lag: Lagrangian, samples: Sequence,
                        tol: float, search_cells: int = 4,
                        opts: DocOptions = DocOptions(restarts=3, maxiter=100),
                        terminal: Optional[TerminalCost] = None,
                        horizon: Optional[float] = None) -> CheckReport:
    """Existence of a continuation x with u(t0,x0) >= int cost + u(t, x).

    Structured candidates are tried first (the minimizing continuation when
    the functional exposes one, then the zero-velocity continuation); the
    general slope search only runs when both fail.  Only piecewise-linear
    continuations are searched; the scope note records this restriction.
    """
    report = CheckReport()
    report.scope_notes.append(
        "witness search restricted to piecewise-linear continuations")
    for t0, x0, t in samples:
        lhs = float(u(t0, x0))
        best, witness_kind = math.inf, None

        candidates = []
        if u.minimizer is not None:
            try:
                mini = u.minimizer(t0, x0)
            except Exception:
                mini = None
            if mini is not None:
                candidates.append(("minimizer", mini))
        candidates.append(("zero_velocity", stop_path(x0, t0)))
        for kind, cand in candidates:
            val = float(action(lag, cand, t0, t)) \
                + float(_target_value(u, terminal, horizon, t, cand))
            if val < best:
                best, witness_kind = val, kind
            if best <= lhs + tol:
                break

        if best > lhs + tol:
            val, ok = _search_continuation(u, lag, t0, x0, t, search_cells, opts,
                                           terminal, horizon)
            if ok and val < best:
                best, witness_kind = val, "search"

        report.entries.append({
            "t0": t0, "t": t, "lhs": lhs, "best_rhs": best,
            "witness": witness_kind,
            "violation": bool(best > lhs + tol)})
    return report


def _search_continuation(u: PathFunctional, lag: Lagrangian, t0: float,
                         x0: DiscretePath, t: float, cells: int,
                         opts: DocOptions,
                         terminal: Optional[TerminalCost] = None,
                         horizon: Optional[float] = None):
    """Direct slope search of action + u(t, .) over continuations on [t0, t]."""
    from scipy import optimize

    stopped = stop_path(x0, t0)
    grid = TimeGrid.uniform(t0, t, cells)
    dt = np.diff(grid.nodes)
    start = stopped.at(t0)
    d = start.size

    def build(flat):
        slopes = flat.reshape(cells, d)
        disp = np.cumsum(slopes * dt[:, None], axis=0)
        y = stopped.with_nodes(grid.nodes)
        values = y.values.copy()
        after = y.grid.nodes > t0
        interp = np.stack([np.interp(y.grid.nodes[after], grid.nodes,
                                     np.concatenate([[0.0], disp[:, k]]))
                           for k in range(d)], axis=-1)
        values[after] += interp
        return DiscretePath(y.grid, values)

    def objective(flat):
        path = build(flat)
        run = action(lag, path, t0, t)
        val = _target_value(u, terminal, horizon, t, path)
        if run.is_infinite or val.is_infinite:
            return math.inf
        return float(run) + float(val)

    rng = np.random.default_rng(opts.seed)
    best, ok = math.inf, False
    starts = [np.zeros(cells * d)] + [rng.normal(0, opts.restart_scale, cells * d)
                                      for _ in range(opts.restarts)]
    for s0 in starts:
        res = optimize.minimize(objective, s0, method="L-BFGS-B",
                                options={"maxiter": opts.maxiter, "eps": opts.fd_step})
        if math.isfinite(res.fun) and res.fun < best:
            best, ok = float(res.fun), True
    return best, ok


def check_minimax_sub(u: PathFunctional, lag: Lagrangian, samples: Sequence,
                      tol: float, terminal: Optional[TerminalCost] = None,
                      horizon: Optional[float] = None) -> CheckReport:
    """First-order integral subsolution inequality along supplied
    continuations: u(t0,x0) <= int cost + u(t, x), deterministic."""
    report = CheckReport()
    for t0, x0, t, x in samples:
        lhs = float(u(t0, x0))
        run = action(lag, x, t0, t)
        val = _target_value(u, terminal, horizon, t, x)
        if run.is_infinite or val.is_infinite:
            rhs = math.inf
        else:
            rhs = float(run) + float(val)
        report.entries.append({
            "t0": t0, "t": t, "lhs": lhs, "rhs": rhs,
            "slack": rhs - lhs,
            "violation": bool(lhs > rhs + tol)})
    return report
