"""Stochastic control at viscosity level n.

Small instances are solved exactly by backward induction on a
non-recombining tree: per step the controller picks a velocity from a
finite grid and the noise contributes symmetric two-point increments
+-sqrt(dt/n), matching the first two moments of the scaled Brownian
increments.  Path-dependent terminal costs forbid recombination, so the
node count is (|grid| * 2^d)^steps and a hard budget fails loudly.

For the quadratic running cost the terminal value problem linearizes
under the exponential transform w = exp(-n u), giving the Monte-Carlo
oracle value -(1/n) log E[exp(-n h(X))]; an optional drift applies
importance sampling with exact reweighting so large n stays estimable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .bolza import BolzaProblem, TerminalCost, ValueEstimate
from .errors import DomainError, PdhjbError, ResourceError
from .lagrangian import Lagrangian
from .paths import DiscretePath, TimeGrid, concat_scaled, rescale_lagrangian, \
    running_cost_of_slopes, stop_path

DEFAULT_NODE_BUDGET = 20_000_000


@dataclass(frozen=True)
class LatticeSpec:
    steps: int
    control_grid: np.ndarray            # (K,) for d=1 or (K, d)
    node_budget: int = DEFAULT_NODE_BUDGET

    def __post_init__(self):
        grid = np.asarray(self.control_grid, dtype=float)
        if grid.ndim == 1:
            grid = grid[:, None]
        if grid.size == 0:
            raise DomainError("control grid must be non-empty")
        if not np.any(np.all(grid == 0.0, axis=1)):
            raise DomainError("control grid must contain 0")
        # Lexicographic ascending order so argmin tie-breaks deterministically
        # to the smallest control.
        order = np.lexsort(grid.T[::-1])
        object.__setattr__(self, "control_grid", grid[order])
        if self.steps < 1:
            raise DomainError("steps must be at least 1")

    @staticmethod
    def symmetric(amplitude: float, points_per_side: int, steps: int,
                  node_budget: int = DEFAULT_NODE_BUDGET, dim: int = 1) -> "LatticeSpec":
        axis = np.linspace(-amplitude, amplitude, 2 * points_per_side + 1)
        if dim == 1:
            grid = axis[:, None]
        else:
            grid = np.array(list(itertools.product(axis, repeat=dim)))
        return LatticeSpec(steps, grid, node_budget)


@dataclass
class SocResult:
    value: float
    first_step_control: np.ndarray
    node_count: int
    lower_bound: float
    upper_bound: float
    metadata: dict = field(default_factory=dict)


def _prefix_arrays(x0: DiscretePath, t0: float):
    """Nodes and values of x0 strictly before t0 (stopped path semantics)."""
    stopped = stop_path(x0, t0) if x0.grid.horizon >= t0 else x0
    mask = stopped.grid.nodes < t0
    return stopped.grid.nodes[mask], stopped.values[mask], stopped.at(t0)


def simulate_scaled_brownian(t0: float, x0: DiscretePath, n: int, grid: TimeGrid,
                             seed) -> DiscretePath:
    """One piecewise-linear sample with Gaussian increments of variance dt/n,
    frozen to x0 before t0.  Deterministic given the seed."""
    if n < 1:
        raise DomainError("viscosity index n must be at least 1")
    if abs(grid.t0 - t0) > 1e-12:
        raise DomainError("simulation grid must start at t0")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    pre_nodes, pre_values, start = _prefix_arrays(x0, t0)
    dts = np.diff(grid.nodes)
    incr = rng.normal(0.0, 1.0, (dts.size, x0.dim)) * np.sqrt(dts / n)[:, None]
    cont = np.vstack([start[None, :], start[None, :] + np.cumsum(incr, axis=0)])
    nodes = np.concatenate([pre_nodes, grid.nodes])
    values = np.vstack([pre_values, cont])
    return DiscretePath(TimeGrid(nodes), values)


def simulate_scaled_brownian_batch(t0: float, x0: DiscretePath, n: int,
                                   grid: TimeGrid, samples: int, rng,
                                   drift: Optional[np.ndarray] = None):
    """Vectorized sampler used by the oracle and the verifier.

    Returns (full_times, full_values (M, len, d), noise (M, m, d)) where
    noise holds the raw Gaussian increments before any drift.
    """
    pre_nodes, pre_values, start = _prefix_arrays(x0, t0)
    dts = np.diff(grid.nodes)
    m, d = dts.size, x0.dim
    noise = rng.normal(0.0, 1.0, (samples, m, d)) * np.sqrt(dts / n)[None, :, None]
    incr = noise if drift is None else noise + drift[None, :, :] * dts[None, :, None]
    cont = np.concatenate(
        [np.broadcast_to(start, (samples, 1, d)),
         start[None, None, :] + np.cumsum(incr, axis=1)], axis=1)
    times = np.concatenate([pre_nodes, grid.nodes])
    values = np.concatenate(
        [np.broadcast_to(pre_values, (samples, pre_values.shape[0], d)), cont], axis=1)
    return times, values, noise


def _min_minorant(lag: Lagrangian) -> float:
    rs = np.linspace(0.0, 50.0, 2001)
    vals = np.array([lag.minorant(r) for r in rs])
    best = float(vals.min())
    res = optimize.minimize_scalar(lambda r: lag.minorant(abs(r)), bounds=(0.0, 50.0),
                                   method="bounded")
    return min(best, float(res.fun))


def _tree_value(prob: BolzaProblem, t0: float, x0: DiscretePath, n: int,
                steps: int, controls: np.ndarray, node_budget: int):
    """Exact DP on the non-recombining tree; returns (value, first control,
    leaf h values, leaf count)."""
    lag, h, T, d = prob.running_cost, prob.terminal_cost, prob.horizon, prob.dim
    if h.kind != "finite":
        raise DomainError("tree solver requires a finite terminal cost")
    K = controls.shape[0]
    branch = K * (2 ** d)
    leaves = branch ** steps
    if leaves > node_budget:
        raise ResourceError(
            f"tree needs {leaves} leaves, budget is {node_budget}", required=leaves)

    pre_nodes, pre_values, start = _prefix_arrays(x0, t0)
    if t0 >= T - 1e-15:
        stopped = stop_path(x0, t0)
        val = float(h(stopped))
        return val, np.zeros(d), np.array([val]), 1

    grid = TimeGrid.uniform(t0, T, steps)
    dt = (T - t0) / steps
    noise = math.sqrt(dt / n)
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=d)))
    incr = (controls[:, None, :] * dt + signs[None, :, :] * noise).reshape(branch, d)

    hist = start[None, None, :]                       # (B, i+1, d)
    for _ in range(steps):
        tips = hist[:, -1, :][:, None, :] + incr[None, :, :]
        B = hist.shape[0]
        hist = np.concatenate(
            [np.repeat(hist, branch, axis=0), tips.reshape(B * branch, 1, d)], axis=1)

    times = np.concatenate([pre_nodes, grid.nodes])
    values = np.concatenate(
        [np.broadcast_to(pre_values, (hist.shape[0], pre_values.shape[0], d)), hist],
        axis=1)
    leaf_h = h.eval_nodes(times, values)

    mids = 0.5 * (grid.nodes[:-1] + grid.nodes[1:])
    V = leaf_h
    first_idx = None
    for i in reversed(range(steps)):
        run = running_cost_of_slopes(lag, np.full(K, mids[i]), controls) * dt
        V = V.reshape(-1, K, 2 ** d).mean(axis=2) + run[None, :]
        idx = np.argmin(V, axis=1)
        V = np.take_along_axis(V, idx[:, None], axis=1)[:, 0]
        if i == 0:
            first_idx = int(idx[0])
    return float(V[0]), controls[first_idx], leaf_h, leaves


def solve_soc_tree(prob: BolzaProblem, t0: float, x0: DiscretePath, n: int,
                   spec: LatticeSpec) -> SocResult:
    """Value of the viscosity-n control problem by exact backward induction.

    Constructive uniform bounds are attached: the zero-control policy gives
    the upper bound and the coercive minorant the lower one.
    """
    if n < 1:
        raise DomainError("viscosity index n must be at least 1")
    value, first, leaf_h, leaves = _tree_value(
        prob, t0, x0, n, spec.steps, spec.control_grid, spec.node_budget)

    if leaves == 1:   # degenerate t0 = horizon case
        return SocResult(value, first, 1, value, value, {"steps": 0})

    zero = np.zeros((1, prob.dim))
    upper, _, _, _ = _tree_value(prob, t0, x0, n, spec.steps, zero, spec.node_budget)
    lower = float(leaf_h.min()) + (prob.horizon - t0) * _min_minorant(prob.running_cost)

    return SocResult(
        value=value,
        first_step_control=first,
        node_count=leaves,
        lower_bound=lower,
        upper_bound=upper,
        metadata={"steps": spec.steps, "controls": spec.control_grid.tolist(),
                  "n": n, "within_bounds":
                      bool(lower - 1e-9 <= value <= upper + 1e-9)})


def solve_soc_tree_auto(prob: BolzaProblem, t0: float, x0: DiscretePath, n: int,
                        steps: int, points_per_side: int = 2, tol: float = 1e-3,
                        node_budget: int = DEFAULT_NODE_BUDGET,
                        max_doublings: int = 6) -> SocResult:
    """Adaptive control amplitude: double A until the DP value stops improving.
    Superlinear running costs make large controls self-penalizing, so small
    grids suffice."""
    amplitude = 1.0
    best = None
    for _ in range(max_doublings + 1):
        spec = LatticeSpec.symmetric(amplitude, points_per_side, steps,
                                     node_budget, prob.dim)
        res = solve_soc_tree(prob, t0, x0, n, spec)
        if best is not None and best.value - res.value < tol:
            if res.value < best.value:
                best = res
            break
        best = res
        amplitude *= 2.0
    best.metadata["amplitude"] = amplitude
    return best


def estimate_vn_quadratic_oracle(h: TerminalCost, n: int, t0: float,
                                 x0: DiscretePath, grid: TimeGrid, samples: int,
                                 seed, drift: Optional[np.ndarray] = None
                                 ) -> ValueEstimate:
    """Monte-Carlo value for the quadratic running cost via the exponential
    transform: v_n = -(1/n) log E[exp(-n h(X))].

    Valid for the quadratic builtin only.  With a drift (slopes per grid
    cell) the paths are tilted and reweighted exactly, which keeps the
    variance bounded for large n when the drift tracks the deterministic
    minimizer.  The max log-weight is factored out before averaging to
    guard against exp underflow.
    """
    if h.kind != "finite":
        raise DomainError("oracle requires a finite terminal cost")
    if samples < 2:
        raise DomainError("need at least 2 samples")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    if drift is not None:
        drift = np.asarray(drift, dtype=float)
        if drift.ndim == 1:
            drift = drift[:, None]
        if drift.shape != (grid.cells, x0.dim):
            raise DomainError("drift shape must be (cells, dim)")

    times, values, noise = simulate_scaled_brownian_batch(
        t0, x0, n, grid, samples, rng, drift)
    hs = h.eval_nodes(times, values)

    log_w = -n * hs
    if drift is not None:
        dts = np.diff(grid.nodes)
        quad = 0.5 * float(np.sum(drift * drift * dts[:, None]))
        cross = np.sum(drift[None, :, :] * noise, axis=(1, 2))
        log_w += -n * quad - n * cross

    m = float(np.max(log_w))
    w = np.exp(log_w - m)
    mean_w = float(np.mean(w))
    if not (math.isfinite(mean_w) and mean_w > 0.0):
        raise PdhjbError("all oracle weights underflowed; increase drift quality "
                         "or reduce n * h scaling")
    se_mean = float(np.std(w, ddof=1)) / math.sqrt(samples)
    value = -(m + math.log(mean_w)) / n
    se = se_mean / (mean_w * n)     # delta method on the log of the mean
    return ValueEstimate(value, mc_standard_error=se,
                         metadata={"samples": samples, "n": n,
                                   "drifted": drift is not None})


def check_rescaling_identity(lag: Lagrangian, h: TerminalCost, t0: float,
                             x0: DiscretePath, spec: LatticeSpec) -> dict:
    """Both sides of the time-and-scale change identity, each computed by an
    independent tree solve at n = 1 on the unit horizon; reports the gap."""
    if abs(lag.horizon - 1.0) > 1e-12:
        raise DomainError("rescaling identity requires horizon 1")
    if not 0.0 <= t0 <= 1.0:
        raise DomainError("t0 must lie in [0, 1]")

    prob = BolzaProblem(lag, h, 1.0, lag.dim)
    left = -solve_soc_tree(prob, t0, x0, 1, spec).value

    lag_r = rescale_lagrangian(lag, t0)
    h_hat = _concat_terminal(h, x0, t0)
    prob_r = BolzaProblem(lag_r, h_hat, 1.0, lag.dim)
    zero = DiscretePath.zero(lag.dim)
    right = -solve_soc_tree(prob_r, 0.0, zero, 1, spec).value

    return {"left": left, "right": right, "gap": abs(left - right), "t0": t0}


def _concat_terminal(h: TerminalCost, x0: DiscretePath, t0: float) -> TerminalCost:
    """Terminal cost omega -> h(x0 concatenated-with-scaling omega at t0),
    with an exact vectorized node evaluation."""
    if t0 == 1.0:
        c = float(h(x0))
        return TerminalCost("finite", lambda x: c, f"{h.name}|concat@1",
                            batch=lambda ts, vs: np.full(vs.shape[0], c))

    pre_nodes, pre_values, anchor = _prefix_arrays(x0, t0)
    scale = math.sqrt(1.0 - t0)

    def batch(ts: np.ndarray, vs: np.ndarray) -> np.ndarray:
        mapped = t0 + np.asarray(ts) * (1.0 - t0)
        tail = anchor[None, None, :] + scale * vs
        times = np.concatenate([pre_nodes, mapped])
        values = np.concatenate(
            [np.broadcast_to(pre_values, (vs.shape[0], pre_values.shape[0], vs.shape[2])),
             tail], axis=1)
        return h.eval_nodes(times, values)

    def single(x: DiscretePath) -> float:
        return h.fn(concat_scaled(stop_path(x0, t0) if x0.grid.horizon > t0 else x0,
                                  t0, x))

    return TerminalCost("finite", single, f"{h.name}|concat@{t0:g}",
                        bound=h.bound, batch=batch)
