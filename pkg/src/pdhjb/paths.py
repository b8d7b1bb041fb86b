"""Discrete path space.

Paths are piecewise-linear interpolants on explicit, strictly increasing
time grids.  Whenever two paths interact, grids are refined to their
union so every operation stays exact at nodes.  The concatenation and
rescaling operators are normalized to horizon 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .extreal import ExtendedReal
from .lagrangian import Lagrangian

_T1_TOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    nodes: np.ndarray  # strictly increasing, shape (N+1,)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise DomainError("time grid needs at least two nodes")
        if not np.all(np.diff(nodes) > 0):
            raise DomainError("time grid nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @property
    def t0(self) -> float:
        return float(self.nodes[0])

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def cells(self) -> int:
        return self.nodes.size - 1

    @staticmethod
    def uniform(t0: float, t1: float, cells: int) -> "TimeGrid":
        if cells < 1:
            raise DomainError("cell count must be at least 1")
        return TimeGrid(np.linspace(t0, t1, cells + 1))

    @staticmethod
    def geometric(t0: float, t1: float, cells: int, growth: float = 1.002) -> "TimeGrid":
        """Cell widths in geometric progression, smallest adjacent to t0.

        Used to resolve integrands that are steep near the left endpoint.
        """
        if cells < 1:
            raise DomainError("cell count must be at least 1")
        if growth <= 0:
            raise DomainError("growth factor must be positive")
        widths = growth ** np.arange(cells)
        widths *= (t1 - t0) / widths.sum()
        nodes = np.concatenate(([t0], t0 + np.cumsum(widths)))
        nodes[-1] = t1
        return TimeGrid(nodes)


@dataclass(frozen=True)
class DiscretePath:
    grid: TimeGrid
    values: np.ndarray  # shape (N+1, d)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != self.grid.nodes.size:
            raise DomainError("node values do not match grid size")
        if not np.all(np.isfinite(values)):
            raise DomainError("path values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return self.grid.horizon

    def at(self, s) -> np.ndarray:
        """Piecewise-linear value at time(s) s, constant outside the grid."""
        s = np.asarray(s, dtype=float)
        out = np.stack(
            [np.interp(s, self.grid.nodes, self.values[:, k]) for k in range(self.dim)],
            axis=-1)
        return out

    def with_nodes(self, times) -> "DiscretePath":
        """Insert extra nodes (values interpolated); exact for PL paths."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        times = times[(times >= self.grid.t0) & (times <= self.grid.horizon)]
        merged = np.union1d(self.grid.nodes, times)
        return DiscretePath(TimeGrid(merged), self.at(merged))

    @staticmethod
    def constant(value, t0: float = 0.0, t1: float = 1.0) -> "DiscretePath":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return DiscretePath(TimeGrid(np.array([t0, t1])), np.stack([value, value]))

    @staticmethod
    def zero(dim: int = 1, t0: float = 0.0, t1: float = 1.0) -> "DiscretePath":
        return DiscretePath.constant(np.zeros(dim), t0, t1)

    @staticmethod
    def from_samples(times, values) -> "DiscretePath":
        return DiscretePath(TimeGrid(np.asarray(times, dtype=float)),
                            np.asarray(values, dtype=float))


@dataclass(frozen=True)
class Control:
    """Constant or piecewise-constant (per grid cell) velocity."""

    values: np.ndarray          # (d,) if constant, (N, d) if piecewise
    grid: Optional[TimeGrid] = None  # present iff piecewise

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise DomainError("control values must be finite")
        if self.grid is not None:
            if values.ndim == 1:
                values = values[:, None]
            if values.shape[0] != self.grid.cells:
                raise DomainError("piecewise control cell count does not match grid")
        else:
            values = np.atleast_1d(values)
        object.__setattr__(self, "values", values)

    @staticmethod
    def constant(a) -> "Control":
        return Control(np.atleast_1d(np.asarray(a, dtype=float)))

    def drift(self, t0: float, times: np.ndarray) -> np.ndarray:
        """Integral of the control from t0 to each time (0 before t0)."""
        times = np.asarray(times, dtype=float)
        if self.grid is None:
            out = np.maximum(times - t0, 0.0)[:, None] * self.values[None, :]
            return out
        # Piecewise: integrate the step function on [t0, s].
        nodes = self.grid.nodes
        vals = self.values
        out = np.zeros((times.size, vals.shape[1]))
        for i, s in enumerate(times):
            if s <= t0:
                continue
            lo = np.maximum(nodes[:-1], t0)
            hi = np.minimum(nodes[1:], s)
            lengths = np.clip(hi - lo, 0.0, None)
            out[i] = lengths @ vals
        return out


def _common_refinement(p1: DiscretePath, p2: DiscretePath):
    merged = np.union1d(p1.grid.nodes, p2.grid.nodes)
    return merged, p1.at(merged), p2.at(merged)


def dinf_distance(tp1, tp2) -> float:
    """Pseudo-metric on (time, path) pairs: time gap plus sup distance of
    the stopped paths, evaluated on the union grid."""
    t1, p1 = tp1
    t2, p2 = tp2
    if p1.dim != p2.dim:
        raise DomainError("path dimensions differ")
    s1, s2 = stop_path(p1, t1), stop_path(p2, t2)
    merged, v1, v2 = _common_refinement(s1, s2)
    sup = float(np.max(np.linalg.norm(v1 - v2, axis=1))) if merged.size else 0.0
    return abs(t1 - t2) + sup


def stop_path(x: DiscretePath, t: float) -> DiscretePath:
    """Freeze the path at time t: equal to x on [0, t], constant after."""
    if not x.grid.t0 <= t <= x.grid.horizon:
        raise DomainError(f"stopping time {t} outside grid span")
    y = x.with_nodes([t])
    values = y.values.copy()
    frozen = y.at(t)
    values[y.grid.nodes > t] = frozen
    return DiscretePath(y.grid, values)


def apply_control(x0: DiscretePath, t0: float, a: Control) -> DiscretePath:
    """Stopped path plus the control drift accumulated from t0."""
    stopped = stop_path(x0, t0)
    extra = [t0]
    if a.grid is not None:
        extra = np.concatenate(([t0], a.grid.nodes))
    y = stopped.with_nodes(extra)
    drift = a.drift(t0, y.grid.nodes)
    return DiscretePath(y.grid, y.values + drift)


def concat_scaled(omega1: DiscretePath, t: float, omega2: DiscretePath) -> DiscretePath:
    """Concatenate at time t with Brownian scaling of the tail.

    The result equals omega1 on [0, t] and
    omega1(t) + sqrt(1-t) * omega2((s-t)/(1-t)) after.  Horizon must be 1;
    at t = 1 the result is omega1 by convention.
    """
    _require_unit_horizon(omega1)
    if not 0.0 <= t <= 1.0:
        raise DomainError("concatenation time must lie in [0, 1]")
    if t == 1.0:
        return omega1
    _require_unit_horizon(omega2)
    if float(np.linalg.norm(omega2.at(0.0))) > _T1_TOL:
        raise DomainError("tail path must start at the origin")

    head = omega1.with_nodes([t])
    head_nodes = head.grid.nodes[head.grid.nodes <= t]
    tail_nodes = t + omega2.grid.nodes * (1.0 - t)
    nodes = np.union1d(head_nodes, tail_nodes)
    scale = math.sqrt(1.0 - t)
    anchor = omega1.at(t)
    values = np.where(
        (nodes <= t)[:, None],
        head.at(nodes),
        anchor[None, :] + scale * omega2.at((nodes - t) / (1.0 - t)))
    return DiscretePath(TimeGrid(nodes), values)


def rescale_path(omega: DiscretePath, t: float) -> DiscretePath:
    """Zoom into the tail after t with Brownian scaling:
    s -> (omega(t + s(1-t)) - omega(t)) / sqrt(1-t); zero path at t = 1."""
    _require_unit_horizon(omega)
    if not 0.0 <= t <= 1.0:
        raise DomainError("rescaling time must lie in [0, 1]")
    if t == 1.0:
        return DiscretePath.zero(omega.dim)
    tail = omega.with_nodes([t])
    mask = tail.grid.nodes >= t
    nodes = (tail.grid.nodes[mask] - t) / (1.0 - t)
    nodes[0] = 0.0
    nodes[-1] = 1.0
    anchor = omega.at(t)
    values = (tail.values[mask] - anchor[None, :]) / math.sqrt(1.0 - t)
    if nodes.size < 2:
        return DiscretePath.zero(omega.dim)
    return DiscretePath(TimeGrid(nodes), values)


def rescale_lagrangian(lag: Lagrangian, t0: float) -> Lagrangian:
    """Running cost seen through the time-and-scale change at t0:
    (t, a) -> (1-t0) * cost(t0 + t(1-t0), a / sqrt(1-t0)); zero at t0 = 1."""
    if abs(lag.horizon - 1.0) > _T1_TOL:
        raise DomainError("rescaling requires horizon 1")
    if not 0.0 <= t0 <= 1.0:
        raise DomainError("rescaling time must lie in [0, 1]")
    if t0 == 1.0:
        zero = lambda *args: 0.0
        return Lagrangian(
            eval_fn=lambda t, a: ExtendedReal.finite(0.0),
            dim=lag.dim, horizon=1.0, minorant=zero,
            convex_in_a=True, continuous=True, finite_valued=True,
            conjugate=zero,
            eval_batch=lambda ts, vels: np.zeros(np.shape(ts)),
            name=f"{lag.name}|rescaled@1")
    fac = 1.0 - t0
    root = math.sqrt(fac)

    conj = None
    if lag.conjugate is not None:
        conj = lambda t, p: fac * lag.conjugate(t0 + t * fac, p / root)
    batch = None
    if lag.eval_batch is not None:
        batch = lambda ts, vels: fac * lag.eval_batch(t0 + np.asarray(ts) * fac, vels / root)

    return Lagrangian(
        eval_fn=lambda t, a: fac * ExtendedReal.of(lag.eval_fn(t0 + t * fac, a / root)),
        dim=lag.dim,
        horizon=1.0,
        minorant=lambda r: fac * lag.minorant(r / root),
        convex_in_a=lag.convex_in_a,
        continuous=lag.continuous,
        finite_valued=lag.finite_valued,
        conjugate=conj,
        eval_batch=batch,
        name=f"{lag.name}|rescaled@{t0:g}")


def running_cost_of_slopes(lag: Lagrangian, mid_ts: np.ndarray,
                           slopes: np.ndarray) -> np.ndarray:
    """Per-cell running costs (may contain +inf); vectorized when possible."""
    if lag.eval_batch is not None:
        return np.asarray(lag.eval_batch(mid_ts, slopes), dtype=float)
    return np.array([float(ExtendedReal.of(lag.eval_fn(t, a)))
                     for t, a in zip(mid_ts, slopes)])


def action(lag: Lagrangian, x: DiscretePath, t0: float, t1: float) -> ExtendedReal:
    """Integral of the running cost along the path between t0 and t1.

    Slopes are the exact cell slopes of the linear interpolant; time uses
    the midpoint rule, exact for time-independent costs.
    """
    if t0 > t1:
        raise DomainError("action requires t0 <= t1")
    if t0 == t1:
        return ExtendedReal.finite(0.0)
    y = x.with_nodes([t0, t1])
    nodes = y.grid.nodes
    mask = (nodes[:-1] >= t0 - _T1_TOL) & (nodes[1:] <= t1 + _T1_TOL)
    dt = np.diff(nodes)[mask]
    slopes = (np.diff(y.values, axis=0)[mask] / dt[:, None])
    mid = (0.5 * (nodes[:-1] + nodes[1:]))[mask]
    costs = running_cost_of_slopes(lag, mid, slopes)
    if np.any(np.isinf(costs)):
        return ExtendedReal.infinity()
    return ExtendedReal.finite(float(costs @ dt))


def _require_unit_horizon(p: DiscretePath):
    if abs(p.grid.horizon - 1.0) > _T1_TOL or abs(p.grid.t0) > _T1_TOL:
        raise DomainError("operation requires paths on [0, 1]")


# ---------------------------------------------------------------------------
# Serialization: CSV with header t,x1,...,xd and 17-significant-digit decimals


def write_path_csv(path: DiscretePath, fp) -> None:
    header = "t," + ",".join(f"x{k + 1}" for k in range(path.dim))
    fp.write(header + "\n")
    for t, row in zip(path.grid.nodes, path.values):
        fp.write(("%.17g" % t) + "," + ",".join("%.17g" % v for v in row) + "\n")


def read_path_csv(fp) -> DiscretePath:
    header = fp.readline().strip().split(",")
    if not header or header[0] != "t":
        raise DomainError("path CSV must start with header t,x1,...")
    rows = [line.strip().split(",") for line in fp if line.strip()]
    data = np.array([[float(v) for v in row] for row in rows])
    return DiscretePath(TimeGrid(data[:, 0]), data[:, 1:])
