import math

import numpy as np
import pytest

from pdhjb import (BolzaProblem, DiscretePath, DocOptions, DomainError,
                   TerminalCost, TimeGrid, ValueEstimate, dpp_residuals,
                   make_lagrangian, make_terminal_cost, solve_doc,
                   solve_doc_constrained)
from pdhjb.errors import UnsupportedError
from tests.conftest import lq_value


def brute_force_slope_value(prob, t0, x0_val, cells=8, amplitude=3.0, pts=13):
    """Independent coarse grid search over constant-per-cell slopes."""
    import itertools
    grid = TimeGrid.uniform(t0, prob.horizon, cells)
    dt = np.diff(grid.nodes)
    mids = 0.5 * (grid.nodes[:-1] + grid.nodes[1:])
    axis = np.linspace(-amplitude, amplitude, pts)
    best = math.inf
    for slopes in itertools.product(axis, repeat=cells):
        s = np.array(slopes)
        run = sum(float(prob.running_cost(m, np.array([a]))) * d
                  for m, a, d in zip(mids, s, dt))
        nodes = grid.nodes
        vals = x0_val + np.concatenate([[0.0], np.cumsum(s * dt)])
        path = DiscretePath(TimeGrid(nodes), vals[:, None])
        best = min(best, run + float(prob.terminal_cost(path)))
    return best


def test_lq_closed_form(lq_problem):
    for t0, x0 in ((0.0, 0.0), (0.25, 0.5), (0.5, -1.0)):
        path = DiscretePath.constant([x0])
        est, mini = solve_doc(lq_problem, t0, path, 64, DocOptions(restarts=3))
        assert est.value == pytest.approx(lq_value(x0, t0), abs=1e-6)
        # The minimizer achieves the reported value and ends near the
        # optimal terminal point.
        assert mini.grid.horizon == pytest.approx(1.0)


def test_lq_matches_brute_force(lq_problem):
    # Coarse independent oracle at 2 cells (the LQ minimizer is linear, so
    # few cells suffice for agreement at oracle resolution).
    oracle = brute_force_slope_value(lq_problem, 0.0, 0.0, cells=2,
                                     amplitude=1.0, pts=201)
    est, _ = solve_doc(lq_problem, 0.0, DiscretePath.zero(), 2,
                       DocOptions(restarts=3))
    assert est.value == pytest.approx(oracle, abs=1e-4)


def test_solve_doc_at_horizon(lq_problem):
    path = DiscretePath.constant([0.25])
    est, mini = solve_doc(lq_problem, 1.0, path, 8)
    assert est.value == pytest.approx((1.0 - 0.25) ** 2, abs=1e-12)


def test_solve_doc_respects_initial_segment(lq_problem):
    # A path with history: value depends only on the state at t0 for this
    # terminal cost, and the minimizer must preserve the prefix.
    nodes = np.array([0.0, 0.3, 0.5, 1.0])
    path = DiscretePath(TimeGrid(nodes), np.array([[0.0], [0.6], [0.2], [0.2]]))
    est, mini = solve_doc(lq_problem, 0.5, path, 32, DocOptions(restarts=3))
    assert est.value == pytest.approx(lq_value(0.2, 0.5), abs=1e-6)
    assert mini.at(0.3)[0] == pytest.approx(0.6, abs=1e-12)
    assert mini.at(0.5)[0] == pytest.approx(0.2, abs=1e-12)


def test_solve_doc_rejects_constrained(sqrt_problem, sqrt_path):
    with pytest.raises(UnsupportedError):
        solve_doc(sqrt_problem, 0.25, sqrt_path, 8)


def test_singleton_short_circuit(sqrt_problem, sqrt_path):
    t0 = 0.0625
    expect = math.sqrt(2.0) * (1.0 - t0 ** 0.25)
    est = solve_doc_constrained(sqrt_problem, t0, sqrt_path, 64)
    assert est.value == pytest.approx(expect, abs=1e-6)
    assert est.metadata["mode"] == "singleton"


def test_singleton_infeasible_is_infinite(sqrt_problem):
    est = solve_doc_constrained(sqrt_problem, 0.25, DiscretePath.zero(), 8)
    assert math.isinf(est.value)
    assert not est.metadata["feasible"]


def test_penalty_schedule_monotone(sqrt_problem, sqrt_path):
    h = sqrt_problem.terminal_cost
    h_pen = TerminalCost("constrained", h.fn, "sqrt_pen", distance=h.distance,
                         target_path=None, smooth_distance=h.smooth_distance)
    prob = BolzaProblem(sqrt_problem.running_cost, h_pen, 1.0, 1)
    est = solve_doc_constrained(prob, 0.0625, sqrt_path, 32,
                                DocOptions(restarts=2, maxiter=300))
    values = est.metadata["values"]
    assert all(b >= a - 1e-6 for a, b in zip(values, values[1:]))
    assert est.penalty_gap == pytest.approx(abs(values[-1] - values[-2]))
    expect = math.sqrt(2.0) * (1.0 - 0.0625 ** 0.25)
    assert est.value == pytest.approx(expect, rel=0.02)


def test_penalty_schedule_must_increase(sqrt_problem, sqrt_path):
    with pytest.raises(DomainError):
        solve_doc_constrained(sqrt_problem, 0.5, sqrt_path, 8,
                              penalties=[10.0, 1.0])


def test_dpp_residuals_small(lq_problem):
    opts = DocOptions(restarts=3)
    est, mini = solve_doc(lq_problem, 0.0, DiscretePath.zero(), 32, opts)
    out = dpp_residuals(lq_problem, 0.0, DiscretePath.zero(), est.value, mini,
                        [0.25, 0.5, 0.75], 32, opts)
    for entry in out:
        assert entry["residual"] < 1e-6


def test_value_estimate_rejects_negative_errors():
    with pytest.raises(DomainError):
        ValueEstimate(1.0, mc_standard_error=-0.1)


def test_discretization_allowance():
    lag = make_lagrangian("quadratic")
    h = make_terminal_cost("tanh_terminal")
    prob = BolzaProblem(lag, h, 1.0, 1)
    est, _ = solve_doc(prob, 0.0, DiscretePath.zero(), 16,
                       DocOptions(restarts=2, compute_allowance=True))
    assert est.discretization_allowance >= 0.0
    assert est.discretization_allowance < 0.05


def test_terminal_cost_registry():
    zero = make_terminal_cost("zero")
    assert float(zero(DiscretePath.zero())) == 0.0
    const = make_terminal_cost("constant", {"value": 2.5})
    assert float(const(DiscretePath.zero())) == 2.5
    with pytest.raises(DomainError):
        make_terminal_cost("nope")


def test_running_max_terminal_batch_matches_scalar():
    h = make_terminal_cost("tanh_running_max")
    times = np.array([0.0, 0.5, 1.0])
    values = np.array([[[0.0], [2.0], [1.0]], [[0.0], [-1.0], [-3.0]]])
    batch = h.eval_nodes(times, values)
    assert batch[0] == pytest.approx(math.tanh(2.0))
    assert batch[1] == pytest.approx(math.tanh(0.0))
    p = DiscretePath(TimeGrid(times), values[0])
    assert float(h(p)) == pytest.approx(batch[0])
