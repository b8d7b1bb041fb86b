import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdhjb import (Control, DiscretePath, DomainError, TimeGrid, action,
                   apply_control, concat_scaled, dinf_distance,
                   make_lagrangian, read_path_csv, rescale_lagrangian,
                   rescale_path, stop_path, write_path_csv)
from tests.conftest import random_path


def test_time_grid_validation():
    with pytest.raises(DomainError):
        TimeGrid(np.array([0.0, 0.5, 0.5, 1.0]))
    with pytest.raises(DomainError):
        TimeGrid(np.array([0.3]))
    g = TimeGrid.uniform(0.0, 1.0, 4)
    assert g.cells == 4 and g.t0 == 0.0 and g.horizon == 1.0


def test_geometric_grid_clusters_left():
    g = TimeGrid.geometric(0.0, 1.0, 100, 1.05)
    widths = np.diff(g.nodes)
    assert np.all(np.diff(widths) > 0)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == pytest.approx(1.0, abs=1e-12)


def test_path_interpolation_and_extension():
    p = DiscretePath(TimeGrid(np.array([0.0, 0.5, 1.0])),
                     np.array([[0.0], [1.0], [0.0]]))
    assert p.at(0.25)[0] == pytest.approx(0.5)
    assert p.at(2.0)[0] == pytest.approx(0.0)   # constant extension
    assert p.at(-1.0)[0] == pytest.approx(0.0)


def test_with_nodes_exact_for_pl():
    rng = np.random.default_rng(0)
    p = random_path(rng, dim=2, nodes=6)
    refined = p.with_nodes(np.linspace(0.0, 1.0, 37))
    back = refined.at(p.grid.nodes)
    assert np.max(np.abs(back - p.values)) < 1e-12


def test_stop_path():
    p = DiscretePath(TimeGrid(np.array([0.0, 1.0])), np.array([[0.0], [2.0]]))
    s = stop_path(p, 0.5)
    assert s.at(0.25)[0] == pytest.approx(0.5)
    assert s.at(0.9)[0] == pytest.approx(1.0)
    assert s.at(1.0)[0] == pytest.approx(1.0)
    with pytest.raises(DomainError):
        stop_path(p, 2.0)


def test_apply_control_perturbation():
    p = DiscretePath(TimeGrid(np.array([0.0, 1.0])), np.array([[0.0], [2.0]]))
    out = apply_control(p, 0.5, Control.constant(3.0))
    # Stopped at 0.5 (value 1.0), then drift 3 per unit time.
    assert out.at(0.5)[0] == pytest.approx(1.0)
    assert out.at(0.75)[0] == pytest.approx(1.0 + 0.75)
    assert out.at(0.25)[0] == pytest.approx(0.5)


def test_dinf_identity_and_symmetry():
    rng = np.random.default_rng(1)
    p = random_path(rng)
    q = random_path(rng)
    assert dinf_distance((0.5, p), (0.5, p)) == 0.0
    assert dinf_distance((0.3, p), (0.7, q)) == dinf_distance((0.7, q), (0.3, p))


def test_dinf_stopped_semantics():
    # Values after the attached time are irrelevant.
    grid = TimeGrid(np.array([0.0, 0.5, 1.0]))
    p1 = DiscretePath(grid, np.array([[0.0], [1.0], [5.0]]))
    p2 = DiscretePath(grid, np.array([[0.0], [1.0], [-9.0]]))
    assert dinf_distance((0.5, p1), (0.5, p2)) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_dinf_triangle(seed):
    rng = np.random.default_rng(seed)
    pts = [(rng.uniform(0, 1), random_path(rng)) for _ in range(3)]
    d01 = dinf_distance(pts[0], pts[1])
    d12 = dinf_distance(pts[1], pts[2])
    d02 = dinf_distance(pts[0], pts[2])
    assert d02 <= d01 + d12 + 1e-12


def test_concat_rescale_round_trip():
    rng = np.random.default_rng(2)
    for t in (0.25, 0.5, 0.8):
        omega = random_path(rng, nodes=7)
        omega = DiscretePath(omega.grid, omega.values - omega.values[0])
        tail = rescale_path(omega, t)
        back = concat_scaled(omega, t, tail)
        merged = np.union1d(omega.grid.nodes, back.grid.nodes)
        assert np.max(np.abs(back.at(merged) - omega.at(merged))) < 1e-12


def test_rescale_of_concat_recovers_tail():
    rng = np.random.default_rng(3)
    t = 0.4
    omega1 = random_path(rng, nodes=5)
    omega2 = random_path(rng, nodes=5)
    omega2 = DiscretePath(omega2.grid, omega2.values - omega2.values[0])
    glued = concat_scaled(omega1, t, omega2)
    tail = rescale_path(glued, t)
    merged = np.union1d(tail.grid.nodes, omega2.grid.nodes)
    assert np.max(np.abs(tail.at(merged) - omega2.at(merged))) < 1e-12


def test_concat_conventions_at_endpoints():
    rng = np.random.default_rng(4)
    omega1 = random_path(rng)
    omega2 = random_path(rng)
    omega2 = DiscretePath(omega2.grid, omega2.values - omega2.values[0])
    # At t = 1 the concatenation is omega1 itself.
    out = concat_scaled(omega1, 1.0, omega2)
    merged = out.grid.nodes
    assert np.max(np.abs(out.at(merged) - omega1.at(merged))) < 1e-12
    # At t = 1 the rescaled path is the zero path.
    z = rescale_path(omega1, 1.0)
    assert np.max(np.abs(z.values)) == 0.0


def test_concat_requires_anchored_tail():
    rng = np.random.default_rng(5)
    omega1 = random_path(rng)
    bad = DiscretePath.constant([1.0])
    with pytest.raises(DomainError):
        concat_scaled(omega1, 0.5, bad)


def test_action_quadratic_line():
    lag = make_lagrangian("quadratic")
    p = DiscretePath(TimeGrid(np.array([0.0, 1.0])), np.array([[0.0], [2.0]]))
    # slope 2 over [0, 1]: integral of 2^2/2 = 2
    assert float(action(lag, p, 0.0, 1.0)) == pytest.approx(2.0, abs=1e-12)
    assert float(action(lag, p, 0.25, 0.75)) == pytest.approx(1.0, abs=1e-12)


def test_action_additivity():
    lag = make_lagrangian("power:1.5")
    rng = np.random.default_rng(6)
    p = random_path(rng, nodes=9)
    total = float(action(lag, p, 0.0, 1.0))
    split = float(action(lag, p, 0.0, 0.37)) + float(action(lag, p, 0.37, 1.0))
    assert total == pytest.approx(split, abs=1e-12)


def test_rescale_lagrangian_action_identity():
    # Action of the rescaled tail under the rescaled cost equals the action
    # of the original path on [t0, 1].
    lag = make_lagrangian("quadratic")
    rng = np.random.default_rng(7)
    t0 = 0.4
    omega = random_path(rng, nodes=6)
    omega = DiscretePath(omega.grid, omega.values - omega.values[0])
    tail = rescale_path(omega, t0)
    lag_r = rescale_lagrangian(lag, t0)
    a1 = float(action(lag, omega, t0, 1.0))
    a2 = float(action(lag_r, tail, 0.0, 1.0))
    assert a1 == pytest.approx(a2, abs=1e-10)


def test_csv_round_trip():
    rng = np.random.default_rng(8)
    p = random_path(rng, dim=3, nodes=6)
    buf = io.StringIO()
    write_path_csv(p, buf)
    buf.seek(0)
    q = read_path_csv(buf)
    assert np.array_equal(p.grid.nodes, q.grid.nodes)
    assert np.array_equal(p.values, q.values)
