import math

import numpy as np
import pytest

from pdhjb import (DomainError, ExtendedReal, Lagrangian, SampleSpec,
                   check_hypotheses, eval_lagrangian, hamiltonian,
                   make_hamiltonian, make_lagrangian, numeric_hamiltonian)
from pdhjb.errors import UnsupportedError


def brute_force_hamiltonian(lag, t, p, radius=30.0, points=600_001):
    """Independent grid-search oracle for inf_a [a p + cost(t, a)], d = 1."""
    grid = np.linspace(-radius, radius, points)
    vals = np.array([float(eval_lagrangian(lag, t, np.array([a]))) for a in
                     grid[:: max(points // 4001, 1)]])
    # Coarse pass to localize, fine pass around the coarse minimizer.
    coarse = grid[:: max(points // 4001, 1)]
    i = int(np.argmin(coarse * p + vals))
    lo, hi = coarse[max(i - 1, 0)], coarse[min(i + 1, coarse.size - 1)]
    fine = np.linspace(lo, hi, 20_001)
    fvals = np.array([float(eval_lagrangian(lag, t, np.array([a]))) for a in fine])
    return float(np.min(fine * p + fvals))


def test_quadratic_closed_form():
    lag = make_lagrangian("quadratic")
    for p in range(-5, 6):
        assert hamiltonian(lag, 0.5, float(p)) == pytest.approx(-0.5 * p * p,
                                                                abs=1e-9)


def test_power_closed_form():
    lag = make_lagrangian("power:1.5")
    for p in range(-5, 6):
        expect = -(4.0 / 27.0) * abs(p) ** 3
        assert hamiltonian(lag, 0.5, float(p)) == pytest.approx(expect, abs=1e-6)


def test_numeric_agrees_with_brute_force():
    for name in ("quadratic", "power:1.5"):
        lag = make_lagrangian(name)
        for p in (-5.0, -1.5, 0.0, 2.0, 5.0):
            oracle = brute_force_hamiltonian(lag, 0.3, p)
            assert numeric_hamiltonian(lag, 0.3, p) == pytest.approx(oracle,
                                                                     abs=1e-6)
            assert hamiltonian(lag, 0.3, p) == pytest.approx(oracle, abs=1e-6)


def test_numeric_hamiltonian_multidim():
    lag = make_lagrangian("quadratic", dim=2)
    p = np.array([3.0, -4.0])
    assert hamiltonian(lag, 0.5, p) == pytest.approx(-12.5, abs=1e-9)
    assert numeric_hamiltonian(lag, 0.5, p) == pytest.approx(-12.5, abs=1e-6)


def test_make_hamiltonian_provenance():
    lag = make_lagrangian("quadratic")
    H = make_hamiltonian(lag)
    assert H.provenance == "closed_form"
    assert H(0.5, 2.0) == pytest.approx(-2.0)

    anon = Lagrangian(eval_fn=lag.eval_fn, dim=1, horizon=1.0,
                      minorant=lag.minorant)
    H2 = make_hamiltonian(anon)
    assert H2.provenance == "numeric"
    assert H2(0.5, 2.0) == pytest.approx(-2.0, abs=1e-8)


def test_eval_domain_checks():
    lag = make_lagrangian("quadratic")
    with pytest.raises(DomainError):
        eval_lagrangian(lag, -0.1, 0.0)
    with pytest.raises(DomainError):
        eval_lagrangian(lag, 2.0, 0.0)
    with pytest.raises(DomainError):
        eval_lagrangian(lag, 0.5, np.array([1.0, 2.0]))
    with pytest.raises(DomainError):
        eval_lagrangian(lag, 0.5, math.nan)


def test_nonconvex_numeric_rejected():
    lag = Lagrangian(
        eval_fn=lambda t, a: ExtendedReal.finite(-float(a @ a)),
        dim=1, horizon=1.0, minorant=lambda r: 0.0, convex_in_a=False)
    with pytest.raises(UnsupportedError):
        numeric_hamiltonian(lag, 0.5, 1.0)


def test_hypothesis_checks_pass_for_builtins():
    # Probe out to r = 150 so the superlinearity smoke test has room even
    # for the slowly-growing |a|^(3/2) cost (phi(r)/r = sqrt(r)).
    vels = np.linspace(-150.0, 150.0, 11)[:, None]
    spec = SampleSpec(t_nodes=[0.0, 0.5, 1.0], velocities=vels)
    for name in ("quadratic", "power:1.5", "power:3"):
        report = check_hypotheses(make_lagrangian(name), spec)
        assert report.ok, report.violations
        assert math.isfinite(report.running_cost_at_zero)


def test_hypothesis_checks_flag_nonconvex():
    lag = Lagrangian(
        eval_fn=lambda t, a: ExtendedReal.finite(abs(float(a[0])) ** 0.5),
        dim=1, horizon=1.0, minorant=lambda r: 0.0)
    vels = np.linspace(-25.0, 25.0, 11)[:, None]
    report = check_hypotheses(lag, SampleSpec(t_nodes=[0.0, 1.0],
                                              velocities=vels))
    assert not report.ok
    assert any("convexity" in v or "superlinearity" in v
               for v in report.violations)


def test_registry_errors():
    with pytest.raises(DomainError):
        make_lagrangian("unknown")
    with pytest.raises(DomainError):
        make_lagrangian("power:1.0")
