"""Splitting solver: convergence, certificates, determinism, diagnostics."""

import dataclasses
import io

import numpy as np
import pytest

from kcbs_selftest.moments import (
    assemble_max_witness,
    certify,
    fidelity_problem,
    ideal_moment_vector,
)
from kcbs_selftest.solver import SolveResult, SolverSettings, solve

ROOT5 = float(np.sqrt(5.0))


@pytest.fixture(scope="module")
def witness_level_one():
    return assemble_max_witness(1)


def test_witness_level_one_reaches_quantum_value(witness_level_one):
    res = solve(witness_level_one)
    assert res.status == "optimal"
    assert res.bound == pytest.approx(ROOT5, abs=1e-4)
    # certified upper bound never undercuts the attainable value
    assert res.bound >= ROOT5 - 1e-9


def test_witness_level_two_reaches_quantum_value():
    res = solve(assemble_max_witness(2))
    assert res.status == "optimal"
    assert res.bound == pytest.approx(ROOT5, abs=1e-4)
    assert res.bound >= ROOT5 - 1e-9


def test_zero_objective_certifies_zero(witness_level_one):
    problem = dataclasses.replace(
        witness_level_one,
        objective=np.zeros_like(witness_level_one.objective),
        maximize=False,
    )
    res = solve(problem)
    assert res.status == "optimal"
    assert abs(res.bound) < 1e-6


def test_deterministic_reruns(witness_level_one):
    a = solve(witness_level_one)
    b = solve(witness_level_one)
    assert a.bound == b.bound
    assert a.iterations == b.iterations
    assert np.array_equal(a.y, b.y)


def test_returned_iterate_nearly_feasible(witness_level_one):
    settings = SolverSettings(abstol=1e-8, max_iterations=50_000)
    res = solve(witness_level_one, settings)
    report = certify(witness_level_one, res.y)
    assert report.equality_violation <= 1e-7
    assert report.moment_min_eig >= -1e-7


def test_certify_flags_perturbed_vector(witness_level_one):
    y = ideal_moment_vector(witness_level_one)
    report = certify(witness_level_one, y)
    assert report.ok(1e-8)
    bad = y.copy()
    bad[3] += 0.1
    assert not certify(witness_level_one, bad).ok(1e-6)


def test_bound_correction_is_conservative(witness_level_one):
    # stopping early must still produce a valid certified bound
    res = solve(witness_level_one, SolverSettings(max_iterations=40, check_every=10))
    assert res.status in ("iteration-limit", "near-optimal", "optimal")
    assert np.isfinite(res.bound)
    assert res.bound >= ROOT5 - 1e-9
    assert res.correction >= 0.0


def test_infeasible_statistic_detected():
    problem = fidelity_problem(2.5, 1, mode="sum")
    res = solve(problem, SolverSettings(max_iterations=50_000))
    assert res.status == "infeasible"
    assert np.isnan(res.bound)


def test_log_stream_records_iterations(witness_level_one):
    log = io.StringIO()
    solve(witness_level_one, SolverSettings(log=log))
    lines = log.getvalue().strip().splitlines()
    assert lines[0] == "iteration,primal_residual,dual_residual,gap"
    assert len(lines) >= 2
    first = lines[1].split(",")
    assert len(first) == 4
    int(first[0])
    [float(v) for v in first[1:]]


def test_env_variable_overrides_tolerance(monkeypatch):
    monkeypatch.setenv("KCBS_SELFTEST_TOL", "3e-5")
    assert SolverSettings().abstol == pytest.approx(3e-5)
    monkeypatch.delenv("KCBS_SELFTEST_TOL")
    assert SolverSettings().abstol == pytest.approx(1e-6)


def test_invalid_settings_rejected():
    with pytest.raises(ValueError):
        SolverSettings(over_relaxation=2.0)
    with pytest.raises(ValueError):
        SolverSettings(max_iterations=0)


def test_warm_start_matches_cold(witness_level_one):
    cold = solve(witness_level_one)
    warm = solve(
        witness_level_one, warm_y=ideal_moment_vector(witness_level_one)
    )
    assert warm.status == "optimal"
    assert warm.bound == pytest.approx(cold.bound, abs=1e-5)


def test_fidelity_bound_certified_for_feasible_points():
    # minimization: a certified bound must sit below the value at any
    # feasible point; the ideal realization is feasible for its own statistic
    problem = fidelity_problem(ROOT5, 1, mode="sum")
    res = solve(problem)
    y = ideal_moment_vector(problem)
    assert certify(problem, y).ok(1e-8)
    assert res.bound <= float(problem.objective @ y + problem.objective_offset) + 1e-7


def test_result_gap_and_duality_fields(witness_level_one):
    res = solve(witness_level_one)
    assert isinstance(res, SolveResult)
    assert res.gap < 1e-5
    assert res.seconds > 0.0
    assert res.converged
