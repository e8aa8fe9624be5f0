import json
import math

import numpy as np
import pytest
from scipy.special import gamma

from chargedrop.equilibrium import (
    assemble_kernel_matrix,
    boundary_concentration_check,
    bounded_density_check,
    capacity,
    el_residual,
    project_simplex,
    solve_equilibrium,
    write_solution,
)
from chargedrop.errors import ContractError, ConvergenceError
from chargedrop.geometry import Ball, Cube, NearlySpherical, surface_quadrature
from chargedrop.kernel import KernelSpec
from chargedrop.measure import DiscreteMeasure, read_measure_csv


@pytest.fixture(scope="module")
def sphere_sol():
    quad = surface_quadrature(Ball.unit(3), 1500)
    return solve_equilibrium(KernelSpec(3, 1.0), quad, tol=1e-8), quad


# ---------------------------------------------------------- simplex projection


def test_project_simplex_examples():
    assert np.allclose(project_simplex([0.2, 0.3, 0.5]), [0.2, 0.3, 0.5])
    assert np.allclose(project_simplex([2.0, 0.0]), [1.0, 0.0])
    assert np.allclose(project_simplex([1.0, 1.0, 1.0, 1.0]), 0.25)


def test_project_simplex_is_the_nearest_point(rng):
    for _ in range(20):
        v = rng.standard_normal(12)
        w = project_simplex(v)
        assert w.min() >= 0 and w.sum() == pytest.approx(1.0)
        z = rng.dirichlet(np.ones(12), size=500)
        assert np.all(np.linalg.norm(z - v, axis=1) >= np.linalg.norm(w - v) - 1e-12)


# ---------------------------------------------------------------- solver


def test_two_node_problem_matches_closed_form():
    # min a w^2 + 2 c w (1-w) + b (1-w)^2  ->  w = (b - c) / (a + b - 2c)
    a, b, c = 3.0, 2.0, 0.5
    mu = DiscreteMeasure([[0.0, 0.0], [1.0, 0.0]], [0.5, 0.5], [1.0, 1.0])
    K = np.array([[a, c], [c, b]])
    sol = solve_equilibrium(KernelSpec(2, 1.0), mu, tol=1e-12, K=K)
    w = (b - c) / (a + b - 2 * c)
    assert sol.weights[0] == pytest.approx(w, abs=1e-10)
    assert sol.energy == pytest.approx(a * w * w + 2 * c * w * (1 - w) + b * (1 - w) ** 2, rel=1e-12)


def test_two_node_problem_with_inactive_node():
    mu = DiscreteMeasure([[0.0, 0.0], [1.0, 0.0]], [0.5, 0.5], [1.0, 1.0])
    K = np.array([[1.0, 2.0], [2.0, 5.0]])
    sol = solve_equilibrium(KernelSpec(2, 1.0), mu, tol=1e-12, K=K)
    assert np.allclose(sol.weights, [1.0, 0.0])
    assert sol.el_violation == 0.0


def test_sphere_capacity_and_uniform_weights(sphere_sol):
    sol, _ = sphere_sol
    assert sol.converged and sol.residual <= 1e-8
    assert sol.capacity == pytest.approx(1.0, rel=5e-3)
    assert capacity(sol) == sol.capacity
    w = sol.weights
    assert (w.max() - w.min()) / w.mean() < 0.05


def test_capacity_scales_with_radius():
    spec = KernelSpec(3, 1.0)
    c1 = solve_equilibrium(spec, surface_quadrature(Ball.unit(3), 800)).capacity
    c2 = solve_equilibrium(spec, surface_quadrature(Ball.unit(3, 2.0), 800)).capacity
    assert c2 / c1 == pytest.approx(2.0, rel=1e-6)


def test_circle_riesz_energy_matches_closed_form():
    # uniform measure on the unit circle, exponent alpha
    alpha = 0.5
    exact = gamma((1 - alpha) / 2) / (math.sqrt(math.pi) * gamma(1 - alpha / 2)) * 2**-alpha
    sol = solve_equilibrium(KernelSpec(2, alpha), surface_quadrature(Ball.unit(2), 400), tol=1e-10)
    assert sol.energy == pytest.approx(exact, rel=1e-4)


def test_log_circle_energy():
    sol = solve_equilibrium(KernelSpec.logarithmic(2), surface_quadrature(Ball.unit(2, 0.3), 400), tol=1e-10)
    assert sol.energy == pytest.approx(-math.log(0.3), abs=1e-5)
    assert math.isnan(sol.capacity)
    with pytest.raises(ContractError):
        capacity(sol)


def test_random_start_reaches_the_same_minimum():
    spec = KernelSpec(3, 1.0)
    quad = surface_quadrature(NearlySpherical(1.0, {(2, 0): 0.1, (3, 1): 0.05}), 600)
    a = solve_equilibrium(spec, quad, tol=1e-9)
    b = solve_equilibrium(spec, quad, tol=1e-9, init="random", seed=3)
    assert b.energy == pytest.approx(a.energy, rel=1e-8)
    assert np.allclose(a.weights, b.weights, atol=1e-5 * a.weights.max())


def test_convergence_error_carries_residual():
    quad = surface_quadrature(Cube(2.0, 3), 600)
    with pytest.raises(ConvergenceError) as exc:
        solve_equilibrium(KernelSpec(3, 1.0), quad, tol=1e-14, max_iter=3, init="random")
    assert exc.value.residual > 1e-14
    assert exc.value.solution is not None
    assert exc.value.solution.residual == exc.value.residual
    sol = solve_equilibrium(KernelSpec(3, 1.0), quad, tol=1e-14, max_iter=3, init="random", raise_on_failure=False)
    assert not sol.converged


def test_solver_contracts():
    quad = surface_quadrature(Ball.unit(3), 100)
    with pytest.raises(ContractError):
        solve_equilibrium(KernelSpec(3, 1.0), quad, tol=0.0)
    with pytest.raises(ContractError):
        solve_equilibrium(KernelSpec(2, 1.0), quad)
    with pytest.raises(ContractError):
        solve_equilibrium(KernelSpec(3, 1.0), quad, init=np.ones(5))


def test_assembled_matrix_is_symmetric_positive_definite():
    K = assemble_kernel_matrix(KernelSpec(3, 0.5), surface_quadrature(Cube(2.0, 3), 400))
    assert np.array_equal(K, K.T)
    assert np.linalg.eigvalsh(K).min() > 0


# ---------------------------------------------------------- diagnostics


def test_el_residual_agrees_with_solution(sphere_sol):
    sol, quad = sphere_sol
    spread, viol = el_residual(sol.spec, sol, quad)
    assert spread == pytest.approx(sol.el_spread, rel=1e-6, abs=1e-15)
    assert viol == sol.el_violation
    # uniform weights are not optimal on a non-spherical shape
    q2 = surface_quadrature(Cube(2.0, 3), 600)
    u = DiscreteMeasure(q2.points, np.full(q2.size, 1 / q2.size), q2.areas)
    assert el_residual(KernelSpec(3, 1.0), u, q2)[0] > 0.1


def test_coulomb_mass_lives_on_the_boundary():
    frac, interior, sol = boundary_concentration_check(KernelSpec(3, 1.0), Ball.unit(3), 600, 1200, tol=1e-8)
    assert frac == pytest.approx(1.0, abs=1e-3)
    # what little interior mass there is sits in the outermost shell
    assert interior < 0.01


def test_strong_kernel_charges_the_interior():
    frac, interior, _ = boundary_concentration_check(KernelSpec(3, 1.5), Ball.unit(3), 400, 1200, tol=1e-6)
    assert interior > 0.3


def test_bounded_density_check(sphere_sol):
    sol, _ = sphere_sol
    dmax, bound, holds = bounded_density_check(sol, Ball.unit(3), 1.0)
    assert bound == pytest.approx(sol.energy)
    assert dmax == pytest.approx(1 / (4 * math.pi), rel=0.05)
    assert holds
    with pytest.raises(ContractError):
        bounded_density_check(sol, Ball.unit(3), 1.5)
    s2 = solve_equilibrium(KernelSpec(3, 0.5), surface_quadrature(Ball.unit(3), 200))
    with pytest.raises(ContractError):
        bounded_density_check(s2, Ball.unit(3), 0.5)


def test_write_solution_round_trip(tmp_path, sphere_sol):
    sol, _ = sphere_sol
    write_solution(sol, tmp_path / "sol.csv", tmp_path / "sol.json")
    back = read_measure_csv(tmp_path / "sol.csv")
    assert np.array_equal(back.weights, sol.weights)
    summary = json.loads((tmp_path / "sol.json").read_text())
    assert summary["energy"] == sol.energy
    assert summary["nodes"] == 1500
