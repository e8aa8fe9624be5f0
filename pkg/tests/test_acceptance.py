"""The eleven acceptance criteria, each at its stated tolerance."""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from chargedrop import experiments as ex
from chargedrop.equilibrium import boundary_concentration_check, el_residual, solve_equilibrium
from chargedrop.geometry import Ball, surface_quadrature
from chargedrop.kernel import KernelSpec, self_energy_quadrature
from chargedrop.measure import DiscreteMeasure, ball_interior_measure, rescale_measure, uniform_sphere_measure


def test_criterion_01_sphere_capacity():
    spec = KernelSpec(3, 1.0)
    quad = surface_quadrature(Ball.unit(3), 2000)
    t0 = time.perf_counter()
    sol = solve_equilibrium(spec, quad, tol=1e-6)
    elapsed = time.perf_counter() - t0
    w = sol.weights
    assert abs(sol.energy - 1.0) <= 0.01
    assert abs(sol.capacity - 1.0) <= 0.01
    assert (w.max() - w.min()) / w.mean() <= 0.02
    spread, _ = el_residual(spec, sol, quad)
    assert spread / sol.energy < 1e-3
    assert elapsed < 30.0


@pytest.mark.parametrize("lam", [0.5, 2.0, 3.7])
def test_criterion_02_scaling(lam):
    riesz_cases = [
        (KernelSpec(3, 1.0), uniform_sphere_measure(3, 1.0, 800)),
        (KernelSpec(3, 0.5), uniform_sphere_measure(3, 1.3, 600)),
        (KernelSpec(3, 1.5), ball_interior_measure(3, 1.5, 700)),
    ]
    for spec, mu in riesz_cases:
        base = self_energy_quadrature(spec, mu)
        scaled = self_energy_quadrature(spec, rescale_measure(mu, lam))
        assert scaled / (base * lam ** (-spec.alpha)) - 1.0 == pytest.approx(0.0, abs=1e-12)
    spec = KernelSpec.logarithmic(2)
    circ = uniform_sphere_measure(2, 0.8, 300)
    # a sub-probability measure checks the mass^2 factor
    mu = DiscreteMeasure(circ.nodes, 0.7 * circ.weights, circ.patch_areas)
    mass = mu.total_mass
    base = self_energy_quadrature(spec, mu)
    scaled = self_energy_quadrature(spec, rescale_measure(mu, lam))
    assert scaled - base + math.log(lam) * mass**2 == pytest.approx(0.0, abs=1e-10)


def test_criterion_03_boundary_concentration():
    frac, interior, _ = boundary_concentration_check(KernelSpec(3, 1.0), Ball.unit(3), 1000, 3000)
    assert frac >= 0.99
    frac15, interior15, _ = boundary_concentration_check(KernelSpec(3, 1.5), Ball.unit(3), 1000, 3000)
    assert 1.0 - frac15 > 0.10
    assert interior15 > 0.10


def test_criterion_04_density_bound():
    suite = ex.default_shape_suite(20)
    recs = ex.density_bound_suite(suite, delta=0.5, N=1000)
    assert len(recs) == 21
    assert recs[0].parameters["feasible"]
    assert sum(r.parameters["feasible"] for r in recs) >= 2
    assert all(r.verdicts["density_bound"] for r in recs)


def test_criterion_05_nonexistence():
    t0 = time.perf_counter()
    N_list = [1, 4, 16, 64, 256, 512, 1024, 2048, 4096]
    recs = ex.nonexistence_sweep(3, 1.0, 4.0 * math.pi / 3.0, 1.0, 0.75, N_list)
    elapsed = time.perf_counter() - t0
    final = recs[-1].energies
    assert final["energy"] < 4 * math.pi + 1
    assert abs(final["energy"] - 4 * math.pi) <= 0.05 * 4 * math.pi
    tail = [r.energies["energy"] for r in recs if r.parameters["N"] >= 256]
    assert all(b < a for a, b in zip(tail, tail[1:]))
    assert elapsed < 1.0


def test_criterion_06_splitting():
    t0 = time.perf_counter()
    d, alpha, delta = 3, 0.5, 0.1
    thr = ex.splitting_threshold(d, alpha, delta)
    above = [ex.splitting_construction(d, alpha, delta, f * thr) for f in (1.0001, 1.1, 2.0, 10.0)]
    zero = ex.splitting_construction(d, alpha, delta, 0.0)
    elapsed = time.perf_counter() - t0
    for rec in above:
        assert rec.verdicts["small_delta_condition"]
        assert rec.energies["energy"] < rec.energies["connected_bound"]
    assert zero.energies["energy"] > zero.energies["connected_bound"]
    assert elapsed < 1.0


def test_criterion_07_stability():
    t0 = time.perf_counter()
    Q_list = [0.0, 0.1, 1.0, 3.0, 10.0]
    recs = ex.stability_sweep(0.5, Q_list, [(2, 0), (3, 0), (4, 0)], [0.01, 0.02, 0.05], N=2000)
    elapsed = time.perf_counter() - t0
    at_q = [r for r in recs if r.parameters["Q"] == 0.1]
    assert len(at_q) >= 9
    assert all(r.energies["gap"] > 0 for r in at_q)
    shapes = {(r.parameters["l"], r.parameters["amplitude"]) for r in recs}
    for key in shapes:
        gaps = [r.energies["gap"] for r in recs if (r.parameters["l"], r.parameters["amplitude"]) == key]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        q_star = next(r.energies["q_star"] for r in recs if (r.parameters["l"], r.parameters["amplitude"]) == key)
        assert math.isfinite(q_star) and q_star > 0.1
        rec = next(r for r in recs if (r.parameters["l"], r.parameters["amplitude"]) == key)
        D, dI = rec.energies["deficit"], rec.energies["energy"] - rec.energies["ball_energy"]
        assert D + (1.01 * q_star) ** 2 * dI < 0 < D + (0.99 * q_star) ** 2 * dI
    assert elapsed < 600.0


def test_criterion_08_expansion_identity():
    t0 = time.perf_counter()
    err = ex.expansion_identity_check(100_000, seed=3)
    assert err < 1e-12
    assert time.perf_counter() - t0 < 1.0


def test_criterion_09_fuglede():
    train = ex.default_shape_suite(20, seed=1)
    test = ex.default_shape_suite(20, seed=0)
    c0, recs = ex.fuglede_fit(train, test)
    assert c0 > 0
    assert all(r.parameters["amplitude"] <= 0.05 for r in recs)
    assert all(r.verdicts["fuglede"] for r in recs)


def test_criterion_10_logarithmic():
    for r in (0.5, 1.0, 2.0):
        rec = ex.circle_log_energy(r)
        assert abs(rec.energies["energy"] + math.log(r)) <= 0.01 * max(abs(math.log(r)), 1.0)
    corner = ex.corner_refinement_study(2.0, (1000, 2000, 4000))
    assert corner[-1].parameters["N"] == 4000
    assert corner[-1].energies["corner_ratio"] > 1.5
    ratios = [c.energies["corner_ratio"] for c in corner]
    dens = [c.energies["max_density"] for c in corner]
    assert all(b > a for a, b in zip(ratios, ratios[1:]))
    assert all(b > a for a, b in zip(dens, dens[1:]))
    assert all(c.verdicts["monotone_toward_corner"] for c in corner)
    recs = ex.log_divergence_and_scaling(0.5, (4, 8, 16, 32, 64), (0.5, 2.0, 3.7))
    div = [r for r in recs if r.parameters["part"] == "divergence"]
    energies = [r.energies["energy"] for r in div]
    assert all(b < a for a, b in zip(energies, energies[1:]))
    assert abs(div[0].energies["fitted_slope"] + 0.5) <= 0.02 * 0.5
    assert all(r.verdicts["scaling_identity"] for r in recs if r.parameters["part"] == "scaling")


def _cli(tmp, *args):
    env = dict(os.environ)
    subprocess.run([sys.executable, "-m", "chargedrop.cli", "--out", str(tmp), *args], check=True, env=env)
    return (tmp / "results.csv").read_bytes()


def test_criterion_11_determinism(tmp_path):
    runs = [
        ("--command", "capacity", "--nodes", "600", "--init", "random", "--seed", "7"),
        ("--command", "stability", "--nodes", "400", "--charge", "0,0.1,1", "--amplitudes", "0.02", "--seed", "7"),
        ("--command", "nonexistence", "--seed", "7"),
    ]
    for i, args in enumerate(runs):
        a = _cli(tmp_path / f"a{i}", *args)
        b = _cli(tmp_path / f"b{i}", *args)
        assert a == b
        assert len(a) > 0
