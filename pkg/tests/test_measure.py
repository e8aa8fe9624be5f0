import math

import numpy as np
import pytest
from scipy import integrate

from chargedrop.errors import ContractError
from chargedrop.measure import (
    DiscreteMeasure,
    ball_equilibrium_density,
    ball_interior_measure,
    ball_riesz_energy,
    fibonacci_sphere,
    normalize,
    read_measure_csv,
    rescale_measure,
    sphere_riesz_energy,
    stratified_ball_nodes,
    uniform_sphere_measure,
    write_measure_csv,
)


def test_measure_validation():
    with pytest.raises(ContractError):
        DiscreteMeasure([[0.0, 0.0]], [1.0, 2.0])
    with pytest.raises(ContractError):
        DiscreteMeasure([[0.0, 0.0], [0.0, 0.0]], [0.5, 0.5])
    with pytest.raises(ContractError):
        DiscreteMeasure([[0.0, 0.0]], [1.0], patch_areas=[-1.0])
    with pytest.raises(ContractError):
        DiscreteMeasure([[0.0, 0.0]], [np.nan])


def test_total_mass_is_compensated():
    w = np.array([1e16, 1.0, -1e16, 1.0])
    mu = DiscreteMeasure(np.arange(8.0).reshape(4, 2), w)
    assert mu.total_mass == 2.0


def test_uniform_sphere_measure_examples():
    mu = uniform_sphere_measure(3, 1.0, 2000)
    assert mu.size == 2000
    assert mu.total_mass == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(np.linalg.norm(mu.nodes, axis=1), 1.0)
    assert mu.patch_areas.sum() == pytest.approx(4 * math.pi)
    circ = uniform_sphere_measure(2, 2.0, 100)
    assert circ.patch_areas.sum() == pytest.approx(4 * math.pi)
    with pytest.raises(ContractError):
        uniform_sphere_measure(3, 1.0, 5)
    with pytest.raises(ContractError):
        uniform_sphere_measure(3, 0.0, 50)


def test_fibonacci_nodes_are_quasi_uniform():
    x = fibonacci_sphere(3000)
    # every octant receives about one eighth of the nodes
    octant = (x > 0).astype(int) @ np.array([1, 2, 4])
    counts = np.bincount(octant, minlength=8)
    assert np.all(np.abs(counts - 375) < 15)
    assert np.abs(x.mean(axis=0)).max() < 1e-3


def test_stratified_cells_fill_the_ball():
    for d in (2, 3):
        pts, vols, shell, edges = stratified_ball_nodes(d, 2000)
        assert vols.sum() == pytest.approx(math.pi if d == 2 else 4 * math.pi / 3)
        r = np.linalg.norm(pts, axis=1)
        assert np.all(r < 1.0)
        assert np.all((r >= edges[shell]) & (r <= edges[shell + 1]))


@pytest.mark.parametrize("d,alpha", [(3, 1.2), (3, 1.5), (3, 2.5), (2, 0.4), (2, 1.0)])
def test_ball_density_integrates_to_one(d, alpha):
    area = 2 * math.pi if d == 2 else 4 * math.pi
    val = integrate.quad(lambda r: ball_equilibrium_density(d, alpha, r) * area * r ** (d - 1), 0, 1, limit=200)[0]
    assert val == pytest.approx(1.0, rel=1e-8)


def _ball_potential_3d(alpha, a):
    """Potential at radius ``a`` of the interior density, by radial quadrature of shell potentials."""

    def shell(r):
        # average of |x - y|^-alpha over the sphere of radius r, for |x| = a
        if a == 0.0:
            return r ** (-alpha)
        if alpha == 2.0:
            return math.log((r + a) / abs(r - a)) / (2 * a * r)
        return ((r + a) ** (2 - alpha) - abs(r - a) ** (2 - alpha)) / (2 * a * r * (2 - alpha))

    f = lambda r: ball_equilibrium_density(3, alpha, r) * 4 * math.pi * r * r * shell(r)  # noqa: E731
    pts = [a] if 0 < a < 1 else None
    return integrate.quad(f, 0, 1, points=pts, limit=400)[0]


@pytest.mark.parametrize("alpha", [1.2, 1.5, 2.0, 2.5])
def test_interior_density_has_constant_potential(alpha):
    # the equilibrium potential is constant on the ball and equals the energy
    vals = [_ball_potential_3d(alpha, a) for a in (0.0, 0.3, 0.6, 0.9)]
    assert np.ptp(vals) <= 1e-6 * vals[0]
    assert ball_riesz_energy(3, alpha) == pytest.approx(vals[0], rel=1e-6)


def test_sphere_energy_values():
    assert sphere_riesz_energy(3, 1.0) == pytest.approx(1.0)
    # alpha <= d - 2: the ball energy is the sphere energy
    assert ball_riesz_energy(3, 0.5) == sphere_riesz_energy(3, 0.5)
    # continuity at alpha = d - 2
    assert ball_riesz_energy(3, 1.0 + 1e-9) == pytest.approx(1.0, rel=1e-6)


def test_ball_interior_measure_mass_and_contract():
    mu = ball_interior_measure(3, 1.5, 3000)
    assert mu.total_mass == pytest.approx(1.0, abs=1e-14)
    assert np.all(mu.cell_dims == 3)
    with pytest.raises(ContractError):
        ball_interior_measure(3, 0.8, 1000)


def test_rescale_measure_moves_nodes_and_areas():
    mu = uniform_sphere_measure(3, 1.0, 100)
    nu = rescale_measure(mu, 2.0)
    assert np.allclose(nu.nodes, 2 * mu.nodes)
    assert np.allclose(nu.patch_areas, 4 * mu.patch_areas)
    assert np.array_equal(nu.weights, mu.weights)
    vol = ball_interior_measure(3, 1.5, 500)
    assert np.allclose(rescale_measure(vol, 0.5).patch_areas, vol.patch_areas / 8)
    with pytest.raises(ContractError):
        rescale_measure(mu, -1.0)


def test_normalize():
    mu = DiscreteMeasure([[0.0], [1.0], [2.0]], [1.0, 2.0, 1.0])
    assert normalize(mu).total_mass == pytest.approx(1.0)
    assert normalize(mu).weights[1] == pytest.approx(0.5)
    with pytest.raises(ContractError):
        normalize(DiscreteMeasure([[0.0], [1.0]], [0.0, 0.0]))
    with pytest.raises(ContractError):
        normalize(DiscreteMeasure([[0.0], [1.0]], [1.0, -0.5]))


def test_csv_round_trip(tmp_path):
    mu = uniform_sphere_measure(3, 1.5, 64)
    path = tmp_path / "mu.csv"
    write_measure_csv(mu, path, extra={"potential": np.arange(64.0)})
    back = read_measure_csv(path)
    assert np.array_equal(back.nodes, mu.nodes)
    assert np.array_equal(back.weights, mu.weights)
    assert np.array_equal(back.patch_areas, mu.patch_areas)
