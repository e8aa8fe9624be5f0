"""Discrete measures and the canonical equilibrium measures of balls."""

from dataclasses import dataclass, field, replace
import csv
import math

import numpy as np
from scipy import special

from . import _backend
from .errors import ContractError
from .kernel import unit_ball_volume

__all__ = [
    "DiscreteMeasure",
    "fibonacci_sphere",
    "circle_points",
    "sphere_directions",
    "stratified_ball_nodes",
    "uniform_sphere_measure",
    "ball_interior_measure",
    "ball_equilibrium_density",
    "sphere_riesz_energy",
    "ball_riesz_energy",
    "rescale_measure",
    "normalize",
    "write_measure_csv",
    "read_measure_csv",
]

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted point masses, optionally tagged with cell measures.

    ``patch_areas`` holds the measure of each node's cell and ``cell_dims``
    its dimension: ``d-1`` for surface patches (the default) and ``d`` for
    volume cells. ``groups`` optionally labels connected pieces for the
    local diagonal correction.
    """

    nodes: np.ndarray
    weights: np.ndarray
    patch_areas: np.ndarray | None = None
    cell_dims: np.ndarray | None = None
    groups: np.ndarray | None = None
    check_distinct: bool = field(default=True, repr=False)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float, ndmin=2)
        weights = np.array(self.weights, dtype=float).ravel()
        if nodes.shape[0] < 1:
            raise ContractError("a measure needs at least one node")
        if weights.shape[0] != nodes.shape[0]:
            raise ContractError("weights and nodes differ in length")
        if not np.all(np.isfinite(weights)):
            raise ContractError("weights must be finite")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if self.patch_areas is not None:
            areas = np.array(self.patch_areas, dtype=float).ravel()
            if areas.shape != weights.shape or np.any(areas <= 0):
                raise ContractError("patch areas must be positive, one per node")
            object.__setattr__(self, "patch_areas", areas)
            dims = self.cell_dims
            if dims is None:
                dims = np.full(weights.shape, nodes.shape[1] - 1, dtype=int)
            dims = np.array(np.broadcast_to(dims, weights.shape), dtype=int)
            object.__setattr__(self, "cell_dims", dims)
        elif self.cell_dims is not None:
            raise ContractError("cell_dims given without patch areas")
        if self.groups is not None:
            groups = np.array(np.broadcast_to(self.groups, weights.shape), dtype=int)
            object.__setattr__(self, "groups", groups)
        if self.check_distinct and len(np.unique(nodes, axis=0)) != len(nodes):
            raise ContractError("measure nodes must be pairwise distinct")

    @property
    def dimension(self):
        return self.nodes.shape[1]

    @property
    def size(self):
        return self.nodes.shape[0]

    @property
    def total_mass(self):
        return _backend.compensated_sum(self.weights)

    @property
    def densities(self):
        """Weight per unit cell measure."""
        if self.patch_areas is None:
            raise ContractError("densities need patch areas")
        return self.weights / self.patch_areas

    def with_weights(self, weights):
        return replace(self, weights=np.asarray(weights, float), check_distinct=False)

    def scaled(self, factor):
        """Multiply every weight by ``factor``."""
        return self.with_weights(self.weights * factor)


# ------------------------------------------------------------- node layouts


def fibonacci_sphere(n, rotation=0.0):
    """``n`` quasi-uniform unit vectors on S^2 (Fibonacci lattice)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    theta = GOLDEN_ANGLE * np.arange(n) + rotation
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.column_stack((r * np.cos(theta), r * np.sin(theta), z))


def circle_points(n, rotation=0.0):
    """``n`` equispaced unit vectors on S^1, starting at angle ``rotation``."""
    t = rotation + 2.0 * math.pi * np.arange(n) / n
    return np.column_stack((np.cos(t), np.sin(t)))


def sphere_directions(d, n, rotation=0.0):
    if d == 2:
        return circle_points(n, rotation)
    if d == 3:
        return fibonacci_sphere(n, rotation)
    raise ContractError(f"sphere node layouts exist for d in (2, 3), got {d}")


def stratified_ball_nodes(d, n, n_shells=None):
    """Radially stratified nodes in the unit ball with near-equal cell volumes.

    Shells have equal radial step ``h``; each shell receives a node count
    proportional to its volume, placed on a rotated sphere layout at the
    mid-radius (the outermost shell therefore sits at ``1 - h/2``).

    Returns ``(nodes, cell_volumes, shell_index, edges)``.
    """
    if d not in (2, 3):
        raise ContractError(f"stratified ball nodes exist for d in (2, 3), got {d}")
    if n < 1:
        raise ContractError("need at least one interior node")
    if n_shells is None:
        # roughly cubical cells: radial step close to the cell edge length
        h = (unit_ball_volume(d) / n) ** (1.0 / d)
        n_shells = max(1, int(round(1.0 / h)))
    edges = np.linspace(0.0, 1.0, n_shells + 1)
    shell_vol = edges[1:] ** d - edges[:-1] ** d
    counts = np.maximum(1, np.round(n * shell_vol).astype(int))
    # inner shells are tiny; keep their layouts sensible
    counts[0] = 1
    if d == 3:
        counts[1:] = np.maximum(counts[1:], 6)
    else:
        counts[1:] = np.maximum(counts[1:], 3)
    pts, vols, shell = [], [], []
    ball_vol = unit_ball_volume(d)
    for j in range(n_shells):
        vol_j = ball_vol * shell_vol[j]
        if j == 0:
            pts.append(np.zeros((1, d)))
            vols.append(np.array([vol_j]))
            shell.append(np.array([0]))
            continue
        r = 0.5 * (edges[j] + edges[j + 1])
        u = sphere_directions(d, counts[j], rotation=j * GOLDEN_ANGLE)
        pts.append(r * u)
        vols.append(np.full(counts[j], vol_j / counts[j]))
        shell.append(np.full(counts[j], j))
    return np.vstack(pts), np.concatenate(vols), np.concatenate(shell), edges


# ------------------------------------------------------ canonical measures


def uniform_sphere_measure(d, radius, n):
    """Uniform probability measure on the sphere of given radius."""
    if d not in (2, 3):
        raise ContractError(f"uniform sphere measure supports d in (2, 3), got {d}")
    if radius <= 0:
        raise ContractError("radius must be positive")
    if n < 12:
        raise ContractError("need at least 12 nodes")
    area = d * unit_ball_volume(d) * radius ** (d - 1)
    return DiscreteMeasure(
        nodes=radius * sphere_directions(d, n),
        weights=np.full(n, 1.0 / n),
        patch_areas=np.full(n, area / n),
    )


def _density_exponent(d, alpha):
    # (1 - |x|^2)^(-(d - alpha)/2)
    return -(d - alpha) / 2.0


def ball_equilibrium_density(d, alpha, r):
    """Normalized interior equilibrium density of the unit ball at radius ``r``.

    Valid for ``d - 2 < alpha < d``; integrates to one over the ball.
    """
    if not d - 2 < alpha < d:
        raise ContractError("the interior density exists only for d-2 < alpha < d")
    b = 1.0 + _density_exponent(d, alpha)
    norm = 0.5 * d * unit_ball_volume(d) * special.beta(d / 2.0, b)
    r = np.asarray(r, dtype=float)
    return (1.0 - r * r) ** _density_exponent(d, alpha) / norm


def ball_interior_measure(d, alpha, n, n_shells=None):
    """Stratified quadrature of the unit ball's interior equilibrium measure."""
    if not d - 2 < alpha < d:
        raise ContractError(
            f"interior equilibrium density needs d-2 < alpha < d, got alpha={alpha}, d={d}"
        )
    nodes, vols, shell, edges = stratified_ball_nodes(d, n, n_shells)
    b = 1.0 + _density_exponent(d, alpha)
    # mass of each shell: regularized incomplete beta in t = r^2
    cdf = special.betainc(d / 2.0, b, edges**2)
    shell_mass = np.diff(cdf)
    counts = np.bincount(shell, minlength=len(shell_mass))
    w = shell_mass[shell] / counts[shell]
    w = w / _backend.compensated_sum(w)
    return DiscreteMeasure(nodes=nodes, weights=w, patch_areas=vols, cell_dims=d)


def sphere_riesz_energy(d, alpha):
    """Energy of the uniform probability measure on the unit sphere S^{d-1}."""
    if not 0 < alpha < d - 1:
        raise ContractError("sphere energy is finite only for 0 < alpha < d-1")
    return (
        2.0 ** (d - 2 - alpha)
        * math.gamma(d / 2.0)
        * math.gamma((d - 1 - alpha) / 2.0)
        / (math.sqrt(math.pi) * math.gamma(d - 1 - alpha / 2.0))
    )


def ball_riesz_energy(d, alpha):
    """Riesz energy I_alpha of the closed unit ball (closed form)."""
    if not 0 < alpha < d:
        raise ContractError("alpha must lie in (0, d)")
    if alpha <= d - 2:
        return sphere_riesz_energy(d, alpha)
    b = 1.0 + _density_exponent(d, alpha)
    return special.beta((d - alpha) / 2.0, b) / special.beta(d / 2.0, b)


# ---------------------------------------------------------------- utilities


def rescale_measure(mu, lam):
    """Push the measure forward under ``x -> lam * x``."""
    if lam <= 0:
        raise ContractError("dilation factor must be positive")
    areas = None
    if mu.patch_areas is not None:
        areas = mu.patch_areas * lam ** mu.cell_dims.astype(float)
    return DiscreteMeasure(
        nodes=mu.nodes * lam,
        weights=mu.weights.copy(),
        patch_areas=areas,
        cell_dims=mu.cell_dims,
        groups=mu.groups,
        check_distinct=False,
    )


def normalize(mu):
    """Divide weights by the total mass."""
    if np.any(mu.weights < 0):
        raise ContractError("normalize needs nonnegative weights")
    mass = mu.total_mass
    if not mass > 0:
        raise ContractError("cannot normalize a measure of zero total mass")
    return mu.with_weights(mu.weights / mass)


def write_measure_csv(mu, path, extra=None):
    """One row per node: coordinates, weight, patch area, then ``extra`` columns."""
    d = mu.dimension
    header = [f"x{i}" for i in range(d)] + ["weight", "patch_area"]
    extra = extra or {}
    header += list(extra)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for i in range(mu.size):
            row = [repr(float(c)) for c in mu.nodes[i]]
            row.append(repr(float(mu.weights[i])))
            row.append(repr(float(mu.patch_areas[i])) if mu.patch_areas is not None else "")
            row += [repr(float(v[i])) for v in extra.values()]
            wr.writerow(row)


def read_measure_csv(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    d = sum(1 for h in header if h.startswith("x") and h[1:].isdigit())
    data = np.array([[float(v) if v else np.nan for v in r[: d + 2]] for r in body])
    areas = data[:, d + 1]
    return DiscreteMeasure(
        nodes=data[:, :d],
        weights=data[:, d],
        patch_areas=None if np.isnan(areas).any() else areas,
    )
