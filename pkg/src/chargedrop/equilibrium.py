"""Equilibrium measures on node sets: minimize ``w^T K w`` over the simplex.

The solver is an accelerated projected gradient method (FISTA) with exact
Euclidean projection onto the probability simplex, function-value restarts
and monotone acceptance. It stops on the Euler-Lagrange (KKT) residual: the
potential ``K w`` must be constant on the charged nodes and not smaller
anywhere else.
"""

from dataclasses import dataclass
import json
import logging
import math

import numpy as np

from . import _backend
from .errors import ContractError, ConvergenceError
from .geometry import delta_ball_check
from .kernel import KernelSpec, diagonal_entries
from .measure import DiscreteMeasure, write_measure_csv

__all__ = [
    "EquilibriumSolution",
    "assemble_kernel_matrix",
    "project_simplex",
    "solve_equilibrium",
    "capacity",
    "el_residual",
    "active_set",
    "boundary_mass_fraction",
    "boundary_concentration_check",
    "bounded_density_check",
    "write_solution",
    "WEIGHT_FLOOR",
]

log = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-12


def _node_data(quad):
    """(points, cell measures, cell dims, groups) of a quadrature or measure."""
    if isinstance(quad, DiscreteMeasure):
        if quad.patch_areas is None:
            raise ContractError("kernel assembly needs patch areas on every node")
        return quad.nodes, quad.patch_areas, quad.cell_dims, quad.groups
    try:
        return (
            np.asarray(quad.points, float),
            np.asarray(quad.areas, float),
            np.asarray(quad.cell_dims),
            getattr(quad, "groups", None),
        )
    except AttributeError as exc:
        raise ContractError(f"cannot assemble a kernel over {type(quad).__name__}") from exc


def assemble_kernel_matrix(spec, quad, model="lattice-local"):
    """Dense symmetric kernel matrix with the cell self-interaction on the diagonal."""
    pts, areas, dims, groups = _node_data(quad)
    if pts.shape[1] != spec.dimension:
        raise ContractError(f"nodes live in R^{pts.shape[1]}, kernel expects d={spec.dimension}")
    K, dmin = _backend.pair_matrix(pts, spec._exponent, spec.is_log)
    if dmin == 0.0:
        raise ContractError("node set contains duplicate nodes")
    K[np.diag_indices_from(K)] = diagonal_entries(spec, areas, dims, model, pts, groups)
    return K


def project_simplex(v):
    """Euclidean projection onto ``{w >= 0, sum w = 1}`` (sorting algorithm)."""
    v = np.asarray(v, float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def active_set(w):
    return w > WEIGHT_FLOOR * np.max(w)


def _kkt(w, p, energy, is_log):
    """Absolute spread, violation and the normalized residual."""
    act = active_set(w)
    pa = p[act]
    spread = float(pa.max() - pa.min())
    if np.all(act):
        viol = 0.0
    else:
        viol = max(0.0, float(np.max(energy - p[~act])))
    scale = max(abs(energy), 1.0) if is_log else abs(energy)
    return spread, viol, max(spread, viol) / scale


def _lipschitz(K, iters=60, seed=0):
    """2 * largest eigenvalue of P K P on the zero-sum subspace, padded by 5%."""
    n = K.shape[0]
    if n == 1:
        return 1.0
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x -= x.mean()
    lam = 0.0
    for _ in range(iters):
        y = K @ x
        y -= y.mean()
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            break
        lam = nrm / np.linalg.norm(x)
        x = y / nrm
    return 2.0 * lam * 1.05 + 1e-300


@dataclass(frozen=True, eq=False)
class EquilibriumSolution:
    """Optimal weights with energy, capacity and Euler-Lagrange diagnostics."""

    measure: DiscreteMeasure
    energy: float
    capacity: float
    el_spread: float
    el_violation: float
    iterations: int
    potential: np.ndarray
    residual: float
    converged: bool
    spec: KernelSpec

    @property
    def weights(self):
        return self.measure.weights

    @property
    def densities(self):
        return self.measure.densities

    def summary(self):
        return {
            "kernel": str(self.spec),
            "nodes": int(self.measure.size),
            "energy": self.energy,
            "capacity": self.capacity,
            "el_spread": self.el_spread,
            "el_violation": self.el_violation,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _initial_weights(n, init, seed):
    if init is None or (isinstance(init, str) and init == "uniform"):
        return np.full(n, 1.0 / n)
    if isinstance(init, str) and init == "random":
        rng = np.random.default_rng(seed)
        return project_simplex(rng.dirichlet(np.ones(n)))
    w0 = np.asarray(init, float)
    if w0.shape != (n,):
        raise ContractError("initial weights have the wrong length")
    return project_simplex(w0)


def solve_equilibrium(
    spec,
    quad,
    tol=1e-6,
    max_iter=50_000,
    init=None,
    seed=0,
    model="lattice-local",
    K=None,
    raise_on_failure=True,
):
    """Minimize the discrete energy over probability weights on ``quad``.

    Parameters
    ----------
    spec : KernelSpec
    quad : SurfaceQuadrature, MixedQuadrature or DiscreteMeasure with patch areas
    tol : float
        Target for ``max(spread, violation) / |energy|`` (``max(|energy|, 1)``
        for the logarithmic kernel).
    init : None, "uniform", "random" or array
        Starting weights; "random" draws from a flat Dirichlet with ``seed``.
    K : ndarray, optional
        Pre-assembled kernel matrix for ``quad``.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` is reached above ``tol`` and ``raise_on_failure``.
    """
    if not tol > 0:
        raise ContractError("tol must be positive")
    pts, areas, dims, groups = _node_data(quad)
    if K is None:
        K = assemble_kernel_matrix(spec, quad, model)
    n = K.shape[0]
    w = _initial_weights(n, init, seed)
    Kw = K @ w
    f = float(w @ Kw)
    L = _lipschitz(K)
    y, Ky, t = w.copy(), Kw.copy(), 1.0
    restarted = True
    it = 0
    spread, viol, res = _kkt(w, Kw, f, spec.is_log)
    while res > tol and it < max_iter:
        it += 1
        w_new = project_simplex(y - (2.0 / L) * Ky)
        Kw_new = K @ w_new
        f_new = float(w_new @ Kw_new)
        # increases below the rounding level of f are noise, not divergence
        if f_new > f + 1e-13 * max(abs(f), 1e-300):
            if restarted:
                # a plain gradient step failed to descend: curvature underestimated
                L *= 2.0
            y, Ky, t, restarted = w.copy(), Kw.copy(), 1.0, True
            continue
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_new
        y = w_new + beta * (w_new - w)
        Ky = Kw_new + beta * (Kw_new - Kw)
        w, Kw, f, t, restarted = w_new, Kw_new, f_new, t_new, False
        spread, viol, res = _kkt(w, Kw, f, spec.is_log)
    # exact final values, accumulated with compensation
    energy = _backend.quad_form(K, w)
    pot = K @ w
    spread, viol, res = _kkt(w, pot, energy, spec.is_log)
    mu = DiscreteMeasure(pts, w, areas, dims, groups, check_distinct=False)
    cap = float("nan") if spec.is_log else 1.0 / energy
    sol = EquilibriumSolution(mu, energy, cap, spread, viol, it, pot, res, res <= tol, spec)
    if res > tol:
        msg = f"equilibrium solver stopped after {it} iterations at residual {res:.3e} > {tol:.1e}"
        if raise_on_failure:
            raise ConvergenceError(msg, residual=res, solution=sol)
        log.warning(msg)
    return sol


def capacity(sol):
    """Riesz capacity ``1 / I``."""
    if sol.spec.is_log:
        raise ContractError("capacity is defined here for the Riesz family only")
    if not sol.energy > 0:
        raise ContractError("capacity needs a positive energy")
    return 1.0 / sol.energy


def el_residual(spec, sol, quad, mask=None, model="lattice-local"):
    """Spread and violation of the Euler-Lagrange conditions.

    ``sol`` may be an :class:`EquilibriumSolution` or any weight-carrying
    measure on the nodes of ``quad``. ``mask`` restricts both statistics to
    a subset of nodes (for example, away from corners). The spread is taken
    over charged nodes (``w > 1e-12 max w``); the violation is the largest
    amount by which an uncharged node's potential falls below the energy.
    """
    w = sol.measure.weights if isinstance(sol, EquilibriumSolution) else np.asarray(sol.weights, float)
    K = assemble_kernel_matrix(spec, quad, model)
    p = K @ w
    energy = float(w @ p)
    act = active_set(w)
    sel = np.ones(len(w), bool) if mask is None else np.asarray(mask, bool)
    pa = p[act & sel]
    spread = float(pa.max() - pa.min()) if pa.size else 0.0
    inact = ~act & sel
    viol = max(0.0, float(np.max(energy - p[inact]))) if inact.any() else 0.0
    return spread, viol


def boundary_mass_fraction(sol, quad, shape, eps=None):
    """Equilibrium mass within ``eps`` (default two mesh widths) of the boundary."""
    from .geometry import Ball, BallUnion

    eps = 2.0 * quad.mesh_width if eps is None else eps
    w = sol.measure.weights
    on_b = np.asarray(getattr(quad, "on_boundary", np.ones(len(w), bool)))
    if isinstance(shape, (Ball, BallUnion)):
        dist = np.full(len(w), np.inf)
        for b in shape.components:
            r = np.linalg.norm(quad.points - np.asarray(b.center), axis=1)
            dist = np.minimum(dist, np.abs(r - b.radius))
    else:
        # distance to the nearest boundary node; boundary nodes are at distance 0
        from scipy.spatial import cKDTree

        bpts = quad.points[on_b]
        dist = cKDTree(bpts).query(quad.points)[0]
    near = on_b | (dist <= eps)
    return _backend.compensated_sum(w[near]) / _backend.compensated_sum(w)


def boundary_concentration_check(spec, shape, n_surface, n_interior, eps=None, tol=1e-6, model="lattice-local"):
    """Solve on a boundary + interior node set and report the near-boundary mass.

    Returns ``(fraction, interior_fraction, solution)``: the mass within
    ``eps`` of the boundary and the mass carried by interior nodes.
    """
    from .geometry import mixed_quadrature, surface_quadrature

    if n_interior > 0:
        quad = mixed_quadrature(shape, n_surface, n_interior)
    else:
        quad = surface_quadrature(shape, n_surface)
    sol = solve_equilibrium(spec, quad, tol=tol, model=model)
    frac = boundary_mass_fraction(sol, quad, shape, eps)
    on_b = np.asarray(getattr(quad, "on_boundary", np.ones(quad.size, bool)))
    interior = _backend.compensated_sum(sol.measure.weights[~on_b])
    return frac, interior, sol


def bounded_density_check(sol, shape, delta, tol=0.05, checked=False):
    """Compare ``max(w_i / A_i)`` with ``I(E) (d - 2) / delta``.

    Returns ``(max_density, bound, holds)`` where ``holds`` allows a relative
    slack ``tol``. ``checked=True`` skips the delta-ball test when the caller
    has already run it.
    """
    spec = sol.spec
    d = spec.dimension
    if spec.is_log or spec.alpha != d - 2:
        raise ContractError("the density bound applies to the Coulomb case alpha = d - 2")
    if not checked and not delta_ball_check(shape, delta):
        raise ContractError(f"shape does not satisfy the delta-ball condition at delta={delta}")
    on_b = sol.measure.cell_dims == d - 1
    dens = sol.measure.weights[on_b] / sol.measure.patch_areas[on_b]
    max_density = float(dens.max())
    bound = sol.energy * (d - 2) / delta
    return max_density, bound, bool(max_density <= bound * (1.0 + tol))


def write_solution(sol, csv_path, json_path=None):
    """Node table (coordinates, weight, patch area, potential) plus a JSON summary."""
    write_measure_csv(sol.measure, csv_path, extra={"potential": sol.potential})
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(sol.summary(), fh, indent=2, sort_keys=True)
