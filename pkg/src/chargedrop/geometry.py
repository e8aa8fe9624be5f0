"""Parametric shapes, boundary and volume quadrature, and shape diagnostics.

Nearly spherical shapes are radial graphs ``R(u) = r0 * (1 + phi(u))`` over
the unit sphere, with ``phi`` a finite sum of real, fully normalized spherical
harmonics (d = 3) or Fourier modes (d = 2). Harmonic keys are ``(l, m)``:
``|m| <= l`` in 3D; in 2D ``(l, l)`` is ``cos(l t)/sqrt(pi)`` and ``(l, -l)``
is ``sin(l t)/sqrt(pi)``, with ``(0, 0)`` the constant ``1/sqrt(2 pi)``.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy import special
from scipy.spatial.distance import pdist

from .errors import ConfigError, ContractError
from .kernel import unit_ball_volume
from .measure import GOLDEN_ANGLE, sphere_directions, stratified_ball_nodes

__all__ = [
    "Ball",
    "BallUnion",
    "NearlySpherical",
    "Cube",
    "SurfaceQuadrature",
    "MixedQuadrature",
    "real_harmonic",
    "surface_quadrature",
    "interior_quadrature",
    "mixed_quadrature",
    "perimeter",
    "volume",
    "barycenter",
    "enforce_volume",
    "recenter_barycenter",
    "isoperimetric_deficit",
    "principal_curvatures",
    "delta_ball_check",
    "diameter",
    "diameter_bound",
    "spectral_seminorm",
    "sobolev_seminorms",
    "shape_from_mapping",
    "load_shape",
]


def sphere_area(d):
    return d * unit_ball_volume(d)


# ------------------------------------------------------------------ shapes


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.ravel(self.center))
        if len(c) < 2:
            raise ContractError("ball center must have at least two coordinates")
        if not self.radius > 0:
            raise ContractError("ball radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def unit(cls, d=3, radius=1.0):
        return cls((0.0,) * d, radius)

    @property
    def dimension(self):
        return len(self.center)

    @property
    def components(self):
        return (self,)


@dataclass(frozen=True)
class BallUnion:
    """Finitely many pairwise disjoint balls; touching balls are rejected."""

    balls: tuple

    def __post_init__(self):
        balls = tuple(self.balls)
        if not balls:
            raise ContractError("a ball union needs at least one ball")
        d = balls[0].dimension
        if any(b.dimension != d for b in balls):
            raise ContractError("balls of a union must share the dimension")
        for i in range(len(balls)):
            for j in range(i + 1, len(balls)):
                gap = _ball_gap(balls[i], balls[j])
                if gap <= 0.0:
                    raise ContractError(f"balls {i} and {j} touch or overlap (gap {gap:g})")
        object.__setattr__(self, "balls", balls)

    @property
    def dimension(self):
        return self.balls[0].dimension

    @property
    def components(self):
        return self.balls


def _ball_gap(a, b):
    dist = math.dist(a.center, b.center)
    return dist - a.radius - b.radius


@dataclass(frozen=True)
class NearlySpherical:
    """Radial graph ``center + r0 * (1 + phi(u)) * u`` with ``sup|phi| < 1``."""

    base_radius: float
    coeffs: dict = field(default_factory=dict)
    dimension: int = 3
    center: tuple | None = None

    def __post_init__(self):
        d = int(self.dimension)
        if d not in (2, 3):
            raise ContractError(f"nearly spherical shapes support d in (2, 3), got {d}")
        if not self.base_radius > 0:
            raise ContractError("base radius must be positive")
        clean = {}
        for key, val in dict(self.coeffs).items():
            l, m = (int(key[0]), int(key[1]))
            _check_mode(d, l, m)
            if float(val) != 0.0:
                clean[(l, m)] = float(val)
        c = (0.0,) * d if self.center is None else tuple(float(v) for v in self.center)
        if len(c) != d:
            raise ContractError("center dimension mismatch")
        object.__setattr__(self, "dimension", d)
        object.__setattr__(self, "base_radius", float(self.base_radius))
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))
        object.__setattr__(self, "center", c)
        if _sup_phi(self) >= 1.0:
            raise ContractError("graph condition violated: sup|phi| >= 1")

    def __hash__(self):
        return hash((self.base_radius, tuple(self.coeffs.items()), self.dimension, self.center))

    @property
    def max_degree(self):
        return max((l for l, _ in self.coeffs), default=0)

    @property
    def components(self):
        return (self,)

    def radial(self, directions, derivs=0):
        """Radius ``R`` (and angular derivatives) along unit ``directions``."""
        return _radial_field(self, np.atleast_2d(directions), derivs)

    def perturbation_coefficients(self):
        """Coefficients of ``R - 1`` relative to the unit sphere."""
        y00 = real_harmonic(self.dimension, 0, 0, np.zeros((1, self.dimension)))[0]
        out = {(l, m): self.base_radius * c for (l, m), c in self.coeffs.items()}
        out[(0, 0)] = out.get((0, 0), 0.0) + (self.base_radius - 1.0) / y00
        return out


@dataclass(frozen=True)
class Cube:
    """Axis-aligned cube (square in 2D) centered at the origin."""

    side: float
    dimension: int = 3

    def __post_init__(self):
        if not self.side > 0:
            raise ContractError("cube side must be positive")
        if int(self.dimension) not in (2, 3):
            raise ContractError("cubes support d in (2, 3)")
        object.__setattr__(self, "side", float(self.side))
        object.__setattr__(self, "dimension", int(self.dimension))

    @property
    def components(self):
        return (self,)


# --------------------------------------------------------- harmonic fields


def _check_mode(d, l, m):
    if l < 0:
        raise ContractError(f"harmonic degree must be >= 0, got {l}")
    if d == 3 and abs(m) > l:
        raise ContractError(f"invalid spherical harmonic ({l}, {m})")
    if d == 2 and not (m in (l, -l)):
        raise ContractError(f"2D Fourier modes are (l, l) or (l, -l), got ({l}, {m})")


def _angles(d, u):
    if d == 2:
        return np.arctan2(u[:, 1], u[:, 0]), None
    z = np.clip(u[:, 2], -1.0, 1.0)
    return np.arccos(z), np.arctan2(u[:, 1], u[:, 0])


def _harmonic_angles(d, l, m, theta, phi, derivs=0):
    """Real harmonic and its derivatives in (theta[, phi]).

    Returns a list: ``[Y]``, ``[Y, Y_t, Y_p]`` or ``[Y, Y_t, Y_p, Y_tt, Y_tp, Y_pp]``.
    In 2D only theta derivatives appear and the phi slots are ``None``.
    """
    if d == 2:
        if l == 0:
            c = 1.0 / math.sqrt(2.0 * math.pi)
            z = np.zeros_like(theta)
            vals = [np.full_like(theta, c), z, z]
        else:
            s = 1.0 / math.sqrt(math.pi)
            if m == l:
                vals = [s * np.cos(l * theta), -s * l * np.sin(l * theta), -s * l * l * np.cos(l * theta)]
            else:
                vals = [s * np.sin(l * theta), s * l * np.cos(l * theta), -s * l * l * np.sin(l * theta)]
        if derivs == 0:
            return vals[:1]
        if derivs == 1:
            return [vals[0], vals[1], None]
        return [vals[0], vals[1], None, vals[2], None, None]
    am = abs(m)
    if derivs == 0:
        res = (special.sph_harm_y(l, am, theta, phi),)
    else:
        res = special.sph_harm_y(l, am, theta, phi, diff_n=derivs)
    if m == 0:
        part = np.real
        fac = 1.0
    else:
        part = np.real if m > 0 else np.imag
        fac = math.sqrt(2.0) * (-1.0) ** am
    out = [fac * part(res[0])]
    if derivs >= 1:
        jac = res[1]
        out += [fac * part(jac[..., 0]), fac * part(jac[..., 1])]
    if derivs >= 2:
        hes = res[2]
        out += [fac * part(hes[..., 0, 0]), fac * part(hes[..., 0, 1]), fac * part(hes[..., 1, 1])]
    return out


def real_harmonic(d, l, m, directions):
    """Real fully normalized harmonic ``Y_{l,m}`` at unit ``directions``."""
    _check_mode(d, l, m)
    u = np.atleast_2d(np.asarray(directions, float))
    if d == 3 and np.allclose(u, 0.0):
        u = np.tile([0.0, 0.0, 1.0], (len(u), 1))
    elif d == 2 and np.allclose(u, 0.0):
        u = np.tile([1.0, 0.0], (len(u), 1))
    theta, phi = _angles(d, u)
    return _harmonic_angles(d, l, m, theta, phi)[0]


def _phi_field(shape, theta, phi, derivs):
    """phi and its angular derivatives summed over the shape's modes."""
    n = theta.shape[0]
    nslots = [1, 3, 6][derivs]
    acc = [np.zeros(n) for _ in range(nslots)]
    for (l, m), c in shape.coeffs.items():
        parts = _harmonic_angles(shape.dimension, l, m, theta, phi, derivs)
        for k, p in enumerate(parts):
            if p is not None:
                acc[k] += c * p
    return acc


def _radial_field(shape, u, derivs):
    theta, phi = _angles(shape.dimension, u)
    parts = _phi_field(shape, theta, phi, derivs)
    r0 = shape.base_radius
    out = [r0 * (1.0 + parts[0])] + [r0 * p for p in parts[1:]]
    return out if derivs else out[0]


def _sup_phi(shape):
    if not shape.coeffs:
        return 0.0
    L = shape.max_degree
    n = max(2000, 200 * (L + 1) ** 2) if shape.dimension == 3 else max(720, 64 * (L + 1))
    u = sphere_directions(shape.dimension, n)
    theta, phi = _angles(shape.dimension, u)
    # sum of |c| * sup|Y| bounds from above; the sampled max is the sharp value
    return float(np.max(np.abs(_phi_field(shape, theta, phi, 0)[0])))


def _product_grid(d, n_theta):
    """Gauss-Legendre (in cos theta) x trapezoid product rule on S^{d-1}.

    Returns ``(directions, weights)``; exact for spherical polynomials of degree
    below ``n_theta`` (d = 3) or ``2 * n_theta`` (d = 2).
    """
    if d == 2:
        n = 2 * n_theta
        t = 2.0 * math.pi * np.arange(n) / n
        return np.column_stack((np.cos(t), np.sin(t))), np.full(n, 2.0 * math.pi / n)
    z, wz = np.polynomial.legendre.leggauss(n_theta)
    n_phi = 2 * n_theta
    ph = 2.0 * math.pi * np.arange(n_phi) / n_phi
    Z, P = np.meshgrid(z, ph, indexing="ij")
    s = np.sqrt(1.0 - Z * Z)
    u = np.column_stack((s.ravel() * np.cos(P.ravel()), s.ravel() * np.sin(P.ravel()), Z.ravel()))
    w = np.repeat(wz, n_phi) * (2.0 * math.pi / n_phi)
    return u, w


def _grid_size(shape):
    return max(48, 6 * shape.max_degree + 24)


def _area_element(shape, u):
    """Graph area element ``R^(d-2) * sqrt(R^2 + |grad_tau R|^2)`` per unit sphere measure."""
    R, Rt, Rp = _radial_field(shape, u, 1)[:3]
    if shape.dimension == 2:
        return np.sqrt(R * R + Rt * Rt), R, Rt, None
    sin_t = np.sqrt(np.clip(1.0 - u[:, 2] ** 2, 1e-300, None))
    grad2 = Rt * Rt + (Rp / sin_t) ** 2
    return R * np.sqrt(R * R + grad2), R, Rt, Rp


# ------------------------------------------------------------- quadrature


@dataclass(frozen=True, eq=False)
class SurfaceQuadrature:
    """Nodes on the boundary with patch areas and outward unit normals.

    ``groups`` labels connected pieces (``-1`` marks exactly regular layouts
    that need no local diagonal correction).
    """

    points: np.ndarray
    areas: np.ndarray
    normals: np.ndarray
    groups: np.ndarray | None = None

    def __post_init__(self):
        g = np.zeros(len(self.areas), int) if self.groups is None else np.asarray(self.groups, int)
        object.__setattr__(self, "groups", g)

    @property
    def dimension(self):
        return self.points.shape[1]

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def cell_dims(self):
        return np.full(self.size, self.dimension - 1, dtype=int)

    @property
    def on_boundary(self):
        return np.ones(self.size, dtype=bool)

    @property
    def mesh_width(self):
        """Typical node spacing: mean patch area to the power 1/(d-1)."""
        return float(np.mean(self.areas)) ** (1.0 / (self.dimension - 1))


@dataclass(frozen=True, eq=False)
class MixedQuadrature:
    """Boundary patches and interior volume cells in one node set."""

    points: np.ndarray
    areas: np.ndarray
    cell_dims: np.ndarray
    on_boundary: np.ndarray
    mesh_width: float
    groups: np.ndarray | None = None

    def __post_init__(self):
        g = np.zeros(len(self.areas), int) if self.groups is None else np.asarray(self.groups, int)
        object.__setattr__(self, "groups", g)

    @property
    def dimension(self):
        return self.points.shape[1]

    @property
    def size(self):
        return self.points.shape[0]


def _split_counts(total, shares, minimum):
    shares = np.asarray(shares, float)
    counts = np.maximum(minimum, np.round(total * shares / shares.sum()).astype(int))
    return counts


def surface_quadrature(shape, n):
    """Boundary nodes, patch areas and outward normals for ``shape``."""
    comps = shape.components
    if n < 12 * len(comps):
        raise ContractError(f"need at least 12 nodes per component, got {n} for {len(comps)}")
    if isinstance(shape, BallUnion):
        counts = _split_counts(n, [b.radius ** (shape.dimension - 1) for b in comps], 12)
        parts = [surface_quadrature(b, int(k)) for b, k in zip(comps, counts)]
        return SurfaceQuadrature(
            np.vstack([p.points for p in parts]),
            np.concatenate([p.areas for p in parts]),
            np.vstack([p.normals for p in parts]),
            np.concatenate([np.full(p.size, i) for i, p in enumerate(parts)]),
        )
    if isinstance(shape, Ball):
        d = shape.dimension
        u = sphere_directions(d, n)
        areas = np.full(n, sphere_area(d) * shape.radius ** (d - 1) / n)
        return SurfaceQuadrature(np.asarray(shape.center) + shape.radius * u, areas, u)
    if isinstance(shape, NearlySpherical):
        d = shape.dimension
        u = sphere_directions(d, n)
        jac, R, Rt, Rp = _area_element(shape, u)
        areas = sphere_area(d) / n * jac
        # equal-area cells only approximate the graph integral; make them tile it exactly
        areas *= perimeter(shape) / math.fsum(areas)
        normals = _graph_normals(shape, u, R, Rt, Rp)
        return SurfaceQuadrature(np.asarray(shape.center) + R[:, None] * u, areas, normals)
    if isinstance(shape, Cube):
        return _cube_surface(shape, n)
    raise ContractError(f"unsupported shape {type(shape).__name__}")


def _graph_normals(shape, u, R, Rt, Rp):
    # outward normal is proportional to R u - grad_tau R
    if shape.dimension == 2:
        t = np.column_stack((-u[:, 1], u[:, 0]))
        v = R[:, None] * u - Rt[:, None] * t
    else:
        theta, phi = _angles(3, u)
        e_t = np.column_stack((np.cos(theta) * np.cos(phi), np.cos(theta) * np.sin(phi), -np.sin(theta)))
        e_p = np.column_stack((-np.sin(phi), np.cos(phi), np.zeros_like(phi)))
        sin_t = np.clip(np.sin(theta), 1e-300, None)
        v = R[:, None] * u - Rt[:, None] * e_t - (Rp / sin_t)[:, None] * e_p
    return v / np.linalg.norm(v, axis=1)[:, None]


def _cube_surface(shape, n):
    s, d = shape.side, shape.dimension
    h = s / 2.0
    if d == 2:
        m = max(3, n // 4)
        t = -h + s * (np.arange(m) + 0.5) / m
        pts, nrm = [], []
        for axis in (0, 1):
            for sign in (-1.0, 1.0):
                p = np.zeros((m, 2))
                p[:, axis] = sign * h
                p[:, 1 - axis] = t
                q = np.zeros((m, 2))
                q[:, axis] = sign
                pts.append(p)
                nrm.append(q)
        return SurfaceQuadrature(np.vstack(pts), np.full(4 * m, s / m), np.vstack(nrm), np.full(4 * m, -1))
    m = max(2, int(round(math.sqrt(n / 6.0))))
    t = -h + s * (np.arange(m) + 0.5) / m
    A, B = np.meshgrid(t, t, indexing="ij")
    pts, nrm = [], []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        for sign in (-1.0, 1.0):
            p = np.zeros((m * m, 3))
            p[:, axis] = sign * h
            p[:, others[0]] = A.ravel()
            p[:, others[1]] = B.ravel()
            q = np.zeros((m * m, 3))
            q[:, axis] = sign
            pts.append(p)
            nrm.append(q)
    return SurfaceQuadrature(
        np.vstack(pts), np.full(6 * m * m, (s / m) ** 2), np.vstack(nrm), np.full(6 * m * m, -1)
    )


def interior_quadrature(shape, n):
    """Interior nodes with cell volumes.

    Returns ``(points, volumes, radial_step, groups)``.
    """
    d = shape.dimension
    if isinstance(shape, BallUnion):
        counts = _split_counts(n, [b.radius**d for b in shape.balls], 1)
        parts = [interior_quadrature(b, int(k)) for b, k in zip(shape.balls, counts)]
        return (
            np.vstack([p[0] for p in parts]),
            np.concatenate([p[1] for p in parts]),
            max(p[2] for p in parts),
            np.concatenate([np.full(len(p[0]), i) for i, p in enumerate(parts)]),
        )
    if isinstance(shape, Ball):
        x, v, _, edges = stratified_ball_nodes(d, n)
        r = shape.radius
        return np.asarray(shape.center) + r * x, v * r**d, r * float(edges[1] - edges[0]), np.zeros(len(x), int)
    if isinstance(shape, NearlySpherical):
        x, v, _, edges = stratified_ball_nodes(d, n)
        rad = np.linalg.norm(x, axis=1)
        u = np.where(rad[:, None] > 0, x / np.where(rad > 0, rad, 1.0)[:, None], 0.0)
        u[rad == 0] = np.eye(d)[-1]
        R = _radial_field(shape, u, 0)
        # (r, u) -> r R(u) u has volume Jacobian R(u)^d
        pts = np.asarray(shape.center) + (rad * R)[:, None] * u
        v = v * R**d
        v *= volume(shape) / math.fsum(v)
        return pts, v, float(np.max(R)) * float(edges[1] - edges[0]), np.zeros(len(x), int)
    if isinstance(shape, Cube):
        m = max(2, int(round(n ** (1.0 / d))))
        s = shape.side
        t = -s / 2 + s * (np.arange(m) + 0.5) / m
        grids = np.meshgrid(*([t] * d), indexing="ij")
        pts = np.column_stack([g.ravel() for g in grids])
        return pts, np.full(len(pts), (s / m) ** d), s / m, np.full(len(pts), -1)
    raise ContractError(f"unsupported shape {type(shape).__name__}")


def mixed_quadrature(shape, n_surface, n_interior):
    """One boundary layer plus stratified interior cells."""
    sq = surface_quadrature(shape, n_surface)
    pts, vols, step, groups = interior_quadrature(shape, n_interior)
    d = sq.dimension
    return MixedQuadrature(
        groups=np.concatenate((sq.groups, groups)),
        points=np.vstack((sq.points, pts)),
        areas=np.concatenate((sq.areas, vols)),
        cell_dims=np.concatenate((np.full(sq.size, d - 1), np.full(len(pts), d))).astype(int),
        on_boundary=np.concatenate((np.ones(sq.size, bool), np.zeros(len(pts), bool))),
        mesh_width=max(sq.mesh_width, step),
    )


# --------------------------------------------------------- global measures


def perimeter(shape):
    """Perimeter (surface measure of the boundary)."""
    d = shape.dimension
    if isinstance(shape, Ball):
        return sphere_area(d) * shape.radius ** (d - 1)
    if isinstance(shape, BallUnion):
        return math.fsum(perimeter(b) for b in shape.balls)
    if isinstance(shape, Cube):
        return 2 * d * shape.side ** (d - 1)
    if isinstance(shape, NearlySpherical):
        u, w = _product_grid(d, _grid_size(shape))
        return math.fsum(w * _area_element(shape, u)[0])
    raise ContractError(f"unsupported shape {type(shape).__name__}")


def volume(shape):
    d = shape.dimension
    if isinstance(shape, Ball):
        return unit_ball_volume(d) * shape.radius**d
    if isinstance(shape, BallUnion):
        return math.fsum(volume(b) for b in shape.balls)
    if isinstance(shape, Cube):
        return shape.side**d
    if isinstance(shape, NearlySpherical):
        u, w = _product_grid(d, _grid_size(shape))
        return math.fsum(w * _radial_field(shape, u, 0) ** d) / d
    raise ContractError(f"unsupported shape {type(shape).__name__}")


def barycenter(shape):
    """Volumetric barycenter."""
    d = shape.dimension
    if isinstance(shape, Ball):
        return np.asarray(shape.center)
    if isinstance(shape, BallUnion):
        vols = np.array([volume(b) for b in shape.balls])
        cs = np.array([b.center for b in shape.balls])
        return vols @ cs / vols.sum()
    if isinstance(shape, Cube):
        return np.zeros(d)
    if isinstance(shape, NearlySpherical):
        u, w = _product_grid(d, _grid_size(shape))
        R = _radial_field(shape, u, 0)
        first = (w * R ** (d + 1)) @ u / (d + 1)
        return np.asarray(shape.center) + first / volume(shape)
    raise ContractError(f"unsupported shape {type(shape).__name__}")


def enforce_volume(shape, m):
    """Dilate ``shape`` so its volume is ``m``.

    Volume is homogeneous of degree ``d`` under dilation, so the factor is
    ``(m / V)^(1/d)`` in closed form. Balls and nearly spherical shapes dilate
    about their own center, unions and cubes about the origin.
    """
    if not m > 0:
        raise ContractError("target volume must be positive")
    lam = (m / volume(shape)) ** (1.0 / shape.dimension)
    if isinstance(shape, Ball):
        return Ball(shape.center, shape.radius * lam)
    if isinstance(shape, BallUnion):
        return BallUnion(tuple(Ball(tuple(lam * np.asarray(b.center)), b.radius * lam) for b in shape.balls))
    if isinstance(shape, Cube):
        return Cube(shape.side * lam, shape.dimension)
    return replace(shape, base_radius=shape.base_radius * lam)


def _project(d, L, u, w, values):
    """Least-squares-free projection of sampled values onto harmonics up to ``L``."""
    theta, phi = _angles(d, u)
    out = {}
    for l in range(L + 1):
        modes = [(0, 0)] if l == 0 else ([(l, l), (l, -l)] if d == 2 else [(l, m) for m in range(-l, l + 1)])
        for l_, m in modes:
            Y = _harmonic_angles(d, l_, m, theta, phi)[0]
            out[(l_, m)] = math.fsum(w * values * Y)
    return out


def _regraph(shape, origin, u, iters=100):
    """Radius of ``shape`` seen from ``origin`` along unit directions ``u``."""
    c = np.asarray(shape.center)
    t = np.full(len(u), shape.base_radius)
    for _ in range(iters):
        q = origin + t[:, None] * u - c
        rq = np.linalg.norm(q, axis=1)
        R = _radial_field(shape, q / rq[:, None], 0)
        step = R - rq
        t = t + step
        if np.any(t <= 0) or not np.all(np.isfinite(t)):
            raise ContractError("re-graphing about the barycenter failed")
        if np.max(np.abs(step)) < 1e-15 * shape.base_radius:
            return t
    raise ContractError("re-graphing about the barycenter did not converge")


def recenter_barycenter(shape, max_degree=None, tol=1e-10, max_iter=30):
    """Translate a nearly spherical shape so its barycenter is the origin.

    The translated boundary is re-expressed as a radial graph by ray
    intersection and projected onto harmonics up to ``max(L, 8)``; the mean
    radius becomes the new base radius. Iterated until the barycenter is
    below ``tol`` relative to the base radius.
    """
    if not isinstance(shape, NearlySpherical):
        raise ContractError("recentering applies to nearly spherical shapes")
    d = shape.dimension
    L = max(shape.max_degree, 8) if max_degree is None else int(max_degree)
    u, w = _product_grid(d, max(48, 3 * L + 24))
    y00 = _harmonic_angles(d, 0, 0, *_angles(d, u[:1]))[0][0]
    cur = shape
    for _ in range(max_iter):
        b = barycenter(cur)
        if np.linalg.norm(b - np.asarray(cur.center)) < tol * cur.base_radius:
            return replace(cur, center=None)
        t =_regraph(cur, b, u)
        coef = _project(d, L, u, w, t)
        r0 = coef.pop((0, 0)) * y00
        cur = NearlySpherical(r0, {k: v / r0 for k, v in coef.items() if abs(v) > 1e-16 * r0}, d)
    b = barycenter(cur)
    if np.linalg.norm(b) > 1e-8 * cur.base_radius:
        raise ContractError(f"barycenter iteration stalled at |b| = {np.linalg.norm(b):.3g}")
    return cur


def isoperimetric_deficit(shape, rtol=1e-8):
    """``P(E) - P(B)`` for a shape with the unit ball's volume."""
    d = shape.dimension
    vb = unit_ball_volume(d)
    v = volume(shape)
    if abs(v - vb) > rtol * vb:
        raise ContractError(f"deficit needs volume {vb:.12g}, shape has {v:.12g}")
    return perimeter(shape) - sphere_area(d)


# ---------------------------------------------------------------- curvature


def principal_curvatures(shape, directions):
    """Principal curvatures (positive for convex) of a nearly spherical boundary.

    Returns an ``(n, d-1)`` array at the boundary points above ``directions``.
    """
    u = np.atleast_2d(np.asarray(directions, float))
    if shape.dimension == 2:
        R, Rt, _, Rtt = _radial_field(shape, u, 2)[:4]
        k = (R * R + 2 * Rt * Rt - R * Rtt) / (R * R + Rt * Rt) ** 1.5
        return k[:, None]
    R, Rt, Rp, Rtt, Rtp, Rpp = _radial_field(shape, u, 2)
    theta, phi = _angles(3, u)
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    zero = np.zeros_like(theta)
    uu = np.column_stack((st * cp, st * sp, ct))
    u_t = np.column_stack((ct * cp, ct * sp, -st))
    u_p = np.column_stack((-st * sp, st * cp, zero))
    u_tp = np.column_stack((-ct * sp, ct * cp, zero))
    u_pp = np.column_stack((-st * cp, -st * sp, zero))
    c = lambda a: a[:, None]  # noqa: E731
    X_t = c(Rt) * uu + c(R) * u_t
    X_p = c(Rp) * uu + c(R) * u_p
    X_tt = c(Rtt) * uu + 2 * c(Rt) * u_t - c(R) * uu
    X_tp = c(Rtp) * uu + c(Rt) * u_p + c(Rp) * u_t + c(R) * u_tp
    X_pp = c(Rpp) * uu + 2 * c(Rp) * u_p + c(R) * u_pp
    nrm = np.cross(X_t, X_p)
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]
    dot = lambda a, b: np.einsum("ij,ij->i", a, b)  # noqa: E731
    I = np.stack([[dot(X_t, X_t), dot(X_t, X_p)], [dot(X_t, X_p), dot(X_p, X_p)]]).transpose(2, 0, 1)
    II = np.stack([[dot(X_tt, nrm), dot(X_tp, nrm)], [dot(X_tp, nrm), dot(X_pp, nrm)]]).transpose(2, 0, 1)
    S = np.linalg.solve(I, II)
    return -np.sort(np.linalg.eigvals(S).real, axis=1)


def delta_ball_check(shape, delta, n=None):
    """Whether the shape satisfies the internal/external delta-ball condition.

    Balls need ``radius >= delta``; unions additionally need gaps of at least
    ``2 delta`` so an exterior ball fits between components. Cubes always
    fail (corners). Nearly spherical shapes are checked through
    ``|kappa_i| <= 1/delta`` on a direction set 4x denser than the default
    surface quadrature.
    """
    if not delta > 0:
        raise ContractError("delta must be positive")
    if isinstance(shape, Ball):
        return bool(shape.radius >= delta)
    if isinstance(shape, BallUnion):
        if any(b.radius < delta for b in shape.balls):
            return False
        bs = shape.balls
        return all(_ball_gap(bs[i], bs[j]) >= 2 * delta for i in range(len(bs)) for j in range(i + 1, len(bs)))
    if isinstance(shape, Cube):
        return False
    if n is None:
        n = 4 * (2000 if shape.dimension == 3 else 512)
    # rotated copy keeps nodes off the exact poles
    u = sphere_directions(shape.dimension, n, rotation=0.5 * GOLDEN_ANGLE)
    kappa = principal_curvatures(shape, u)
    return bool(np.max(np.abs(kappa)) * delta <= 1.0)


# ----------------------------------------------------------------- diameter


def diameter(shape):
    d = shape.dimension
    if isinstance(shape, Ball):
        return 2.0 * shape.radius
    if isinstance(shape, BallUnion):
        bs = shape.balls
        best = max(2.0 * b.radius for b in bs)
        for i in range(len(bs)):
            for j in range(i + 1, len(bs)):
                best = max(best, math.dist(bs[i].center, bs[j].center) + bs[i].radius + bs[j].radius)
        return best
    if isinstance(shape, Cube):
        return shape.side * math.sqrt(d)
    if isinstance(shape, NearlySpherical):
        n = 3000 if d == 3 else 2048
        pts = surface_quadrature(shape, n).points
        return float(pdist(pts).max())
    raise ContractError(f"unsupported shape {type(shape).__name__}")


def diameter_bound(delta, m, d):
    """Upper bound ``sqrt(d) 2^(d+2) (m/omega_d) delta^(1-d)`` on connected K_delta sets."""
    if not (delta > 0 and m > 0):
        raise ContractError("delta and m must be positive")
    return math.sqrt(d) * 2.0 ** (d + 2) * (m / unit_ball_volume(d)) * delta ** (1 - d)


# ----------------------------------------------------------------- norms


def spectral_seminorm(coeffs, d, s):
    """``sum_l (l (l + d - 2))^s c_lm^2`` over modes with ``l >= 1``."""
    tot = []
    for (l, _), c in dict(coeffs).items():
        if l >= 1:
            tot.append((l * (l + d - 2)) ** s * c * c)
    return math.fsum(tot)


def sobolev_seminorms(coeffs, d, alpha=None):
    """Spectral ``(L2, H1, Hs)`` of the zero-mean part, with ``s = (d - alpha)/2``.

    Modes with ``l = 0`` are ignored. ``Hs`` is ``nan`` when ``alpha`` is None.
    """
    l2 = spectral_seminorm(coeffs, d, 0.0)
    h1 = spectral_seminorm(coeffs, d, 1.0)
    hs = float("nan") if alpha is None else spectral_seminorm(coeffs, d, (d - alpha) / 2.0)
    return l2, h1, hs


# ------------------------------------------------------------------ config


def _floats(text):
    return [float(t) for t in str(text).replace(",", " ").split()]


def shape_from_mapping(cfg):
    """Build a shape from a flat key-value mapping.

    ``variant`` is one of ``ball``, ``ball_union``, ``nearly_spherical``,
    ``cube``. Ball unions list ``balls = x,y,[z,]r; ...``; nearly spherical
    shapes list ``coeffs = l,m,value; ...``.
    """
    cfg = {k.strip().lower(): v for k, v in cfg.items()}
    variant = str(cfg.pop("variant", "")).strip().lower()
    allowed = {
        "ball": {"dimension", "radius", "center"},
        "ball_union": {"dimension", "balls"},
        "nearly_spherical": {"dimension", "base_radius", "coeffs", "center"},
        "cube": {"dimension", "side"},
    }
    if variant not in allowed:
        raise ConfigError(f"unknown shape variant {variant!r}")
    extra = set(cfg) - allowed[variant]
    if extra:
        raise ConfigError(f"unknown shape key {sorted(extra)[0]!r} for variant {variant}")
    d = int(cfg.get("dimension", 3))
    try:
        if variant == "ball":
            center = _floats(cfg["center"]) if "center" in cfg else [0.0] * d
            return Ball(tuple(center), float(cfg.get("radius", 1.0)))
        if variant == "ball_union":
            balls = []
            for chunk in str(cfg["balls"]).split(";"):
                if chunk.strip():
                    vals = _floats(chunk)
                    balls.append(Ball(tuple(vals[:-1]), vals[-1]))
            return BallUnion(tuple(balls))
        if variant == "nearly_spherical":
            coeffs = {}
            for chunk in str(cfg.get("coeffs", "")).split(";"):
                if chunk.strip():
                    l, m, v = _floats(chunk)
                    coeffs[(int(l), int(m))] = v
            center = _floats(cfg["center"]) if "center" in cfg else None
            return NearlySpherical(float(cfg.get("base_radius", 1.0)), coeffs, d, center)
        return Cube(float(cfg.get("side", 1.0)), d)
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ContractError):
            raise
        raise ConfigError(f"malformed shape configuration: {exc}") from exc


def read_key_values(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def load_shape(path):
    return shape_from_mapping(read_key_values(path))
