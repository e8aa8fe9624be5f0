"""Parameter sweeps for the non-existence constructions and ball stability.

Every sweep returns :class:`SweepRecord` objects carrying the parameters
needed to regenerate them, the computed energies and named boolean verdicts.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import csv
import json
import logging
import math

import numpy as np

from .equilibrium import el_residual, solve_equilibrium
from .errors import ContractError, ConvergenceError
from .functional import connected_lower_bound
from .geometry import (
    Ball,
    BallUnion,
    Cube,
    NearlySpherical,
    delta_ball_check,
    enforce_volume,
    isoperimetric_deficit,
    perimeter,
    recenter_barycenter,
    sobolev_seminorms,
    surface_quadrature,
)
from .kernel import KernelSpec, unit_ball_volume
from .measure import ball_riesz_energy

log = logging.getLogger(__name__)

__all__ = [
    "SweepRecord",
    "nonexistence_sweep",
    "splitting_threshold",
    "splitting_construction",
    "normalized_shape",
    "stability_sweep",
    "mainstab_check",
    "mainstab_fit",
    "expansion_identity_residual",
    "expansion_identity_check",
    "interpolation_check",
    "corner_blowup_study",
    "corner_refinement_study",
    "circle_log_energy",
    "log_divergence_and_scaling",
    "default_shape_suite",
    "fuglede_fit",
    "density_bound_suite",
    "write_records",
]


@dataclass
class SweepRecord:
    parameters: dict = field(default_factory=dict)
    energies: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)

    def as_row(self):
        row = dict(self.parameters)
        row.update(self.energies)
        row.update({f"verdict_{k}": bool(v) for k, v in self.verdicts.items()})
        return row

    @property
    def passed(self):
        return all(self.verdicts.values())


# ------------------------------------------------------ closed-form sweeps


def nonexistence_sweep(d, alpha, m, Q, beta, N_list):
    """Reservoir ball plus ``N`` tiny charged droplets of radius ``N^-beta``.

    The droplets are infinitely far apart, so only self-interactions count:
    the energy is ``((m - V_N)/omega_d)^((d-1)/d) P(B) + N P(B) r^(d-1)
    + (Q^2/N) r^(-alpha) I(B)``. It tends to the isoperimetric value of
    volume ``m`` whenever ``1/(d-1) < beta < 1/alpha``.
    """
    if not 1.0 / (d - 1) < beta < 1.0 / alpha:
        raise ContractError(f"beta must lie in (1/(d-1), 1/alpha) = ({1 / (d - 1):g}, {1 / alpha:g})")
    N_list = [int(n) for n in N_list]
    if any(n < 1 for n in N_list) or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ContractError("N_list must be positive and strictly increasing")
    wd = unit_ball_volume(d)
    PB = d * wd
    IB = ball_riesz_energy(d, alpha)
    limit = (m / wd) ** ((d - 1) / d) * PB
    r_m = (m / wd) ** (1.0 / d)
    ball_F = PB * r_m ** (d - 1) + Q * Q * IB * r_m ** (-alpha)
    out, prev = [], None
    for N in N_list:
        r = N ** (-beta)
        V = N * wd * r**d
        if V > m * (1 + 1e-12):
            raise ContractError(f"droplets of N={N} exceed the volume m={m} (V_N={V:.6g})")
        reservoir = max(m - V, 0.0)
        res_per = (reservoir / wd) ** ((d - 1) / d) * PB
        drops = N * PB * r ** (d - 1)
        charge = Q * Q / N * r ** (-alpha) * IB
        total = res_per + drops + charge
        out.append(
            SweepRecord(
                parameters={"d": d, "alpha": alpha, "m": m, "Q": Q, "beta": beta, "N": N, "radius": r},
                energies={
                    "reservoir_perimeter": res_per,
                    "droplet_perimeter": drops,
                    "charge_energy": charge,
                    "energy": total,
                    "isoperimetric_limit": limit,
                    "ball_energy": ball_F,
                    "relative_gap": (total - limit) / limit,
                },
                verdicts={
                    "below_ball": total < ball_F,
                    "above_limit": total > limit,
                    "decreasing": prev is None or total < prev,
                },
            )
        )
        prev = total
    return out


def splitting_threshold(d, alpha, delta):
    """Charge above which ``1/delta^d`` split balls beat every connected set."""
    PB = d * unit_ball_volume(d)
    return math.sqrt(2 * PB) * (math.sqrt(d) * 2.0 ** (d + 2)) ** (alpha / 2) * delta ** (-(d * alpha + 1 - alpha) / 2)


def splitting_construction(d, alpha, delta, Q):
    """Energy of ``N = delta^-d`` far-apart equal balls of total volume ``omega_d``.

    Each ball carries charge ``Q/N``; the energy is compared with the lower
    bound for connected sets satisfying the delta-ball condition.
    """
    if not (0 < delta <= 1 and Q >= 0):
        raise ContractError("need 0 < delta <= 1 and Q >= 0")
    wd = unit_ball_volume(d)
    PB = d * wd
    IB = ball_riesz_energy(d, alpha)
    N = int(math.floor(delta ** (-d) + 1e-9))
    # volume correction when 1/delta is not an integer
    r = N ** (-1.0 / d)
    per = N * PB * r ** (d - 1)
    charge = Q * Q * IB * r ** (-alpha) / N
    energy = per + charge
    bound = connected_lower_bound(delta, wd, Q, d, alpha)
    cond_lhs = IB * delta ** (d - alpha)
    cond_rhs = 0.5 * (math.sqrt(d) * 2.0 ** (d + 2)) ** (-alpha) * delta ** ((d - 1) * alpha)
    return SweepRecord(
        parameters={"d": d, "alpha": alpha, "delta": delta, "Q": Q, "N": N, "radius": r},
        energies={
            "perimeter": per,
            "charge_energy": charge,
            "energy": energy,
            "connected_bound": bound,
            "threshold": splitting_threshold(d, alpha, delta),
        },
        verdicts={
            "alpha_below_one": alpha < 1,
            "small_delta_condition": cond_lhs <= cond_rhs,
            "split_below_bound": energy < bound,
        },
    )


# -------------------------------------------------------------- stability


def normalized_shape(coeffs, d=3):
    """Nearly spherical shape with barycenter at 0 and the unit ball's volume."""
    shape = NearlySpherical(1.0, dict(coeffs), d)
    if shape.coeffs:
        shape = recenter_barycenter(shape)
    return enforce_volume(shape, unit_ball_volume(d))


def _reference_energy(spec, n, tol):
    ref = NearlySpherical(1.0, {}, spec.dimension)
    return solve_equilibrium(spec, surface_quadrature(ref, n), tol=tol)


def _map(fn, items, threads):
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def stability_sweep(delta, Q_list, mode_set, amplitude_grid, N=2000, tol=1e-6, threads=None):
    """``F(E) - F(B)`` for single-mode perturbations of the unit ball (d=3, alpha=1).

    Each ``(mode, amplitude)`` shape ``R = 1 + a Y_lm`` is recentered and
    rescaled to the unit ball's volume. Shapes failing the delta-ball check
    are skipped. Since ``F`` is affine in ``Q^2`` at fixed shape,
    ``gap(Q) = D(E) + Q^2 (I(E) - I(B))`` and the crossing charge is
    ``Q* = sqrt(D / (I(B) - I(E)))`` (infinite when ``I(E) >= I(B)``).
    ``I(B)`` is the discrete ball energy at the same node count so that
    quadrature errors cancel in the difference.
    """
    spec = KernelSpec(3, 1.0)
    Q_list = sorted(float(q) for q in Q_list)
    modes = [tuple(int(v) for v in mode) for mode in mode_set]
    cases = [(mode, float(a)) for mode in modes for a in amplitude_grid]
    I_B = _reference_energy(spec, N, tol).energy

    def evaluate(case):
        mode, a = case
        shape = normalized_shape({mode: a})
        if not delta_ball_check(shape, delta):
            log.warning("skipping mode %s amplitude %g: delta-ball condition fails at %g", mode, a, delta)
            return None
        sol = solve_equilibrium(spec, surface_quadrature(shape, N), tol=tol)
        return shape, isoperimetric_deficit(shape), sol

    results = _map(evaluate, cases, threads)
    records = []
    for (mode, a), res in zip(cases, results):
        if res is None:
            continue
        shape, D, sol = res
        dI = sol.energy - I_B
        q_star = math.sqrt(D / -dI) if dI < 0 else math.inf
        prev = None
        for Q in Q_list:
            gap = D + Q * Q * dI
            records.append(
                SweepRecord(
                    parameters={"delta": delta, "Q": Q, "l": mode[0], "m": mode[1], "amplitude": a, "N": N},
                    energies={
                        "deficit": D,
                        "energy": sol.energy,
                        "ball_energy": I_B,
                        "gap": gap,
                        "q_star": q_star,
                        "residual": sol.residual,
                    },
                    verdicts={
                        "ball_wins": gap > 0,
                        "gap_nonincreasing": prev is None or gap <= prev,
                    },
                )
            )
            prev = gap
    return records


def mainstab_check(shape, N=2000, tol=1e-6, ball_energy=None):
    """Ratio ``(I_dB(fbar) - I_dE(f)) / (|f|_inf^2 D(E))`` for a nearly spherical shape.

    ``f`` is the equilibrium density on the boundary of ``shape`` (a
    probability measure) and ``fbar = 1/P(E)`` its perimeter average, so
    ``I_dB(fbar) = (P(B)/P(E))^2 I(B)``. The ratio is 0 for the ball itself.
    Returns None when the equilibrium solve does not converge.
    """
    spec = KernelSpec(3, 1.0)
    try:
        sol = solve_equilibrium(spec, surface_quadrature(shape, N), tol=tol)
    except ConvergenceError as exc:
        log.warning("mainstab record skipped: %s", exc)
        return None
    if ball_energy is None:
        ball_energy = _reference_energy(spec, N, tol).energy
    PB = 4.0 * math.pi
    PE = perimeter(shape)
    D = isoperimetric_deficit(shape)
    f_inf = float(np.max(sol.densities))
    num = (PB / PE) ** 2 * ball_energy - sol.energy
    den = f_inf**2 * D
    # below quadrature noise the shape is the ball and the ratio is 0
    ratio = 0.0 if D <= 1e-12 else num / den
    return SweepRecord(
        parameters={"N": N, "coeffs": _coeff_text(shape.coeffs)},
        energies={
            "deficit": D,
            "energy": sol.energy,
            "ball_energy": ball_energy,
            "numerator": num,
            "f_inf": f_inf,
            "ratio": ratio,
        },
        verdicts={"deficit_positive": D > 0 or not shape.coeffs},
    )


def mainstab_fit(suite, N=2000, tol=1e-6, slack=0.2, threads=None):
    """Fit ``C`` as the largest ratio over ``suite`` plus ``slack``, then check each shape."""
    ball_energy = _reference_energy(KernelSpec(3, 1.0), N, tol).energy
    recs = [r for r in _map(lambda s: mainstab_check(s, N, tol, ball_energy), list(suite), threads) if r]
    C = max(0.0, max(r.energies["ratio"] for r in recs)) * (1.0 + slack)
    for r in recs:
        r.energies["C_fit"] = C
        r.verdicts["ratio_below_fit"] = r.energies["ratio"] <= C
    return C, recs


def _coeff_text(coeffs):
    return ";".join(f"{l},{m},{v!r}" for (l, m), v in sorted(coeffs.items()))


# ------------------------------------------------------ algebraic checks


def expansion_identity_residual(x, y, a, b):
    """``|(1+a)x - (1+b)y|^2 - |x-y|^2 (1 + a + b + ab + (a-b)^2/|x-y|^2)``, row-wise."""
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    a, b = np.asarray(a, float), np.asarray(b, float)
    lhs = np.sum(((1 + a)[..., None] * x - (1 + b)[..., None] * y) ** 2, axis=-1)
    dist2 = np.sum((x - y) ** 2, axis=-1)
    psi = (a - b) ** 2 / dist2
    return lhs - dist2 * (1 + a + b + a * b + psi)


def expansion_identity_check(num_trials=100_000, seed=0, d=3, amplitude=0.5):
    """Largest absolute residual of the radial-graph distance expansion.

    Random unit-vector pairs with random radial perturbations, plus the
    constant-perturbation and antipodal special cases.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((num_trials, d))
    y = rng.standard_normal((num_trials, d))
    x /= np.linalg.norm(x, axis=1)[:, None]
    y /= np.linalg.norm(y, axis=1)[:, None]
    a = rng.uniform(-amplitude, amplitude, num_trials)
    b = rng.uniform(-amplitude, amplitude, num_trials)
    err = np.abs(expansion_identity_residual(x, y, a, b))
    # same value on both points, and antipodal pairs
    err_c = np.abs(expansion_identity_residual(x, y, a, a))
    err_a = np.abs(expansion_identity_residual(x, -x, a, b))
    keep = np.isfinite(err)
    return float(max(err[keep].max(), err_c.max(), err_a.max()))


def interpolation_check(num_trials=1000, seed=0, d=3, max_degree=8):
    """Worst ratio ``Hq / (Hp^((r-q)/(r-p)) Hr^((q-p)/(r-p)))`` over random spectra.

    Hoelder's inequality on the spectral side bounds this ratio by one.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    modes = [(l, m) for l in range(1, max_degree + 1) for m in range(-l, l + 1)]
    if d == 2:
        modes = [(l, s * l) for l in range(1, max_degree + 1) for s in (1, -1)]
    for _ in range(num_trials):
        c = rng.standard_normal(len(modes)) * rng.uniform(0, 1, len(modes)) ** 3
        coeffs = dict(zip(modes, c))
        p, q, r = np.sort(rng.uniform(0, 2.5, 3))
        if r - p < 1e-9:
            continue
        from .geometry import spectral_seminorm

        hp, hq, hr = (spectral_seminorm(coeffs, d, s) for s in (p, q, r))
        rhs = hp ** ((r - q) / (r - p)) * hr ** ((q - p) / (r - p))
        worst = max(worst, hq / rhs)
    return worst


# ------------------------------------------------------------ logarithmic


def _square_profile(sol, quad, side):
    half = 0.5 * side
    corners = np.array([[sx * half, sy * half] for sx in (-1, 1) for sy in (-1, 1)])
    pts = quad.points
    dist = np.min(np.linalg.norm(pts[:, None, :] - corners[None], axis=2), axis=1)
    # edge index: which coordinate sits on the boundary
    on_x = np.isclose(np.abs(pts[:, 0]), half)
    edge = np.where(on_x, np.sign(pts[:, 0]) + 1, np.sign(pts[:, 1]) + 5).astype(int)
    along = np.where(on_x, pts[:, 1], pts[:, 0])
    return dist, edge, along


def corner_blowup_study(side=2.0, N=4000, tol=1e-6, terminal=0.1, exclusion=3.0):
    """Logarithmic equilibrium density on a square boundary near the corners.

    Verdicts: the density increases toward the corner over the last
    ``terminal`` fraction of every half-edge, and the corner-to-midpoint
    density ratio exceeds 1.5. Nodes within ``exclusion`` mesh widths of a
    corner are left out of the Euler-Lagrange spread, which is reported
    separately for them.
    """
    spec = KernelSpec.logarithmic(2)
    shape = Cube(side, 2)
    quad = surface_quadrature(shape, N)
    sol = solve_equilibrium(spec, quad, tol=tol)
    dens = sol.densities
    dist, edge, along = _square_profile(sol, quad, side)
    monotone = True
    for e in np.unique(edge):
        for sgn in (-1, 1):
            sel = (edge == e) & (np.sign(along) == sgn) & (dist <= terminal * side)
            order = np.argsort(dist[sel])
            prof = dens[sel][order]
            if np.any(np.diff(prof) > 1e-12 * prof.max()):
                monotone = False
    corner_density = float(dens[dist <= dist.min() * (1 + 1e-9)].mean())
    dmax = dist.max()
    mid_density = float(dens[dist >= dmax * (1 - 1e-9)].mean())
    h = quad.mesh_width
    away = dist > exclusion * h
    s_away, _ = el_residual(spec, sol, quad, mask=away)
    s_near, _ = el_residual(spec, sol, quad, mask=~away)
    scale = max(abs(sol.energy), 1.0)
    ratio = corner_density / mid_density
    return SweepRecord(
        parameters={"side": side, "N": N, "tol": tol},
        energies={
            "energy": sol.energy,
            "max_density": float(dens.max()),
            "corner_density": corner_density,
            "mid_edge_density": mid_density,
            "corner_ratio": ratio,
            "spread_away_from_corners": s_away / scale,
            "spread_near_corners": s_near / scale,
            "residual": sol.residual,
        },
        verdicts={"monotone_toward_corner": monotone, "corner_ratio_above_1_5": ratio > 1.5},
    )


def corner_refinement_study(side=2.0, N_list=(1000, 2000, 4000), tol=1e-6):
    """Corner study at increasing resolution; max density must keep growing."""
    recs = [corner_blowup_study(side, N, tol) for N in N_list]
    for a, b in zip(recs, recs[1:]):
        b.verdicts["max_density_grows"] = b.energies["max_density"] > a.energies["max_density"]
        b.verdicts["corner_ratio_grows"] = b.energies["corner_ratio"] > a.energies["corner_ratio"]
    return recs


def circle_log_energy(r, N=400, tol=1e-8):
    """Logarithmic equilibrium energy of the circle of radius ``r`` (exact: ``-log r``)."""
    spec = KernelSpec.logarithmic(2)
    sol = solve_equilibrium(spec, surface_quadrature(Ball.unit(2, r), N), tol=tol)
    return SweepRecord(
        parameters={"radius": r, "N": N},
        energies={"energy": sol.energy, "exact": -math.log(r), "residual": sol.residual},
        verdicts={"within_1pct": abs(sol.energy + math.log(r)) <= 0.01 * max(abs(math.log(r)), 1.0)},
    )


def _two_circles(r, s):
    return BallUnion((Ball((-0.5 * s, 0.0), r), Ball((0.5 * s, 0.0), r)))


def log_divergence_and_scaling(r=0.5, separations=(4, 8, 16, 32, 64), lambda_list=(0.5, 2.0, 3.7), N=800, tol=1e-8):
    """Two-circle divergence and the logarithmic dilation identity.

    (a) Two circles of radius ``r`` with centers ``s`` apart: for large ``s``
    the energy is ``-log(r)/2 - log(s)/2``, so it drops by ``log(2)/2`` per
    doubling and has no lower bound. The least-squares slope in ``log s`` is
    compared with ``-1/2``.
    (b) ``I(lam E) - I(E) + log(lam) = 0`` for the circle and the first
    two-circle configuration.
    """
    spec = KernelSpec.logarithmic(2)
    seps = sorted(float(s) for s in separations)
    if seps[0] <= 2 * r:
        raise ContractError("circles must be disjoint: separation > 2 r")
    records, energies = [], []
    for s in seps:
        sol = solve_equilibrium(spec, surface_quadrature(_two_circles(r, s), N), tol=tol)
        energies.append(sol.energy)
        records.append(
            SweepRecord(
                parameters={"part": "divergence", "radius": r, "separation": s, "N": N},
                energies={
                    "energy": sol.energy,
                    "far_field": -0.5 * math.log(r) - 0.5 * math.log(s),
                    "residual": sol.residual,
                },
                verdicts={"decreasing": len(energies) == 1 or energies[-1] < energies[-2]},
            )
        )
    slope = float(np.polyfit(np.log(seps), energies, 1)[0]) if len(seps) > 1 else float("nan")
    for rec in records:
        rec.energies["fitted_slope"] = slope
        rec.verdicts["slope_within_2pct"] = abs(slope + 0.5) <= 0.02 * 0.5
    for name, shape in (("circle", Ball.unit(2, r)), ("two_circles", _two_circles(r, seps[0]))):
        base = solve_equilibrium(spec, surface_quadrature(shape, N), tol=tol).energy
        for lam in lambda_list:
            scaled = _dilate(shape, lam)
            e = solve_equilibrium(spec, surface_quadrature(scaled, N), tol=tol).energy
            defect = e - base + math.log(lam)
            records.append(
                SweepRecord(
                    parameters={"part": "scaling", "shape": name, "radius": r, "lambda": lam, "N": N},
                    energies={"energy": e, "base_energy": base, "scaling_defect": defect},
                    verdicts={"scaling_identity": abs(defect) <= 1e-8 * max(abs(base), 1.0)},
                )
            )
    return records


def _dilate(shape, lam):
    if isinstance(shape, Ball):
        return Ball(tuple(lam * c for c in shape.center), lam * shape.radius)
    return BallUnion(tuple(_dilate(b, lam) for b in shape.balls))


# ----------------------------------------------------------------- suites


def default_shape_suite(n=20, seed=0, max_amplitude=0.05, max_degree=5, d=3):
    """Deterministic suite of normalized nearly spherical shapes.

    Each shape mixes one to three modes with ``2 <= l <= max_degree`` and
    coefficients bounded by ``max_amplitude``.
    """
    rng = np.random.default_rng(seed)
    suite = []
    for _ in range(n):
        k = int(rng.integers(1, 4))
        coeffs = {}
        for _ in range(k):
            l = int(rng.integers(2, max_degree + 1))
            m = int(rng.integers(-l, l + 1)) if d == 3 else int(rng.choice([l, -l]))
            coeffs[(l, m)] = float(rng.uniform(-max_amplitude, max_amplitude))
        suite.append(normalized_shape(coeffs, d))
    return suite


def _fuglede_stats(shape):
    pc = shape.perturbation_coefficients()
    d = shape.dimension
    l2, h1, _ = sobolev_seminorms(pc, d)
    D = isoperimetric_deficit(shape)
    y00 = 1.0 / math.sqrt(d * unit_ball_volume(d))
    mean = abs(pc.get((0, 0), 0.0)) / y00  # integral of phi over the sphere
    return D, h1, l2, mean


def fuglede_fit(train, test, slack=0.2):
    """Fit ``c0`` in ``D(E) >= c0 |grad phi|^2`` on ``train`` and check it on ``test``.

    ``c0`` is the smallest ratio on the training shapes shrunk by ``slack``;
    the same is done for the volume-constraint constant in
    ``|int phi| <= C |phi|_L2``.
    """
    tr = [_fuglede_stats(s) for s in train]
    c0 = min(D / h1 for D, h1, _, _ in tr if h1 > 0) / (1.0 + slack)
    C_mean = max(m / math.sqrt(l2) for _, _, l2, m in tr if l2 > 0) * (1.0 + slack)
    recs = []
    for s in test:
        D, h1, l2, m = _fuglede_stats(s)
        recs.append(
            SweepRecord(
                parameters={
                    "coeffs": _coeff_text(s.coeffs),
                    "amplitude": max(map(abs, s.coeffs.values()), default=0.0),
                },
                energies={"deficit": D, "H1": h1, "L2": l2, "mean": m, "c0": c0, "C_mean": C_mean},
                verdicts={
                    "fuglede": D >= c0 * h1,
                    "deficit_nonnegative": D >= -1e-10,
                    "mean_bound": m <= C_mean * math.sqrt(l2),
                },
            )
        )
    return c0, recs


def density_bound_suite(suite, delta, N=2000, tol=1e-6, threads=None):
    """Check ``max(w_i/A_i) <= I(E)/delta`` (plus 5%) on the sphere and feasible suite shapes."""
    from .equilibrium import bounded_density_check

    spec = KernelSpec(3, 1.0)
    shapes = [Ball.unit(3)] + list(suite)

    def evaluate(shape):
        if not delta_ball_check(shape, delta):
            return None
        sol = solve_equilibrium(spec, surface_quadrature(shape, N), tol=tol)
        return bounded_density_check(sol, shape, delta, checked=True)

    recs = []
    for i, res in enumerate(_map(evaluate, shapes, threads)):
        feasible = res is not None
        mx, bound, holds = res if feasible else (float("nan"), float("nan"), True)
        recs.append(
            SweepRecord(
                parameters={"index": i, "delta": delta, "N": N, "feasible": feasible},
                energies={"max_density": mx, "bound": bound},
                verdicts={"density_bound": holds},
            )
        )
    return recs


# ---------------------------------------------------------------- output


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return v


def write_records(records, csv_path, manifest_path=None, manifest=None):
    """CSV of flattened records (17 significant digits) and an optional JSON manifest."""
    rows = [r.as_row() for r in records]
    cols = []
    for row in rows:
        cols += [k for k in row if k not in cols]
    with open(csv_path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=cols, restval="")
        wr.writeheader()
        for row in rows:
            wr.writerow({k: _fmt(v) for k, v in row.items()})
    if manifest_path is not None:
        with open(manifest_path, "w") as fh:
            json.dump(manifest or {}, fh, indent=2, sort_keys=True, default=_json_default)


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)

