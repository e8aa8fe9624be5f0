"""The charged-drop functionals F and G, charge normalization and closed-form bounds.

``F(E) = P(E) + Q^2 I(E)`` minimizes the energy over all probability
measures on the closed set, ``G`` only over measures on the boundary.
"""

from dataclasses import asdict, dataclass
import csv
import json
import math

from .errors import ContractError
from .equilibrium import solve_equilibrium
from .geometry import mixed_quadrature, perimeter, surface_quadrature, volume
from .kernel import unit_ball_volume

__all__ = [
    "FunctionalReport",
    "evaluate_F",
    "evaluate_G",
    "normalized_charge",
    "charge_exponent",
    "equivalent_charge",
    "connected_lower_bound",
    "ball_functional",
    "scale_invariant_deficit",
    "write_reports",
]


@dataclass(frozen=True)
class FunctionalReport:
    """One evaluation of F or G on a shape."""

    kind: str
    perimeter: float
    riesz_energy: float
    charge: float
    total: float
    deficit: float
    normalized_charge: float
    volume: float
    nodes: int
    residual: float
    converged: bool
    iterations: int

    def as_row(self):
        return asdict(self)


def charge_exponent(d, alpha):
    """Exponent ``(d - 1 + alpha) / (2 d)`` of the mass in the normalized charge."""
    return (d - 1 + alpha) / (2.0 * d)


def normalized_charge(Q, m, d, alpha):
    """Scale-invariant charge ``Q / m^((d - 1 + alpha)/(2 d))``."""
    if not m > 0:
        raise ContractError("mass must be positive")
    return Q / m ** charge_exponent(d, alpha)


def equivalent_charge(Q, lam, d, alpha):
    """Charge that makes ``(lam E, Q')`` equivalent to ``(E, Q)``.

    ``F(lam E, Q') = lam^(d-1) F(E, Q)`` for ``Q' = Q lam^((d - 1 + alpha)/2)``.
    """
    return Q * lam ** ((d - 1 + alpha) / 2.0)


def scale_invariant_deficit(shape):
    """Deficit of the dilate of ``shape`` that has the unit ball's volume."""
    d = shape.dimension
    wd = unit_ball_volume(d)
    return perimeter(shape) * (wd / volume(shape)) ** ((d - 1) / d) - d * wd


def _report(kind, shape, spec, Q, sol):
    d = shape.dimension
    P = perimeter(shape)
    m = volume(shape)
    energy = 0.0 if sol is None else sol.energy
    alpha = 0.0 if spec.is_log else spec.alpha
    return FunctionalReport(
        kind=kind,
        perimeter=P,
        riesz_energy=energy,
        charge=float(Q),
        total=P + Q * Q * energy,
        deficit=scale_invariant_deficit(shape),
        normalized_charge=normalized_charge(Q, m, d, alpha),
        volume=m,
        nodes=0 if sol is None else sol.measure.size,
        residual=0.0 if sol is None else sol.residual,
        converged=True if sol is None else sol.converged,
        iterations=0 if sol is None else sol.iterations,
    )


def _check(shape, spec, Q):
    if Q < 0:
        raise ContractError("charge must be nonnegative")
    if shape.dimension != spec.dimension:
        raise ContractError("shape and kernel dimensions differ")


def evaluate_F(shape, spec, Q, n, tol=1e-6, model="lattice-local", interior_share=0.75):
    """Perimeter plus ``Q^2`` times the equilibrium energy of the closed set.

    For the logarithmic kernel and for ``alpha <= d - 2`` the optimal measure
    lives on the boundary, so only boundary nodes are used. Otherwise one
    boundary layer is mixed with stratified interior cells, with
    ``interior_share`` of the ``n`` nodes inside.
    """
    _check(shape, spec, Q)
    d = spec.dimension
    if spec.is_log or spec.alpha <= d - 2:
        quad = surface_quadrature(shape, n)
    else:
        n_int = int(round(interior_share * n))
        quad = mixed_quadrature(shape, n - n_int, n_int)
    sol = solve_equilibrium(spec, quad, tol=tol, model=model)
    return _report("F", shape, spec, Q, sol)


def evaluate_G(shape, spec, Q, n, tol=1e-6, model="lattice-local"):
    """Like :func:`evaluate_F` with the measure confined to the boundary."""
    _check(shape, spec, Q)
    if not spec.is_log and spec.alpha >= spec.dimension - 1:
        raise ContractError("boundary energies are infinite for alpha >= d - 1")
    sol = solve_equilibrium(spec, surface_quadrature(shape, n), tol=tol, model=model)
    return _report("G", shape, spec, Q, sol)


def ball_functional(d, alpha, Q, m=None):
    """Closed-form ``F`` of the ball of volume ``m`` (default: the unit ball)."""
    from .measure import ball_riesz_energy

    wd = unit_ball_volume(d)
    m = wd if m is None else m
    r = (m / wd) ** (1.0 / d)
    return d * wd * r ** (d - 1) + Q * Q * ball_riesz_energy(d, alpha) * r ** (-alpha)


def connected_lower_bound(delta, m, Q, d, alpha):
    """Lower bound on ``F`` over connected sets with the delta-ball condition.

    Isoperimetry gives the perimeter term; the diameter bound for connected
    sets of this class, ``diam <= sqrt(d) 2^(d+2) (m/omega_d) delta^(1-d)``,
    together with ``I(E) >= diam(E)^(-alpha)`` gives the charge term.
    """
    if not (delta > 0 and m > 0 and Q >= 0):
        raise ContractError("delta and m must be positive, Q nonnegative")
    wd = unit_ball_volume(d)
    ratio = m / wd
    iso = ratio ** ((d - 1) / d) * d * wd
    c = (math.sqrt(d) * 2.0 ** (d + 2)) ** (-alpha)
    return iso + Q * Q * c * ratio ** (-alpha) * delta ** ((d - 1) * alpha)


def write_reports(reports, csv_path, json_path=None, extra=None):
    """One CSV row per report (17 significant digits) and an optional JSON sidecar."""
    rows = [r.as_row() for r in reports]
    if not rows:
        raise ContractError("no reports to write")
    with open(csv_path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
        wr.writeheader()
        for row in rows:
            wr.writerow({k: format(v, ".17g") if isinstance(v, float) else v for k, v in row.items()})
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump({"reports": rows, **(extra or {})}, fh, indent=2, sort_keys=True)
