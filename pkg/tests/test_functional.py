import csv
import json
import math

import pytest

from chargedrop.errors import ContractError
from chargedrop.functional import (
    ball_functional,
    charge_exponent,
    connected_lower_bound,
    equivalent_charge,
    evaluate_F,
    evaluate_G,
    normalized_charge,
    scale_invariant_deficit,
    write_reports,
)
from chargedrop.geometry import Ball, BallUnion, NearlySpherical, enforce_volume
from chargedrop.kernel import KernelSpec
from chargedrop.measure import ball_riesz_energy

OMEGA3 = 4 * math.pi / 3


def test_F_of_unit_ball_coulomb():
    r = evaluate_F(Ball.unit(3), KernelSpec(3, 1.0), 1.0, 1500)
    assert r.total == pytest.approx(4 * math.pi + 1, rel=0.01)
    assert r.total == pytest.approx(ball_functional(3, 1.0, 1.0), rel=0.01)
    assert r.converged and r.deficit == pytest.approx(0.0, abs=1e-12)


def test_F_without_charge_is_the_perimeter():
    s = NearlySpherical(1.0, {(2, 0): 0.1})
    r = evaluate_F(s, KernelSpec(3, 1.0), 0.0, 300)
    assert r.total == r.perimeter


def test_F_of_ball_with_interior_charge():
    r = evaluate_F(Ball.unit(3), KernelSpec(3, 1.5), 2.0, 2000)
    assert r.riesz_energy == pytest.approx(ball_riesz_energy(3, 1.5), rel=0.03)


def test_dilation_law():
    spec = KernelSpec(3, 1.0)
    s = NearlySpherical(1.0, {(2, 0): 0.1})
    lam = 1.7
    big = NearlySpherical(lam, {(2, 0): 0.1})  # R = r0 (1 + phi)
    a = evaluate_F(s, spec, 1.3, 800, tol=1e-9)
    b = evaluate_F(big, spec, equivalent_charge(1.3, lam, 3, 1.0), 800, tol=1e-9)
    assert b.total == pytest.approx(lam**2 * a.total, rel=1e-7)
    assert b.normalized_charge == pytest.approx(a.normalized_charge, rel=1e-12)


def test_G_equals_F_for_superharmonic_kernels():
    spec = KernelSpec(3, 0.5)
    s = NearlySpherical(1.0, {(3, 2): 0.05})
    assert evaluate_G(s, spec, 1.0, 500).total == evaluate_F(s, spec, 1.0, 500).total


def test_G_dominates_F_when_the_interior_is_charged():
    spec = KernelSpec(3, 1.5)
    f = evaluate_F(Ball.unit(3), spec, 1.0, 1600)
    g = evaluate_G(Ball.unit(3), spec, 1.0, 400)
    assert g.total > f.total
    with pytest.raises(ContractError):
        evaluate_G(Ball.unit(3), KernelSpec(3, 2.0), 1.0, 100)


def test_functional_contracts():
    with pytest.raises(ContractError):
        evaluate_F(Ball.unit(3), KernelSpec(3, 1.0), -1.0, 100)
    with pytest.raises(ContractError):
        evaluate_F(Ball.unit(2), KernelSpec(3, 1.0), 1.0, 100)
    with pytest.raises(ContractError):
        normalized_charge(1.0, 0.0, 3, 1.0)


def test_normalized_charge_examples():
    assert charge_exponent(3, 1.0) == pytest.approx(0.5)
    assert normalized_charge(2.0, 4.0, 3, 1.0) == pytest.approx(1.0)
    assert normalized_charge(1.0, 1.0, 2, 0.5) == 1.0


@pytest.mark.parametrize("d,alpha", [(2, 0.5), (3, 1.0), (3, 1.7)])
def test_normalized_charge_is_dilation_invariant(d, alpha):
    for lam in (0.3, 2.0, 5.5):
        q = equivalent_charge(1.7, lam, d, alpha)
        assert normalized_charge(q, 2.0 * lam**d, d, alpha) == pytest.approx(normalized_charge(1.7, 2.0, d, alpha))


def test_ball_functional_scaling():
    assert ball_functional(3, 1.0, 0.0) == pytest.approx(4 * math.pi)
    m = 8 * OMEGA3  # radius 2
    assert ball_functional(3, 1.0, 1.0, m) == pytest.approx(16 * math.pi + 0.5)


def test_scale_invariant_deficit():
    assert scale_invariant_deficit(Ball.unit(3, 3.0)) == pytest.approx(0.0, abs=1e-12)
    assert scale_invariant_deficit(BallUnion((Ball((0, 0, 0), 1.0), Ball((5, 0, 0), 1.0)))) > 0


def test_connected_lower_bound_example():
    expected = 4 * math.pi + 1 / (math.sqrt(3) * 32)
    assert connected_lower_bound(1.0, OMEGA3, 1.0, 3, 1.0) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ContractError):
        connected_lower_bound(0.0, OMEGA3, 1.0, 3, 1.0)


def test_connected_lower_bound_is_below_F():
    spec = KernelSpec(3, 1.0)
    for shape in (Ball.unit(3), enforce_volume(NearlySpherical(1.0, {(2, 0): 0.1}), OMEGA3)):
        for Q in (0.5, 3.0, 10.0):
            f = evaluate_F(shape, spec, Q, 600).total
            assert connected_lower_bound(0.5, OMEGA3, Q, 3, 1.0) < f


def test_write_reports(tmp_path):
    r = evaluate_F(Ball.unit(3), KernelSpec(3, 1.0), 1.0, 200)
    write_reports([r, r], tmp_path / "f.csv", tmp_path / "f.json", extra={"note": "x"})
    rows = list(csv.DictReader(open(tmp_path / "f.csv")))
    assert len(rows) == 2 and float(rows[0]["total"]) == r.total
    data = json.loads((tmp_path / "f.json").read_text())
    assert data["note"] == "x" and data["reports"][0]["kind"] == "F"
    with pytest.raises(ContractError):
        write_reports([], tmp_path / "g.csv")
