from fractions import Fraction

import pytest

from randamp import _simplex
from randamp.boxes import bell_value_exact, validate_behavior
from randamp.ks_bell import build_bell_functional, build_ks_model
from randamp.ns_certify import (DualCertificate, build_lp, max_target_box,
                                randomness_bound, solve_lp,
                                var_index, verify_certificate,
                                zero_target_box)


@pytest.fixture(scope="module")
def functional():
    return build_bell_functional(build_ks_model())


@pytest.fixture(scope="module")
def lp_zero(functional):
    return build_lp(functional, 0)


@pytest.fixture(scope="module")
def sol_zero(lp_zero):
    return solve_lp(lp_zero, sense="max", mode="exact")


def test_problem_shape(lp_zero):
    assert lp_zero.num_vars == 1296
    assert lp_zero.n_equalities == 81 + 288 + 288
    assert len(lp_zero.cap_cols) == 504
    for row in lp_zero.eq_rows:
        assert all(v in (-1, 1) for _, v in row)
    assert lp_zero.target_col == var_index(1, 2, 1, 3)


def test_build_lp_rejects_bad_inputs(functional):
    with pytest.raises(ValueError):
        build_lp(functional, -1)
    with pytest.raises(ValueError):
        build_lp(functional, 0, target=((0, 1), (1, 2)))


def test_optimum_at_zero_cap_is_three_quarters(sol_zero, lp_zero):
    assert sol_zero.exact_optimum == Fraction(3, 4)
    assert sol_zero.certified_equality        # bound attained, not just <=
    assert verify_certificate(lp_zero, sol_zero.certificate)
    assert sol_zero.certificate.bound == Fraction(3, 4)


def test_primal_at_zero_cap_is_attack_box(sol_zero, functional):
    box = sol_zero.primal
    assert validate_behavior(box, tol=1e-12).ok
    assert bell_value_exact(box, functional) == 0
    assert box.prob_exact((1, 3), (1, 2)) == Fraction(3, 4)
    # cap = 0 plus nonnegativity force every indicator cell to exact zero
    for (x1, x2), (u1, u2) in functional.sb:
        assert box.prob_exact((x1, x2), (u1, u2)) == 0


def test_zero_target_attack_box(functional):
    box, val = zero_target_box(functional)
    assert val == 0
    assert validate_behavior(box, tol=1e-12).ok
    assert bell_value_exact(box, functional) == 0
    assert box.prob_exact((1, 3), (1, 2)) == 0


def test_grid_certified_values(functional):
    # Exact optima produced by the certified primal/dual sandwich; frozen
    # as regression values.  The reference bound (3+2d)/4 must dominate.
    frozen = {
        Fraction(0): Fraction(3, 4),
        Fraction(1, 10): Fraction(23, 30),
        Fraction(3, 10): Fraction(4, 5),
        Fraction(1, 2): Fraction(5, 6),
    }
    for cap, expect in frozen.items():
        p = build_lp(functional, cap)
        sol = solve_lp(p, sense="max", mode="exact")
        assert sol.exact_optimum == expect
        assert sol.certified_equality
        assert verify_certificate(p, sol.certificate)
        assert sol.exact_optimum <= Fraction(3, 4) + cap / 2


def test_monotonicity_and_reference_bound(functional):
    prev = Fraction(-1)
    for k in range(0, 11, 2):
        cap = Fraction(k, 20)
        sol = solve_lp(build_lp(functional, cap), mode="exact")
        assert sol.exact_optimum >= prev
        assert sol.exact_optimum <= min(Fraction(1), Fraction(3, 4) + cap / 2)
        prev = sol.exact_optimum


def test_certificate_tamper_detection(lp_zero, sol_zero):
    cert = sol_zero.certificate
    bad_y = list(cert.y)
    bad_y[0] += Fraction(1, 1000)
    assert not verify_certificate(lp_zero, DualCertificate(
        y=tuple(bad_y), beta=cert.beta, bound=cert.bound,
        delta_tilde=cert.delta_tilde, target=cert.target))
    zero = DualCertificate(y=tuple([Fraction(0)] * lp_zero.n_equalities),
                           beta=Fraction(0), bound=Fraction(0),
                           delta_tilde=Fraction(0), target=cert.target)
    assert not verify_certificate(lp_zero, zero)
    # claiming a smaller bound than the multipliers deliver must fail
    assert not verify_certificate(lp_zero, cert, claimed_bound=Fraction(1, 2))


def test_certificate_json_roundtrip(lp_zero, sol_zero):
    text = sol_zero.certificate.to_json()
    back = DualCertificate.from_json(text)
    assert back == sol_zero.certificate
    assert verify_certificate(lp_zero, back)


def test_float_mode_matches_exact(lp_zero, sol_zero):
    fast = solve_lp(lp_zero, mode="float")
    assert fast.certificate is None
    assert fast.optimum == pytest.approx(float(sol_zero.exact_optimum), abs=1e-9)


def test_weak_duality_on_feasible_points(functional, sol_zero):
    # any verified certificate bounds any feasible primal's target entry
    box, val = max_target_box(functional, Fraction(1, 10))
    assert val <= Fraction(3, 4) + Fraction(1, 20)
    assert sol_zero.certificate.bound >= Fraction(3, 4)


def test_randomness_bound_values():
    assert randomness_bound(0.0, 0.0) == 0.75
    assert randomness_bound(0.05 * 0.5 ** 8, 0.0) == pytest.approx(0.775)
    saturation = 0.5 ** 8 / 2
    assert randomness_bound(saturation, 0.0) == pytest.approx(1.0)
    assert randomness_bound(2 * saturation, 0.0) == 1.0
    with pytest.raises(ValueError):
        randomness_bound(0.1, 0.5)
    with pytest.raises(ValueError):
        randomness_bound(-0.1, 0.0)


# --- the in-package Bland engine on small systems -------------------------


def test_simplex_small_lp_float_and_exact():
    # max x0 + x1 s.t. x0 + x1 + s = 1 -> min -(x0+x1); optimum -1
    rows = [[(0, 1), (1, 1), (2, 1)]]
    rhs = [1]
    cost = {0: -1, 1: -1}
    for exact in (False, True):
        res = _simplex.solve_standard_form(rows, rhs, cost, 3, exact=exact)
        assert res.status == "optimal"
        assert res.objective == (Fraction(-1) if exact else pytest.approx(-1.0))


def test_simplex_degenerate_and_duals():
    # min -2a - 3b  s.t. a + b + s1 = 4, a + 2b + s2 = 6
    rows = [[(0, 1), (1, 1), (2, 1)], [(0, 1), (1, 2), (3, 1)]]
    rhs = [4, 6]
    cost = {0: -2, 1: -3}
    res = _simplex.solve_standard_form(rows, rhs, cost, 4, exact=True)
    assert res.status == "optimal"
    assert res.objective == Fraction(-10)
    assert res.x[0] == 2 and res.x[1] == 2
    # duals certify the optimum: y.b == objective at optimality
    assert sum(y * b for y, b in zip(res.y, rhs)) == Fraction(-10)


def test_simplex_infeasible_detected():
    # x0 + s = 1 and x0 - t = 2 with s,t >= 0 is infeasible... use equalities:
    rows = [[(0, 1)], [(0, 1)]]
    rhs = [1, 2]
    res = _simplex.solve_standard_form(rows, rhs, {0: 1}, 1, exact=True)
    assert res.status == "infeasible"


def test_simplex_unbounded_detected():
    # min -x0 with x0 - x1 = 0: ray x0 = x1 -> unbounded
    rows = [[(0, 1), (1, -1)]]
    rhs = [0]
    res = _simplex.solve_standard_form(rows, rhs, {0: -1}, 2, exact=True)
    assert res.status == "unbounded"
