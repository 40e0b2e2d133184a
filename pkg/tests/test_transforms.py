import math

import numpy as np
import pytest
from scipy.optimize import bisect

from aggrekin import (
    BlowupState,
    CompactState,
    ConditionViolated,
    NoSignChange,
    OutsideTriangle,
    SingularDenominator,
    State,
    ZeroMass,
    ZeroQ,
    alpha_bar,
    blowup_field,
    compact_field,
    decay_coefficient,
    find_p1_star,
    find_slow_constants,
    from_blowup,
    from_compact,
    growth_condition,
    layer_u_field,
    layer_v_field,
    manifold_field,
    reduced_manifold,
    slow_W,
    solve_v_star,
    stable_aggregate_condition,
    large_initial_state,
    to_blowup,
    to_compact,
    validate_params,
    vector_field,
)
from aggrekin.analysis import random_admissible_states
from aggrekin.transforms import a_star_formula, b_formula, v_star_formula

from test_model import params, random_params

V_STAR_FIG4 = -math.sqrt(156.8 / 765.0)


# -- blow-up chart -----------------------------------------------------------

def test_blowup_example(init):
    bs = to_blowup(init)
    assert (bs.p1, bs.q1, bs.r1) == (0.5, 4.0, 0.75)
    assert bs.r1 <= 1.0 and bs.p1 <= 5 * bs.r1 - 2


def test_blowup_round_trip(rng):
    for s in random_admissible_states(5, 1000, rng, r_range=(1e-3, 1e3), margin=0.0):
        back = from_blowup(to_blowup(s))
        np.testing.assert_allclose(back.as_array(), s.as_array(), rtol=1e-12)


def test_blowup_zero_q():
    with pytest.raises(ZeroQ):
        to_blowup(State(0.0, 0.0, 0.0))


def blowup_oracle(s: State, params):
    """Chain rule: d/dT = r1 d/dt with p1 = p/q, r1 = r/q."""
    dp, dq, dr = vector_field(s, params)
    p, q, r = s.p, s.q, s.r
    r1 = r / q
    return np.array([r1 * (dp * q - p * dq) / q**2, r1 * dq, r1 * (dr * q - r * dq) / q**2])


def test_blowup_field_matches_chain_rule(fig3, fig4, rng):
    for prm in (fig3, fig4):
        for s in random_admissible_states(5, 200, rng):
            got = np.array(blowup_field(to_blowup(s), prm))
            want = blowup_oracle(s, prm)
            np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-11 * np.abs(want).max())


def test_blowup_outside_triangle(fig3):
    with pytest.raises(OutsideTriangle):
        blowup_field(BlowupState(0.5, 1.0, 1.2), fig3)
    with pytest.raises(OutsideTriangle):
        blowup_field(BlowupState(2.0, 1.0, 0.75), fig3)


def test_q1_zero_invariant(rng):
    for prm in random_params(rng, 50):
        n = prm.n
        for r1 in np.linspace(2.0 / n, 1.0, 5):
            for p1 in np.linspace(0.0, n * r1 - 2.0, 5):
                assert blowup_field(BlowupState(p1, 0.0, r1), prm).dq1 == 0.0


def test_r1_one_invariant_on_q1_zero_plane(rng):
    for prm in random_params(rng, 50):
        for p1 in np.linspace(0.0, prm.n - 2.0, 7):
            assert blowup_field(BlowupState(p1, 0.0, 1.0), prm).dr1 == 0.0
            assert manifold_field(p1, 1.0, prm)[1] == 0.0


def test_manifold_field_is_restriction(rng):
    for prm in random_params(rng, 50):
        n = prm.n
        for r1 in np.linspace(2.0 / n, 1.0, 4):
            for p1 in np.linspace(0.0, n * r1 - 2.0, 4):
                full = blowup_field(BlowupState(p1, 0.0, r1), prm)
                dp1, dr1 = manifold_field(p1, r1, prm)
                assert abs(dp1 - full.dp1) <= 1e-15 * max(1.0, abs(dp1))
                assert abs(dr1 - full.dr1) <= 1e-15 * max(1.0, abs(dr1))


def test_manifold_field_displays(fig4):
    n, k1, k2, km1, km = 5, 1.0, 1.0, 1.0, 0.2
    # Direct substitution gives -(n-2)((n-1) k2 + k-1); the often quoted
    # -(n-2)(n k2 + k-1) has the same (negative) sign, which is what matters.
    dp1, _ = manifold_field(n - 2.0, 1.0, fig4)
    assert dp1 == pytest.approx(-(n - 2) * ((n - 1) * k2 + km1), rel=1e-14)
    assert dp1 < 0
    dp1, _ = manifold_field(km / k2, 1.0, fig4)
    want = (k1 * k2 * (n - 2) ** 2 - km * (k1 + km1) * (n - 2) - km**2 * (n - 1)) / (k2 * (n - 2))
    assert dp1 == pytest.approx(want, rel=1e-14)
    _, dr1 = manifold_field(0.0, 2.0 / n, fig4)
    assert dr1 == pytest.approx((1 - 2 / n) * km * (2 / (n - 2) - 2 / n), rel=1e-14)
    assert dr1 > 0


def test_sign_dichotomy(rng):
    seen = set()
    for prm in random_params(rng, 500):
        d = manifold_field(prm.kappa_m / prm.kappa2, 1.0, prm)[0] if prm.kappa_m / prm.kappa2 <= prm.n - 2 else None
        if d is None or abs(alpha_bar(prm) - 1) < 1e-9:
            continue
        assert (d > 0) == stable_aggregate_condition(prm)
        seen.add(d > 0)
    assert seen == {True, False}


def test_p1_star(fig4):
    p1 = find_p1_star(fig4)
    assert fig4.kappa_m / fig4.kappa2 < p1 < fig4.n - 2
    assert abs(manifold_field(p1, 1.0, fig4)[0]) < 1e-10
    assert manifold_field(p1 - 1e-6, 1.0, fig4)[0] > 0 > manifold_field(p1 + 1e-6, 1.0, fig4)[0]
    # oracle: plain bisection
    oracle = bisect(lambda x: manifold_field(x, 1.0, fig4)[0], 0.2, 3.0, xtol=1e-15)
    assert p1 == pytest.approx(oracle, abs=1e-12)
    n, k2, km = 5, 1.0, 0.2
    assert k2 * p1 + km * (2 / (n - 2) - 1) > 2 * km / (n - 2)


def test_p1_star_preconditions(fig5):
    with pytest.raises(NoSignChange):
        find_p1_star(fig5)
    with pytest.raises(NoSignChange):
        find_p1_star(params(kappa2=0.1, kappa1=100.0, kappa_m=1.0))


# -- compactification ---------------------------------------------------------

def test_compact_round_trip(rng):
    for s in random_admissible_states(5, 1000, rng, r_range=(1e-3, 1e3), margin=0.0):
        back = from_compact(to_compact(s, 5), 5)
        np.testing.assert_allclose(back.as_array(), s.as_array(), rtol=1e-12, atol=1e-12 * s.q)


def test_compact_of_large_data():
    for c1, c2, d in [(1.0, 0.5, 0.01), (3.0, -2.0, 0.1), (0.2, 4.0, 1e-3)]:
        cs = to_compact(large_initial_state(c1, c2, d, 5), 5)
        root = math.sqrt(1 + c1 * d)
        assert cs.u == pytest.approx(c1 / root, rel=1e-12)
        assert cs.v == pytest.approx((2 * c1 - c2) / root, rel=1e-9, abs=1e-12)
        assert cs.w == pytest.approx(d / root, rel=1e-12)


def test_fully_cross_linked_maps_to_v_zero():
    assert to_compact(State(1.0, 4.0, 2.0), 5).v == 0.0


def test_compact_zero_mass():
    with pytest.raises(ZeroMass):
        to_compact(State(0.0, 0.0, 0.0), 5)
    with pytest.raises(ZeroMass):
        from_compact(CompactState(1.0, 0.0, 0.0), 5)


def compact_oracle(s: State, params):
    """Chain rule: d/dtau = w d/dt with u = p/sqrt(m), v = (2m - n r)/sqrt(m), w = 1/sqrt(m)."""
    n = params.n
    dp, dq, dr = vector_field(s, params)
    m = s.p + s.q
    dm = dp + dq
    w = 1.0 / math.sqrt(m)
    du = dp / math.sqrt(m) - 0.5 * s.p * dm / m**1.5
    dv = (2 * dm - n * dr) / math.sqrt(m) - 0.5 * (2 * m - n * s.r) * dm / m**1.5
    dw = -0.5 * dm / m**1.5
    return w * np.array([du, dv, dw])


def test_compact_field_matches_chain_rule(fig3, fig4, rng):
    for prm in (fig3, fig4):
        for s in random_admissible_states(5, 200, rng):
            got = np.array(compact_field(to_compact(s, 5), prm))
            want = compact_oracle(s, prm)
            np.testing.assert_allclose(got, want, rtol=1e-8, atol=1e-10 * np.abs(want).max())


def test_w_zero_invariant_and_reduced_manifold(fig4, rng):
    for v in rng.uniform(-3, 3, 100):
        u = reduced_manifold(v, fig4)
        rates = compact_field(CompactState(u, v, 0.0), fig4)
        assert rates.dv == 0.0 and rates.dw == 0.0
        assert abs(rates.du) < 1e-14 * max(1.0, u * u)


def test_w_decreases_when_decay_positive(fig4, rng):
    for s in random_admissible_states(5, 200, rng):
        cs = to_compact(s, 5)
        if decay_coefficient(cs.u, cs.v, cs.w, fig4) > 0:
            assert compact_field(cs, fig4).dw < 0


def test_singular_denominator(fig4):
    with pytest.raises(SingularDenominator):
        compact_field(CompactState(0.1, 4.0, 0.5), fig4)


# -- layer problems and slow constants -----------------------------------------

def test_reduced_manifold(fig4, rng):
    assert reduced_manifold(0.0, fig4) == pytest.approx(math.sqrt(0.2), rel=1e-15)
    assert reduced_manifold(-1e8, fig4) < 1e-8
    assert reduced_manifold(1e8, fig4) > 1e7
    for v in rng.uniform(-50, 50, 200):
        U = reduced_manifold(v, fig4)
        assert U > 0
        assert fig4.kappa3 * U * (U - v) == pytest.approx(fig4.kappa_m, rel=1e-12)
        h = 1e-6 * max(1.0, abs(v))
        slope = (reduced_manifold(v + h, fig4) - reduced_manifold(v - h, fig4)) / (2 * h)
        assert 0 < slope < 1


def test_layer_fields(fig4):
    assert layer_u_field(reduced_manifold(0.3, fig4), 0.3, fig4) == pytest.approx(0.0, abs=1e-15)
    vs = solve_v_star(fig4)
    assert abs(layer_v_field(vs, 1.0, fig4)) < 1e-12
    assert layer_v_field(vs - 0.1, 1.0, fig4) > 0 > layer_v_field(vs + 0.1, 1.0, fig4)


def test_v_star_closed_form_oracle(fig4):
    # At these rates the v-layer field is affine in (U, v): U = -17 v / 28,
    # which with U (U - v) = 0.2 gives v*^2 = 156.8/765.
    assert V_STAR_FIG4 == pytest.approx(-0.452733, abs=1e-6)
    oracle = bisect(lambda v: layer_v_field(v, 1.0, fig4), -10.0, 10.0, xtol=1e-15)
    assert oracle == pytest.approx(V_STAR_FIG4, abs=1e-9)
    assert solve_v_star(fig4) == pytest.approx(V_STAR_FIG4, abs=1e-12)


def test_growth_slow_constants(fig4):
    sc = find_slow_constants(fig4, 0.01)
    u_star = -17.0 / 28.0 * V_STAR_FIG4
    assert sc.v_star == pytest.approx(V_STAR_FIG4, abs=1e-12)
    assert sc.u_star == pytest.approx(u_star, abs=1e-12)
    assert sc.u_star == pytest.approx(0.274874, abs=1e-6)
    assert fig4.kappa3 * sc.u_star * (sc.u_star - sc.v_star) == pytest.approx(fig4.kappa_m, abs=1e-12)
    # A* by hand from A(u, v, 0) = (k1 (u - v) - k-1 u - k- n (n-1) u / (2 (n-2))) / 2
    a_hand = 0.5 * ((u_star - V_STAR_FIG4) - u_star - 0.2 * 20 * u_star / 6)
    assert sc.A_star == pytest.approx(a_hand, rel=1e-12)
    assert sc.A_star == pytest.approx(0.134742, abs=1e-6)
    assert sc.epsilon == 0.01


def test_b_variants(fig4):
    sc = find_slow_constants(fig4, 0.1)
    assert sc.B_consistent and sc.B_variant == "product"
    assert v_star_formula(fig4, "product") == pytest.approx(sc.v_star, rel=1e-9)
    assert abs(v_star_formula(fig4, "printed") - sc.v_star) > 1e-3
    assert a_star_formula(fig4, "product") == pytest.approx(sc.A_star, rel=1e-9)
    assert sc.B_formula == b_formula(fig4, "product")
    assert set(sc.to_dict()) >= {"u_star", "v_star", "B_formula", "B_consistent", "A_star", "epsilon"}


def test_b_product_variant_on_random_growth_params(rng):
    checked = 0
    for prm in random_params(rng, 400):
        if not growth_condition(prm):
            continue
        sc = find_slow_constants(prm, 0.1)
        assert sc.B_variant == "product" and sc.B_consistent
        checked += 1
    assert checked > 20


def test_slow_constants_condition(fig3):
    # 4 * 9 = 36 < 5 * 0.6 * (2*2*3 + 0.6*5*4) = 54
    with pytest.raises(ConditionViolated):
        find_slow_constants(fig3, 0.1)


def test_a_star_positive_iff_growth_condition(rng):
    for prm in random_params(rng, 1000):
        vs = solve_v_star(prm)
        a = decay_coefficient(reduced_manifold(vs, prm), vs, 0.0, prm)
        if abs(alpha_bar(prm)) > 1e-6:
            assert (a > 0) == growth_condition(prm)


def test_slow_W():
    assert slow_W(0.0, 0.134742, 0.01) == 1.0
    sigma = np.linspace(0.0, 1e4, 100)
    W = slow_W(sigma, 0.134742, 0.01)
    dW = -0.5 * 2 * 0.134742 * 0.01 * (1 + 2 * 0.134742 * 0.01 * sigma) ** -1.5
    np.testing.assert_allclose(dW + 0.01 * 0.134742 * W**3, 0.0, atol=1e-14)
    assert slow_W(1e4, 0.134742, 0.01) == pytest.approx((1 + 26.9484) ** -0.5, rel=1e-12)
    assert slow_W(1e4, 0.134742, 0.01) == pytest.approx(0.189157, abs=1e-6)
