import math

import numpy as np
import pytest
from scipy import special

from multicomm.lattice import GridSpec
from multicomm.zonal import (
    JourneConeSpec,
    PhiProfile,
    iterated_cone_expectation,
    journe_cone_eval,
    journe_multiplier,
    mc_conditional_expectation,
    phi_coefficients,
    plateau_certificate,
    zonal_eval,
    zonal_table,
)


def unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def rot(theta):
    return np.array([math.cos(theta), math.sin(theta)])


def linear_profile(t):
    return np.asarray(t, dtype=float)


def test_zonal_low_degrees():
    t = np.linspace(-1, 1, 21)
    for d in range(2, 8):
        assert np.all(zonal_eval(0, d, t) == 1)
        assert np.allclose(zonal_eval(1, d, t), t)
    assert zonal_eval(2, 3, 0.0) == pytest.approx(-0.5, abs=1e-15)
    assert np.allclose(zonal_eval(2, 3, t), (3 * t**2 - 1) / 2)


def test_zonal_circle_is_chebyshev():
    t = np.linspace(-1, 1, 41)
    for n in range(12):
        assert np.allclose(zonal_eval(n, 2, t), np.cos(n * np.arccos(t)), atol=1e-12)


def test_zonal_matches_gegenbauer():
    t = np.linspace(-1, 1, 33)
    for d in range(3, 9):
        lam = (d - 2) / 2
        for n in range(10):
            ref = special.eval_gegenbauer(n, lam, t) / special.eval_gegenbauer(n, lam, 1.0)
            assert np.allclose(zonal_eval(n, d, t), ref, atol=1e-12)


def test_normalization_and_parity():
    t = np.linspace(0, 1, 17)
    for d in range(2, 9):
        tab = zonal_table(64, d, 1.0)
        assert np.all(tab == 1.0)
        Zp, Zm = zonal_table(64, d, t), zonal_table(64, d, -t)
        sign = (-1.0) ** np.arange(65)
        assert np.allclose(Zm, sign[:, None] * Zp, atol=1e-12)


def test_zonal_rejects_bad_argument():
    with pytest.raises(ValueError):
        zonal_eval(2, 3, 1.1)
    with pytest.raises(ValueError):
        zonal_eval(2, 1, 0.5)


def test_profile_shape():
    p = PhiProfile()
    assert p(1.0) == 1 and p(0.0) == 0 and p(-1.0) == -1
    t = np.linspace(-1, 1, 1001)
    assert np.allclose(p(-t), -p(t))
    assert np.all(np.abs(p(t)) <= 1)
    assert np.all(p(t[(t >= 0) & (t <= 0.25)]) == 0)
    assert np.all(p(t[t >= 0.75]) == 1)
    assert PhiProfile.parse("a=0.8,b=0.3").a == 0.8
    with pytest.raises(ValueError):
        PhiProfile(0.3, 0.5)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_even_coefficients_vanish(d):
    co = phi_coefficients(PhiProfile(), d, 41)
    assert np.max(np.abs(co.values[::2])) <= 1e-10
    assert co.quad_residual <= 1e-10


@pytest.mark.parametrize("d", [2, 3, 4])
def test_reconstruction_improves_with_degree(d):
    p = PhiProfile()
    # away from the two transition intervals
    t = np.concatenate([np.linspace(-1, -0.8, 50), np.linspace(-0.2, 0.2, 50), np.linspace(0.8, 1, 50)])
    errs = [np.max(np.abs(phi_coefficients(p, d, N).synthesize(t) - p(t))) for N in (11, 21, 41)]
    assert errs[0] > errs[1] > errs[2]
    deltas = [phi_coefficients(p, d, N).delta for N in (11, 21, 41)]
    assert deltas[0] > deltas[1] > deltas[2]
    assert all(e <= dl for e, dl in zip(errs, deltas))


def test_linear_profile_is_first_harmonic():
    for d in (2, 3, 5):
        co = phi_coefficients(linear_profile, d, 9)
        want = np.zeros(10)
        want[1] = 1
        assert np.allclose(co.values, want, atol=1e-10)


def test_cone_eval_at_poles_and_flip():
    spec = JourneConeSpec((1, 2), (tuple(rot(0.4)), tuple(rot(2.0))), N=41)
    co = spec.coefficients()
    at_poles = journe_cone_eval(spec, rot(0.4), rot(2.0))
    assert at_poles == pytest.approx(co.values.sum(), abs=1e-13)
    assert abs(at_poles - 1) <= co.delta
    rng = np.random.default_rng(0)
    for _ in range(20):
        e1, e2 = unit(rng, 2), unit(rng, 2)
        v = journe_cone_eval(spec, e1, e2)
        assert journe_cone_eval(spec, -e1, e2) == pytest.approx(-v, abs=1e-13)
        assert journe_cone_eval(spec, e1, -e2) == pytest.approx(-v, abs=1e-13)
    with pytest.raises(ValueError):
        journe_cone_eval(spec, np.array([1.0, 1.0]), rot(0.1))


def test_cone_eval_matches_iterated_expectation_circle():
    spec = JourneConeSpec((1, 2), ((1.0, 0.0), (0.0, 1.0)), N=41)
    rng = np.random.default_rng(1)
    for _ in range(50):
        e1, e2 = unit(rng, 2), unit(rng, 2)
        assert abs(journe_cone_eval(spec, e1, e2) - iterated_cone_expectation(spec, [e1, e2])) <= 1e-10


def test_cone_eval_matches_iterated_expectation_sphere():
    spec = JourneConeSpec((1, 2), ((0.0, 0.0, 1.0), (0.6, 0.8, 0.0)), N=11)
    rng = np.random.default_rng(2)
    e1, e2 = unit(rng, 3), unit(rng, 3)
    mc = iterated_cone_expectation(spec, [e1, e2], samples=200_000, seed=3)
    assert abs(journe_cone_eval(spec, e1, e2) - mc) <= 1e-2


def test_mc_trivial_cases():
    rng = np.random.default_rng(3)
    xi1, xi2, eta1, eta2 = (unit(rng, 3) for _ in range(4))
    est, err = mc_conditional_expectation(0, 3, xi1, xi2, eta1, eta2, samples=10_000)
    assert est == 1.0 and err == 0.0
    est, err = mc_conditional_expectation(4, 3, xi1, xi2, eta1, xi2, samples=10_000)
    assert err == 0.0
    assert est == pytest.approx(zonal_eval(4, 3, float(xi1 @ eta1)), abs=1e-12)


def test_mc_product_formula_sphere():
    rng = np.random.default_rng(4)
    xi1, xi2, eta1, eta2 = (unit(rng, 3) for _ in range(4))
    est, err = mc_conditional_expectation(3, 3, xi1, xi2, eta1, eta2, samples=10**6, seed=7)
    want = zonal_eval(3, 3, float(xi1 @ eta1)) * zonal_eval(3, 3, float(xi2 @ eta2))
    assert abs(est - want) <= 3 * err


def test_mc_product_formula_circle_is_exact():
    rng = np.random.default_rng(5)
    for n in range(7):
        xi1, xi2, eta1, eta2 = (unit(rng, 2) for _ in range(4))
        est, err = mc_conditional_expectation(n, 2, xi1, xi2, eta1, eta2)
        want = zonal_eval(n, 2, float(xi1 @ eta1)) * zonal_eval(n, 2, float(xi2 @ eta2))
        assert err == 0.0 and est == pytest.approx(want, abs=1e-12)


def test_mc_is_reproducible():
    rng = np.random.default_rng(6)
    args = [unit(rng, 4) for _ in range(4)]
    a = mc_conditional_expectation(2, 4, *args, samples=150_000, seed=11)
    b = mc_conditional_expectation(2, 4, *args, samples=150_000, seed=11)
    assert a == b


def test_journe_multiplier_properties():
    grid = GridSpec(((2, 16), (2, 16)))
    spec = JourneConeSpec((1, 2), ((1.0, 0.0), tuple(rot(1.0))), N=21)
    m = journe_multiplier(spec, grid)
    sym = m.full_symbol().real
    delta = spec.coefficients().delta
    assert np.max(np.abs(sym)) <= 1 + delta
    assert sym[0, 0, 3, 1] == 0 and sym[2, 1, 0, 0] == 0
    # odd in each parameter separately (skip the unpaired frequency -N/2)
    idx = np.array([i for i in range(16) if i not in (0, 8)])
    neg = (16 - idx) % 16
    block = np.ix_(idx, idx, idx, idx)
    assert np.allclose(sym[np.ix_(neg, neg, idx, idx)], -sym[block], atol=1e-12)
    assert np.allclose(sym[np.ix_(idx, idx, neg, neg)], -sym[block], atol=1e-12)
    cert = m.meta["certificate"]
    assert cert["certified"] and cert["plateau_points"] > 0 and cert["flipped_points"] > 0


def test_unequal_dimensions_embed():
    grid = GridSpec(((1, 16), (2, 16)))
    spec = JourneConeSpec((1, 2), ((1.0,), (0.0, 1.0)), N=21)
    assert spec.d == 2
    sym = journe_multiplier(spec, grid).full_symbol().real
    assert sym[3, 0, 5] == pytest.approx(journe_cone_eval(spec, [1.0], [0.0, 1.0]), abs=1e-12)
    assert np.allclose(sym[-3], -sym[3])


@pytest.mark.parametrize("N", [11, 21, 41])
def test_truncation_honesty_on_plateau(N):
    spec = JourneConeSpec((1, 2), ((1.0, 0.0), (0.0, 1.0)), N=N)
    r = spec.profile.plateau_radius
    delta = spec.coefficients().delta
    rng = np.random.default_rng(N)
    d1 = rng.uniform(0, r, 1000)
    d2 = rng.uniform(0, 1, 1000) * (r - d1)
    s1, s2 = rng.choice([-1, 1], 1000), rng.choice([-1, 1], 1000)
    e1 = np.stack([np.cos(s1 * d1), np.sin(s1 * d1)], axis=1)
    e2 = np.stack([-np.sin(s2 * d2), np.cos(s2 * d2)], axis=1)
    vals = journe_cone_eval(spec, e1, e2)
    assert np.max(np.abs(vals - 1)) <= delta
    assert np.max(np.abs(journe_cone_eval(spec, -e1, e2) + 1)) <= delta
    assert np.max(np.abs(journe_cone_eval(spec, e1, -e2) + 1)) <= delta


def test_certificate_without_symbol():
    grid = GridSpec(((2, 8), (2, 8)))
    spec = JourneConeSpec((1, 2), ((1.0, 0.0), (0.0, 1.0)), N=11)
    cert = plateau_certificate(spec, grid)
    assert cert["radius"] == pytest.approx(math.pi / 8)
    assert cert["certified"]
