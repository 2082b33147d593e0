import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multicomm.dyadic import (
    DyadicCube,
    HaarBasis,
    HaarTensor,
    PartitionSpec,
    ShiftSpec,
    apply_shift,
    frozen_slices,
    haar_analysis,
    haar_basis,
    haar_field,
    haar_synthesis,
    little_bmo_norm,
    little_product_bmo_norm,
    make_shift,
    paraproduct,
    product_bmo_norm,
)
from multicomm.lattice import Field, GridSpec, inner_product, l2_norm

SQ8 = GridSpec(((1, 8), (1, 8)))
CUBE8 = GridSpec(((1, 8), (1, 8), (1, 8)))


def intervals(n):
    return [DyadicCube(lev, (c,)) for lev in range(n.bit_length() - 1) for c in range(2**lev)]


def interval_mask(q, n):
    side = n >> q.level
    m = np.zeros(n, bool)
    m[q.corner[0] * side : (q.corner[0] + 1) * side] = True
    return m


def brute_coefficients(b):
    """<b, h_I x h_J> by explicit inner products, keyed by (I, J)."""
    n1, n2 = b.spec.shape
    return {
        (I, J): inner_product(b, haar_field(b.spec, [I, J]))
        for I in intervals(n1)
        for J in intervals(n2)
    }


def brute_union_ratio(coefs, rects, n):
    """Carleson ratio of a union of rectangles, by masks."""
    U = np.zeros((n, n), bool)
    for I, J in rects:
        U |= np.outer(interval_mask(I, n), interval_mask(J, n))
    e = sum(
        abs(c) ** 2
        for (I, J), c in coefs.items()
        if not np.any(np.outer(interval_mask(I, n), interval_mask(J, n)) & ~U)
    )
    return e / (U.sum() / n**2)


def one_param_carleson(vals):
    """sup_I (|I|^-1 sum_{I' in I} |<v, h_I'>|^2)^(1/2) on a line, by brute force."""
    n = len(vals)
    g = GridSpec(((1, n),))
    f = Field(g, vals)
    coefs = {q: inner_product(f, haar_field(g, [q])) for q in intervals(n)}
    best = 0.0
    for q in intervals(n):
        m = interval_mask(q, n)
        e = sum(abs(c) ** 2 for p, c in coefs.items() if np.all(m[interval_mask(p, n)]))
        best = max(best, e / (m.sum() / n))
    return np.sqrt(best)


# ------------------------------------------------------------------ Haar


def test_haar_basis_orthonormal():
    for d, n in [(1, 16), (2, 8), (3, 4)]:
        B = haar_basis(d, n)
        assert np.allclose(B.matrix @ B.matrix.T, np.eye(B.size), atol=1e-13)
        assert B.n_cubes * len(B.signatures) + 1 == B.size
    with pytest.raises(ValueError):
        HaarBasis(1, 12)


def test_constant_has_only_average():
    c = haar_analysis(Field.constant(SQ8, 2.0)).coefficients
    assert c[0, 0] == pytest.approx(2.0)
    c[0, 0] = 0
    assert np.max(np.abs(c)) < 1e-14


def test_single_haar_function_gives_unit_coefficient():
    g = GridSpec(((2, 4), (1, 8)))
    Q, I = DyadicCube(1, (1, 0)), DyadicCube(2, (3,))
    f = haar_field(g, [Q, I], [(1, 1), (1,)])
    c = haar_analysis(f).coefficients
    B = haar_basis(2, 4)
    idx = (B.coef_index(Q, B.signatures.index((1, 1))), haar_basis(1, 8).coef_index(I))
    assert c[idx] == pytest.approx(1.0)
    c[idx] = 0
    assert np.max(np.abs(c)) < 1e-14


def test_plancherel_and_round_trip():
    g = GridSpec(((1, 16), (2, 4)))
    b = Field.random(g, 0)
    h = haar_analysis(b)
    direct = np.sum(np.abs(b.samples) ** 2) * g.cell_volume
    assert abs(h.energy() - direct) <= 1e-10 * direct
    assert l2_norm(haar_synthesis(h) - b) <= 1e-12 * l2_norm(b)


def test_haar_coefficients_match_inner_products():
    b = Field.random(SQ8, 1)
    c = haar_analysis(b).coefficients
    B = haar_basis(1, 8)
    for (I, J), val in brute_coefficients(b).items():
        assert c[B.coef_index(I), B.coef_index(J)] == pytest.approx(val, abs=1e-13)


def test_partial_analysis_keeps_other_axes():
    b = Field.random(SQ8, 2)
    h = haar_analysis(b, params=[2])
    back = haar_synthesis(HaarTensor(SQ8, h.coefficients), params=[2])
    assert l2_norm(back - b) < 1e-13


# ------------------------------------------------------------- product BMO


def test_product_bmo_zero():
    assert product_bmo_norm(Field.zeros(SQ8)).value == 0.0


def test_product_bmo_single_haar_matches_exhaustive():
    I, J = DyadicCube(1, (1,)), DyadicCube(2, (2,))
    b = haar_field(SQ8, [I, J])
    res = product_bmo_norm(b)
    coefs = brute_coefficients(b)
    exhaustive = max(brute_union_ratio(coefs, [(P, Q)], 8) for P in intervals(8) for Q in intervals(8))
    assert res.value == pytest.approx(np.sqrt(exhaustive), abs=1e-12)
    assert res.value == pytest.approx((0.5 * 0.25) ** -0.5, abs=1e-12)
    assert res.achieving_set[0].cubes == (I, J)


def test_single_rectangles_match_exhaustive_on_random():
    b = Field.random(SQ8, 3)
    coefs = brute_coefficients(b)
    exhaustive = max(brute_union_ratio(coefs, [(P, Q)], 8) for P in intervals(8) for Q in intervals(8))
    assert product_bmo_norm(b, budget=1).value == pytest.approx(np.sqrt(exhaustive), rel=1e-12)


def test_greedy_union_beats_rectangles_on_carleson_symbol():
    # energy on two overlapping rectangles whose union is an L-shape
    A = (DyadicCube(1, (0,)), DyadicCube(0, (0,)))
    B = (DyadicCube(0, (0,)), DyadicCube(1, (0,)))
    b = haar_field(SQ8, list(A)) + haar_field(SQ8, list(B))
    single = product_bmo_norm(b, budget=1).value
    union = product_bmo_norm(b, budget=2).value
    coefs = brute_coefficients(b)
    rects = list(itertools.product(intervals(8), intervals(8)))
    best_single = max(brute_union_ratio(coefs, [r], 8) for r in rects)
    assert single == pytest.approx(np.sqrt(best_single))
    assert union == pytest.approx(np.sqrt(brute_union_ratio(coefs, [A, B], 8)))
    assert union == pytest.approx(np.sqrt(8 / 3))
    assert union > single


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_budget_monotone(seed):
    rng = np.random.default_rng(seed)
    # sparse Haar symbols give unions a chance to matter
    c = np.zeros((8, 8), complex)
    idx = rng.integers(1, 8, (5, 2))
    c[idx[:, 0], idx[:, 1]] = rng.standard_normal(5)
    b = haar_synthesis(HaarTensor(SQ8, c))
    vals = [product_bmo_norm(b, budget=k).value for k in (1, 2, 3, 5, 8)]
    assert all(x <= y + 1e-15 for x, y in zip(vals, vals[1:]))


def test_product_bmo_rejects_bad_grouping():
    with pytest.raises(ValueError):
        product_bmo_norm(Field.zeros(SQ8), grouping=[])
    with pytest.raises(ValueError):
        product_bmo_norm(Field.zeros(SQ8), grouping=[3])


def test_norms_vanish_on_constant_directions():
    beta = np.random.default_rng(4).standard_normal(8)
    b = Field(SQ8, np.tile(beta, (8, 1)))  # depends on x2 only
    assert product_bmo_norm(b).value < 1e-14
    assert product_bmo_norm(b, grouping=[1]).value < 1e-14
    assert product_bmo_norm(b, grouping=[2]).value > 0.1
    assert little_bmo_norm(b).value > 0.1
    const = Field.constant(CUBE8, 3.0)
    assert little_bmo_norm(const).value == 0
    assert little_product_bmo_norm(const, PartitionSpec.parse("(13)(2)")).value == 0


# ----------------------------------------------------------------- little bmo


def test_little_bmo_sign_pattern():
    b = Field.from_function(SQ8, lambda x, y: np.where(x < 0.5, 1.0, -1.0))
    res = little_bmo_norm(b)
    assert res.value == pytest.approx(1.0)
    assert res.achieving_set[0].cubes[0].level == 0
    assert product_bmo_norm(b, grouping=[1]).value == pytest.approx(1.0)


def test_little_bmo_matches_brute_force_rectangles():
    b = Field.random(SQ8, 5)
    best = 0.0
    for l1 in range(4):
        for l2 in range(4):
            s1, s2 = 8 >> l1, 8 >> l2
            for c1 in range(2**l1):
                for c2 in range(2**l2):
                    blk = b.samples[c1 * s1 : (c1 + 1) * s1, c2 * s2 : (c2 + 1) * s2]
                    best = max(best, np.mean(np.abs(blk - blk.mean())))
    assert little_bmo_norm(b).value == pytest.approx(best, rel=1e-13)


def test_sliced_little_bmo_is_sup_of_one_parameter_norms():
    b = Field.random(SQ8, 6, real=True)
    want = max(
        max(one_param_carleson(b.samples[:, j]) for j in range(8)),
        max(one_param_carleson(b.samples[i, :]) for i in range(8)),
    )
    assert little_bmo_norm(b, method="sliced").value == pytest.approx(want, rel=1e-12)


# --------------------------------------------------------- little product BMO


def test_partition_parsing():
    assert PartitionSpec.parse("(13)(2)").blocks == ((1, 3), (2,))
    assert PartitionSpec.parse("(1,3)(2)").blocks == ((1, 3), (2,))
    assert str(PartitionSpec.parse("(2)(1,3)")) == "(2)(13)"
    for bad in ("(12)(2)", "(1)(3)", "13", "()"):
        with pytest.raises(ValueError):
            PartitionSpec.parse(bad)
    with pytest.raises(ValueError):
        little_product_bmo_norm(Field.zeros(SQ8), PartitionSpec.parse("(1)(2)(3)"))


def test_degenerate_partitions():
    b = Field.random(CUBE8, 7)
    triv = little_product_bmo_norm(b, PartitionSpec.trivial(3))
    assert triv.value == product_bmo_norm(b).value
    full = little_product_bmo_norm(b, PartitionSpec.full(3))
    assert full.value == little_bmo_norm(b, method="sliced").value


def test_separable_symbol_has_zero_mixed_norm():
    beta = np.random.default_rng(8).standard_normal(8)
    b = Field(CUBE8, np.broadcast_to(beta[None, :, None], (8, 8, 8)))
    res = little_product_bmo_norm(b, PartitionSpec.parse("(13)(2)"))
    assert res.value < 1e-14


def test_tensor_symbol_mixed_norm_single_rectangles():
    rng = np.random.default_rng(9)
    alpha, beta = rng.standard_normal(8), rng.standard_normal(8)
    b = Field(CUBE8, np.broadcast_to(np.outer(alpha, beta)[:, :, None], (8, 8, 8)))
    res = little_product_bmo_norm(b, PartitionSpec.parse("(13)(2)"), budget=1)
    want = one_param_carleson(alpha) * one_param_carleson(beta)
    assert res.value == pytest.approx(want, rel=1e-12)
    assert res.choice == (1, 2)


def test_frozen_slices_reconstruct():
    b = Field.random(CUBE8, 10)
    slices = frozen_slices(b, [1, 3])
    assert len(slices) == 8
    coords, f = slices[5]
    assert coords == {2: (5,)}
    assert np.array_equal(f.samples, b.samples[:, 5, :])


def test_bmo_result_json():
    res = little_product_bmo_norm(Field.random(CUBE8, 11), PartitionSpec.parse("(13)(2)"))
    out = res.to_json()
    assert out["value"] == res.value and len(out["achieving_choice"]) == 2


# ------------------------------------------------------------------ shifts


def test_identity_shift_on_cancellative_span():
    g = GridSpec(((1, 16), (1, 16)))
    S = make_shift(ShiftSpec((0, 0, 0, 0), "bound"), g)
    f = Field.random(g, 12)
    c = haar_analysis(f).coefficients.copy()
    c[0, :] = 0
    c[:, 0] = 0
    assert l2_norm(S(f) - haar_synthesis(HaarTensor(g, c))) < 1e-13


def test_shift_bound_gives_contraction():
    g = GridSpec(((1, 8), (1, 8)))
    for seed in range(20):
        cx = tuple(np.random.default_rng(seed).integers(0, 3, 4))
        S = make_shift(ShiftSpec(cx, seed=seed), g)
        assert np.linalg.norm(S.dense(), 2) <= 1 + 1e-9


def test_shift_on_planes():
    g = GridSpec(((2, 4), (2, 8)))
    S = make_shift(ShiftSpec((1, 0, 2, 1), seed=3), g)
    assert np.linalg.norm(S.dense(), 2) <= 1 + 1e-9


def test_shift_annihilates_constants_and_pairs_with_adjoint():
    g = GridSpec(((1, 16), (1, 8)))
    S = make_shift(ShiftSpec((1, 2, 0, 1), seed=4), g)
    assert l2_norm(apply_shift(S, Field.constant(g))) < 1e-14
    rng = np.random.default_rng(5)
    f, h = Field.random(g, rng), Field.random(g, rng)
    assert abs(inner_product(S(f), h) - inner_product(f, S.adjoint()(h))) < 1e-12


def test_shift_rejects_bad_input():
    g = GridSpec(((1, 8), (1, 8)))
    with pytest.raises(ValueError, match="exceeds bound"):
        make_shift(ShiftSpec((0, 0, 0, 0), lambda *cubes: 1.5), g)
    with pytest.raises(ValueError):
        make_shift(ShiftSpec((3, 0, 0, 0)), g)
    with pytest.raises(ValueError):
        make_shift(ShiftSpec((0, 0, 0, 0)), CUBE8)
    with pytest.raises(ValueError):
        ShiftSpec((0, -1, 0, 0))


def test_shift_callable_coefficients_match_formula():
    g = GridSpec(((1, 8), (1, 8)))

    def coef(I1, J1, K1, I2, J2, K2):
        return 0.5 * np.sqrt(I1.measure(1) * J1.measure(1) * I2.measure(1) * J2.measure(1)) / (
            K1.measure(1) * K2.measure(1)
        )

    S = make_shift(ShiftSpec((1, 0, 0, 1), coef), g)
    # one term: K1 = top, I1 left child, J1 = K1; K2 = top, I2 = K2, J2 = left child
    I1, K1 = DyadicCube(1, (0,)), DyadicCube(0, (0,))
    J2 = DyadicCube(1, (0,))
    f = haar_field(g, [I1, K1])
    out = S(f)
    B = haar_basis(1, 8)
    c = haar_analysis(out).coefficients
    want = coef(I1, K1, K1, K1, J2, K1)
    assert c[B.coef_index(K1), B.coef_index(J2)] == pytest.approx(want)
    assert c[B.coef_index(K1), B.coef_index(DyadicCube(1, (1,)))] == pytest.approx(want)


# -------------------------------------------------------------- paraproducts


def test_paraproduct_constant_symbol_vanishes():
    f = Field.random(SQ8, 13)
    r = paraproduct((1, 2), Field.constant(SQ8, 4.0), f)
    assert l2_norm(r.field) < 1e-13


def test_classical_paraproduct_single_term():
    I0, J0 = DyadicCube(1, (1,)), DyadicCube(2, (2,))
    b = haar_field(SQ8, [I0, J0])
    f = haar_field(SQ8, [I0, J0], [(0,), (0,)])
    r = paraproduct("classical", b, f)
    want = haar_field(SQ8, [I0, J0]).samples / np.sqrt(0.5 * 0.25)
    assert np.allclose(r.field.samples, want, atol=1e-13)
    assert r.dropped == 0


def test_paraproduct_ancestor_term_by_hand():
    # b = h_K x h_L, f = h_I x h_J with I the child of K (k = 1), J = L (l = 0)
    K, L = DyadicCube(0, (0,)), DyadicCube(1, (1,))
    I = DyadicCube(1, (1,))
    b = haar_field(SQ8, [K, L])
    f = haar_field(SQ8, [I, L])
    r = paraproduct((1, 0), b, f, signatures=((0, 0), (0, 0)))
    want = haar_field(SQ8, [I, L]).samples / np.sqrt(1.0 * 0.5)
    assert np.allclose(r.field.samples, want, atol=1e-13)
    # the top interval has no parent: 1 of 7 first-variable intervals dropped
    assert r.dropped == 7


def test_paraproduct_rules_enforced():
    b = Field.random(SQ8, 14)
    with pytest.raises(ValueError):
        paraproduct((1, 0), b, b, signatures=((1, 0), (1, 0)))
    with pytest.raises(ValueError):
        paraproduct((0, 0), b, b, signatures=((1, 1), (1, 0)))
    with pytest.raises(ValueError):
        paraproduct((0, 0), b, Field.random(CUBE8, 1))
    with pytest.raises(ValueError):
        paraproduct((0, 0), b, b, beta=np.full((7, 7), 2.0))


def test_paraproduct_constant_independent_of_depths():
    g = GridSpec(((1, 16), (1, 16)))
    consts = {}
    samples = []
    for s in range(20):
        rng = np.random.default_rng(100 + s)
        b, f = Field.random(g, rng), Field.random(g, rng)
        samples.append((b, f, product_bmo_norm(b).value * l2_norm(f)))
    for kl in itertools.product(range(4), range(4)):
        consts[kl] = max(l2_norm(paraproduct(kl, b, f, beta=s).field) / den for s, (b, f, den) in enumerate(samples))
    assert all(np.isfinite(v) and v > 0 for v in consts.values())
    assert max(consts.values()) <= 2 * consts[(0, 0)]
