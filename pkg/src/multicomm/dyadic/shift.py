"""Cancellative bi-parameter dyadic shifts.

A shift of complexity ``(i1, j1, i2, j2)`` is

    S f = sum_{K1, K2} sum_{I1, J1 in K1} sum_{I2, J2 in K2}
              a(I1, J1, K1, I2, J2, K2) <f, h_{I1} x h_{I2}> h_{J1} x h_{J2}

where ``I1`` and ``J1`` are the dyadic subcubes of ``K1`` that are ``i1`` and
``j1`` levels finer, and similarly in the second parameter.  All Haar
functions are cancellative.  When a parameter has ``d > 1`` axes the shift
couples each Haar function to the one with the same signature, so the
coefficient ``a`` depends on cubes only and the bound

    |a| <= sqrt(|I1| |J1| |I2| |J2|) / (|K1| |K2|)

still gives ``||S|| <= 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..lattice import Field, GridSpec
from .haar import DyadicCube, HaarBasis, bases_for, haar_analysis, haar_synthesis, HaarTensor

_BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class ShiftSpec:
    """Complexity plus a coefficient rule.

    ``coefficients`` may be ``"random-phase"`` (bound times a seeded unit
    phase, the default), ``"bound"`` (the bound itself), a callable
    ``a(I1, J1, K1, I2, J2, K2) -> complex`` taking :class:`DyadicCube`
    arguments, or an array with one entry per cube tuple in enumeration order.
    """

    complexity: tuple[int, int, int, int]
    coefficients: object = "random-phase"
    seed: int | None = 0

    def __post_init__(self):
        cx = tuple(int(c) for c in self.complexity)
        if len(cx) != 4 or min(cx) < 0:
            raise ValueError(f"complexity must be four nonnegative integers, got {self.complexity}")
        object.__setattr__(self, "complexity", cx)

    @property
    def weight(self) -> int:
        """The factor ``(1 + max(i1, j1)) (1 + max(i2, j2))``."""
        i1, j1, i2, j2 = self.complexity
        return (1 + max(i1, j1)) * (1 + max(i2, j2))

    def to_json(self):
        coef = self.coefficients if isinstance(self.coefficients, str) else "custom"
        return {"complexity": list(self.complexity), "coefficients": coef, "seed": self.seed}


def _descendants(cube: DyadicCube, depth: int, d: int):
    base = [c << depth for c in cube.corner]
    for off in np.ndindex(*(2**depth,) * d):
        yield DyadicCube(cube.level + depth, tuple(b + o for b, o in zip(base, off)))


def _cube_triples(bs: HaarBasis, i: int, j: int):
    """All ``(K, I, J)`` with ``I, J`` at relative depths ``i, j`` inside ``K``."""
    top = bs.depth - 1 - max(i, j)
    if top < 0:
        raise ValueError(f"complexity ({i},{j}) exceeds Haar depth {bs.depth}")
    out = []
    for K in bs.cubes:
        if K.level > top:
            break
        for I in _descendants(K, i, bs.d):
            for J in _descendants(K, j, bs.d):
                out.append((K, I, J))
    return out


class DyadicShift:
    """Sparse matrix acting on Haar coefficients of a bi-parameter grid."""

    def __init__(self, grid: GridSpec, spec: ShiftSpec, matrix: sp.csr_matrix, n_terms: int):
        self.grid = grid
        self.spec = spec
        self.matrix = matrix
        self.n_terms = n_terms

    def __repr__(self):
        return f"DyadicShift({self.spec.complexity}, grid={self.grid}, terms={self.n_terms})"

    def apply_coefficients(self, coeffs: np.ndarray) -> np.ndarray:
        shp = coeffs.shape
        return (self.matrix @ coeffs.reshape(-1)).reshape(shp)

    def apply_array(self, samples: np.ndarray) -> np.ndarray:
        f = Field(self.grid, samples)
        h = haar_analysis(f)
        out = HaarTensor(self.grid, self.apply_coefficients(h.coefficients))
        return haar_synthesis(out).samples

    def __call__(self, f: Field) -> Field:
        if f.spec != self.grid:
            raise ValueError(f"grid mismatch: {f.spec} vs {self.grid}")
        return Field(self.grid, self.apply_array(f.samples))

    def adjoint(self) -> "DyadicShift":
        return DyadicShift(self.grid, self.spec, self.matrix.conj().T.tocsr(), self.n_terms)

    def dense(self) -> np.ndarray:
        """Matrix on lattice samples (row-major), for small grids."""
        mats = [bs.matrix for bs in bases_for(self.grid)]
        w = np.kron(mats[0], mats[1])
        return w.T @ self.matrix.toarray() @ w


def coefficient_bound(I1, J1, K1, I2, J2, K2, dims) -> float:
    d1, d2 = dims
    return float(
        np.sqrt(I1.measure(d1) * J1.measure(d1) * I2.measure(d2) * J2.measure(d2))
        / (K1.measure(d1) * K2.measure(d2))
    )


def make_shift(spec: ShiftSpec, grid: GridSpec) -> DyadicShift:
    """Build the shift; rejects coefficients above the normalizing bound."""
    if grid.t != 2:
        raise ValueError("dyadic shifts are bi-parameter: the grid needs exactly two parameters")
    b1, b2 = bases_for(grid)
    i1, j1, i2, j2 = spec.complexity
    tr1 = _cube_triples(b1, i1, j1)
    tr2 = _cube_triples(b2, i2, j2)

    # per-parameter bound factors sqrt(|I||J|)/|K|
    f1 = np.array([np.sqrt(I.measure(b1.d) * J.measure(b1.d)) / K.measure(b1.d) for K, I, J in tr1])
    f2 = np.array([np.sqrt(I.measure(b2.d) * J.measure(b2.d)) / K.measure(b2.d) for K, I, J in tr2])
    bound = np.outer(f1, f2)

    rule = spec.coefficients
    if isinstance(rule, str):
        if rule == "random-phase":
            rng = np.random.default_rng(spec.seed)
            a = bound * np.exp(2j * np.pi * rng.random(bound.shape))
        elif rule == "bound":
            a = bound.astype(complex)
        else:
            raise ValueError(f"unknown coefficient rule {rule!r}")
    elif callable(rule):
        a = np.array(
            [[complex(rule(I1, J1, K1, I2, J2, K2)) for (K2, I2, J2) in tr2] for (K1, I1, J1) in tr1],
            dtype=complex,
        ).reshape(bound.shape)
    else:
        a = np.asarray(rule, dtype=complex)
        if a.shape != bound.shape:
            raise ValueError(f"coefficient array must have shape {bound.shape}, got {a.shape}")
    excess = np.abs(a) - bound * (1 + _BOUND_SLACK)
    if np.any(excess > 0):
        idx = np.unravel_index(int(np.argmax(excess)), bound.shape)
        raise ValueError(
            f"coefficient {abs(a[idx]):.6g} exceeds bound {bound[idx]:.6g} at tuple {idx}"
        )

    def index_lists(bs, triples):
        ns = len(bs.signatures)
        src, dst, tid = [], [], []
        for t, (K, I, J) in enumerate(triples):
            ii, jj = bs.coef_index(I), bs.coef_index(J)
            for s in range(ns):
                src.append(ii + s)
                dst.append(jj + s)
                tid.append(t)
        return np.array(src), np.array(dst), np.array(tid)

    s1, d1, t1 = index_lists(b1, tr1)
    s2, d2, t2 = index_lists(b2, tr2)
    m2 = b2.size
    rows = (d1[:, None] * m2 + d2[None, :]).ravel()
    cols = (s1[:, None] * m2 + s2[None, :]).ravel()
    vals = a[t1[:, None], t2[None, :]].ravel()
    size = b1.size * b2.size
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
    return DyadicShift(grid, spec, mat, a.size)


def apply_shift(op: DyadicShift, f: Field) -> Field:
    return op(f)
