"""Bi-parameter dyadic paraproducts on a grid with one axis per parameter.

    B_{k,l}(b, f) = sum_{I,J} beta_{IJ} <b, h_{I^(k)} x h_{J^(l)}>
                    <f, h_I^{e1} x h_J^{e2}> h_I^{e1'} x h_J^{e2'}
                    |I^(k)|^-1/2 |J^(l)|^-1/2

``I^(k)`` is the ``k``-th dyadic ancestor of ``I``.  A signature flag 0
selects the cancellative Haar function and 1 the normalized indicator
``1_I / |I|^(1/2)``.  When ``k > 0`` both first-variable flags must be 0;
when ``k = 0`` at most one of them may be 1 (likewise for ``l``).  Pairs
``(I, J)`` whose ancestor would lie above the top cube are dropped and
counted.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..lattice import Field
from .haar import bases_for, param_view


@dataclass
class ParaproductResult:
    field: Field
    dropped: int


def _ancestor_index(bs, k: int) -> np.ndarray:
    out = np.full(bs.n_cubes, -1, dtype=np.int64)
    for i, q in enumerate(bs.cubes):
        a = q.ancestor(k)
        if a is not None:
            out[i] = bs.cube_id(a)
    return out


def _check_flags(depth: int, flags, name: str):
    e, e_out = (int(x) for x in flags)
    if depth > 0 and (e or e_out):
        raise ValueError(f"{name}: with a positive ancestor depth all Haar functions are cancellative")
    if e and e_out:
        raise ValueError(f"{name}: at most one of the two Haar functions may be non-cancellative")
    return e, e_out


def default_signatures(k: int):
    """The classical choice: average of ``f`` against a cancellative output when ``k = 0``."""
    return (1, 0) if k == 0 else (0, 0)


def paraproduct(kind, b: Field, f: Field, beta=None, signatures=None) -> ParaproductResult:
    """Evaluate ``B_{k,l}(b, f)``.

    Parameters
    ----------
    kind : tuple (k, l) or "classical"
        Ancestor depths; "classical" is ``(0, 0)``.
    b, f : Field
        On a grid with two parameters of one axis each.
    beta : None, int or ndarray
        ``None`` uses all ones, an int seeds random signs, an array of shape
        ``(cubes_1, cubes_2)`` is used directly (entries bounded by 1).
    signatures : ((e1, e1'), (e2, e2')), optional
        Flags per variable; defaults to :func:`default_signatures`.
    """
    spec = b.spec
    if f.spec != spec:
        raise ValueError(f"grid mismatch: {b.spec} vs {f.spec}")
    if spec.dims != (1, 1):
        raise ValueError("paraproducts are implemented for two one-dimensional parameters")
    k, l = (0, 0) if kind == "classical" else (int(kind[0]), int(kind[1]))
    if min(k, l) < 0:
        raise ValueError("ancestor depths must be nonnegative")
    b1, b2 = bases_for(spec)
    if k >= b1.depth or l >= b2.depth:
        raise ValueError(f"ancestor depths ({k},{l}) exceed Haar depth")
    if signatures is None:
        signatures = (default_signatures(k), default_signatures(l))
    e1, e1o = _check_flags(k, signatures[0], "first variable")
    e2, e2o = _check_flags(l, signatures[1], "second variable")

    shape = (b1.n_cubes, b2.n_cubes)
    if beta is None:
        beta = np.ones(shape)
    elif isinstance(beta, (int, np.integer)):
        beta = np.random.default_rng(int(beta)).choice([-1.0, 1.0], size=shape)
    else:
        beta = np.asarray(beta)
        if beta.shape != shape:
            raise ValueError(f"beta must have shape {shape}")
        if np.any(np.abs(beta) > 1 + 1e-12):
            raise ValueError("beta entries must be bounded by 1")

    def rows(bs, flag):
        return bs.average_rows if flag else bs.matrix[1:]

    bv = param_view(spec, b.samples)
    fv = param_view(spec, f.samples)
    norm = 1.0 / np.sqrt(b1.size * b2.size)
    cb = b1.matrix[1:] @ bv @ b2.matrix[1:].T * norm
    cf = rows(b1, e1) @ fv @ rows(b2, e2).T * norm

    a1, a2 = _ancestor_index(b1, k), _ancestor_index(b2, l)
    ok1, ok2 = a1 >= 0, a2 >= 0
    w1 = np.where(ok1, 1.0 / np.sqrt(b1.cube_measure[np.maximum(a1, 0)]), 0.0)
    w2 = np.where(ok2, 1.0 / np.sqrt(b2.cube_measure[np.maximum(a2, 0)]), 0.0)
    coef = beta * cb[np.maximum(a1, 0)][:, np.maximum(a2, 0)] * cf * np.outer(w1, w2)
    dropped = int(shape[0] * shape[1] - ok1.sum() * ok2.sum())

    out = rows(b1, e1o).T @ coef @ rows(b2, e2o) / norm
    return ParaproductResult(Field(spec, out.reshape(spec.shape)), dropped)
