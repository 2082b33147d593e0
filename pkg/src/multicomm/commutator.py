"""Iterated commutators with symbol multiplication, operator norms, test functions.

Operators act on raw sample arrays internally; :class:`LinearOperator`
wraps an evaluator together with its adjoint and a JSON-friendly descriptor
that records how the operator was built.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator as ScipyOperator
from scipy.sparse.linalg import ArpackNoConvergence, svds

from .dyadic.shift import DyadicShift
from .lattice import Field, GridSpec
from .multiplier import ConeSpec, Multiplier, make_cone_projection, make_projection

DENSE_LIMIT = 4096


class LinearOperator:
    """Linear map on fields of one grid.

    Parameters
    ----------
    spec : GridSpec
    forward, backward : callable
        ``ndarray -> ndarray`` on arrays of shape ``spec.shape``; ``backward``
        is the adjoint.
    params : frozenset
        Parameters (1-based) the operator acts on, used for overlap warnings.
    descriptor : dict
        Construction tree.
    """

    def __init__(self, spec: GridSpec, forward, backward, params=frozenset(), descriptor=None):
        self.spec = spec
        self._fwd = forward
        self._bwd = backward
        self.params = frozenset(params)
        self.descriptor = descriptor or {"kind": "operator"}

    def __repr__(self):
        return f"LinearOperator({self.descriptor.get('kind')}, grid={self.spec})"

    # evaluation
    def apply_array(self, x: np.ndarray) -> np.ndarray:
        return self._fwd(x)

    def adjoint_array(self, x: np.ndarray) -> np.ndarray:
        return self._bwd(x)

    def __call__(self, f: Field) -> Field:
        if f.spec != self.spec:
            raise ValueError(f"grid mismatch: {self.spec} vs {f.spec}")
        return Field(self.spec, self._fwd(np.asarray(f.samples, dtype=complex)))

    def adjoint(self) -> "LinearOperator":
        return LinearOperator(self.spec, self._bwd, self._fwd, self.params,
                              {"kind": "adjoint", "of": self.descriptor})

    # algebra
    def _check(self, other: "LinearOperator"):
        if other.spec != self.spec:
            raise ValueError(f"grid mismatch: {self.spec} vs {other.spec}")

    def __matmul__(self, other: "LinearOperator") -> "LinearOperator":
        """Composition ``self after other``."""
        self._check(other)
        a, b = self, other
        return LinearOperator(
            self.spec,
            lambda x: a._fwd(b._fwd(x)),
            lambda x: b._bwd(a._bwd(x)),
            a.params | b.params,
            {"kind": "compose", "outer": a.descriptor, "inner": b.descriptor},
        )

    def __add__(self, other: "LinearOperator") -> "LinearOperator":
        self._check(other)
        a, b = self, other
        return LinearOperator(
            self.spec,
            lambda x: a._fwd(x) + b._fwd(x),
            lambda x: a._bwd(x) + b._bwd(x),
            a.params | b.params,
            {"kind": "sum", "terms": [a.descriptor, b.descriptor]},
        )

    def __neg__(self) -> "LinearOperator":
        return self.scaled(-1.0)

    def __sub__(self, other: "LinearOperator") -> "LinearOperator":
        return self + (-other)

    def scaled(self, c: complex) -> "LinearOperator":
        a = self
        return LinearOperator(
            self.spec,
            lambda x: c * a._fwd(x),
            lambda x: np.conj(c) * a._bwd(x),
            a.params,
            {"kind": "scaled", "c": [complex(c).real, complex(c).imag], "of": a.descriptor},
        )

    __rmul__ = scaled

    def dense(self) -> np.ndarray:
        """Matrix on row-major samples; only for grids up to ``DENSE_LIMIT`` points."""
        n = self.spec.size
        if n > DENSE_LIMIT:
            raise ValueError(f"dense materialization limited to {DENSE_LIMIT} points, grid has {n}")
        cols = np.empty((n, n), dtype=complex)
        e = np.zeros(n, dtype=complex)
        for j in range(n):
            e[j] = 1.0
            cols[:, j] = self._fwd(e.reshape(self.spec.shape)).ravel()
            e[j] = 0.0
        return cols


# ------------------------------------------------------------ constructors


def from_multiplier(m: Multiplier) -> LinearOperator:
    conj = m.symbol.conj()
    if m.params:
        def bwd(x):
            return np.fft.ifftn(conj * np.fft.fftn(x, norm="ortho"), norm="ortho")
    else:
        def bwd(x):
            return x * conj
    return LinearOperator(m.spec, m.apply_array, bwd, m.params, {"kind": "multiplier", "of": m.meta})


def from_shift(s: DyadicShift) -> LinearOperator:
    adj = s.adjoint()
    return LinearOperator(
        s.grid, s.apply_array, adj.apply_array, frozenset({1, 2}),
        {"kind": "shift", **s.spec.to_json()},
    )


def as_operator(op) -> LinearOperator:
    if isinstance(op, LinearOperator):
        return op
    if isinstance(op, Multiplier):
        return from_multiplier(op)
    if isinstance(op, DyadicShift):
        return from_shift(op)
    raise TypeError(f"cannot use {type(op).__name__} as an operator")


def multiplication(b: Field) -> LinearOperator:
    """Pointwise multiplication by ``b``."""
    s = np.asarray(b.samples)
    sc = s.conj()
    return LinearOperator(b.spec, lambda x: s * x, lambda x: sc * x, frozenset(),
                          {"kind": "multiply", "symbol": "b"})


def identity_operator(spec: GridSpec) -> LinearOperator:
    return LinearOperator(spec, lambda x: x, lambda x: x, frozenset(), {"kind": "identity"})


def mean_zero_projection(spec: GridSpec, params=None) -> LinearOperator:
    """``prod_k (Id - E_k)``: removes the average in each listed parameter."""
    params = range(1, spec.t + 1) if params is None else params
    axes = {k: spec.axes(k) for k in params}

    def proj(x):
        out = x
        for ax in axes.values():
            out = out - out.mean(axis=ax, keepdims=True)
        return out

    return LinearOperator(spec, proj, proj, frozenset(params), {"kind": "mean_zero", "params": list(params)})


# --------------------------------------------------------------- brackets


def commutator(T, b: Field) -> LinearOperator:
    """``[T, b] f = T(b f) - b T(f)``."""
    T = as_operator(T)
    if b.spec != T.spec:
        raise ValueError(f"grid mismatch: {T.spec} vs {b.spec}")
    s = np.asarray(b.samples)
    sc = s.conj()
    return LinearOperator(
        T.spec,
        lambda x: T._fwd(s * x) - s * T._fwd(x),
        lambda x: sc * T._bwd(x) - T._bwd(sc * x),
        T.params,
        {"kind": "commutator", "op": T.descriptor, "symbol": "b"},
    )


def bracket(A, X) -> LinearOperator:
    """``[A, X] = A X - X A`` for two operators."""
    A, X = as_operator(A), as_operator(X)
    A._check(X)
    return LinearOperator(
        A.spec,
        lambda x: A._fwd(X._fwd(x)) - X._fwd(A._fwd(x)),
        lambda x: X._bwd(A._bwd(x)) - A._bwd(X._bwd(x)),
        A.params | X.params,
        {"kind": "bracket", "op": A.descriptor, "inner": X.descriptor},
    )


def iterated_commutator(Ts, b: Field) -> LinearOperator:
    """Right-nested ``[T_1, [T_2, ... [T_l, b] ... ]]``.

    Operators sharing a parameter trigger a warning: the two-sided estimates
    are about operators on disjoint parameter groups.
    """
    Ts = [as_operator(T) for T in Ts]
    if not Ts:
        raise ValueError("need at least one operator")
    seen: set = set()
    for T in Ts:
        if seen & T.params:
            warnings.warn(f"operators overlap on parameters {sorted(seen & T.params)}", stacklevel=2)
        seen |= T.params
    op = commutator(Ts[-1], b)
    for T in reversed(Ts[:-1]):
        op = bracket(T, op)
    op.descriptor = {"kind": "iterated_commutator", "ops": [T.descriptor for T in Ts], "symbol": "b"}
    return op


# ----------------------------------------------------------- operator norm


@dataclass
class NormEstimate:
    value: float
    method: str
    iterations: int
    residual: float
    seed: int | None
    converged: bool = True

    def to_json(self) -> dict:
        return asdict(self)


def _random_start(spec: GridSpec, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape)
    return x / np.linalg.norm(x)


def _power(A: LinearOperator, tol, max_iter, seed) -> NormEstimate:
    x = _random_start(A.spec, seed)
    prev = 0.0
    sigma, resid = 0.0, math.inf
    for it in range(1, max_iter + 1):
        y = A._fwd(x)
        lam = float(np.vdot(y, y).real)  # Rayleigh quotient of A*A at unit x
        z = A._bwd(y)
        sigma = math.sqrt(lam)
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return NormEstimate(0.0, "power", it, 0.0, seed, True)
        resid = float(np.linalg.norm(z - lam * x) / max(lam, 1e-300))
        if it > 1 and abs(sigma - prev) <= tol * sigma:
            return NormEstimate(sigma, "power", it, resid, seed, True)
        prev = sigma
        x = z / nz
    return NormEstimate(sigma, "power", max_iter, resid, seed, False)


def _lanczos(A: LinearOperator, tol, max_iter, seed) -> NormEstimate:
    n = A.spec.size
    shape = A.spec.shape
    count = [0]

    def mv(v):
        count[0] += 1
        return A._fwd(np.asarray(v, dtype=complex).reshape(shape)).ravel()

    def rmv(v):
        return A._bwd(np.asarray(v, dtype=complex).reshape(shape)).ravel()

    op = ScipyOperator((n, n), matvec=mv, rmatvec=rmv, dtype=complex)
    v0 = _random_start(A.spec, seed).ravel()
    if not np.any(rmv(mv(v0))):
        # a random start in the kernel of A*A means A vanishes (almost surely)
        return NormEstimate(0.0, "lanczos", count[0], 0.0, seed, True)
    try:
        s = svds(op, k=1, tol=tol, maxiter=max_iter, v0=v0, return_singular_vectors=False)
        val, ok = float(s[0]), True
    except ArpackNoConvergence as exc:  # pragma: no cover - depends on ARPACK
        val, ok = (float(exc.eigenvalues[0]) if len(exc.eigenvalues) else 0.0), False
    return NormEstimate(val, "lanczos", count[0], tol, seed, ok)


def operator_norm(A, method: str = "power", tol: float = 1e-6, max_iter: int = 500, seed=0) -> NormEstimate:
    """Largest singular value of ``A`` on ``L^2``.

    ``method="power"`` iterates ``A*A`` from a seeded random start until the
    relative change drops below ``tol``; its value never exceeds the true
    norm.  ``"dense"`` materializes the matrix (grids up to 4096 points) and
    takes its exact spectral norm.  ``"lanczos"`` runs ARPACK on ``A`` as a
    matrix-free operator, which converges much faster on large grids.
    """
    A = as_operator(A)
    if method == "power":
        return _power(A, tol, max_iter, seed)
    if method == "dense":
        M = A.dense()
        return NormEstimate(float(np.linalg.norm(M, 2)), "dense", M.shape[0], 0.0, seed, True)
    if method == "lanczos":
        return _lanczos(A, tol, max_iter, seed)
    raise ValueError(f"unknown norm method {method!r}")


def probe_norm(A, probes: int = 4, seed=0) -> float:
    """Largest ``||A f|| / ||f||`` over a few seeded random probes."""
    A = as_operator(A)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(probes):
        x = rng.standard_normal(A.spec.shape) + 1j * rng.standard_normal(A.spec.shape)
        best = max(best, float(np.linalg.norm(A._fwd(x)) / np.linalg.norm(x)))
    return best


# --------------------------------------------------------- test functions


def _param_grid(spec: GridSpec, k: int) -> GridSpec:
    return GridSpec((spec.params[k - 1],))


def opposing_test_function(cones, spec: GridSpec, seed=0) -> Field:
    """Tensor-product test function with Fourier support in the opposing cones.

    For every cone on parameter ``k`` the factor ``f_k`` has Fourier
    transform supported on the lattice points of ``D(-xi_k, r_k)`` with
    seeded complex Gaussian values; parameters without a cone get seeded
    random samples.  The result has unit ``L^2`` norm, and the mollified
    cone operators of the given cones annihilate it.
    """
    by_param: dict[int, ConeSpec] = {}
    for c in cones:
        if c.k in by_param:
            raise ValueError(f"two cones on parameter {c.k}")
        if (1 + c.tau) * c.aperture >= math.pi / 2:
            raise ValueError("(1+tau)*aperture must stay below pi/2")
        by_param[c.k] = c
    seeds = np.random.SeedSequence(seed).spawn(spec.t)
    out = np.ones(())
    for k in range(1, spec.t + 1):
        sub = _param_grid(spec, k)
        rng = np.random.default_rng(seeds[k - 1])
        noise = rng.standard_normal(sub.shape) + 1j * rng.standard_normal(sub.shape)
        if k in by_param:
            c = by_param[k]
            cone = ConeSpec(1, c.opposite().direction, c.aperture, c.base, c.tau, c.m)
            mask = make_cone_projection(sub, cone).full_symbol().real
            if not mask.any():
                n = sub.params[0][1]
                raise ValueError(
                    f"cone of aperture {c.aperture:.3g} on parameter {k} contains no lattice "
                    f"frequency at N={n}; use N >= {max(8, 2 * n)} or a wider aperture"
                )
            fk = np.fft.ifftn(mask * noise, norm="ortho")
        else:
            fk = noise
        out = np.multiply.outer(out, fk)
    arr = out.reshape(spec.shape)
    arr /= math.sqrt(np.sum(np.abs(arr) ** 2) * spec.cell_volume)
    return Field(spec, arr)


# ---------------------------------------------------------------- Pi form


def _bracket_terms(Ts):
    """Expand the nested bracket into terms ``(c, L, R)``: ``c * L o M_b o R``.

    ``L`` and ``R`` are operator lists in the order they are applied.
    """
    terms = [(1.0, [], [])]
    for T in reversed(Ts):
        new = []
        for c, L, R in terms:
            new.append((c, L + [T], R))
            new.append((-c, L, [T] + R))
        terms = new
    return terms


def pi_form(f: Field, g: Field, Ts) -> Field:
    """Field ``Pi(f, g)`` with ``<[T_1,[...,[T_l,b]]] f, g> = sum b Pi * cell_volume``.

    The bracket is unwound into ``2**l`` terms ``c L b R``, each contributing
    ``c (R f) conj(L* g)``; the pairing with ``b`` is bilinear.
    """
    Ts = [as_operator(T) for T in Ts]
    if f.spec != g.spec or any(T.spec != f.spec for T in Ts):
        raise ValueError("fields and operators must share one grid")
    acc = np.zeros(f.spec.shape, dtype=complex)
    for c, L, R in _bracket_terms(Ts):
        rf = np.asarray(f.samples, dtype=complex)
        for T in R:
            rf = T._fwd(rf)
        lg = np.asarray(g.samples, dtype=complex)
        for T in reversed(L):
            lg = T._bwd(lg)
        acc += c * rf * lg.conj()
    return Field(f.spec, acc)


def pair_symbol(b: Field, pi: Field) -> complex:
    """Bilinear pairing ``sum b * Pi * cell_volume``."""
    if b.spec != pi.spec:
        raise ValueError("grid mismatch")
    return complex(np.sum(b.samples * pi.samples) * b.spec.cell_volume)


# ------------------------------------------------------- translated cuts


def modulation(spec: GridSpec, k: int, shift: int) -> LinearOperator:
    """Multiplication by ``exp(2 pi i shift x_k)``: translates parameter-``k`` frequencies by ``shift``."""
    if spec.params[k - 1][0] != 1:
        raise ValueError("modulation needs a one-dimensional parameter")
    n = spec.params[k - 1][1]
    shp = [1] * len(spec.shape)
    ax = spec.axes(k)[0]
    shp[ax] = n
    phase = np.exp(2j * np.pi * shift * np.arange(n) / n).reshape(shp)
    pc = phase.conj()
    return LinearOperator(spec, lambda x: phase * x, lambda x: pc * x, frozenset({k}),
                          {"kind": "modulation", "k": k, "shift": shift})


def frequency_window(spec: GridSpec, k: int, width: int) -> LinearOperator:
    """Fourier projection onto ``|n_k| <= width``."""
    (w,) = spec.frequencies(k)
    m = Multiplier(spec, (np.abs(w) <= width).astype(float), {k}, {"kind": "window", "k": k, "width": width})
    return from_multiplier(m)


def hankel_block(b: Field, left=(1, 2), signs=("-", "-", "+", "+")) -> LinearOperator:
    """``P_{k2}^{s1} P_{k1}^{s2} b P_{k1}^{s3} P_{k2}^{s4}`` with analytic projections."""
    spec = b.spec
    k1, k2 = left
    P = {(k, s): from_multiplier(make_projection(spec, k, s)) for k in (k1, k2) for s in ("+", "-")}
    M = multiplication(b)
    return P[(k2, signs[0])] @ P[(k1, signs[1])] @ M @ P[(k1, signs[2])] @ P[(k2, signs[3])]


def translated_cut_profile(b: Field, shifts, window: int | None = None, method: str = "power",
                           tol: float = 1e-9, max_iter: int = 2000, seed=0, extras: bool = True) -> dict:
    """Norms of frequency-translated cuts of ``B = P1- P2- b P1+ P2+`` in the third variable.

    With ``W_l`` the modulation by ``l`` in ``x_3`` and ``P_3`` the analytic
    projection there, ``A_l = W_l* P_3 B P_3 W_l``.  On a finite torus plain
    operator norms are invariant under the translation, so the profile is
    measured on inputs whose ``x_3`` frequencies satisfy ``|n_3| <= window``
    (default ``N/8``): ``ratio(l) = ||A_l Pi_w|| / ||B Pi_w||``.

    With ``extras`` also reports ``||P_3 B P_3||`` and ``||B||``.
    """
    spec = b.spec
    if spec.t != 3 or spec.dims != (1, 1, 1):
        raise ValueError("translated cuts are defined on three one-dimensional parameters")
    n3 = spec.params[2][1]
    window = n3 // 8 if window is None else window
    B = hankel_block(b)
    P3 = from_multiplier(make_projection(spec, 3, "+"))
    cut = P3 @ B @ P3
    Pw = frequency_window(spec, 3, window)

    def norm(op, s):
        return operator_norm(op, method=method, tol=tol, max_iter=max_iter, seed=s).value

    base = norm(B @ Pw, seed)
    rows = []
    for i, l in enumerate(shifts):
        W = modulation(spec, 3, int(l))
        A = W.adjoint() @ cut @ W
        val = norm(A @ Pw, seed + 1 + i)
        rows.append({"shift": int(l), "norm": val, "ratio": val / base if base > 0 else float("nan")})
    out = {"window": window, "windowed_norm": base, "profile": rows}
    if extras:
        out["cut_norm"] = norm(cut, seed)
        out["full_norm"] = norm(B, seed)
    return out
