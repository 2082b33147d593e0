"""Fourier multipliers on the discrete torus.

A :class:`Multiplier` stores its symbol as an array that broadcasts against
the grid shape; axes of parameters it does not act on have length one.  The
symbol is laid out in FFT order, matching :meth:`GridSpec.frequencies`.

Sign conventions: the Hilbert transform has symbol ``-i sgn(n)`` with
``sgn(0) = 0`` and the Riesz transform ``R_j`` has symbol
``-i n_j / |n|`` with value 0 at the origin.  Passing ``sign=+1`` flips both.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import Field, FreqField, GridSpec, forward_transform, inverse_transform

# Tolerance used when comparing lattice geodesic distances against apertures.
ANGLE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Multiplier:
    spec: GridSpec
    symbol: np.ndarray
    params: frozenset = frozenset()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        sym = np.asarray(self.symbol, dtype=np.complex128)
        if sym.ndim != len(self.spec.shape):
            raise ValueError("symbol rank does not match grid")
        np.broadcast_shapes(sym.shape, self.spec.shape)
        sym.flags.writeable = False
        object.__setattr__(self, "symbol", sym)
        object.__setattr__(self, "params", frozenset(self.params))

    def __call__(self, f: Field) -> Field:
        return apply(self, f)

    def full_symbol(self) -> np.ndarray:
        return np.broadcast_to(self.symbol, self.spec.shape)

    def sup(self) -> float:
        return float(np.max(np.abs(self.symbol))) if self.symbol.size else 0.0

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        """Apply to a raw sample array (no validation)."""
        if not self.params:
            return x * self.symbol
        return np.fft.ifftn(self.symbol * np.fft.fftn(x, norm="ortho"), norm="ortho")

    def __matmul__(self, other: "Multiplier") -> "Multiplier":
        """Composition; multipliers commute so this is the symbol product."""
        if other.spec != self.spec:
            raise ValueError("grid mismatch")
        return Multiplier(
            self.spec,
            self.symbol * other.symbol,
            self.params | other.params,
            {"kind": "product", "factors": [self.meta, other.meta]},
        )


def apply(m: Multiplier, f: Field) -> Field:
    if f.spec != m.spec:
        raise ValueError(f"grid mismatch: {m.spec} vs {f.spec}")
    if not m.params:
        return Field(f.spec, f.samples * m.symbol)
    F = forward_transform(f)
    return inverse_transform(FreqField(f.spec, m.symbol * F.coefficients))


def adjoint(m: Multiplier) -> Multiplier:
    meta = {"kind": "adjoint", "of": m.meta}
    return Multiplier(m.spec, m.symbol.conj(), m.params, meta)


def identity(spec: GridSpec) -> Multiplier:
    return Multiplier(spec, np.ones([1] * len(spec.shape)), frozenset(), {"kind": "identity"})


def _param_shape(spec: GridSpec, k: int) -> list[int]:
    shp = [1] * len(spec.shape)
    for ax in spec.axes(k):
        shp[ax] = spec.shape[ax]
    return shp


def _norm_freq(spec: GridSpec, k: int):
    freqs = spec.frequencies(k)
    sq = sum(w.astype(float) ** 2 for w in freqs)
    return freqs, np.sqrt(sq)


def make_hilbert(spec: GridSpec, k: int, sign: int = -1) -> Multiplier:
    d, _ = spec.params[k - 1]
    if d != 1:
        raise ValueError(f"Hilbert transform needs a one-dimensional parameter, d_{k} = {d}")
    (w,) = spec.frequencies(k)
    sym = sign * 1j * np.sign(w)
    return Multiplier(spec, sym, {k}, {"kind": "hilbert", "k": k, "sign": sign})


def make_projection(spec: GridSpec, k: int, side: str = "+") -> Multiplier:
    """Analytic (``side="+"``, frequencies > 0) or co-analytic (``"-"``, < 0) projection.

    Frequency zero lies in neither range, so ``P + P_perp = Id - E_0`` where
    ``E_0`` averages over parameter ``k``.  ``side="0"`` gives ``E_0``.
    """
    d, _ = spec.params[k - 1]
    if d != 1:
        raise ValueError("analytic projections need a one-dimensional parameter")
    (w,) = spec.frequencies(k)
    if side == "+":
        sym = (w > 0).astype(float)
    elif side == "-":
        sym = (w < 0).astype(float)
    elif side == "0":
        sym = (w == 0).astype(float)
    else:
        raise ValueError(f"unknown projection side {side!r}")
    return Multiplier(spec, sym, {k}, {"kind": "projection", "k": k, "side": side})


def make_riesz(spec: GridSpec, k: int, j: int, sign: int = -1) -> Multiplier:
    d, _ = spec.params[k - 1]
    if j == 0:
        return identity(spec)
    if not 1 <= j <= d:
        raise ValueError(f"Riesz direction {j} outside 1..{d}")
    freqs, r = _norm_freq(spec, k)
    with np.errstate(invalid="ignore", divide="ignore"):
        sym = np.where(r > 0, sign * 1j * freqs[j - 1] / np.where(r > 0, r, 1.0), 0.0)
    return Multiplier(spec, sym, {k}, {"kind": "riesz", "k": k, "j": j, "sign": sign})


def smoothstep(x, m: int):
    """Polynomial of degree ``2m+1`` rising from 0 to 1 on ``[0, 1]``.

    The first ``m`` derivatives vanish at both ends; ``x`` is clipped to
    ``[0, 1]`` so the result is ``C^m`` on the real line.
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    acc = np.zeros_like(x)
    for j in range(m + 1):
        acc += math.comb(m + j, j) * (1.0 - x) ** j
    return x ** (m + 1) * acc


@dataclass(frozen=True)
class ConeSpec:
    """Cone in the frequency space of parameter ``k``.

    ``base="ball"`` is the set of frequencies within geodesic distance
    ``aperture`` of ``direction``.  ``base="cube"`` uses an axis-aligned cube
    of half-side ``tan(aperture)`` in the orthogonal complement of
    ``direction`` (axes from :func:`orthonormal_frame`), so the ball cone of
    the same aperture is inscribed in it.
    """

    k: int
    direction: tuple
    aperture: float
    base: str = "ball"
    tau: float = 0.2
    m: int | None = None

    def __post_init__(self):
        xi = np.asarray(self.direction, dtype=float)
        if abs(np.linalg.norm(xi) - 1.0) > 1e-12:
            raise ValueError("cone direction must be a unit vector")
        if not 0.0 < self.aperture < math.pi / 2:
            raise ValueError("cone aperture must lie in (0, pi/2)")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.base not in ("ball", "cube"):
            raise ValueError(f"unknown cone base {self.base!r}")
        object.__setattr__(self, "direction", tuple(float(v) for v in xi))

    def opposite(self) -> "ConeSpec":
        return ConeSpec(self.k, tuple(-v for v in self.direction), self.aperture, self.base, self.tau, self.m)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "dir": list(self.direction),
            "r": self.aperture,
            "base": self.base,
            "tau": self.tau,
            "m": self.m,
        }


def orthonormal_frame(xi) -> np.ndarray:
    """Rows: ``xi`` followed by an orthonormal basis of its complement."""
    xi = np.asarray(xi, dtype=float)
    d = xi.size
    q, _ = np.linalg.qr(np.column_stack([xi, np.eye(d)]))
    q = q[:, :d]
    if q[:, 0] @ xi < 0:
        q = -q
    return q.T


def _check_cone(spec: GridSpec, c: ConeSpec):
    d, _ = spec.params[c.k - 1]
    if len(c.direction) != d:
        raise ValueError(f"cone direction has length {len(c.direction)}, parameter {c.k} has d={d}")


def geodesic_distance(spec: GridSpec, k: int, xi) -> tuple[np.ndarray, np.ndarray]:
    """Geodesic distance of ``n/|n|`` to ``xi`` on the lattice of parameter ``k``.

    Returns ``(distance, nonzero_mask)``; the distance at ``n = 0`` is ``pi``.
    """
    freqs, r = _norm_freq(spec, k)
    dot = sum(w * x for w, x in zip(freqs, xi))
    nz = r > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(nz, dot / np.where(nz, r, 1.0), -1.0)
    return np.arccos(np.clip(cos, -1.0, 1.0)), nz


def _cube_gauge(spec: GridSpec, c: ConeSpec) -> np.ndarray:
    """Smallest ``lam`` with the frequency in the cone of data ``(xi, lam Q)``; inf off the half space."""
    freqs, _ = _norm_freq(spec, c.k)
    frame = orthonormal_frame(c.direction)
    along = sum(w * x for w, x in zip(freqs, frame[0]))
    perp = [np.abs(sum(w * x for w, x in zip(freqs, row))) for row in frame[1:]]
    half = math.tan(c.aperture)
    big = np.max(np.broadcast_arrays(*perp), axis=0) if perp else np.zeros_like(along, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        gauge = np.where(along > 0, big / (half * np.where(along > 0, along, 1.0)), np.inf)
    return gauge


def make_cone_projection(spec: GridSpec, c: ConeSpec) -> Multiplier:
    _check_cone(spec, c)
    if c.base == "ball":
        dist, nz = geodesic_distance(spec, c.k, c.direction)
        sym = ((dist <= c.aperture + ANGLE_TOL) & nz).astype(float)
    else:
        sym = (_cube_gauge(spec, c) <= 1.0 + ANGLE_TOL).astype(float)
    return Multiplier(spec, sym, {c.k}, {"kind": "cone", **c.to_json()})


def make_smooth_cone(spec: GridSpec, c: ConeSpec) -> Multiplier:
    """Mollified cone symbol squeezed between the cone and its ``(1+tau)`` dilate.

    Ball base: ``smoothstep(((1+tau) r - dist) / (tau r))``; cube base uses the
    cube gauge in place of ``dist / r``.  The smoothness order defaults to the
    largest parameter dimension of the grid.
    """
    _check_cone(spec, c)
    if (1 + c.tau) * c.aperture >= math.pi / 2:
        raise ValueError("(1+tau)*aperture must stay below pi/2 so opposing cones are disjoint")
    m = c.m if c.m is not None else max(spec.dims)
    if c.base == "ball":
        dist, nz = geodesic_distance(spec, c.k, c.direction)
        x = ((1 + c.tau) * c.aperture - dist) / (c.tau * c.aperture)
        sym = np.where(nz, smoothstep(x, m), 0.0)
        sym = np.where(nz & (dist <= c.aperture + ANGLE_TOL), 1.0, sym)
    else:
        gauge = _cube_gauge(spec, c)
        with np.errstate(invalid="ignore"):
            x = (1 + c.tau - gauge) / c.tau
        sym = np.where(np.isfinite(gauge), smoothstep(np.nan_to_num(x, neginf=0.0), m), 0.0)
        sym = np.where(gauge <= 1.0 + ANGLE_TOL, 1.0, sym)
    meta = {"kind": "smooth_cone", **c.to_json(), "m": m}
    return Multiplier(spec, sym, {c.k}, meta)


def tensor(ms: list[Multiplier]) -> Multiplier:
    if not ms:
        raise ValueError("tensor of an empty list")
    spec = ms[0].spec
    seen: set = set()
    sym = np.ones([1] * len(spec.shape), dtype=np.complex128)
    for m in ms:
        if m.spec != spec:
            raise ValueError("tensor factors live on different grids")
        if seen & m.params:
            raise ValueError(f"tensor factors overlap on parameters {sorted(seen & m.params)}")
        seen |= m.params
        sym = sym * m.symbol
    return Multiplier(spec, sym, frozenset(seen), {"kind": "tensor", "parts": [m.meta for m in ms]})


def dense_matrix(m: Multiplier) -> np.ndarray:
    """Dense matrix of the operator in the sample basis (small grids only)."""
    n = m.spec.size
    eye = np.eye(n, dtype=np.complex128).reshape((n,) + m.spec.shape)
    cols = np.fft.ifftn(m.symbol * np.fft.fftn(eye, axes=range(1, eye.ndim), norm="ortho"),
                        axes=range(1, eye.ndim), norm="ortho")
    return cols.reshape(n, n).T
