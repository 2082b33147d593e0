"""Haar analysis on the discrete multi-parameter torus.

Each parameter with ``d`` axes and ``N = 2**J`` points per axis carries an
orthonormal Haar system of ``N**d`` functions, indexed as follows:

* index 0 is the constant function (the average signature);
* then, for levels ``0 .. J-1``, the dyadic cubes of side ``2**-level`` in
  row-major corner order, each carrying ``2**d - 1`` cancellative signatures
  ``eps`` in lexicographic order (the all-zero signature is skipped).

For ``d = 1`` this is the usual heap order.  Functions are normalized in
``L^2`` of the measure-one torus, so a cube ``Q`` contributes the value
``|Q|**-1/2`` in absolute value on its support.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from ..lattice import Field, GridSpec


@dataclass(frozen=True)
class DyadicCube:
    level: int
    corner: tuple[int, ...]

    def measure(self, d: int) -> float:
        return 2.0 ** (-self.level * d)

    def contains(self, other: "DyadicCube") -> bool:
        if other.level < self.level:
            return False
        shift = other.level - self.level
        return all((c >> shift) == s for c, s in zip(other.corner, self.corner))

    def ancestor(self, k: int) -> "DyadicCube | None":
        if k > self.level:
            return None
        return DyadicCube(self.level - k, tuple(c >> k for c in self.corner))

    def to_json(self):
        return {"level": self.level, "corner": list(self.corner)}


@dataclass(frozen=True)
class DyadicRectangle:
    """Product of one dyadic cube per parameter."""

    cubes: tuple[DyadicCube, ...]

    def measure(self, dims) -> float:
        return float(np.prod([q.measure(d) for q, d in zip(self.cubes, dims)]))

    def contains(self, other: "DyadicRectangle") -> bool:
        return all(a.contains(b) for a, b in zip(self.cubes, other.cubes))

    def to_json(self):
        return [q.to_json() for q in self.cubes]


class HaarBasis:
    """Orthonormal Haar system of one parameter (``d`` axes, ``N`` points each)."""

    def __init__(self, d: int, n: int):
        if n < 2 or n & (n - 1):
            raise ValueError(f"Haar basis needs a power-of-two side, got {n}")
        self.d = int(d)
        self.n = int(n)
        self.depth = self.n.bit_length() - 1
        self.size = self.n**self.d
        self.signatures = [e for e in itertools.product((0, 1), repeat=self.d) if any(e)]

        cubes = []
        for lev in range(self.depth):
            for corner in itertools.product(range(2**lev), repeat=self.d):
                cubes.append(DyadicCube(lev, corner))
        self.cubes = cubes
        self.cube_level = np.array([q.level for q in cubes], dtype=np.int64)
        self.cube_measure = 2.0 ** (-self.cube_level.astype(float) * self.d)

        # coefficient index -> cube id / signature; the average gets cube -1
        ns = len(self.signatures)
        self.coef_cube = np.concatenate([[-1], np.repeat(np.arange(len(cubes)), ns)])
        self.coef_sig = np.concatenate([[-1], np.tile(np.arange(ns), len(cubes))])
        self._cube_index = {q: i for i, q in enumerate(cubes)}

    def __repr__(self):
        return f"HaarBasis(d={self.d}, n={self.n})"

    @property
    def n_cubes(self) -> int:
        return len(self.cubes)

    def cube_id(self, cube: DyadicCube) -> int:
        return self._cube_index[cube]

    def coef_index(self, cube: DyadicCube, sig: int = 0) -> int:
        """Coefficient index of ``(cube, signature number sig)``."""
        return 1 + self.cube_id(cube) * len(self.signatures) + sig

    @cached_property
    def cancellative(self) -> np.ndarray:
        """Coefficient indices of the cancellative functions (all but 0)."""
        return np.arange(1, self.size)

    def _axis_factor(self, lev: int, c: int, eps: int) -> np.ndarray:
        side = self.n >> lev
        v = np.zeros(self.n)
        amp = 2.0 ** (lev / 2)
        if eps:
            half = side // 2
            v[c * side : c * side + half] = amp
            v[c * side + half : (c + 1) * side] = -amp
        else:
            v[c * side : (c + 1) * side] = amp
        return v

    def function(self, cube: DyadicCube, eps) -> np.ndarray:
        """Samples (shape ``(n,)*d``) of ``h_Q^eps``; ``eps`` all zero gives ``1_Q/|Q|^{1/2}``."""
        out = np.ones(())
        for c, e in zip(cube.corner, eps):
            out = np.multiply.outer(out, self._axis_factor(cube.level, c, e))
        return out

    @cached_property
    def matrix(self) -> np.ndarray:
        """Rows are the basis functions times ``N**(-d/2)``; the matrix is orthogonal."""
        rows = [np.ones(self.size)]
        for q in self.cubes:
            for e in self.signatures:
                rows.append(self.function(q, e).ravel())
        mat = np.array(rows) * self.n ** (-self.d / 2)
        mat.flags.writeable = False
        return mat

    @cached_property
    def membership(self) -> np.ndarray:
        """``membership[q, x] = 1`` when lattice point ``x`` lies in cube ``q``."""
        mem = np.zeros((self.n_cubes, self.size))
        for i, q in enumerate(self.cubes):
            mem[i] = self.function(q, (0,) * self.d).ravel() != 0
        return mem

    @cached_property
    def containment(self) -> np.ndarray:
        """``containment[q, p] = 1`` when cube ``p`` lies inside cube ``q``."""
        mem = self.membership
        inter = mem @ mem.T
        return (np.isclose(inter, mem.sum(axis=1)[None, :])).astype(float)

    @cached_property
    def average_rows(self) -> np.ndarray:
        """Rows ``1_Q/|Q|^{1/2}`` for every cube, times ``N**(-d/2)`` like :attr:`matrix`."""
        amp = np.sqrt(1.0 / self.cube_measure)[:, None]
        return self.membership * amp * self.n ** (-self.d / 2)


@lru_cache(maxsize=None)
def haar_basis(d: int, n: int) -> HaarBasis:
    return HaarBasis(d, n)


def bases_for(spec: GridSpec) -> tuple[HaarBasis, ...]:
    return tuple(haar_basis(d, n) for d, n in spec.params)


def param_view(spec: GridSpec, arr: np.ndarray) -> np.ndarray:
    """Reshape lattice samples to one axis per parameter."""
    return np.asarray(arr).reshape(spec.param_sizes)


def apply_per_param(arr: np.ndarray, mats: dict) -> np.ndarray:
    """Apply ``mats[axis]`` along the given axes of ``arr`` (``axis`` 0-based)."""
    out = arr
    for ax, m in mats.items():
        out = np.moveaxis(np.tensordot(m, out, axes=([1], [ax])), 0, ax)
    return out


@dataclass(frozen=True, eq=False)
class HaarTensor:
    """Haar coefficients ``<b, h_{Q_1}^{e_1} x ... x h_{Q_t}^{e_t}>``.

    ``coefficients`` has one axis per parameter, indexed as in :class:`HaarBasis`.
    """

    spec: GridSpec
    coefficients: np.ndarray

    @property
    def bases(self) -> tuple[HaarBasis, ...]:
        return bases_for(self.spec)

    def energy(self) -> float:
        return float(np.sum(np.abs(self.coefficients) ** 2))

    def cancellative_part(self, params=None) -> np.ndarray:
        """Coefficients with the average index dropped in the given (1-based) parameters."""
        params = range(1, self.spec.t + 1) if params is None else params
        idx = [slice(None)] * self.spec.t
        for k in params:
            idx[k - 1] = slice(1, None)
        return self.coefficients[tuple(idx)]


def _forward_param(arr: np.ndarray, d: int, n: int) -> np.ndarray:
    """Orthonormal Haar cascade over the last ``d`` axes (each of length ``n``).

    Works with sums and differences of neighbours, so samples that agree
    exactly produce exactly vanishing cancellative coefficients.
    """
    rest = arr.shape[: arr.ndim - d]
    approx = arr
    details = []
    m = n
    while m > 1:
        h = m // 2
        x = approx.reshape(rest + tuple(v for _ in range(d) for v in (h, 2)))
        nr = len(rest)
        x = np.transpose(x, list(range(nr)) + [nr + 2 * i for i in range(d)] + [nr + 2 * i + 1 for i in range(d)])
        for i in range(d):
            ax = nr + d + i
            a = np.take(x, 0, axis=ax)
            b = np.take(x, 1, axis=ax)
            x = np.stack([(a + b) / np.sqrt(2), (a - b) / np.sqrt(2)], axis=ax)
        x = x.reshape(rest + (h**d, 2**d))
        details.append(x[..., 1:].reshape(rest + (-1,)))
        approx = x[..., 0].reshape(rest + (h,) * d)
        m = h
    return np.concatenate([approx.reshape(rest + (1,))] + details[::-1], axis=-1)


def _inverse_param(coef: np.ndarray, d: int, n: int) -> np.ndarray:
    rest = coef.shape[:-1]
    nr = len(rest)
    approx = coef[..., :1].reshape(rest + (1,) * d)
    pos = 1
    m = 1
    while m < n:
        cnt = m**d * (2**d - 1)
        det = coef[..., pos : pos + cnt].reshape(rest + (m**d, 2**d - 1))
        pos += cnt
        x = np.concatenate([approx.reshape(rest + (m**d, 1)), det], axis=-1)
        x = x.reshape(rest + (m,) * d + (2,) * d)
        for i in range(d):
            ax = nr + d + i
            a = np.take(x, 0, axis=ax)
            b = np.take(x, 1, axis=ax)
            x = np.stack([(a + b) / np.sqrt(2), (a - b) / np.sqrt(2)], axis=ax)
        perm = list(range(nr)) + [v for i in range(d) for v in (nr + i, nr + d + i)]
        m *= 2
        approx = np.transpose(x, perm).reshape(rest + (m,) * d)
    return approx.reshape(rest + (n**d,))


def _transform(arr: np.ndarray, spec: GridSpec, params, inverse: bool) -> np.ndarray:
    out = arr
    for k in params:
        d, n = spec.params[k - 1]
        ax = k - 1
        moved = np.moveaxis(out, ax, -1)
        lat = moved.reshape(moved.shape[:-1] + (n,) * d)
        res = _inverse_param(moved, d, n) if inverse else _forward_param(lat, d, n)
        scale = n ** (d / 2) if inverse else n ** (-d / 2)
        out = np.moveaxis(res.reshape(moved.shape) * scale, -1, ax)
    return out


def haar_analysis(b: Field, params=None) -> HaarTensor:
    """Haar coefficients of ``b``.

    With ``params`` (1-based) only those parameters are transformed; the
    remaining axes keep their lattice samples.  This is how frozen variables
    are handled by the BMO norms.
    """
    spec = b.spec
    params = range(1, spec.t + 1) if params is None else params
    arr = param_view(spec, b.samples)
    return HaarTensor(spec, _transform(arr, spec, params, inverse=False))


def haar_synthesis(h: HaarTensor, params=None) -> Field:
    spec = h.spec
    params = range(1, spec.t + 1) if params is None else params
    out = _transform(np.asarray(h.coefficients, dtype=complex), spec, params, inverse=True)
    return Field(spec, out.reshape(spec.shape))


def haar_field(spec: GridSpec, cubes, sigs=None) -> Field:
    """Tensor product ``h_{Q_1}^{e_1} x ... x h_{Q_t}^{e_t}`` as a field.

    ``sigs[k]`` is a 0/1 tuple per parameter (default: first cancellative
    signature); an all-zero tuple gives the normalized indicator.
    """
    bases = bases_for(spec)
    out = np.ones(())
    for k, (bs, q) in enumerate(zip(bases, cubes)):
        e = bs.signatures[0] if sigs is None or sigs[k] is None else sigs[k]
        out = np.multiply.outer(out, bs.function(q, e).ravel())
    return Field(spec, out.reshape(spec.shape))
