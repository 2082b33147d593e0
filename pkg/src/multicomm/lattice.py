"""Discrete multi-parameter torus: grids, fields, Fourier transforms, pairings.

A grid is a product of ``t`` parameters; parameter ``k`` (1-based) is a
``d_k``-dimensional discrete torus with ``N_k`` points per axis.  Samples are
stored as a numpy array whose axes are the concatenation of the axes of all
parameters, so flattening in C order gives the row-major layout used on disk.

The torus has total measure one: every lattice cell carries the volume
``prod_k N_k ** -d_k``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
_MAGIC = b"MCFD"


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class GridSpec:
    """Ordered list of ``(d_k, N_k)`` pairs."""

    params: tuple[tuple[int, int], ...]

    def __post_init__(self):
        params = tuple((int(d), int(n)) for d, n in self.params)
        if not params:
            raise ValueError("grid needs at least one parameter")
        for d, n in params:
            if d < 1:
                raise ValueError(f"parameter dimension must be >= 1, got {d}")
            if n < 4 or not _is_pow2(n):
                raise ValueError(f"points per axis must be a power of two >= 4, got {n}")
        object.__setattr__(self, "params", params)

    @classmethod
    def uniform(cls, dims, n: int) -> "GridSpec":
        return cls(tuple((d, n) for d in dims))

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse ``"1x16,1x16,2x8"`` (``d x N`` per parameter)."""
        params = []
        for part in text.split(","):
            d, n = part.lower().split("x")
            params.append((int(d), int(n)))
        return cls(tuple(params))

    def __str__(self):
        return ",".join(f"{d}x{n}" for d, n in self.params)

    @property
    def t(self) -> int:
        return len(self.params)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for d, _ in self.params)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(n for d, n in self.params for _ in range(d))

    @property
    def size(self) -> int:
        return int(np.prod([n**d for d, n in self.params]))

    @property
    def param_sizes(self) -> tuple[int, ...]:
        """Number of lattice points of each parameter, ``N_k ** d_k``."""
        return tuple(n**d for d, n in self.params)

    @property
    def cell_volume(self) -> float:
        return float(np.prod([float(n) ** -d for d, n in self.params]))

    def depth(self, k: int) -> int:
        """Number of dyadic levels carrying Haar functions in parameter ``k``."""
        return int(self.params[self._idx(k)][1]).bit_length() - 1

    def _idx(self, k: int) -> int:
        if not 1 <= k <= self.t:
            raise ValueError(f"parameter index {k} outside 1..{self.t}")
        return k - 1

    def axes(self, k: int) -> tuple[int, ...]:
        """Array axes belonging to parameter ``k`` (1-based)."""
        i = self._idx(k)
        start = sum(d for d, _ in self.params[:i])
        return tuple(range(start, start + self.params[i][0]))

    def frequencies(self, k: int) -> list[np.ndarray]:
        """Integer frequencies of parameter ``k``, one broadcastable array per axis.

        Frequencies lie in ``[-N/2, N/2)`` and are laid out in FFT order, so
        ``-N/2`` is a genuine negative frequency.
        """
        ndim = len(self.shape)
        _, n = self.params[self._idx(k)]
        out = []
        for ax in self.axes(k):
            shp = [1] * ndim
            shp[ax] = n
            out.append(np.fft.fftfreq(n, 1.0 / n).round().astype(np.int64).reshape(shp))
        return out

    def to_json(self) -> list[list[int]]:
        return [list(p) for p in self.params]


class Field:
    """Complex samples on a :class:`GridSpec`; immutable after construction."""

    __slots__ = ("spec", "samples")

    def __init__(self, spec: GridSpec, samples):
        arr = np.array(samples, dtype=np.complex128)
        if arr.size != spec.size:
            raise ValueError(f"expected {spec.size} samples, got {arr.size}")
        arr = arr.reshape(spec.shape)
        if not np.all(np.isfinite(arr)):
            raise ValueError("field samples must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "samples", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    @classmethod
    def zeros(cls, spec: GridSpec) -> "Field":
        return cls(spec, np.zeros(spec.shape))

    @classmethod
    def constant(cls, spec: GridSpec, value=1.0) -> "Field":
        return cls(spec, np.full(spec.shape, value, dtype=np.complex128))

    @classmethod
    def from_function(cls, spec: GridSpec, fn) -> "Field":
        """Sample ``fn(*coords)`` where coords are points of ``[0, 1)`` per axis."""
        coords = np.meshgrid(*[np.arange(n) / n for n in spec.shape], indexing="ij")
        return cls(spec, fn(*coords))

    @classmethod
    def random(cls, spec: GridSpec, rng, real: bool = False) -> "Field":
        rng = np.random.default_rng(rng)
        x = rng.standard_normal(spec.shape)
        if not real:
            x = x + 1j * rng.standard_normal(spec.shape)
        return cls(spec, x)

    def _check(self, other: "Field"):
        if other.spec != self.spec:
            raise ValueError(f"grid mismatch: {self.spec} vs {other.spec}")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.spec, self.samples + other.samples)
        return Field(self.spec, self.samples + other)

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.spec, self.samples - other.samples)
        return Field(self.spec, self.samples - other)

    def __mul__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.spec, self.samples * other.samples)
        return Field(self.spec, self.samples * other)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.spec, -self.samples)

    def conj(self) -> "Field":
        return Field(self.spec, self.samples.conj())

    def __repr__(self):
        return f"Field(spec={self.spec}, norm={l2_norm(self):.6g})"


@dataclass(frozen=True)
class FreqField:
    """Unitary Fourier coefficients, stored in FFT order.

    ``coefficients[idx]`` is the coefficient of the frequency obtained from
    :meth:`GridSpec.frequencies` at ``idx``; :meth:`centered` reorders them to
    increasing frequency ``-N/2 .. N/2-1`` on every axis.
    """

    spec: GridSpec
    coefficients: np.ndarray

    def centered(self) -> np.ndarray:
        return np.fft.fftshift(self.coefficients)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coefficients) ** 2) * self.spec.cell_volume))


def forward_transform(f: Field) -> FreqField:
    if not np.all(np.isfinite(f.samples)):
        raise ValueError("non-finite samples in forward_transform")
    return FreqField(f.spec, np.fft.fftn(f.samples, norm="ortho"))


def inverse_transform(F: FreqField, spec: GridSpec | None = None) -> Field:
    if spec is not None and spec != F.spec:
        raise ValueError(f"grid mismatch: {F.spec} vs {spec}")
    if F.coefficients.shape != F.spec.shape:
        raise ValueError("coefficient array does not match its grid")
    return Field(F.spec, np.fft.ifftn(F.coefficients, norm="ortho"))


def inner_product(f: Field, g: Field) -> complex:
    """``sum f * conj(g) * cell_volume``."""
    f._check(g)
    return complex(np.vdot(g.samples, f.samples) * f.spec.cell_volume)


def l2_norm(f: Field) -> float:
    return float(np.sqrt(np.sum(np.abs(f.samples) ** 2) * f.spec.cell_volume))


# ---------------------------------------------------------------- serialization


def field_to_bytes(f: Field) -> bytes:
    header = json.dumps(
        {
            "version": FORMAT_VERSION,
            "params": f.spec.to_json(),
            "layout": "row-major",
            "dtype": "complex128",
        },
        sort_keys=True,
    ).encode()
    body = np.ascontiguousarray(f.samples, dtype="<c16").tobytes()
    return _MAGIC + struct.pack("<I", len(header)) + header + body


def field_from_bytes(data: bytes) -> Field:
    if data[:4] != _MAGIC:
        raise ValueError("not a field container (bad magic)")
    (hlen,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8 : 8 + hlen])
    if header.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported field version {header.get('version')}")
    if header.get("layout") != "row-major" or header.get("dtype") != "complex128":
        raise ValueError("unsupported layout or dtype")
    spec = GridSpec(tuple(tuple(p) for p in header["params"]))
    body = np.frombuffer(data[8 + hlen :], dtype="<c16")
    return Field(spec, body)


def field_to_json(f: Field) -> dict:
    flat = f.samples.ravel()
    return {
        "version": FORMAT_VERSION,
        "params": f.spec.to_json(),
        "layout": "row-major",
        "dtype": "complex128",
        "re": flat.real.tolist(),
        "im": flat.imag.tolist(),
    }


def field_from_json(obj: dict) -> Field:
    if obj.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported field version {obj.get('version')}")
    spec = GridSpec(tuple(tuple(p) for p in obj["params"]))
    return Field(spec, np.asarray(obj["re"]) + 1j * np.asarray(obj["im"]))


def save_field(f: Field, path) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(field_to_json(f)))
    else:
        path.write_bytes(field_to_bytes(f))


def load_field(path) -> Field:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == _MAGIC:
        return field_from_bytes(data)
    return field_from_json(json.loads(data))
