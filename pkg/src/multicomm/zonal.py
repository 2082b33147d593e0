"""Zonal harmonics, odd cone profiles and Journé-type cone multipliers.

Zonal harmonics on ``S^{d-1}`` are normalized Gegenbauer polynomials
``Z_n(t) = C_n^{(d-2)/2}(t) / C_n^{(d-2)/2}(1)``, so ``Z_n(1) = 1``; for
``d = 2`` they are the Chebyshev polynomials ``cos(n arccos t)``.

A Journé cone multiplier on parameters ``k_1..k_i`` with poles ``xi_k`` has
symbol ``sum_n phi_n prod_k Z_n(<xi_k, eta_k>)`` at unit frequencies
``eta_k``, where ``phi_n`` are the zonal coefficients of an odd profile.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize

from .lattice import GridSpec
from .multiplier import Multiplier, orthonormal_frame, smoothstep

MC_CHUNK = 1 << 16


class QuadratureError(RuntimeError):
    pass


# ------------------------------------------------------------------ harmonics


def zonal_table(nmax: int, d: int, t) -> np.ndarray:
    """``Z_0..Z_nmax`` at ``t``; shape ``(nmax+1,) + t.shape``.

    Uses the normalized three-term recurrence
    ``Z_{n+1} = (2(n+lam) t Z_n - n Z_{n-1}) / (n + 2 lam)``, ``lam = (d-2)/2``.
    """
    if d < 2:
        raise ValueError("zonal harmonics need d >= 2")
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1 + 1e-12):
        raise ValueError("zonal argument outside [-1, 1]")
    t = np.clip(t, -1.0, 1.0)
    lam = (d - 2) / 2
    out = np.empty((nmax + 1,) + t.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = t
    for n in range(1, nmax):
        out[n + 1] = (2 * (n + lam) * t * out[n] - n * out[n - 1]) / (n + 2 * lam)
    return out


def zonal_eval(n: int, d: int, t):
    """Degree-``n`` zonal harmonic of ``S^{d-1}`` as a function of ``t = <xi, eta>``."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    val = zonal_table(n, d, t)[n]
    return float(val) if val.ndim == 0 else val


# -------------------------------------------------------------------- profile


@dataclass(frozen=True)
class PhiProfile:
    """Odd profile: 0 on ``[0, b]``, 1 on ``[a, 1]``, smoothstep in between."""

    a: float = 0.75
    b: float = 0.25
    m: int = 4

    def __post_init__(self):
        if not 0 < self.b < self.a < 1:
            raise ValueError("profile needs 0 < b < a < 1")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.sign(t) * smoothstep((np.abs(t) - self.b) / (self.a - self.b), self.m)

    def breakpoints(self) -> list[float]:
        """Angles ``theta`` in ``[0, pi]`` where the profile is not smooth."""
        ta, tb = math.acos(self.a), math.acos(self.b)
        return [0.0, ta, tb, math.pi / 2, math.pi - tb, math.pi - ta, math.pi]

    @property
    def plateau_radius(self) -> float:
        """Aperture ``pi/2 (1-a)`` of the cone on which the one-parameter multiplier is 1.

        It is at most ``arccos(a)``, the exact plateau of the profile.
        """
        return math.pi / 2 * (1 - self.a)

    @classmethod
    def parse(cls, text: str) -> "PhiProfile":
        kw = {}
        for item in filter(None, text.split(",")):
            key, val = item.split("=")
            kw[key.strip()] = int(val) if key.strip() == "m" else float(val)
        return cls(**kw)


@dataclass(frozen=True)
class ZonalCoefficients:
    d: int
    N: int
    values: np.ndarray
    delta: float
    quad_residual: float

    def synthesize(self, t) -> np.ndarray:
        return np.tensordot(self.values, zonal_table(self.N, self.d, t), axes=1)


def _theta_rule(breaks, nodes):
    xs, ws = np.polynomial.legendre.leggauss(nodes)
    th, wt = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        th.append((hi - lo) / 2 * xs + (hi + lo) / 2)
        wt.append((hi - lo) / 2 * ws)
    return np.concatenate(th), np.concatenate(wt)


def _measure_delta(profile: PhiProfile, coeffs: np.ndarray, d: int) -> float:
    """Sup of ``|sum phi_n Z_n - phi|`` on ``[-1, 1]``: dense scan plus local refinement."""
    N = len(coeffs) - 1
    th = np.linspace(0.0, math.pi / 2, 20001)
    t = np.cos(th)

    def err(x):
        return np.abs(np.tensordot(coeffs, zonal_table(N, d, x), axes=1) - profile(x))

    e = err(t)
    # the error is even in t up to rounding; scan the mirror image as well
    best = max(float(e.max()), float(err(-t).max()))
    peaks = np.argsort(e)[-8:]
    for p in peaks:
        lo, hi = th[max(p - 1, 0)], th[min(p + 1, len(th) - 1)]
        res = optimize.minimize_scalar(lambda s: -float(err(np.cos(s))), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-12})
        best = max(best, -float(res.fun), float(err(-np.cos(res.x))))
    return best


@lru_cache(maxsize=64)
def phi_coefficients(profile, d: int, N: int) -> ZonalCoefficients:
    """Zonal coefficients ``phi_0..phi_N`` of ``profile`` on ``S^{d-1}``.

    ``profile`` is a :class:`PhiProfile` or any hashable odd callable on
    ``[-1, 1]``; callables without ``breakpoints()`` are treated as smooth.

    Integrals are taken in ``theta = arccos t`` with weight ``sin^{d-2} theta``,
    split at the profile's break points so every piece is smooth, and
    evaluated with composite Gauss-Legendre rules.  The node count is doubled
    until the discrete Gram matrix of ``Z_0..Z_N`` is diagonal to 1e-10.
    """
    if N < 1:
        raise ValueError("degree cap must be >= 1")
    if d < 2:
        raise ValueError("zonal expansion needs d >= 2")
    if hasattr(profile, "breakpoints"):
        breaks = profile.breakpoints()
    else:
        breaks = [0.0, math.pi / 2, math.pi]
    nodes = N + 2 * getattr(profile, "m", 4) + d + 16
    for _ in range(8):
        th, wt = _theta_rule(breaks, nodes)
        w = wt * np.sin(th) ** (d - 2)
        Z = zonal_table(N, d, np.cos(th))
        gram = (Z * w) @ Z.T
        diag = np.diag(gram).copy()
        residual = float(np.max(np.abs(gram / np.sqrt(np.outer(diag, diag)) - np.eye(N + 1))))
        if residual <= 1e-10:
            break
        nodes *= 2
    else:
        raise QuadratureError(f"zonal quadrature did not converge, residual {residual:.3e}")
    values = (Z * w) @ profile(np.cos(th)) / diag
    delta = _measure_delta(profile, values, d)
    values.flags.writeable = False
    return ZonalCoefficients(d, N, values, delta, residual)


# --------------------------------------------------------------- Journé cones


@dataclass(frozen=True)
class JourneConeSpec:
    """Journé cone on parameters ``params`` (1-based) with poles ``directions``."""

    params: tuple
    directions: tuple
    profile: PhiProfile = PhiProfile()
    N: int = 41

    def __post_init__(self):
        dirs = tuple(tuple(float(v) for v in x) for x in self.directions)
        if len(dirs) != len(self.params):
            raise ValueError("one direction per parameter")
        if len(set(self.params)) != len(self.params):
            raise ValueError("repeated parameter in Journé cone")
        for x in dirs:
            if abs(np.linalg.norm(x) - 1) > 1e-12:
                raise ValueError("Journé cone directions must be unit vectors")
        object.__setattr__(self, "params", tuple(int(k) for k in self.params))
        object.__setattr__(self, "directions", dirs)

    @property
    def d(self) -> int:
        """Embedding dimension: the largest sphere dimension, at least ``S^1``."""
        return max(2, max(len(x) for x in self.directions))

    def coefficients(self) -> ZonalCoefficients:
        return phi_coefficients(self.profile, self.d, self.N)

    def to_json(self) -> dict:
        return {
            "kind": "journe_cone",
            "params": list(self.params),
            "dirs": [list(x) for x in self.directions],
            "N": self.N,
            "a": self.profile.a,
            "b": self.profile.b,
            "m": self.profile.m,
        }


def _cosines(spec: JourneConeSpec, etas) -> list[np.ndarray]:
    out = []
    for xi, eta in zip(spec.directions, etas):
        eta = np.asarray(eta, dtype=float)
        if eta.shape[-1] != len(xi):
            raise ValueError("eta dimension does not match its pole")
        if np.any(np.abs(np.linalg.norm(eta, axis=-1) - 1) > 1e-10):
            raise ValueError("eta must be unit vectors")
        out.append(eta @ np.asarray(xi))
    return out


def journe_cone_eval(spec: JourneConeSpec, *etas) -> np.ndarray:
    """Truncated Journé cone ``sum_{n<=N} phi_n prod_k Z_n(<xi_k, eta_k>)``."""
    if len(etas) != len(spec.params):
        raise ValueError(f"expected {len(spec.params)} frequency arguments")
    co = spec.coefficients()
    prod = None
    for t in _cosines(spec, etas):
        Z = zonal_table(spec.N, spec.d, t)
        prod = Z if prod is None else prod * Z
    return np.tensordot(co.values, prod, axes=1)


# ------------------------------------------------------------- Monte Carlo


def _subsphere_points(center, theta, rng, count):
    """Points at geodesic distance ``theta`` from ``center``; exact enumeration when the set is finite.

    Returns ``(points, exact)``.
    """
    center = np.asarray(center, dtype=float)
    d = center.size
    if theta <= 1e-15:
        return center[None, :], True
    if theta >= math.pi - 1e-15:
        return -center[None, :], True
    frame = orthonormal_frame(center)
    if d == 2:
        u = np.stack([frame[1], -frame[1]])
        return math.cos(theta) * center + math.sin(theta) * u, True
    g = rng.standard_normal((count, d - 1))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    u = g @ frame[1:]
    return math.cos(theta) * center + math.sin(theta) * u, False


def _angle(x, y) -> float:
    return math.acos(max(-1.0, min(1.0, float(np.dot(x, y)))))


def mc_conditional_expectation(n, d, xi1, xi2, eta1, eta2, samples: int = 10**6, seed=0):
    """Monte-Carlo estimate of ``E_a[ Z_n(<eta1, a>) | d(xi1, a) = d(xi2, eta2) ]``.

    ``a`` is uniform on the sub-sphere at the prescribed geodesic distance from
    ``xi1``; for ``d = 2`` or degenerate distances that set is finite and is
    enumerated exactly.  Sampling runs in fixed chunks with seeds spawned from
    ``seed`` so the result does not depend on how chunks are scheduled.

    Returns ``(estimate, standard_error)``.
    """
    xi1, xi2, eta1, eta2 = (np.asarray(v, dtype=float) for v in (xi1, xi2, eta1, eta2))
    for v in (xi1, xi2, eta1, eta2):
        if v.size != d or abs(np.linalg.norm(v) - 1) > 1e-10:
            raise ValueError("inputs must be unit vectors in R^d")
    theta = _angle(xi2, eta2)
    if d == 2 or theta <= 1e-15 or theta >= math.pi - 1e-15:
        pts, _ = _subsphere_points(xi1, theta, None, 0)
        vals = zonal_table(n, d, np.clip(pts @ eta1, -1, 1))[n]
        return float(vals.mean()), 0.0
    if samples < 1:
        raise ValueError("need at least one sample")
    nchunks = -(-samples // MC_CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(nchunks)
    total = 0.0
    total_sq = 0.0
    for i, ss in enumerate(seeds):
        count = min(MC_CHUNK, samples - i * MC_CHUNK)
        pts, _ = _subsphere_points(xi1, theta, np.random.default_rng(ss), count)
        vals = zonal_table(n, d, np.clip(pts @ eta1, -1, 1))[n]
        total += vals.sum()
        total_sq += (vals**2).sum()
    mean = total / samples
    var = max(total_sq / samples - mean**2, 0.0)
    return float(mean), float(math.sqrt(var / samples))


def iterated_cone_expectation(spec: JourneConeSpec, etas, base=None, samples: int = 4096, seed=0) -> float:
    """Journé cone value built by iterated conditional expectation.

    ``C_1(xi; eta) = base(<xi, eta>)`` and ``C_k`` averages ``C_{k-1}`` with its
    last pole replaced by ``a`` over ``d(a, xi_{k-1}) = d(eta_k, xi_k)``.
    ``base`` defaults to the truncated series ``sum_{n<=N} phi_n Z_n``; pass
    ``spec.profile`` for the untruncated cone.  Directions of lower-dimensional
    spheres are zero-padded to the embedding dimension.
    """
    d = spec.d
    if base is None:
        co = spec.coefficients()
        base = co.synthesize

    def pad(v):
        v = np.asarray(v, dtype=float)
        return np.concatenate([v, np.zeros(d - v.size)])

    xis = [pad(x) for x in spec.directions]
    ets = [pad(e) for e in etas]
    rng = np.random.default_rng(seed)

    def rec(k, poles):
        if k == 1:
            return float(base(np.clip(poles[0] @ ets[0], -1, 1)))
        theta = _angle(ets[k - 1], poles[k - 1])
        pts, _ = _subsphere_points(poles[k - 2], theta, rng, samples)
        return float(np.mean([rec(k - 1, poles[: k - 2] + [a]) for a in pts]))

    return rec(len(xis), xis)


# ----------------------------------------------------------- lattice symbol


def _unit_frequencies(grid: GridSpec, k: int):
    freqs = grid.frequencies(k)
    r = np.sqrt(sum(w.astype(float) ** 2 for w in freqs))
    nz = r > 0
    safe = np.where(nz, r, 1.0)
    return [w / safe for w in freqs], nz


def journe_symbol_parts(spec: JourneConeSpec, grid: GridSpec):
    """Per-parameter cosines ``<xi_k, eta_k>`` and nonzero masks on the lattice."""
    cos, masks = [], []
    for k, xi in zip(spec.params, spec.directions):
        if grid.params[k - 1][0] != len(xi):
            raise ValueError(f"direction for parameter {k} has wrong dimension")
        units, nz = _unit_frequencies(grid, k)
        cos.append(np.clip(sum(u * x for u, x in zip(units, xi)), -1, 1))
        masks.append(nz)
    return cos, masks


def journe_multiplier(spec: JourneConeSpec, grid: GridSpec) -> Multiplier:
    """Sample the truncated Journé cone on the lattice, radially extended.

    The symbol vanishes when any participating parameter has zero frequency.
    ``meta["certificate"]`` carries the plateau check (see
    :func:`plateau_certificate`).
    """
    co = spec.coefficients()
    cos, masks = journe_symbol_parts(spec, grid)
    prod = None
    for t in cos:
        Z = zonal_table(spec.N, spec.d, t)
        prod = Z if prod is None else prod * Z
    acc = np.tensordot(co.values, prod, axes=1)
    mask = np.ones([1] * len(grid.shape), dtype=bool)
    for m in masks:
        mask = mask & m
    sym = np.where(mask, acc, 0.0)
    meta = spec.to_json()
    meta["delta"] = co.delta
    meta["certificate"] = plateau_certificate(spec, grid, symbol=sym)
    return Multiplier(grid, sym, frozenset(spec.params), meta)


def plateau_certificate(spec: JourneConeSpec, grid: GridSpec, symbol=None) -> dict:
    """Check the symbol against +1 on the l1 ball ``sum_k d(xi_k, eta_k) < r``
    and against -1 on the balls with exactly one pole flipped."""
    co = spec.coefficients()
    r = spec.profile.plateau_radius
    cos, masks = journe_symbol_parts(spec, grid)
    if symbol is None:
        prod = None
        for t in cos:
            Z = zonal_table(spec.N, spec.d, t)
            prod = Z if prod is None else prod * Z
        symbol = np.tensordot(co.values, prod, axes=1)
    symbol = np.broadcast_to(np.real(symbol), np.broadcast_shapes(*[c.shape for c in cos]))
    dist = [np.arccos(c) for c in cos]
    flip = [math.pi - x for x in dist]
    mask = masks[0]
    for m in masks[1:]:
        mask = mask & m
    out = {"radius": r, "delta": co.delta}
    plateau = (sum(dist) < r) & mask
    out["plateau_points"] = int(plateau.sum())
    out["plateau_dev"] = float(np.max(np.abs(symbol[plateau] - 1))) if plateau.any() else 0.0
    flipped_pts, flipped_dev = 0, 0.0
    for j in range(len(cos)):
        tot = sum(flip[i] if i == j else dist[i] for i in range(len(cos)))
        sel = (tot < r) & mask
        if sel.any():
            flipped_pts += int(sel.sum())
            flipped_dev = max(flipped_dev, float(np.max(np.abs(symbol[sel] + 1))))
    out["flipped_points"] = flipped_pts
    out["flipped_dev"] = flipped_dev
    out["certified"] = out["plateau_dev"] <= co.delta and flipped_dev <= co.delta
    return out
