"""Product BMO, little bmo and little product BMO norms on the dyadic torus.

Product BMO is the Carleson-type quantity

    sup_U ( |U|^-1 * sum_{R in U} sum_eps |<b, h_R^eps>|^2 )^(1/2)

over open sets ``U``.  The supremum is approximated by a candidate family:
every single dyadic rectangle plus greedy unions of up to ``budget``
rectangles, added in decreasing order of their single-rectangle ratio.  The
candidate family for budget ``B`` is contained in the family for ``B + 1``,
so the result is non-decreasing in the budget.

Parameters outside the grouping are frozen: the norm is taken on every slice
and the largest slice value is returned.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

import numpy as np

from ..lattice import Field, GridSpec
from .haar import DyadicCube, DyadicRectangle, apply_per_param, bases_for, haar_analysis, param_view

DEFAULT_BUDGET = 8


@dataclass(frozen=True)
class PartitionSpec:
    """Partition of the parameter indices ``1..t`` into blocks."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(tuple(int(k) for k in blk) for blk in self.blocks)
        if not blocks or any(not blk for blk in blocks):
            raise ValueError("partition blocks must be nonempty")
        flat = [k for blk in blocks for k in blk]
        if len(set(flat)) != len(flat):
            raise ValueError(f"partition blocks overlap: {blocks}")
        if sorted(flat) != list(range(1, len(flat) + 1)):
            raise ValueError(f"partition must cover 1..{len(flat)} exactly, got {sorted(flat)}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def t(self) -> int:
        return sum(len(b) for b in self.blocks)

    @classmethod
    def parse(cls, text: str) -> "PartitionSpec":
        """Parse ``"(13)(2)"`` or ``"(1,3)(2)"``."""
        groups = re.findall(r"\(([^()]*)\)", text.replace(" ", ""))
        if not groups or "".join(f"({g})" for g in groups) != text.replace(" ", ""):
            raise ValueError(f"cannot parse partition {text!r}")
        blocks = []
        for g in groups:
            items = g.split(",") if "," in g else list(g)
            blocks.append(tuple(int(x) for x in items))
        return cls(tuple(blocks))

    @classmethod
    def trivial(cls, t: int) -> "PartitionSpec":
        """Singletons ``(1)(2)...(t)``."""
        return cls(tuple((k,) for k in range(1, t + 1)))

    @classmethod
    def full(cls, t: int) -> "PartitionSpec":
        """One block ``(12...t)``."""
        return cls((tuple(range(1, t + 1)),))

    def check(self, spec: GridSpec):
        if self.t != spec.t:
            raise ValueError(f"partition covers {self.t} parameters, grid has {spec.t}")

    def choices(self):
        """All choice vectors ``v`` with one index per block."""
        return list(itertools.product(*self.blocks))

    def __str__(self):
        sep = "," if self.t > 9 else ""
        return "".join("(" + sep.join(str(k) for k in blk) + ")" for blk in self.blocks)


@dataclass
class BmoResult:
    value: float
    norm: str
    achieving_set: list = field(default_factory=list)
    frozen: dict = field(default_factory=dict)
    budget: int | None = None
    choice: tuple | None = None

    def __float__(self):
        return float(self.value)

    def to_json(self) -> dict:
        out = {"value": self.value, "norm": self.norm, "budget": self.budget}
        if self.choice is not None:
            out["achieving_choice"] = list(self.choice)
        out["achieving_set"] = [r.to_json() for r in self.achieving_set]
        out["frozen"] = {str(k): list(v) for k, v in self.frozen.items()}
        return out


def _check_grouping(spec: GridSpec, grouping) -> list[int]:
    if grouping is None:
        grouping = range(1, spec.t + 1)
    grouping = [int(k) for k in grouping]
    if not grouping:
        raise ValueError("grouping must be nonempty")
    if len(set(grouping)) != len(grouping):
        raise ValueError(f"repeated parameter in grouping {grouping}")
    for k in grouping:
        if not 1 <= k <= spec.t:
            raise ValueError(f"parameter {k} not in grid with {spec.t} parameters")
    return sorted(grouping)


def _frozen_coords(spec: GridSpec, frozen: list[int], flat: int) -> dict:
    sizes = [spec.param_sizes[k - 1] for k in frozen]
    out = {}
    for k, i in zip(frozen, np.unravel_index(flat, sizes) if sizes else []):
        d, n = spec.params[k - 1]
        out[k] = tuple(int(c) for c in np.unravel_index(int(i), (n,) * d))
    return out


def rectangle_energy(b: Field, grouping) -> np.ndarray:
    """Energy ``sum_eps |<b, h_R^eps>|^2`` per rectangle of the grouped parameters.

    Returns an array of shape ``(slices, C_1, ..., C_g)`` where ``C_j`` is the
    number of dyadic cubes of the ``j``-th grouped parameter and slices run
    over the lattice points of the frozen parameters (row-major).
    """
    spec = b.spec
    grouping = _check_grouping(spec, grouping)
    frozen = [k for k in range(1, spec.t + 1) if k not in grouping]
    coeffs = haar_analysis(b, params=grouping).coefficients
    order = [k - 1 for k in frozen + grouping]
    arr = np.transpose(coeffs, order)
    n_slices = int(np.prod([spec.param_sizes[k - 1] for k in frozen])) if frozen else 1
    arr = arr.reshape((n_slices,) + tuple(spec.param_sizes[k - 1] for k in grouping))
    arr = arr[(slice(None),) + (slice(1, None),) * len(grouping)]
    energy = np.abs(arr) ** 2
    bases = bases_for(spec)
    for j, k in enumerate(grouping):
        bs = bases[k - 1]
        shp = energy.shape
        energy = energy.reshape(shp[: j + 1] + (bs.n_cubes, len(bs.signatures)) + shp[j + 2 :])
        energy = energy.sum(axis=j + 2)
    return energy


def _greedy(energy, carleson_ratio, measure, grouping, bases, budget):
    """Best prefix of the greedy union sequence on one slice.

    Returns ``(best ratio, list of cube-index tuples)``.
    """
    mems = {j: bases[k - 1].membership for j, k in enumerate(grouping)}
    vol = float(np.prod([bases[k - 1].n ** -bases[k - 1].d for k in grouping]))
    flat_ratio = carleson_ratio.ravel()
    flat_meas = np.broadcast_to(measure, carleson_ratio.shape).ravel()
    first = int(np.argmax(flat_ratio))
    best = float(flat_ratio[first])
    best_set = [np.unravel_index(first, carleson_ratio.shape)]
    if best <= 0.0 or budget <= 1:
        return best, (best_set if best > 0 else [])

    union = np.zeros(tuple(bases[k - 1].size for k in grouping), dtype=bool)
    outside = None
    chosen = []
    # decreasing ratio (compared at 12 significant digits), then smaller
    # rectangles first so ties leave room for the union to grow
    key = np.round(flat_ratio / best, 12)
    order = np.lexsort((np.arange(flat_ratio.size), flat_meas, -key))
    for flat in order:
        if flat_ratio[flat] <= 0.0 or len(chosen) >= budget:
            break
        cubes = np.unravel_index(int(flat), carleson_ratio.shape)
        if outside is not None and outside[cubes] < 0.5:
            continue  # already inside the union
        mask = np.ones((), dtype=bool)
        for j, q in enumerate(cubes):
            mask = np.multiply.outer(mask, mems[j][q] > 0)
        union |= mask
        chosen.append(cubes)
        outside = apply_per_param((~union).astype(float), mems)
        val = float(energy[outside < 0.5].sum() / (union.sum() * vol))
        if val > best * (1 + 1e-13):
            best, best_set = val, list(chosen)
    return best, best_set


def product_bmo_norm(b: Field, grouping=None, budget: int = DEFAULT_BUDGET) -> BmoResult:
    """Dyadic product BMO norm of ``b`` in the grouped parameters (1-based).

    Averages in the grouped parameters are projected off.  Parameters outside
    ``grouping`` are frozen and the supremum over their lattice points is taken.

    Parameters
    ----------
    b : Field
    grouping : iterable of int, optional
        Parameters carrying the Carleson condition; all parameters by default.
    budget : int
        Largest number of rectangles in a greedy union; 1 means single
        rectangles only.

    Returns
    -------
    BmoResult
        ``value`` plus the achieving rectangles and frozen coordinates.
    """
    spec = b.spec
    grouping = _check_grouping(spec, grouping)
    if budget < 1:
        raise ValueError("budget must be >= 1")
    frozen = [k for k in range(1, spec.t + 1) if k not in grouping]
    bases = bases_for(spec)
    energy = rectangle_energy(b, grouping)
    carleson = apply_per_param(energy, {j + 1: bases[k - 1].containment for j, k in enumerate(grouping)})
    meas = np.ones(())
    for k in grouping:
        meas = np.multiply.outer(meas, bases[k - 1].cube_measure)
    ratio = carleson / meas

    # slices in decreasing order of their single-rectangle value; a slice
    # whose single value cannot beat the current best may still win through
    # unions, so all slices are visited.
    best, best_set, best_slice = 0.0, [], 0
    for s in range(ratio.shape[0]):
        val, cubes = _greedy(energy[s], ratio[s], meas, grouping, bases, budget)
        if val > best * (1 + 1e-13):
            best, best_set, best_slice = val, cubes, s
    rects = [
        DyadicRectangle(tuple(bases[k - 1].cubes[int(c)] for k, c in zip(grouping, cubes)))
        for cubes in best_set
    ]
    return BmoResult(
        value=float(np.sqrt(best)),
        norm="product",
        achieving_set=rects,
        frozen=_frozen_coords(spec, frozen, best_slice) if best_set else {},
        budget=budget,
        choice=tuple(grouping),
    )


def _block_view(arr: np.ndarray, spec: GridSpec, levels) -> np.ndarray:
    """Split every axis into (blocks, block side); block axes first."""
    outer, inner = [], []
    for (d, n), lev in zip(spec.params, levels):
        for _ in range(d):
            outer.append(2**lev)
            inner.append(n >> lev)
    shp = [x for pair in zip(outer, inner) for x in pair]
    m = len(outer)
    view = arr.reshape(shp)
    return np.transpose(view, list(range(0, 2 * m, 2)) + list(range(1, 2 * m, 2))), m


def mean_oscillation_sup(b: Field):
    """Largest ``|Q|^-1 int_Q |b - b_Q|`` over dyadic rectangles, with the rectangle."""
    spec = b.spec
    best, best_rect = 0.0, None
    for levels in itertools.product(*[range(spec.depth(k) + 1) for k in range(1, spec.t + 1)]):
        view, m = _block_view(b.samples, spec, levels)
        inner = tuple(range(m, 2 * m))
        mean = view.mean(axis=inner, keepdims=True)
        osc = np.abs(view - mean).mean(axis=inner)
        flat = int(np.argmax(osc))
        val = float(osc.ravel()[flat])
        if val > best * (1 + 1e-13) + 1e-300:
            best = val
            corner = np.unravel_index(flat, osc.shape)
            cubes, pos = [], 0
            for (d, _), lev in zip(spec.params, levels):
                cubes.append(DyadicCube(lev, tuple(int(c) for c in corner[pos : pos + d])))
                pos += d
            best_rect = DyadicRectangle(tuple(cubes))
    return best, best_rect


def little_bmo_norm(b: Field, method: str = "rectangles") -> BmoResult:
    """Little bmo norm of ``b``.

    ``method="rectangles"`` takes the largest mean oscillation
    ``|Q|^-1 int_Q |b - b_Q|`` over all dyadic rectangles, including
    rectangles that are single lattice points in some parameters.

    ``method="sliced"`` measures one-parameter BMO in each variable
    separately, uniformly over the other variables: the largest
    one-parameter Carleson norm over all parameters and all frozen slices.
    This is the quantity the one-block little product BMO norm reproduces
    exactly.
    """
    if method == "rectangles":
        val, rect = mean_oscillation_sup(b)
        return BmoResult(val, "little", [rect] if rect is not None else [])
    if method == "sliced":
        best = None
        for k in range(1, b.spec.t + 1):
            res = product_bmo_norm(b, grouping=[k], budget=1)
            if best is None or res.value > best.value:
                best = res
        best.norm = "little-sliced"
        best.budget = None
        return best
    raise ValueError(f"unknown little bmo method {method!r}")


def little_product_bmo_norm(b: Field, part: PartitionSpec, budget: int = DEFAULT_BUDGET) -> BmoResult:
    """Little product BMO norm for the partition ``part``.

    The supremum over choice vectors ``v`` (one parameter per block) of the
    product BMO norm in the parameters ``v``, uniformly in the remaining
    (frozen) parameters.
    """
    part.check(b.spec)
    best = None
    for v in part.choices():
        res = product_bmo_norm(b, grouping=v, budget=budget)
        if best is None or res.value > best.value:
            best = res
            best.choice = tuple(v)
    best.norm = f"little-product{part}"
    return best


def frozen_slices(b: Field, params) -> list[tuple[dict, Field]]:
    """Restrictions of ``b`` to each lattice point of the parameters *not* in ``params``."""
    spec = b.spec
    keep = [int(k) for k in params]
    frozen = [k for k in range(1, spec.t + 1) if k not in keep]
    sub = GridSpec(tuple(spec.params[k - 1] for k in keep))
    arr = np.transpose(param_view(spec, b.samples), [k - 1 for k in frozen + keep])
    n_slices = int(np.prod([spec.param_sizes[k - 1] for k in frozen])) if frozen else 1
    arr = arr.reshape((n_slices,) + sub.shape)
    return [(_frozen_coords(spec, frozen, s), Field(sub, arr[s])) for s in range(n_slices)]
