"""Experiment harness: symbol generators, two-sided studies, shift-bound studies.

A run is described by an :class:`ExperimentConfig` (flat TOML, see
``docs/config.md``) and produces a :class:`RatioReport`.  Every sample ``i``
draws from its own seed ``sample_seed(seed, i)``, so samples can run in any
order or in parallel and the report is still identical.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import platform
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .commutator import iterated_commutator, operator_norm
from .dyadic.bmo import PartitionSpec, little_bmo_norm, little_product_bmo_norm
from .dyadic.haar import HaarTensor, bases_for, haar_synthesis
from .dyadic.shift import ShiftSpec, make_shift
from .grammar import build, format_descriptor, parse_ops
from .lattice import Field, GridSpec, l2_norm, load_field

SCHEMA_VERSION = 1
CSV_COLUMNS = ["sample", "seed", "label", "bmo", "commutator", "scale", "ratio", "flagged"]
SYMBOL_KINDS = ("random-haar", "separable", "frozen-variable", "file")
EXPERIMENTS = ("two-sided", "shift-bound")


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed run description; every field maps to one flat TOML key."""

    grid: str
    seed: int
    experiment: str = "two-sided"
    partition: str | None = None
    family: tuple = ("auto",)
    family_size: int | None = None
    symbol_kind: str = "random-haar"
    symbol_decay: float = 0.5
    symbol_real: bool = True
    symbol_vars: tuple = (2,)
    symbol_beta: str = "random"
    symbol_slice: int = 1
    symbol_file: str | None = None
    samples: int = 50
    method: str = "power"
    tol: float = 1e-6
    max_iter: int = 500
    budget: int = 8
    min_bmo: float = 1e-9
    complexities: tuple = ()
    function_decay: float = 0.7
    workers: int = 1
    output: str | None = None

    def __post_init__(self):
        fam = (self.family,) if isinstance(self.family, str) else tuple(self.family)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "symbol_vars", tuple(int(v) for v in self.symbol_vars))
        object.__setattr__(self, "complexities", tuple(tuple(int(c) for c in cx) for cx in self.complexities))
        self.validate()

    @property
    def grid_spec(self) -> GridSpec:
        return GridSpec.parse(self.grid)

    @property
    def partition_spec(self) -> PartitionSpec:
        if self.partition is None:
            return PartitionSpec.trivial(self.grid_spec.t)
        return PartitionSpec.parse(self.partition)

    def validate(self):
        g = self.grid_spec
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.symbol_kind not in SYMBOL_KINDS:
            raise ValueError(f"unknown symbol kind {self.symbol_kind!r}; choose from {SYMBOL_KINDS}")
        if self.samples < 1:
            raise ValueError("samples must be positive")
        self.partition_spec.check(g)
        for v in self.symbol_vars:
            if not 1 <= v <= g.t:
                raise ValueError(f"symbol_vars refers to parameter {v}, grid has {g.t}")
        if not 1 <= self.symbol_slice <= g.t:
            raise ValueError(f"symbol_slice refers to parameter {self.symbol_slice}, grid has {g.t}")
        if self.symbol_kind == "file" and not self.symbol_file:
            raise ValueError("symbol_kind = 'file' needs symbol_file")
        if self.experiment == "shift-bound" and g.t != 2:
            raise ValueError("shift-bound studies need a bi-parameter grid")
        if self.experiment == "two-sided":
            family_tuples(self)  # raises on bad parameter references

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        if "seed" not in raw:
            raise ValueError("config must set a seed")
        return cls(**raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def replace(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig(**{**asdict(self), **changes})

    def to_json(self) -> dict:
        out = asdict(self)
        out["family"] = list(self.family)
        out["symbol_vars"] = list(self.symbol_vars)
        out["complexities"] = [list(c) for c in self.complexities]
        return out


def sample_seed(seed: int, i: int) -> int:
    """Per-sample seed derived from the run seed."""
    return int(np.random.SeedSequence([int(seed), int(i)]).generate_state(1)[0])


# ------------------------------------------------------------- symbols


def haar_random_field(grid: GridSpec, seed: int, decay: float = 0.5, real: bool = True,
                      cancellative: bool = True) -> Field:
    """Random Haar series whose coarse coefficients do not depend on ``N``.

    The block of coefficients at levels ``(l_1, ..., l_t)`` is drawn from a
    generator seeded by ``(seed, l_1 + 1, ..., l_t + 1)`` and scaled by
    ``prod_k decay**l_k |Q_k|**(1/2)``, so refining the grid only appends
    finer levels.  Without ``cancellative`` the averages get a seeded
    standard normal coefficient as well (seed entry 0).
    """
    bases = bases_for(grid)
    coef = np.zeros(grid.param_sizes, dtype=complex)
    level_slices = []
    for bs in bases:
        ns = len(bs.signatures)
        opts = [] if cancellative else [(-1, slice(0, 1), 1.0)]
        start = 1
        for lev in range(bs.depth):
            count = ns * 2 ** (lev * bs.d)
            amp = decay**lev * 2.0 ** (-lev * bs.d / 2)
            opts.append((lev, slice(start, start + count), amp))
            start += count
        level_slices.append(opts)
    for combo in itertools.product(*level_slices):
        levels = [lev + 1 for lev, _, _ in combo]  # SeedSequence needs nonnegative entries
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), *levels]))
        idx = tuple(s for _, s, _ in combo)
        shape = tuple(s.stop - s.start for s in idx)
        block = rng.standard_normal(shape)
        if not real:
            block = block + 1j * rng.standard_normal(shape)
        coef[idx] = block * math.prod(a for _, _, a in combo)
    return haar_synthesis(HaarTensor(grid, coef))


def _separable(grid: GridSpec, vars_, beta: str, seed: int) -> Field:
    if beta == "constant":
        return Field.constant(grid, 1.0)
    if beta != "random":
        raise ValueError(f"unknown symbol_beta {beta!r}")
    sub = GridSpec(tuple(grid.params[v - 1] for v in sorted(vars_)))
    beta_field = haar_random_field(sub, seed, real=True, cancellative=False)
    shape = [1] * len(grid.shape)
    for v in sorted(vars_):
        for ax in grid.axes(v):
            shape[ax] = grid.shape[ax]
    return Field(grid, np.broadcast_to(beta_field.samples.reshape(shape), grid.shape))


def _frozen_variable(grid: GridSpec, p: int, decay: float, real: bool, seed: int) -> Field:
    """Random Haar series in the other parameters times a point mass in parameter ``p``."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    g = haar_random_field(grid, seed, decay, real)
    spot = np.zeros(grid.param_sizes[p - 1])
    spot[rng.integers(spot.size)] = 1.0
    shape = [1] * len(grid.param_sizes)
    shape[p - 1] = spot.size
    mask = spot.reshape(shape)
    arr = g.samples.reshape(grid.param_sizes) * mask
    return Field(grid, arr.reshape(grid.shape))


def gen_symbol(config: ExperimentConfig, sample: int = 0) -> Field:
    """Symbol number ``sample`` of a run."""
    grid = config.grid_spec
    s = sample_seed(config.seed, sample)
    kind = config.symbol_kind
    if kind == "random-haar":
        return haar_random_field(grid, s, config.symbol_decay, config.symbol_real)
    if kind == "separable":
        return _separable(grid, config.symbol_vars, config.symbol_beta, s)
    if kind == "frozen-variable":
        return _frozen_variable(grid, config.symbol_slice, config.symbol_decay, config.symbol_real, s)
    if kind == "file":
        b = load_field(config.symbol_file)
        if b.spec != grid:
            raise ValueError(f"symbol file grid {b.spec} differs from config grid {grid}")
        return b
    raise ValueError(f"unknown symbol kind {kind!r}")


# -------------------------------------------------------------- families


def _bracket_string(grid: GridSpec, block, choice, journe: bool) -> str:
    if journe:
        dirs = [list(np.eye(grid.params[k - 1][0])[j]) for k, j in zip(block, choice)]
        return "journe:" + ",".join([
            f"params={json.dumps(list(block))}",
            f"dirs={json.dumps(dirs, separators=(',', ':'))}",
            "N=21",
        ])
    parts = []
    for k, j in zip(block, choice):
        d = grid.params[k - 1][0]
        parts.append(f"hilbert:k={k}" if d == 1 else f"riesz:k={k},j={j + 1}")
    return parts[0] if len(parts) == 1 else "tensor(" + " ; ".join(parts) + ")"


def auto_family(grid: GridSpec, part: PartitionSpec, journe: bool = False) -> list[str]:
    """All direction tuples: one bracket per block, a tensor of Hilbert/Riesz
    transforms (or one Journé cone) over the block's parameters."""
    per_block = []
    for block in part.blocks:
        ranges = [range(grid.params[k - 1][0]) for k in block]
        per_block.append([_bracket_string(grid, block, ch, journe) for ch in itertools.product(*ranges)])
    return [" | ".join(t) for t in itertools.product(*per_block)]


def family_tuples(config: ExperimentConfig) -> list[str]:
    """Operator-tuple strings of a two-sided run, checked against the partition."""
    grid, part = config.grid_spec, config.partition_spec
    fam = list(config.family)
    if fam == ["auto"]:
        fam = auto_family(grid, part)
    elif fam == ["journe"]:
        fam = auto_family(grid, part, journe=True)
    if config.family_size is not None:
        fam = fam[: config.family_size]
    if not fam:
        raise ValueError("empty operator family")
    blocks = sorted(tuple(sorted(b)) for b in part.blocks)
    for text in fam:
        touched = sorted(tuple(sorted(_params_of(d, grid.t))) for d in parse_ops(text))
        if touched != blocks:
            raise ValueError(f"operator tuple {text!r} does not give one bracket per block of {part}")
    return fam


def _params_of(desc: dict, t: int) -> set:
    if desc["kind"] == "tensor":
        out = set()
        for p in desc["parts"]:
            out |= _params_of(p, t)
        return out
    ks = desc.get("params", [desc.get("k")])
    for k in ks:
        if not isinstance(k, int) or not 1 <= k <= t:
            raise ValueError(f"operator refers to parameter {k}, grid has {t}")
    return set(ks)


@lru_cache(maxsize=8)
def _family_ops(grid_text: str, family: tuple):
    grid = GridSpec.parse(grid_text)
    return [[build(d, grid) for d in parse_ops(text)] for text in family]


# ---------------------------------------------------------------- report


@dataclass
class RatioReport:
    """Rows of ``ratio = commutator / (scale * bmo)`` plus summary and environment."""

    experiment: str
    config: dict
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    environment: dict = field(default_factory=dict)
    schema: int = SCHEMA_VERSION

    @property
    def flagged_only(self) -> bool:
        return bool(self.rows) and all(r["flagged"] for r in self.rows)

    def to_json(self) -> dict:
        return {
            "schema": self.schema,
            "experiment": self.experiment,
            "config": self.config,
            "rows": self.rows,
            "summary": self.summary,
            "environment": self.environment,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, obj: dict) -> "RatioReport":
        if obj.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {obj.get('schema')}")
        return cls(obj["experiment"], obj["config"], obj["rows"], obj["summary"], obj["environment"])

    @classmethod
    def load(cls, path) -> "RatioReport":
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in CSV_COLUMNS})
        return buf.getvalue()

    def to_markdown(self) -> str:
        s = self.summary
        lines = [
            f"# {self.experiment} on {self.config.get('grid')}",
            "",
            f"rows: {s.get('rows')}, flagged: {s.get('flagged')}",
            f"ratio min {_fmt(s.get('min'))}, median {_fmt(s.get('median'))}, "
            f"max {_fmt(s.get('max'))}, band {_fmt(s.get('band'))}",
            "",
            "| " + " | ".join(CSV_COLUMNS) + " |",
            "|" + "---|" * len(CSV_COLUMNS),
        ]
        for r in self.rows:
            lines.append("| " + " | ".join(_fmt(r.get(k)) for k in CSV_COLUMNS) + " |")
        return "\n".join(lines) + "\n"

    def save(self, path, fmt: str | None = None):
        path = Path(path)
        fmt = fmt or {".csv": "csv", ".md": "md"}.get(path.suffix, "json")
        text = {"csv": self.to_csv, "md": self.to_markdown, "json": self.dumps}[fmt]()
        path.write_text(text)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def summarize(rows: list) -> dict:
    ratios = [r["ratio"] for r in rows if not r["flagged"]]
    out = {"rows": len(rows), "flagged": len(rows) - len(ratios)}
    if ratios:
        lo, hi = min(ratios), max(ratios)
        out.update(min=lo, max=hi, median=statistics.median(ratios), band=hi / lo if lo > 0 else math.inf)
    else:
        out.update(min=None, max=None, median=None, band=None)
    return out


def _environment(config: ExperimentConfig) -> dict:
    return {
        "version": __version__,
        "grid": config.grid,
        "seed": config.seed,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


def _row(i, seed, label, bmo, comm, scale, min_bmo, **extra) -> dict:
    flagged = bool(bmo <= min_bmo)
    ratio = None if flagged else comm / (scale * bmo)
    return {"sample": i, "seed": seed, "label": label, "bmo": bmo, "commutator": comm,
            "scale": scale, "ratio": ratio, "flagged": flagged, **extra}


def _map(config: ExperimentConfig, fn) -> list:
    idx = range(config.samples)
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as ex:
            return list(ex.map(fn, [config] * config.samples, idx))
    return [fn(config, i) for i in idx]


# ------------------------------------------------------------- two-sided


def _two_sided_row(config: ExperimentConfig, i: int) -> dict:
    fam = family_tuples(config)
    ops = _family_ops(config.grid, tuple(fam))
    s = sample_seed(config.seed, i)
    b = gen_symbol(config, i)
    bmo = little_product_bmo_norm(b, config.partition_spec, config.budget).value
    norms = []
    for Ts in ops:
        est = operator_norm(iterated_commutator(Ts, b), config.method, config.tol, config.max_iter, seed=s)
        norms.append(est.value)
    best = int(np.argmax(norms))
    return _row(i, s, fam[best], bmo, norms[best], 1.0, config.min_bmo, tuple_norms=norms)


def _saturation(rows: list, size: int) -> list:
    """Median over unflagged rows of the sup ratio restricted to the first ``k`` tuples."""
    live = [r for r in rows if not r["flagged"]]
    if not live:
        return []
    return [statistics.median(max(r["tuple_norms"][:k]) / r["bmo"] for r in live) for k in range(1, size + 1)]


def run_two_sided(config: ExperimentConfig) -> RatioReport:
    """Little product BMO norm against the sup of iterated commutator norms."""
    if config.experiment != "two-sided":
        config = config.replace(experiment="two-sided")
    fam = family_tuples(config)
    rows = _map(config, _two_sided_row)
    summary = summarize(rows)
    summary["family"] = fam
    summary["saturation"] = _saturation(rows, len(fam))
    return RatioReport("two-sided", config.to_json(), rows, summary, _environment(config))


# ----------------------------------------------------------- shift bound


def default_complexities(grid: GridSpec, top: int = 3) -> list:
    lim = [min(top, grid.depth(k) - 1) for k in (1, 2)]
    return [c for c in itertools.product(range(lim[0] + 1), range(lim[0] + 1), range(lim[1] + 1), range(lim[1] + 1))]


def _shift_row(config: ExperimentConfig, i: int) -> dict:
    grid = config.grid_spec
    s = sample_seed(config.seed, i)
    cxs = list(config.complexities) or default_complexities(grid)
    rng = np.random.default_rng(s)
    cx = tuple(cxs[int(rng.integers(len(cxs)))])
    b = gen_symbol(config, i)
    f = haar_random_field(grid, sample_seed(s, 1), config.function_decay, real=False, cancellative=False)
    spec = ShiftSpec(cx, "random-phase", s)
    S = make_shift(spec, grid)
    comm = l2_norm(Field(grid, b.samples * S.apply_array(f.samples) - S.apply_array(b.samples * f.samples)))
    bmo = little_bmo_norm(b).value
    scale = spec.weight * l2_norm(f)
    return _row(i, s, ",".join(map(str, cx)), bmo, comm, scale, config.min_bmo)


def run_shift_bound(config: ExperimentConfig) -> RatioReport:
    """``||[b,S] f|| / (weight * ||b||_bmo * ||f||)`` over seeded ``(b, f, S)``."""
    if config.experiment != "shift-bound":
        config = config.replace(experiment="shift-bound")
    rows = _map(config, _shift_row)
    summary = summarize(rows)
    per = {}
    for r in rows:
        if not r["flagged"]:
            per[r["label"]] = max(per.get(r["label"], 0.0), r["ratio"])
    summary["constant"] = summary["max"]
    summary["by_complexity"] = dict(sorted(per.items()))
    return RatioReport("shift-bound", config.to_json(), rows, summary, _environment(config))


def run(config: ExperimentConfig) -> RatioReport:
    return run_two_sided(config) if config.experiment == "two-sided" else run_shift_bound(config)


def exit_code(report: RatioReport) -> int:
    """0 for a completed run, 2 when every row was flagged."""
    return 2 if report.flagged_only else 0


def describe_family(config: ExperimentConfig) -> list[str]:
    """Canonical operator strings of the family, for echoing in reports."""
    return [" | ".join(format_descriptor(d) for d in parse_ops(t)) for t in family_tuples(config)]


__all__ = [
    "CSV_COLUMNS",
    "ExperimentConfig",
    "RatioReport",
    "SCHEMA_VERSION",
    "auto_family",
    "default_complexities",
    "describe_family",
    "exit_code",
    "family_tuples",
    "gen_symbol",
    "haar_random_field",
    "run",
    "run_shift_bound",
    "run_two_sided",
    "sample_seed",
    "summarize",
]
