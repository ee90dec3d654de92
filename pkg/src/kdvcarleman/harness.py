"""Empirical Carleman and solvability estimates on randomized test families.

The Carleman quotient ``||e^{lam f} P u||^2 / (lam ||e^{lam f} u||^2)`` is
evaluated through ``v = e^{lam f} u``: it equals
``||P^f_lam v||^2 / (lam ||v||^2)`` with ``P^f_lam = e^{lam f} P e^{-lam f}``,
a polynomial in lambda.  Test functions are drawn for ``v`` directly, so no
exponential weight is ever formed at large lambda.

An infimum over a finite family can falsify an estimate but never prove
it; reports say so.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import __version__
from .grid import (
    Grid,
    GridError,
    GridFunction,
    SeparableGridFunction,
    apply_op,
    eval_norm_poly,
    inner,
    op_norm_sq_poly,
    sobolev_norm,
    weight_multiply,
)
from .hypotheses import HypothesisReport, Region, _eval_many, _ranks_on_samples, check_system
from .operators import (
    DiffOp,
    SystemSpec,
    VectorField,
    apply,
    build_p1,
    build_p1_star,
    weighted_conjugate,
)
from .symbolic import REAL, ScalarExpr, classify_reality

__all__ = [
    "BUMP_SHARPNESS",
    "HypothesisFailure",
    "WeightError",
    "WeightSpec",
    "SweepConfig",
    "SweepReport",
    "BumpParams",
    "bump_profile",
    "draw_bump_params",
    "realize",
    "gen_test_functions",
    "modulated_bump",
    "carleman_ratio",
    "carleman_ratios",
    "direct_ratio",
    "conjugated_ratio_on_grid",
    "run_sweep",
    "fit_growth",
    "fit_constants",
    "solvability_ratio",
    "rothschild_stein_check",
    "RothschildSteinReport",
    "emit_report",
    "read_csv",
]

# exp(-a t^2 / (1 - t^2)): flatter than the textbook bump, so far fewer
# nodes are needed to resolve third derivatives
BUMP_SHARPNESS = 8.0
CENTER_FRACTION = 0.8
HALFWIDTH_RANGE = (0.6, 0.9)
FRAMING = ("empirical infimum over a finite seeded family; it can falsify the estimate "
           "but does not prove it")


class HypothesisFailure(RuntimeError):
    def __init__(self, message: str, report: HypothesisReport | None = None):
        super().__init__(message)
        self.report = report


class WeightError(ValueError):
    pass


@dataclass(frozen=True)
class WeightSpec:
    """Real weight ``f`` with the claim ``-i X_1 f >= c0`` on ``K``."""

    f: ScalarExpr
    K: Region
    c0_claim: float = 1.0

    def validate(self, S: SystemSpec) -> float:
        """Check the claim on K's samples and return the observed minimum."""
        if classify_reality(self.f) != REAL:
            raise WeightError(f"weight {self.f} is not real-valued")
        if self.c0_claim <= 0:
            raise WeightError("c0_claim must be positive")
        g = apply(S.field(1), self.f)
        vals = _eval_many(g, self.K.sample_array()) * (-1j)
        observed = float(np.min(vals.real))
        if observed < self.c0_claim - 1e-12:
            raise WeightError(f"-i X1 f has minimum {observed:g} on K, below the claimed {self.c0_claim:g}")
        return observed


@dataclass
class SweepConfig:
    system: SystemSpec
    weight: WeightSpec
    grid: Grid
    lambdas: Sequence[float] = (1, 2, 4, 8, 16, 32, 64)
    num_test_functions: int = 50
    seed: int = 7
    sobolev_s: float = 0.0
    target: str = "P1"
    max_len: int = 4

    def __post_init__(self):
        lam = [float(x) for x in self.lambdas]
        if not lam:
            raise ValueError("need at least one lambda")
        if any(not math.isfinite(x) or x < 1 for x in lam):
            raise ValueError(f"all lambdas must be >= 1, got {lam}")
        if any(b <= a for a, b in zip(lam, lam[1:])):
            raise ValueError(f"lambdas must be strictly ascending, got {lam}")
        self.lambdas = tuple(lam)
        if self.target not in ("P1", "P1*"):
            raise ValueError(f"target must be P1 or P1*, got {self.target!r}")
        if self.num_test_functions < 1:
            raise ValueError("num_test_functions must be positive")
        if self.grid.support is None or not self.grid.support.contains(self.weight.K) \
                or not self.weight.K.contains(self.grid.support):
            raise ValueError("grid support region must equal the weight region K")

    def operator(self) -> DiffOp:
        return build_p1(self.system) if self.target == "P1" else build_p1_star(self.system)

    def echo(self) -> dict:
        S = self.system
        return {
            "system": S.name,
            "axes": list(S.axis_labels),
            "n": S.n,
            "N": S.N,
            "weight": re.sub(r"x(\d+)", lambda m: S.axis_labels[int(m.group(1)) - 1], str(self.weight.f)),
            "c0_claim": self.weight.c0_claim,
            "K": self.weight.K.to_list(),
            "grid": self.grid.describe(),
            "lambdas": list(self.lambdas),
            "num_test_functions": self.num_test_functions,
            "seed": self.seed,
            "sobolev_s": self.sobolev_s,
            "target": self.target,
            "bump_sharpness": BUMP_SHARPNESS,
        }


# Test functions -------------------------------------------------------------

def bump_profile(t: np.ndarray, a: float = BUMP_SHARPNESS) -> np.ndarray:
    """``exp(-a t^2 / (1 - t^2))`` on ``|t| < 1``, zero elsewhere (C-infinity)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    ti = t[inside]
    out[inside] = np.exp(-a * ti * ti / (1 - ti * ti))
    return out


@dataclass(frozen=True)
class BumpParams:
    """One test function: amplitudes, centers and half-widths per bump (and optional modulation)."""

    amps: tuple
    centers: tuple
    halfwidths: tuple
    freqs: tuple = ()


def draw_bump_params(K: Region, count: int, seed: int) -> list[BumpParams]:
    """Grid-independent parameters, so the same family can be sampled at any resolution."""
    rng = np.random.default_rng(seed)
    lo = np.array([float(a) for a in K.lo])
    hi = np.array([float(b) for b in K.hi])
    half = (hi - lo) / 2
    out = []
    for _ in range(count):
        nb = int(rng.integers(3, 9))
        amps, centers, widths = [], [], []
        for _ in range(nb):
            hw = rng.uniform(*HALFWIDTH_RANGE, size=K.dim) * half
            inner_lo = lo + (1 - CENTER_FRACTION) / 2 * (hi - lo)
            inner_hi = hi - (1 - CENTER_FRACTION) / 2 * (hi - lo)
            c_lo = np.maximum(lo + hw, inner_lo)
            c_hi = np.minimum(hi - hw, inner_hi)
            c = rng.uniform(np.minimum(c_lo, c_hi), np.maximum(c_lo, c_hi))
            z = rng.normal() + 1j * rng.normal()
            amps.append(complex(z))
            centers.append(tuple(float(x) for x in c))
            widths.append(tuple(float(x) for x in hw))
        out.append(BumpParams(tuple(amps), tuple(centers), tuple(widths)))
    return out


def realize(params: BumpParams, g: Grid, normalize: bool = True) -> SeparableGridFunction:
    """Sample a bump superposition on ``g``; unit L2 norm when ``normalize``."""
    factors = []
    for b, (c, hw) in enumerate(zip(params.centers, params.halfwidths)):
        row = []
        for k in range(g.dim):
            x = g.axis(k)
            v = bump_profile((x - c[k]) / hw[k]).astype(complex)
            if params.freqs:
                v = v * np.exp(1j * params.freqs[b][k] * x)
            row.append(v)
        factors.append(row)
    u = SeparableGridFunction(g, params.amps, factors)
    if normalize:
        nrm = math.sqrt(u.norm_sq())
        if nrm == 0:
            raise GridError("test function vanishes on the grid")
        u = u.scaled(1 / nrm)
    return u


def _check_resolution(K: Region, g: Grid):
    if g.support is None:
        g = Grid(g.shape, g.box, K)
    counts = g.nodes_in_support()
    if counts.min() < 8:
        raise GridError(f"K is spanned by only {counts.tolist()} nodes per axis; need at least 8")
    if not g.box.contains(K):
        raise GridError("K is not inside the grid box")


def gen_test_functions(K: Region, g: Grid, count: int, seed: int) -> list[SeparableGridFunction]:
    """``count`` seeded superpositions of 3 to 8 smooth bumps supported in K, unit L2 norm."""
    _check_resolution(K, g if g.support is not None else Grid(g.shape, g.box, K))
    return [realize(p, g) for p in draw_bump_params(K, count, seed)]


def modulated_bump(K: Region, g: Grid, freq: Sequence[float], center=None, halfwidth=None) -> SeparableGridFunction:
    """A single centered bump times ``exp(i freq . x)``, unit L2 norm."""
    lo = np.array([float(a) for a in K.lo])
    hi = np.array([float(b) for b in K.hi])
    c = tuple((lo + hi) / 2) if center is None else tuple(center)
    hw = tuple(0.9 * (hi - lo) / 2) if halfwidth is None else tuple(halfwidth)
    return realize(BumpParams((1.0,), (c,), (hw,), (tuple(float(x) for x in freq),)), g)


# Ratios --------------------------------------------------------------------

class _Family:
    """Test functions plus cached norm polynomials for one config."""

    def __init__(self, cfg: SweepConfig):
        self.cfg = cfg
        self.functions = gen_test_functions(cfg.weight.K, cfg.grid, cfg.num_test_functions, cfg.seed)
        self.op = weighted_conjugate(cfg.operator(), cfg.weight.f)
        self._H = {}
        self._den = {}

    def H(self, i):
        if i not in self._H:
            self._H[i] = op_norm_sq_poly(self.op, self.functions[i])
        return self._H[i]

    def denom(self, i):
        if i not in self._den:
            v = self.functions[i]
            self._den[i] = sobolev_norm(v, self.cfg.sobolev_s) ** 2
        return self._den[i]

    def ratio(self, i, lam):
        den = self.denom(i)
        assert den > 0, "degenerate ratio: zero test function"
        return eval_norm_poly(self.H(i), lam) / (lam * den)


_FAMILY_CACHE: dict[int, _Family] = {}


def _family(cfg: SweepConfig) -> _Family:
    fam = _FAMILY_CACHE.get(id(cfg))
    if fam is None or fam.cfg is not cfg:
        fam = _Family(cfg)
        _FAMILY_CACHE.clear()
        _FAMILY_CACHE[id(cfg)] = fam
    return fam


def carleman_ratio(cfg: SweepConfig, u_index: int, lam: float) -> float:
    """``||P^f_lam v||^2 / (lam ||v||_{H^s}^2)`` for test function ``u_index`` as ``v``."""
    if float(lam) not in cfg.lambdas:
        raise ValueError(f"lambda {lam} is not in the configured list")
    return _family(cfg).ratio(u_index, float(lam))


def carleman_ratios(cfg: SweepConfig) -> np.ndarray:
    """Ratios on the full lattice, shape (num_test_functions, len(lambdas))."""
    fam = _family(cfg)
    out = np.empty((cfg.num_test_functions, len(cfg.lambdas)))
    for i in range(cfg.num_test_functions):
        for j, lam in enumerate(cfg.lambdas):
            out[i, j] = fam.ratio(i, lam)
    return out


def conjugated_ratio_on_grid(S_op: DiffOp, f: ScalarExpr, v: GridFunction, lam: float, s: float = 0.0) -> float:
    """Same quotient as :func:`carleman_ratio`, on the full grid with FFTs."""
    A = weighted_conjugate(S_op, f).at(Fraction(lam))
    Av = apply_op(A, v)
    return float(np.real(inner(Av, Av))) / (lam * sobolev_norm(v, s) ** 2)


def direct_ratio(S_op: DiffOp, f: ScalarExpr, v: GridFunction, lam: float) -> float:
    """``||e^{lam f} P u||^2 / (lam ||e^{lam f} u||^2)`` with ``u = e^{-lam f} v`` formed explicitly."""
    u = weight_multiply(v, f, -lam)
    Pu = apply_op(S_op, u)
    wPu = weight_multiply(Pu, f, lam)
    wu = weight_multiply(u, f, lam)
    return float(np.real(inner(wPu, wPu))) / (lam * float(np.real(inner(wu, wu))))


# Fitting -------------------------------------------------------------------

def fit_growth(lambdas: Sequence[float], inf_ratio: Sequence[float]) -> float:
    """Log-log slope of the inf-ratio over the upper half (geometric) of the lambda range."""
    lam = np.asarray(lambdas, dtype=float)
    r = np.asarray(inf_ratio, dtype=float)
    if len(lam) < 2:
        return float("nan")
    mid = math.sqrt(lam[0] * lam[-1])
    sel = lam >= mid * (1 - 1e-12)
    if sel.sum() < 2:
        sel = np.zeros_like(sel)
        sel[-2:] = True
    slope, _ = np.polyfit(np.log(lam[sel]), np.log(r[sel]), 1)
    return float(slope)


def fit_constants(lambdas: Sequence[float], inf_ratio: Sequence[float]) -> tuple[float, float]:
    """``(C, lam0)``: lam0 is the smallest sampled lambda after which the inf-ratio is
    nondecreasing, C the smallest inf-ratio from there on."""
    r = list(inf_ratio)
    start = len(r) - 1
    while start > 0 and r[start - 1] <= r[start]:
        start -= 1
    return float(min(r[start:])), float(lambdas[start])


@dataclass
class SweepReport:
    lambdas: list
    inf_ratio: list
    median_ratio: list
    argmin: list
    slope: float
    C: float
    lambda0: float
    config: dict
    hypotheses: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    @property
    def positive(self) -> bool:
        return all(r > 0 for r in self.inf_ratio)

    def passes(self, min_slope: float = 0.9) -> bool:
        return self.positive and self.slope >= min_slope

    def summary(self) -> dict:
        return {
            "version": __version__,
            "lambdas": list(self.lambdas),
            "inf_ratio": list(self.inf_ratio),
            "median_ratio": list(self.median_ratio),
            "argmin": list(self.argmin),
            "slope": self.slope,
            "C": self.C,
            "lambda0": self.lambda0,
            "config": self.config,
            "hypotheses": self.hypotheses,
            "framing": FRAMING,
            "notes": list(self.notes),
            "checks": dict(self.checks),
        }


def _precheck(cfg: SweepConfig) -> HypothesisReport:
    S, K = cfg.system, cfg.weight.K
    rep = check_system(S, K, cfg.max_len)
    if not rep.involutive.ok:
        raise HypothesisFailure("X_1..X_N are not involutive on K", rep)
    if not rep.nondegenerate.ok:
        raise HypothesisFailure("X_1 is degenerate on K", rep)
    if cfg.sobolev_s:
        r = round(1 / cfg.sobolev_s)
        if abs(1 / cfg.sobolev_s - r) > 1e-12 or rep.hormander_rank != r:
            raise HypothesisFailure(
                f"s = {cfg.sobolev_s} needs Hormander rank {1 / cfg.sobolev_s:g}, found {rep.hormander_rank}", rep)
    try:
        cfg.weight.validate(S)
    except WeightError as exc:
        raise HypothesisFailure(str(exc), rep) from None
    return rep


def run_sweep(cfg: SweepConfig) -> SweepReport:
    """Ratios over the (test function x lambda) lattice, aggregated per lambda."""
    hyp = _precheck(cfg)
    R = carleman_ratios(cfg)
    inf = R.min(axis=0)
    med = np.median(R, axis=0)
    slope = fit_growth(cfg.lambdas, inf)
    C, lam0 = fit_constants(cfg.lambdas, inf)
    return SweepReport(
        lambdas=list(cfg.lambdas),
        inf_ratio=[float(x) for x in inf],
        median_ratio=[float(x) for x in med],
        argmin=[int(i) for i in R.argmin(axis=0)],
        slope=slope,
        C=C,
        lambda0=lam0,
        config=cfg.echo(),
        hypotheses=hyp.to_dict(),
    )


# Solvability and subelliptic checks ------------------------------------------

def solvability_ratio(S: SystemSpec, u: GridFunction, s: float, target: str = "P1*") -> float:
    """``||T u||_{L2} / ||u||_{H^{-s}}`` with ``T`` = P1 or P1*."""
    if target not in ("P1", "P1*"):
        raise ValueError(f"target must be P1 or P1*, got {target!r}")
    T = build_p1(S) if target == "P1" else build_p1_star(S)
    den = sobolev_norm(u, -s)
    if den == 0:
        raise ValueError("zero test function")
    if isinstance(u, SeparableGridFunction):
        num = eval_norm_poly(op_norm_sq_poly(T, u), 0.0)
    else:
        Tu = apply_op(T, u)
        num = float(np.real(inner(Tu, Tu)))
    return math.sqrt(max(num, 0.0)) / den


@dataclass
class RothschildSteinReport:
    r: int
    s: float
    C: float
    ratios: list

    def to_dict(self):
        return {"r": self.r, "s": self.s, "C": self.C, "ratios": list(self.ratios)}


def rothschild_stein_check(S: SystemSpec | Sequence[VectorField], K: Region, g: Grid, r: int,
                           family: Sequence[GridFunction]) -> RothschildSteinReport:
    """Inf over ``family`` of ``sum_j ||X_j v||^2 / ||v||^2_{H^{1/r}}``."""
    fields = list(S.fields) if isinstance(S, SystemSpec) else list(S)
    if not family:
        raise ValueError("empty test family")
    ranks = _ranks_on_samples(fields, K.sample_array(), max(r, 1))
    if any(x != r for x in ranks):
        raise HypothesisFailure(f"Hormander rank is not {r} on all samples of K (found {sorted(set(map(str, ranks)))})")
    ops = [X.as_diffop() for X in fields]
    s = 1.0 / r
    ratios = []
    for v in family:
        num = 0.0
        for A in ops:
            if isinstance(v, SeparableGridFunction):
                num += eval_norm_poly(op_norm_sq_poly(A, v), 0.0)
            else:
                Av = apply_op(A, v)
                num += float(np.real(inner(Av, Av)))
        ratios.append(num / sobolev_norm(v, s) ** 2)
    return RothschildSteinReport(r, s, float(min(ratios)), ratios)


# Output --------------------------------------------------------------------

def _csv_text(rep: SweepReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "inf_ratio", "median_ratio"])
    for lam, a, b in zip(rep.lambdas, rep.inf_ratio, rep.median_ratio):
        w.writerow([repr(float(lam)), repr(float(a)), repr(float(b))])
    return buf.getvalue()


def emit_report(rep: SweepReport, path) -> tuple[str, str]:
    """Write ``sweep.csv`` and ``summary.json`` into directory ``path``."""
    os.makedirs(path, exist_ok=True)
    csv_path = os.path.join(path, "sweep.csv")
    json_path = os.path.join(path, "summary.json")
    with open(csv_path, "w", newline="") as fh:
        fh.write(_csv_text(rep))
    with open(json_path, "w") as fh:
        json.dump(rep.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def read_csv(path) -> dict[str, list[float]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) for r in rows] for k in ("lambda", "inf_ratio", "median_ratio")}
