"""Uniform periodic grids with Fourier differentiation.

A compactly supported function on R^{n+1} is represented on a periodic box
that contains its support region ``K`` with at least 25% padding per axis.
Nodes sit at ``lo + j h`` with ``h = width / shape``.

Functions that are sums of products of one-dimensional factors (the test
families of the harness) are kept in :class:`SeparableGridFunction`; for
those, operator norms reduce to one-dimensional transforms and small Gram
matrices, which is what makes dimension four affordable at fine grids.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import _kernels
from .hypotheses import Region
from .operators import DiffOp, LambdaOp
from .symbolic import REAL, ZERO, ScalarExpr, classify_reality

__all__ = [
    "MIN_POINTS",
    "MIN_PADDING",
    "MAX_ORDER",
    "OVERFLOW_LOG",
    "GridError",
    "WeightOverflowError",
    "Grid",
    "GridFunction",
    "SeparableGridFunction",
    "discretize",
    "apply_op",
    "inner",
    "sobolev_norm",
    "weight_multiply",
    "op_norm_sq_poly",
    "op_norm_sq",
    "save_binary",
    "load_binary",
    "save_csv",
    "load_csv",
]

MIN_POINTS = 8
MIN_PADDING = 0.25
MAX_ORDER = 8
OVERFLOW_LOG = 700.0


class GridError(ValueError):
    pass


class WeightOverflowError(GridError):
    """exp(lam f) would overflow; evaluate through the conjugated operator instead."""


@dataclass(frozen=True)
class Grid:
    """Periodic grid on ``box`` with ``shape`` points per axis.

    ``support`` is the designated region ``K`` that test functions live in;
    it must sit strictly inside the box with the padding margin.
    """

    shape: tuple
    box: Region
    support: Region | None = None

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        object.__setattr__(self, "shape", shape)
        if len(shape) != self.box.dim:
            raise GridError(f"shape has {len(shape)} axes, box has {self.box.dim}")
        if min(shape) < MIN_POINTS:
            raise GridError(f"need at least {MIN_POINTS} points per axis, got {shape}")
        if self.support is not None:
            K = self.support
            if K.dim != self.box.dim:
                raise GridError("support region dimension differs from the box")
            pad = self.padding_margins()
            if not np.all(pad >= MIN_PADDING - 1e-12):
                raise GridError(f"box must pad K by >= {MIN_PADDING:.0%} per axis, got {pad}")

    @classmethod
    def around(cls, K: Region, shape: int | Sequence[int], padding: float = MIN_PADDING) -> "Grid":
        """Box equal to ``K`` widened by ``padding * width(K)`` on each side."""
        if padding < MIN_PADDING:
            raise GridError(f"padding must be >= {MIN_PADDING}, got {padding}")
        if isinstance(shape, (int, np.integer)):
            shape = (int(shape),) * K.dim
        pad = Fraction(padding).limit_denominator(10**6)
        lo = tuple(a - pad * (b - a) for a, b in zip(K.lo, K.hi))
        hi = tuple(b + pad * (b - a) for a, b in zip(K.lo, K.hi))
        return cls(tuple(shape), Region(lo, hi, K.sample_density), K)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def lo(self) -> np.ndarray:
        return np.array([float(a) for a in self.box.lo])

    @property
    def width(self) -> np.ndarray:
        return self.box.width()

    @property
    def spacing(self) -> np.ndarray:
        return self.width / np.array(self.shape)

    @property
    def cell(self) -> float:
        return float(np.prod(self.spacing))

    def padding_margins(self) -> np.ndarray:
        """Smallest padding on each axis as a fraction of K's width."""
        K = self.support
        kw = K.width()
        left = np.array([float(k - b) for k, b in zip(K.lo, self.box.lo)])
        right = np.array([float(b - k) for k, b in zip(K.hi, self.box.hi)])
        return np.minimum(left, right) / kw

    def axis(self, k: int) -> np.ndarray:
        """Node coordinates on axis ``k`` (0-based)."""
        return self.lo[k] + self.spacing[k] * np.arange(self.shape[k])

    def axes(self) -> list[np.ndarray]:
        return [self.axis(k) for k in range(self.dim)]

    def frequencies(self, k: int) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.shape[k], d=self.spacing[k])

    def multiplier(self, k: int, power: int) -> np.ndarray:
        """Symbol of ``D^power`` on axis ``k``; the Nyquist mode is dropped for odd powers."""
        xi = self.frequencies(k)
        m = xi ** power
        n = self.shape[k]
        if power % 2 == 1 and n % 2 == 0:
            m[n // 2] = 0.0
        return m

    def nodes_in_support(self) -> np.ndarray:
        K = self.support
        out = []
        for k in range(self.dim):
            x = self.axis(k)
            out.append(int(np.count_nonzero((x >= float(K.lo[k])) & (x <= float(K.hi[k])))))
        return np.array(out)

    def outside_mask(self) -> np.ndarray:
        """Boolean array marking nodes outside the support region."""
        K = self.support
        masks = []
        for k in range(self.dim):
            x = self.axis(k)
            masks.append((x < float(K.lo[k])) | (x > float(K.hi[k])))
        out = np.zeros(self.shape, dtype=bool)
        for k, m in enumerate(masks):
            sh = [1] * self.dim
            sh[k] = -1
            out |= m.reshape(sh)
        return out

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(tuple(s * factor for s in self.shape), self.box, self.support)

    def describe(self) -> dict:
        return {
            "shape": list(self.shape),
            "box": self.box.to_list(),
            "support": self.support.to_list() if self.support is not None else None,
        }

    def same_as(self, other: "Grid") -> bool:
        return self.shape == other.shape and self.box.lo == other.box.lo and self.box.hi == other.box.hi


class GridFunction:
    """Complex samples on a grid; ``values`` has shape ``grid.shape`` (row-major)."""

    def __init__(self, grid: Grid, values):
        arr = np.asarray(values, dtype=np.complex128)
        if arr.ndim == 1 and arr.size == grid.size:
            arr = arr.reshape(grid.shape)
        if arr.shape != grid.shape:
            raise GridError(f"values of shape {arr.shape} do not fit grid {grid.shape}")
        arr = arr.copy()
        arr.setflags(write=False)
        self.grid = grid
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def flat_values(self) -> np.ndarray:
        return self.values.ravel()

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "GridFunction"):
        _same_grid(self, other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction"):
        _same_grid(self, other)
        return GridFunction(self.grid, self.values - other.values)

    def support_leak(self) -> float:
        """Max magnitude outside K relative to the peak."""
        vals = np.abs(self.values)
        peak = vals.max()
        if peak == 0:
            return 0.0
        mask = self.grid.outside_mask()
        return float(vals[mask].max() / peak) if mask.any() else 0.0


class SeparableGridFunction(GridFunction):
    """``sum_b amps[b] prod_k factors[b][k](x_k)`` with one-dimensional factors.

    The full array is materialized lazily; norms and operator actions use
    the factors directly.
    """

    def __init__(self, grid: Grid, amps, factors):
        amps = np.asarray(amps, dtype=np.complex128)
        if len(factors) != len(amps):
            raise GridError("one factor list per amplitude")
        fac = []
        for row in factors:
            if len(row) != grid.dim:
                raise GridError("each term needs one factor per axis")
            r = []
            for k, v in enumerate(row):
                v = np.asarray(v, dtype=np.complex128).copy()
                if v.shape != (grid.shape[k],):
                    raise GridError(f"factor on axis {k + 1} has length {v.shape}, expected {grid.shape[k]}")
                v.setflags(write=False)
                r.append(v)
            fac.append(tuple(r))
        amps.setflags(write=False)
        self.grid = grid
        self.amps = amps
        self.factors = tuple(fac)
        self._values = None

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            out = np.zeros(self.grid.shape, dtype=np.complex128)
            for a, row in zip(self.amps, self.factors):
                term = np.array(a)
                for v in row:
                    term = np.multiply.outer(term, v)
                out += term
            out.setflags(write=False)
            self._values = out
        return self._values

    def scaled(self, c) -> "SeparableGridFunction":
        return SeparableGridFunction(self.grid, self.amps * c, self.factors)

    def __mul__(self, c):
        if np.isscalar(c):
            return self.scaled(c)
        return GridFunction.__mul__(self, c)

    __rmul__ = __mul__

    def norm_sq(self) -> float:
        h = self.grid.spacing
        G = np.ones((len(self.amps), len(self.amps)), dtype=np.complex128)
        for k in range(self.grid.dim):
            F = np.stack([row[k] for row in self.factors])
            G *= h[k] * (F @ F.conj().T)
        return float(np.real(self.amps @ G @ self.amps.conj()))


def _same_grid(u: GridFunction, v: GridFunction):
    if not u.grid.same_as(v.grid):
        raise GridError("grid functions live on different grids")


def _check_dim(dim: int, g: Grid):
    if dim != g.dim:
        raise GridError(f"dimension mismatch: expression has {dim}, grid has {g.dim}")


def _poly_values(e: ScalarExpr, g: Grid) -> np.ndarray:
    exps, coeffs = e.monomials()
    return _kernels.poly_on_grid(g.axes(), exps, coeffs)


def discretize(e: ScalarExpr, g: Grid) -> GridFunction:
    """Pointwise values of a polynomial at the grid nodes."""
    _check_dim(e.dim, g)
    return GridFunction(g, _poly_values(e, g))


def _spectral(values: np.ndarray, g: Grid, alpha) -> np.ndarray:
    if not any(alpha):
        return values
    hat = np.fft.fftn(values)
    for k, a in enumerate(alpha):
        if a:
            sh = [1] * g.dim
            sh[k] = -1
            hat = hat * g.multiplier(k, a).reshape(sh)
    return np.fft.ifftn(hat)


def apply_op(A: DiffOp, u: GridFunction) -> GridFunction:
    """``sum_alpha c_alpha(x) D^alpha u`` with Fourier derivatives."""
    g = u.grid
    _check_dim(A.dim, g)
    if A.order() > MAX_ORDER:
        raise GridError(f"operator order {A.order()} exceeds MAX_ORDER={MAX_ORDER}")
    out = np.zeros(g.shape, dtype=np.complex128)
    vals = u.values
    for alpha, c in A.items():
        out += _poly_values(c, g) * _spectral(vals, g, alpha)
    return GridFunction(g, out)


def inner(u: GridFunction, v: GridFunction) -> complex:
    """``h^{n+1} sum u conj(v)`` (linear in the first slot)."""
    _same_grid(u, v)
    return complex(u.grid.cell * np.vdot(v.values, u.values))


def sobolev_norm(u: GridFunction, s: float) -> float:
    """``(cell / M sum (1 + |xi|^2)^s |u_hat|^2)^{1/2}`` over the box frequencies."""
    g = u.grid
    if s == 0 and isinstance(u, SeparableGridFunction):
        return float(np.sqrt(max(u.norm_sq(), 0.0)))
    hat = np.fft.fftn(u.values)
    if s == 0:
        weight = 1.0
    else:
        xi2 = np.zeros(g.shape)
        for k in range(g.dim):
            sh = [1] * g.dim
            sh[k] = -1
            xi2 = xi2 + (g.frequencies(k) ** 2).reshape(sh)
        weight = (1.0 + xi2) ** s
    total = np.sum(weight * np.abs(hat) ** 2) * g.cell / g.size
    return float(np.sqrt(total))


def weight_multiply(u: GridFunction, f: ScalarExpr, lam: float) -> GridFunction:
    """Pointwise ``exp(lam f) u``; refuses when ``lam f`` could overflow."""
    g = u.grid
    _check_dim(f.dim, g)
    if classify_reality(f) not in (REAL, ZERO):
        raise GridError(f"weight must be real-valued, got {f}")
    if not np.isfinite(lam):
        raise GridError("lambda must be finite")
    fv = np.real(_poly_values(f, g))
    expo = lam * fv
    if expo.max(initial=0.0) > OVERFLOW_LOG:
        raise WeightOverflowError(
            f"max lam*f = {expo.max():.1f} exceeds {OVERFLOW_LOG}; use the conjugated operator")
    return GridFunction(g, np.exp(expo) * u.values)


# Separable path -----------------------------------------------------------

def _op_pieces(A: LambdaOp | DiffOp):
    """Flatten into (lambda power, alpha, x-exponent, complex coefficient) rows."""
    if isinstance(A, DiffOp):
        A = LambdaOp.constant(A)
    rows = []
    for p, B in enumerate(A.coeff_ops):
        for alpha, c in B.items():
            exps, coeffs = c.monomials()
            for m, z in zip(exps, coeffs):
                rows.append((p, tuple(alpha), tuple(int(e) for e in m), complex(z)))
    return rows, A.degree() + 1


def _gram_tables(A, u: SeparableGridFunction):
    g = u.grid
    rows, npow = _op_pieces(A)
    nb = len(u.amps)
    axes = g.axes()
    # unique 1-D factors per axis, keyed by (bump, alpha_k, m_k)
    keys = [dict() for _ in range(g.dim)]
    vecs = [[] for _ in range(g.dim)]
    R = len(rows) * nb
    idx = np.zeros((R, g.dim), dtype=np.int64)
    w = np.zeros(R, dtype=np.complex128)
    grp = np.zeros(R, dtype=np.int64)
    hats = {}
    r = 0
    for p, alpha, m, z in rows:
        for b in range(nb):
            for k in range(g.dim):
                key = (b, alpha[k], m[k])
                pos = keys[k].get(key)
                if pos is None:
                    hk = hats.get((b, k))
                    if hk is None:
                        hk = hats[(b, k)] = np.fft.fft(u.factors[b][k])
                    v = u.factors[b][k] if alpha[k] == 0 else np.fft.ifft(hk * g.multiplier(k, alpha[k]))
                    if m[k]:
                        v = v * axes[k] ** m[k]
                    pos = keys[k][key] = len(vecs[k])
                    vecs[k].append(v)
                idx[r, k] = pos
            w[r] = z * u.amps[b]
            grp[r] = p
            r += 1
    nmax = max(len(v) for v in vecs)
    U = np.zeros((g.dim, nmax, nmax), dtype=np.complex128)
    h = g.spacing
    for k in range(g.dim):
        F = np.stack(vecs[k])
        U[k, : len(F), : len(F)] = h[k] * (F @ F.conj().T)
    return U, idx, w, grp, npow


def op_norm_sq_poly(A: LambdaOp | DiffOp, u: SeparableGridFunction) -> np.ndarray:
    """Hermitian ``H`` with ``||A_lam u||^2 = sum_{p,q} lam^{p+q} H[p,q]``."""
    if A.dim != u.grid.dim:
        raise GridError(f"dimension mismatch: operator has {A.dim}, grid has {u.grid.dim}")
    U, idx, w, grp, npow = _gram_tables(A, u)
    if len(w) == 0:
        return np.zeros((npow, npow), dtype=np.complex128)
    return _kernels.gram_contract(U, idx, w, grp, npow)


def eval_norm_poly(H: np.ndarray, lam: float) -> float:
    p = np.arange(H.shape[0])
    powers = float(lam) ** (p[:, None] + p[None, :])
    return float(np.real(np.sum(powers * H)))


def op_norm_sq(A: LambdaOp | DiffOp, u: GridFunction, lam: float = 0.0) -> float:
    """``||A_lam u||^2``, through the Gram path when ``u`` is separable."""
    if isinstance(u, SeparableGridFunction):
        return eval_norm_poly(op_norm_sq_poly(A, u), lam)
    B = A.at(Fraction(lam)) if isinstance(A, LambdaOp) else A
    Au = apply_op(B, u)
    return float(np.real(inner(Au, Au)))


# Export -------------------------------------------------------------------

_MAGIC = b"KDVG"


def save_binary(u: GridFunction, path) -> None:
    """Header (magic, dim, shape, box as f64 pairs) then little-endian complex128 values."""
    g = u.grid
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", g.dim))
        fh.write(struct.pack(f"<{g.dim}I", *g.shape))
        fh.write(struct.pack(f"<{2 * g.dim}d", *g.box.to_list()))
        fh.write(np.ascontiguousarray(u.values, dtype="<c16").tobytes())


def load_binary(path) -> GridFunction:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise GridError(f"{path}: not a grid function file")
    (dim,) = struct.unpack_from("<I", data, 4)
    off = 8
    shape = struct.unpack_from(f"<{dim}I", data, off)
    off += 4 * dim
    box = struct.unpack_from(f"<{2 * dim}d", data, off)
    off += 16 * dim
    vals = np.frombuffer(data, dtype="<c16", offset=off)
    g = Grid(tuple(shape), Region.from_flat(box))
    return GridFunction(g, vals.reshape(shape))


def save_csv(u: GridFunction, path, max_nodes: int = 1 << 20) -> None:
    """One row per node: coordinates then real and imaginary parts."""
    g = u.grid
    if g.size > max_nodes:
        raise GridError(f"grid has {g.size} nodes; CSV export is limited to {max_nodes}")
    mesh = np.meshgrid(*g.axes(), indexing="ij")
    cols = [m.ravel() for m in mesh] + [u.values.real.ravel(), u.values.imag.ravel()]
    header = [f"x{k}" for k in range(1, g.dim + 1)] + ["re", "im"]
    with open(path, "w") as fh:
        fh.write(f"# shape={','.join(map(str, g.shape))} box={','.join(repr(x) for x in g.box.to_list())}\n")
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def load_csv(path) -> GridFunction:
    with open(path) as fh:
        meta = fh.readline()
        if not meta.startswith("# shape="):
            raise GridError(f"{path}: missing grid header")
        parts = dict(p.split("=", 1) for p in meta[2:].split())
        shape = tuple(int(s) for s in parts["shape"].split(","))
        box = [float(x) for x in parts["box"].split(",")]
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    g = Grid(shape, Region.from_flat(box))
    vals = data[:, -2] + 1j * data[:, -1]
    return GridFunction(g, vals.reshape(shape))
