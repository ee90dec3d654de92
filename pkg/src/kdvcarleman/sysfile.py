"""Plain-text system definition files.

Example::

    # Heisenberg fields, no time axis
    name: h1
    dim: 3
    axes: x y z
    N: 2
    X0: 0, 0, 0
    X1: 1, 0, -y/2
    X2: 0, 1, x/2
    c 1 2: 0, 0           # only valid if [X1, X2] lies in the span
    box: -1 1 -1 1 -1 1
    samples: 5

``Xj`` rows list the D-coefficients of each field (so ``iXj`` has the same
real coefficients in front of the partial derivatives).  ``c j k`` rows give
the coefficients of ``[Xj, Xk]`` in the basis ``X1..XN``; they are optional,
but the identity checks need them.  Variables are ``x1..x{dim}`` or the
names declared on the ``axes`` line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .hypotheses import Region
from .operators import SystemSpec, VectorField
from .symbolic import ParseError, parse_expr

__all__ = ["SysFileError", "SystemFile", "parse_system", "load_system", "dump_system"]


class SysFileError(ValueError):
    """Problem in a system file, with 1-based line and column."""

    def __init__(self, message: str, line: int = 0, col: int = 0, source: str = "<system>"):
        self.line, self.col, self.source = line, col, source
        where = f"{source}:{line}:{col}: " if line else f"{source}: "
        super().__init__(where + message)


@dataclass
class SystemFile:
    system: SystemSpec
    box: Region | None
    source: str


_KEY = re.compile(r"^\s*(name|dim|axes|N|X(\d+)|c\s+(\d+)\s+(\d+)|box|samples)\s*:", re.I)


def _split_values(text: str, start_col: int):
    """Comma-separated expressions with their starting columns."""
    out = []
    col = start_col
    for piece in text.split(","):
        lead = len(piece) - len(piece.lstrip())
        out.append((piece.strip(), col + lead))
        col += len(piece) + 1
    return out


def parse_system(text: str, source: str = "<system>") -> SystemFile:
    raw: dict = {}
    fields: dict[int, tuple] = {}
    structure: dict[tuple[int, int], tuple] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        m = _KEY.match(body)
        if not m:
            col = len(body) - len(body.lstrip()) + 1
            raise SysFileError(f"unrecognized line {body.strip()!r}", lineno, col, source)
        key = m.group(1)
        rest = body[m.end():]
        col0 = m.end() + 1
        if m.group(2) is not None:
            j = int(m.group(2))
            if j in fields:
                raise SysFileError(f"X{j} defined twice", lineno, 1, source)
            fields[j] = (rest, col0, lineno)
        elif m.group(3) is not None:
            pair = (int(m.group(3)), int(m.group(4)))
            if pair in structure:
                raise SysFileError(f"structure pair {pair} defined twice", lineno, 1, source)
            structure[pair] = (rest, col0, lineno)
        else:
            k = key.lower() if key != "N" else "N"
            if k in raw:
                raise SysFileError(f"{key} defined twice", lineno, 1, source)
            raw[k] = (rest.strip(), col0, lineno)

    def need(k):
        if k not in raw:
            raise SysFileError(f"missing '{k}:' line", 0, 0, source)
        return raw[k]

    def as_int(k, lo=1):
        val, col, ln = need(k)
        try:
            v = int(val)
        except ValueError:
            raise SysFileError(f"{k} must be an integer, got {val!r}", ln, col, source) from None
        if v < lo:
            raise SysFileError(f"{k} must be >= {lo}", ln, col, source)
        return v

    dim = as_int("dim", 2)
    N = as_int("N", 1)
    names = None
    labels = tuple(f"x{k}" for k in range(1, dim + 1))
    if "axes" in raw:
        val, col, ln = raw["axes"]
        labels = tuple(val.split())
        if len(labels) != dim:
            raise SysFileError(f"axes lists {len(labels)} names for dim {dim}", ln, col, source)
        if len(set(labels)) != dim:
            raise SysFileError("axis names must be distinct", ln, col, source)
        # declared names replace the positional x1.. names entirely
        names = {nm: k for k, nm in enumerate(labels, start=1)}

    def exprs(rest, col0, ln, count, what):
        vals = _split_values(rest, col0)
        if len(vals) != count:
            raise SysFileError(f"{what} needs {count} comma-separated entries, got {len(vals)}", ln, col0, source)
        out = []
        for txt, col in vals:
            if not txt:
                raise SysFileError(f"empty entry in {what}", ln, col, source)
            try:
                out.append(parse_expr(txt, dim, names, line=ln, col_offset=col - 1))
            except ParseError as exc:
                msg = str(exc).split(": ", 1)[-1]
                raise SysFileError(f"{what}: {msg}", exc.line, exc.column, source) from None
        return out

    missing = [j for j in range(0, N + 1) if j not in fields]
    if missing == [0]:
        fields[0] = None
    elif missing:
        raise SysFileError(f"missing field X{missing[0]}", 0, 0, source)
    extra = sorted(j for j in fields if j > N)
    if extra:
        _, col, ln = fields[extra[0]]
        raise SysFileError(f"X{extra[0]} exceeds N = {N}", ln, 1, source)

    vfs = {}
    for j, spec in fields.items():
        if spec is None:
            vfs[j] = VectorField.zero(dim)
            continue
        rest, col0, ln = spec
        X = VectorField(exprs(rest, col0, ln, dim, f"X{j}"))
        if not X.is_real():
            raise SysFileError(f"X{j} must have real coefficients", ln, 1, source)
        vfs[j] = X

    sc = None
    if structure:
        sc = {}
        for (j, k), (rest, col0, ln) in structure.items():
            if not (1 <= j <= N and 1 <= k <= N):
                raise SysFileError(f"structure pair ({j},{k}) out of range 1..{N}", ln, 1, source)
            sc[(j, k)] = tuple(exprs(rest, col0, ln, N, f"c {j} {k}"))
    name = raw["name"][0] if "name" in raw else source
    try:
        S = SystemSpec(dim - 1, N, vfs[0], tuple(vfs[j] for j in range(1, N + 1)), sc, name, labels)
    except ValueError as exc:
        raise SysFileError(str(exc), 0, 0, source) from None

    box = None
    density = as_int("samples", 2) if "samples" in raw else 5
    if "box" in raw:
        val, col, ln = raw["box"]
        try:
            nums = [parse_expr(t, 1).constant_value() for t in val.replace(",", " ").split()]
            nums = [n.re for n in nums]
            box = Region.from_flat(nums, density)
        except (ParseError, ValueError) as exc:
            raise SysFileError(f"bad box: {exc}", ln, col, source) from None
        if box.dim != dim:
            raise SysFileError(f"box has {box.dim} axes, expected {dim}", ln, col, source)
    return SystemFile(S, box, source)


def load_system(path) -> SystemFile:
    with open(path) as fh:
        return parse_system(fh.read(), str(path))


def dump_system(S: SystemSpec, box: Region | None = None) -> str:
    """Inverse of :func:`parse_system`; expressions use the axis labels."""
    labels = S.axis_labels

    def show(e):
        return re.sub(r"x(\d+)", lambda m: labels[int(m.group(1)) - 1], str(e))

    lines = [f"name: {S.name}" if S.name else None, f"dim: {S.dim}",
             "axes: " + " ".join(labels), f"N: {S.N}"]
    lines = [ln for ln in lines if ln]
    for j, X in enumerate((S.x0,) + S.fields):
        lines.append(f"X{j}: " + ", ".join(show(c) for c in X.coeffs))
    if S.has_structure():
        for j in range(1, S.N + 1):
            # with one field, an explicit "c 1 1" line marks the coefficients as given
            for k in range(j + 1 if S.N > 1 else 1, S.N + 1):
                lines.append(f"c {j} {k}: " + ", ".join(show(c) for c in S.structure_vector(j, k)))
    if box is not None:
        lines.append("box: " + " ".join(repr(x) for x in box.to_list()))
        lines.append(f"samples: {box.sample_density}")
    return "\n".join(lines) + "\n"
