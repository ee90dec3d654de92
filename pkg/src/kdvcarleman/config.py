"""Sweep configuration files (INI syntax).

::

    [system]
    catalog = heisenberg1        ; or: file = my.sys
    # a = 1+x^2                  ; parameter for the kdv entry

    [weight]
    f = -x1                      ; axis labels; default: the catalog's affine weight
    c0 = 1

    [grid]
    box = -1,1,-1,1,-1,1,-1,1    ; the support region K; default [-1,1]^dim
    shape = 32
    padding = 0.25

    [sweep]
    lambdas = 1,2,4,8,16,32,64
    count = 50
    seed = 7
    sobolev_s = 0
    target = P1

    [assert]
    min_slope = 0.9
    refinement_tol = 0.02        ; omit to skip the grid-doubling check
"""

from __future__ import annotations

import configparser
import os
import re
from dataclasses import dataclass

from .catalog import default_weight
from .grid import Grid
from .harness import SweepConfig, WeightSpec
from .hypotheses import Region
from .operators import SystemSpec
from .symbolic import ParseError, parse_expr

__all__ = ["ConfigError", "SweepSettings", "load_sweep_config", "parse_sweep_config",
           "resolve_system", "parse_box", "axis_names", "render", "parse_user_expr"]


class ConfigError(ValueError):
    pass


@dataclass
class SweepSettings:
    config: SweepConfig
    min_slope: float = 0.9
    refinement_tol: float | None = None
    source: str = ""


def parse_box(text: str, dim: int, density: int = 5) -> Region:
    """``lo1,hi1,lo2,hi2,...``, a single ``lo,hi`` pair for every axis, or ``includes-zero``."""
    text = text.strip()
    if text in ("default", "includes-zero"):
        return Region.cube(dim, 1, density)
    try:
        vals = [parse_expr(t, 1).constant_value().re for t in text.replace(",", " ").split()]
    except (ParseError, AttributeError) as exc:
        raise ConfigError(f"bad box {text!r}: {exc}") from None
    if len(vals) == 2:
        vals = vals * dim
    try:
        K = Region.from_flat(vals, density)
    except ValueError as exc:
        raise ConfigError(f"bad box {text!r}: {exc}") from None
    if K.dim != dim:
        raise ConfigError(f"box has {K.dim} axes, system has {dim}")
    return K


def resolve_system(catalog_id: str | None = None, path: str | None = None,
                   params: dict | None = None) -> tuple[SystemSpec, Region | None]:
    """Build a system from a catalog id (with parameters) or a system file."""
    from .catalog import CATALOG, get_entry, kdv_1d
    from .sysfile import load_system

    params = dict(params or {})
    if (catalog_id is None) == (path is None):
        raise ConfigError("give exactly one of a catalog id or a system file")
    if path is not None:
        if params:
            raise ConfigError("parameters only apply to catalog entries")
        sf = load_system(path)
        return sf.system, sf.box
    if catalog_id not in CATALOG:
        raise ConfigError(f"unknown catalog entry {catalog_id!r}; known: {', '.join(CATALOG)}")
    if params:
        if catalog_id not in ("kdv", "kdv-var") or set(params) != {"a"}:
            raise ConfigError(f"catalog entry {catalog_id!r} takes no parameters {sorted(params)}"
                              if catalog_id not in ("kdv", "kdv-var")
                              else f"kdv accepts only 'a', got {sorted(params)}")
        try:
            return kdv_1d(params["a"]), None
        except (ParseError, ValueError) as exc:
            raise ConfigError(f"bad parameter a: {exc}") from None
    return get_entry(catalog_id).build(), None


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{what}: expected numbers, got {text!r}") from None


def parse_sweep_config(text: str, source: str = "<config>", base_dir: str | None = None) -> SweepSettings:
    """Parse INI text; a relative ``[system] file`` is taken relative to ``base_dir``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    known = {"system", "weight", "grid", "sweep", "assert"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {sorted(unknown)}")
    sys_sec = cp["system"] if cp.has_section("system") else {}
    params = {k: v for k, v in sys_sec.items() if k not in ("catalog", "file")}
    path = sys_sec.get("file")
    if path and base_dir and not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    S, file_box = resolve_system(sys_sec.get("catalog"), path, params)

    g = cp["grid"] if cp.has_section("grid") else {}
    K = parse_box(g["box"], S.dim) if "box" in g else (file_box or Region.cube(S.dim))
    try:
        shape = [int(x) for x in str(g.get("shape", "32")).replace(",", " ").split()]
        padding = float(g.get("padding", "0.25"))
    except ValueError as exc:
        raise ConfigError(f"{source}: [grid] {exc}") from None
    if len(shape) == 1:
        shape = shape * S.dim
    try:
        grid = Grid.around(K, tuple(shape), padding)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None

    w = cp["weight"] if cp.has_section("weight") else {}
    try:
        f = parse_user_expr(w["f"], S) if "f" in w else default_weight(S)
    except ParseError as exc:
        raise ConfigError(f"{source}: [weight] f: {exc}") from None
    c0 = float(w.get("c0", "1"))

    sw = cp["sweep"] if cp.has_section("sweep") else {}
    try:
        cfg = SweepConfig(
            system=S,
            weight=WeightSpec(f, K, c0),
            grid=grid,
            lambdas=_floats(sw.get("lambdas", "1,2,4,8,16,32,64"), "lambdas"),
            num_test_functions=int(sw.get("count", "50")),
            seed=int(sw.get("seed", "7")),
            sobolev_s=float(sw.get("sobolev_s", "0")),
            target=sw.get("target", "P1").strip(),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    a = cp["assert"] if cp.has_section("assert") else {}
    tol = a.get("refinement_tol")
    return SweepSettings(cfg, float(a.get("min_slope", "0.9")),
                         float(tol) if tol is not None else None, source)


def axis_names(S: SystemSpec) -> dict[str, int]:
    """Variable names for user input: the system's axis labels, which shadow ``x1..``."""
    return {lbl: k for k, lbl in enumerate(S.axis_labels, start=1)}


def render(e, S: SystemSpec) -> str:
    """``str(e)`` with positional variables replaced by the axis labels."""
    labels = S.axis_labels
    return re.sub(r"x(\d+)", lambda m: labels[int(m.group(1)) - 1], str(e))


def parse_user_expr(text: str, S: SystemSpec):
    return parse_expr(text, S.dim, axis_names(S))


def load_sweep_config(path) -> SweepSettings:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_sweep_config(text, str(path), os.path.dirname(os.path.abspath(path)))
