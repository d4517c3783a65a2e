"""Configuration-driven experiment runner.

Subcommands
-----------
solve        one solve at a single grid level; writes ``field.txt`` and ``summary.json``
converge     convergence table over several dyadic levels (``converge.csv``)
accel-check  accelerator accuracy sweeps and per-apply timings
dump-field   total and scattered field on a uniform window (``field_window.txt``)

The configuration is an INI-style text file; every key is optional.  See
``RunConfig.from_file`` and the README for the recognised sections.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .acceleration import Accelerator, build_cells, direct_nonadjacent
from .geometry import (
    NystromGrid,
    ProblemConfig,
    RefractiveProfile,
    bean_curve,
    build_bean_patchset,
    build_disc_patchset,
    build_grid,
    disc_curve,
)
from .linsolve import GmresConfig, GmresResult, gmres
from .operator import Evaluator, OperatorOptions, apply_LS, build_workspace, incident_field
from .quadrature import ConfigurationError, CovParams
from .reference import convergence_orders, mie_coefficients, mie_total_field, relative_errors

logger = logging.getLogger(__name__)

__all__ = [
    "RunConfig",
    "LevelSolution",
    "make_grid",
    "solve_level",
    "convergence_table",
    "accuracy_sweep",
    "timing_sweep",
    "field_on_window",
    "main",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _auto(text: str, conv):
    text = text.strip()
    return None if text.lower() in ("auto", "none", "") else conv(text)


@dataclass(frozen=True)
class RunConfig:
    """Everything one invocation needs; validated on construction.

    Grid level ``l`` uses ``N1 = n1 2^l`` intervals along the boundary,
    ``N2 = n2 2^l`` across the layer and ``N = n 2^l`` per interior direction.
    """

    shape: str = "disc"
    kappa: float = 5.0
    radius: float = 1.0
    profile: str = "constant"
    index: float = math.sqrt(2.0)
    direction: tuple = (1.0, 0.0)
    n1: int = 8
    n2: int = 4
    n: int = 8
    Q: int = 5
    depth: float = 0.6
    first_level: int = 0
    levels: int = 3
    level: Optional[int] = None
    reference: str = "auto"
    options: OperatorOptions = field(default_factory=OperatorOptions)
    gmres: GmresConfig = field(default_factory=lambda: GmresConfig(tol=1e-10, restart=50, maxiter=500))
    out: str = "out"
    # accel-check
    check_level: int = 2
    check_cells: int = 8
    check_kappa: float = 8.0 * math.pi
    neq_sweep: tuple = (4, 6, 8, 10, 12)
    kh_sweep: tuple = (2.0, 4.0, 8.0)
    kh_neq: tuple = (4, 8, 13)
    kh_levels: tuple = (1, 2, 3)
    timing_levels: tuple = (2, 3)
    timing_kappa: float = 5.0
    timing_index: float = 2.0
    seed: int = 0
    # dump-field
    window: tuple = (-2.0, 2.0, -2.0, 2.0)
    resolution: tuple = (41, 41)

    def __post_init__(self) -> None:
        if self.shape not in ("disc", "bean"):
            raise ConfigurationError(f"shape must be 'disc' or 'bean', got {self.shape!r}")
        if self.Q < 2:
            raise ConfigurationError("Q must be at least 2")
        if self.levels < 1 or self.first_level < 0:
            raise ConfigurationError("levels must be positive and first_level non-negative")
        for lvl in self.level_list() + [self.solve_level] + list(self.kh_levels) + list(self.timing_levels):
            n2 = self.n2 * 2**lvl
            if n2 % (self.Q - 1):
                raise ConfigurationError(f"N2={n2} at level {lvl} is not a multiple of Q-1={self.Q - 1}")
        if self.reference not in ("auto", "mie", "self"):
            raise ConfigurationError("reference must be auto, mie or self")
        if self.reference == "mie" and not self.mie_applicable:
            raise ConfigurationError("the Mie reference needs a disc with constant index")
        if len(self.window) != 4 or self.window[0] >= self.window[1] or self.window[2] >= self.window[3]:
            raise ConfigurationError("window must be x_lo, x_hi, y_lo, y_hi with lo < hi")
        if len(self.resolution) != 2 or min(self.resolution) < 2:
            raise ConfigurationError("resolution needs two counts of at least 2")
        if len(self.kh_sweep) != len(self.kh_neq) or len(self.kh_sweep) != len(self.kh_levels):
            raise ConfigurationError("kh_sweep, kh_neq and kh_levels must have equal length")
        self.problem()  # profile and direction checks

    @property
    def solve_level(self) -> int:
        return self.first_level if self.level is None else self.level

    @property
    def mie_applicable(self) -> bool:
        return self.shape == "disc" and self.profile == "constant"

    def level_list(self) -> list:
        return list(range(self.first_level, self.first_level + self.levels))

    def problem(self, kappa: Optional[float] = None, index: Optional[float] = None) -> ProblemConfig:
        curve = disc_curve(self.radius) if self.shape == "disc" else bean_curve(self.radius)
        prof = RefractiveProfile(self.profile, float(self.index if index is None else index))
        d = np.asarray(self.direction, dtype=float)
        d = tuple(d / np.hypot(*d))
        return ProblemConfig(float(self.kappa if kappa is None else kappa), curve, self.shape, prof, d)

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        """Read an INI file.

        Raises
        ------
        OSError
            If the file cannot be read.
        ConfigurationError
            For unknown sections or keys and invalid values.
        """
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
        return cls.from_parser(parser, **overrides)

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.read_string(text)
        return cls.from_parser(parser, **overrides)

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser, **overrides) -> "RunConfig":
        top, opts, gm = {}, {}, {}
        schema = {
            "problem": {
                "shape": ("shape", str), "kappa": ("kappa", float), "radius": ("radius", float),
                "profile": ("profile", str), "index": ("index", float), "direction": ("direction", _floats),
            },
            "grid": {
                "n1": ("n1", int), "n2": ("n2", int), "n": ("n", int), "q": ("Q", int), "depth": ("depth", float),
                "first_level": ("first_level", int), "levels": ("levels", int),
                "level": ("level", lambda s: _auto(s, int)), "reference": ("reference", str),
            },
            "output": {"dir": ("out", str)},
            "accel_check": {
                "level": ("check_level", int), "cells": ("check_cells", int), "kappa": ("check_kappa", float),
                "neq_sweep": ("neq_sweep", _ints), "kh_sweep": ("kh_sweep", _floats), "kh_neq": ("kh_neq", _ints),
                "kh_levels": ("kh_levels", _ints), "timing_levels": ("timing_levels", _ints),
                "timing_kappa": ("timing_kappa", float), "timing_index": ("timing_index", float), "seed": ("seed", int),
            },
            "field": {"window": ("window", _floats), "resolution": ("resolution", _ints)},
        }
        opt_schema = {
            "quadrature": {
                "r_interior": float, "r1": float, "r2": float, "s0": float, "refinement": int,
                "boundary_refinement": int, "degree": lambda s: _auto(s, int), "n_tau": int,
                "direct_t2_lines": float, "lattice_radii": lambda s: _auto(s, _floats),
                "store_correction": lambda s: _auto(s, lambda t: t.lower() in ("1", "true", "yes", "on")),
            },
            "accelerator": {
                "enabled": bool, "cells_per_side": lambda s: _auto(s, int), "neq": lambda s: _auto(s, int),
                "eps": float, "basis": str,
            },
        }
        for section in parser.sections():
            key_l = section.lower()
            if key_l in schema:
                table = schema[key_l]
                for key, raw in parser.items(section):
                    if key not in table:
                        raise ConfigurationError(f"unknown key [{section}] {key}")
                    name, conv = table[key]
                    top[name] = _convert(conv, raw, section, key)
            elif key_l in opt_schema:
                table = opt_schema[key_l]
                for key, raw in parser.items(section):
                    if key == "cov_m":
                        opts["cov"] = CovParams(_convert(int, raw, section, key))
                        continue
                    if key not in table:
                        raise ConfigurationError(f"unknown key [{section}] {key}")
                    if table[key] is bool:
                        val = parser.getboolean(section, key)
                        opts["accelerate"] = val
                    else:
                        opts[key] = _convert(table[key], raw, section, key)
            elif key_l == "gmres":
                for key, raw in parser.items(section):
                    if key not in ("tol", "restart", "maxiter"):
                        raise ConfigurationError(f"unknown key [{section}] {key}")
                    gm[key] = _convert(float if key == "tol" else int, raw, section, key)
            else:
                raise ConfigurationError(f"unknown section [{section}]")
        try:
            top["options"] = OperatorOptions(**opts)
            top["gmres"] = GmresConfig(**{**{"tol": 1e-10}, **gm})
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
        top.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**top)


def _convert(conv, raw, section, key):
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad value for [{section}] {key}: {raw!r}") from exc


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def make_grid(cfg: RunConfig, level: int, kappa: Optional[float] = None, index: Optional[float] = None) -> NystromGrid:
    """Nystrom grid of the configured scatterer at one dyadic level."""
    res = (cfg.n1 * 2**level, cfg.n2 * 2**level, cfg.n * 2**level)
    prob = cfg.problem(kappa, index)
    if cfg.shape == "disc":
        ps = build_disc_patchset(cfg.radius, res, depth=cfg.depth)
    else:
        ps = build_bean_patchset(prob.curve, res, depth=cfg.depth)
    return build_grid(ps, prob, cfg.Q)


@dataclass
class LevelSolution:
    """Solved total field on one grid plus bookkeeping."""

    level: int
    grid: NystromGrid
    u: np.ndarray
    result: GmresResult
    setup_time: float
    solve_time: float
    workspace: object = None

    @property
    def time_per_apply(self) -> float:
        return self.solve_time / max(1, self.result.iterations)


def solve_level(cfg: RunConfig, level: int, keep_workspace: bool = False) -> LevelSolution:
    """Assemble the operator on one level and solve ``u + kappa^2 K[u] = u_inc``."""
    grid = make_grid(cfg, level)
    t0 = time.perf_counter()
    ws = build_workspace(grid, cfg.options)
    t_setup = time.perf_counter() - t0
    rhs = incident_field(grid, grid.config.kappa, grid.config.direction)
    t0 = time.perf_counter()
    res = gmres(lambda v: apply_LS(ws, v), rhs, cfg.gmres)
    t_solve = time.perf_counter() - t0
    logger.info(
        "level %d: %d unknowns, %d iterations (%s), residual %.3e, setup %.1fs, solve %.1fs",
        level, grid.size, res.iterations, res.status, res.residual, t_setup, t_solve,
    )
    return LevelSolution(level, grid, res.x, res, t_setup, t_solve, ws if keep_workspace else None)


def _mie(cfg: RunConfig, grid: NystromGrid) -> np.ndarray:
    d = grid.config.direction
    sol = mie_coefficients(grid.config.kappa, cfg.radius, cfg.index, alpha=math.atan2(d[1], d[0]))
    return mie_total_field(sol, grid.points)


def restrict(fine: LevelSolution, coarse_grid: NystromGrid) -> np.ndarray:
    """Fine-level field at the coarse grid points (every second lattice node)."""
    out = np.empty(coarse_grid.size, dtype=complex)
    for k, p in enumerate(fine.grid.patchset.patches):
        block = fine.u[fine.grid.patch_slice(k)].reshape(p.shape)[::2, ::2]
        out[coarse_grid.patch_slice(k)] = block.ravel()
    return out


def convergence_table(cfg: RunConfig) -> list:
    """Rows ``(grid, unknowns, iterations, eps2, order2, epsinf, orderinf)``.

    Against the Mie series every configured level gets a row.  For
    self-convergence one extra, finer level is solved and each row compares
    a level with the next one.
    """
    use_mie = cfg.reference == "mie" or (cfg.reference == "auto" and cfg.mie_applicable)
    levels = cfg.level_list()
    if not use_mie:
        levels = levels + [levels[-1] + 1]
    rows, errs, prev = [], [], None
    for lvl in levels:
        cur = solve_level(cfg, lvl)
        if use_mie:
            e_inf, e_2 = relative_errors(cur.u, _mie(cfg, cur.grid))
            rows.append([cur.grid.label(), cur.grid.size, cur.result.iterations])
            errs.append((e_2, e_inf))
        elif prev is not None:
            e_inf, e_2 = relative_errors(prev.u, restrict(cur, prev.grid))
            rows.append([prev.grid.label(), prev.grid.size, prev.result.iterations])
            errs.append((e_2, e_inf))
        prev = cur
    e = np.asarray(errs, dtype=float).reshape(-1, 2)
    o2, oi = convergence_orders(e[:, 0]), convergence_orders(e[:, 1])
    return [r + [e[i, 0], o2[i], e[i, 1], oi[i]] for i, r in enumerate(rows)]


def _random_density(grid: NystromGrid, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return grid.weights * (rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size))


def accelerator_error(grid: NystromGrid, kappa: float, cells: int, neq: int, seed: int = 0) -> tuple:
    """``(eps2, epsinf, kappa H)`` of accelerated against direct non-adjacent sums at the grid points."""
    pts = grid.points
    q = _random_density(grid, seed)
    cd = build_cells(pts.min(axis=0), pts.max(axis=0), kappa, cells)
    acc = Accelerator(kappa, pts, pts, cd, neq).apply(q)
    ref = direct_nonadjacent(kappa, cd, pts, pts, q)
    e_inf, e_2 = relative_errors(acc, ref)
    return e_2, e_inf, kappa * cd.H


def accuracy_sweep(cfg: RunConfig) -> list:
    """Rows ``(study, kappa, kappaH, neq, unknowns, eps2, epsinf)``."""
    rows = []
    g = make_grid(cfg, cfg.check_level, kappa=cfg.check_kappa)
    for neq in cfg.neq_sweep:
        e2, ei, kh = accelerator_error(g, cfg.check_kappa, cfg.check_cells, neq, cfg.seed)
        rows.append(["fixed_kappa", cfg.check_kappa, kh, neq, g.size, e2, ei])
    # fixed points per wavelength: the level grows with kappa H at a fixed cell count
    lo, hi = g.points.min(axis=0), g.points.max(axis=0)
    H0 = float(np.max(hi - lo)) / cfg.check_cells
    for kh, neq, lvl in zip(cfg.kh_sweep, cfg.kh_neq, cfg.kh_levels):
        kappa = kh / H0
        gk = make_grid(cfg, lvl, kappa=kappa)
        e2, ei, khr = accelerator_error(gk, kappa, cfg.check_cells, neq, cfg.seed)
        rows.append(["fixed_ppw", kappa, khr, neq, gk.size, e2, ei])
    return rows


def _time_apply(ws, u, direct: bool, repeat: int) -> float:
    """Best of ``repeat`` timed applies after one warm-up (JIT, caches)."""
    apply_LS(ws, u, direct=direct)
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        apply_LS(ws, u, direct=direct)
        best = min(best, time.perf_counter() - t0)
    return best


def timing_sweep(cfg: RunConfig, direct: bool = True) -> list:
    """Rows ``(level, kappa, unknowns, t_accel, t_direct)``; kappa doubles with each level."""
    rows = []
    base = cfg.timing_levels[0]
    for lvl in cfg.timing_levels:
        kappa = cfg.timing_kappa * 2.0 ** (lvl - base)
        g = make_grid(cfg, lvl, kappa=kappa, index=cfg.timing_index)
        ws = build_workspace(g, cfg.options if cfg.options.accelerate else replace(cfg.options, accelerate=True))
        u = incident_field(g, kappa, g.config.direction)
        ta = _time_apply(ws, u, False, 7)
        td = _time_apply(ws, u, True, 1) if direct else float("nan")
        rows.append([lvl, kappa, g.size, ta, td])
        del ws
    return rows


def field_on_window(sol: LevelSolution, points: np.ndarray, options: OperatorOptions) -> tuple:
    """Total and scattered field at arbitrary points from a solved grid field.

    Uses ``u = u_inc - kappa^2 K[u]`` with ``K`` evaluated at the new points.
    """
    g = sol.grid
    ev = Evaluator(g, np.asarray(points, dtype=float), options)
    kappa = g.config.kappa
    uinc = incident_field(points, kappa, g.config.direction)
    us = -(kappa**2) * ev.apply(g.contrast * sol.u)
    return uinc + us, us


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) or isinstance(v, str):
        return str(v)
    return f"{float(v):.5e}"


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_field(path: Path, points: np.ndarray, u: np.ndarray, us: np.ndarray) -> None:
    data = np.column_stack([points[:, 0], points[:, 1], u.real, u.imag, us.real, us.imag])
    np.savetxt(path, data, fmt="%.16e", header="x1 x2 re_u im_u re_us im_us")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_solve(cfg: RunConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    sol = solve_level(cfg, cfg.solve_level)
    g = sol.grid
    uinc = incident_field(g, g.config.kappa, g.config.direction)
    write_field(out / "field.txt", g.points, sol.u, sol.u - uinc)
    summary = {
        "grid": g.label(),
        "unknowns": int(g.size),
        "iterations": int(sol.result.iterations),
        "status": sol.result.status,
        "residual": float(sol.result.residual),
        "setup_time": sol.setup_time,
        "solve_time": sol.solve_time,
        "time_per_apply": sol.time_per_apply,
    }
    if cfg.mie_applicable:
        e_inf, e_2 = relative_errors(sol.u, _mie(cfg, g))
        summary.update(epsinf_mie=e_inf, eps2_mie=e_2)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    return summary


CONVERGE_HEADER = ("grid", "unknowns", "iterations", "eps2", "order2", "epsinf", "orderinf")


def cmd_converge(cfg: RunConfig) -> list:
    if cfg.levels < 3:
        raise ConfigurationError("a convergence study needs at least 3 levels")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = convergence_table(cfg)
    write_csv(out / "converge.csv", CONVERGE_HEADER, rows)
    return rows


def cmd_accel_check(cfg: RunConfig) -> tuple:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    acc = accuracy_sweep(cfg)
    write_csv(out / "accel_accuracy.csv", ("study", "kappa", "kappaH", "neq", "unknowns", "eps2", "epsinf"), acc)
    tim = timing_sweep(cfg)
    write_csv(out / "accel_timing.csv", ("level", "kappa", "unknowns", "t_accel", "t_direct"), tim)
    return acc, tim


def window_points(cfg: RunConfig) -> np.ndarray:
    x = np.linspace(cfg.window[0], cfg.window[1], cfg.resolution[0])
    y = np.linspace(cfg.window[2], cfg.window[3], cfg.resolution[1])
    X, Y = np.meshgrid(x, y, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def cmd_dump_field(cfg: RunConfig) -> np.ndarray:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    sol = solve_level(cfg, cfg.solve_level)
    pts = window_points(cfg)
    u, us = field_on_window(sol, pts, cfg.options)
    write_field(out / "field_window.txt", pts, u, us)
    return np.column_stack([pts, u, us])


COMMANDS = {
    "solve": cmd_solve,
    "converge": cmd_converge,
    "accel-check": cmd_accel_check,
    "dump-field": cmd_dump_field,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lsnystrom", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="INI configuration file (defaults apply when omitted)")
    p.add_argument("--levels", type=int, help="number of grid levels (overrides [grid] levels)")
    p.add_argument("--out", help="output directory (overrides [output] dir)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )
    overrides = {"levels": args.levels, "out": args.out}
    try:
        if args.config:
            cfg = RunConfig.from_file(args.config, **overrides)
        else:
            cfg = RunConfig(**{k: v for k, v in overrides.items() if v is not None})
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigurationError, configparser.Error, TypeError, ValueError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = COMMANDS[args.command](cfg)
    except ConfigurationError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.command == "solve":
        print(json.dumps(result, indent=2))
    elif args.command == "converge":
        print(",".join(CONVERGE_HEADER))
        for r in result:
            print(",".join(_fmt(v) for v in r))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
