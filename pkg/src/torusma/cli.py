"""Command line interface: config parsing, scenario runs, CSV emission.

Config files are sectioned plain text::

    [run]
    command = solve
    seed = 7

    [grid]
    complex_dim = 1
    resolution = 64

    [solve]
    lambda = 0.0
    density = const:1.0
    omega = flat
    out_potential = phi.field
    report = solve.csv

Unknown keys are rejected; missing keys and bad values are reported with
their section, key and line number.  Exit codes: 0 success, 2 no
convergence, 3 cone exit, 4 output refusal without --force, 5 config or
validation errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .errors import ConeExit, NoConvergence, TorusmaError
from .fields import (
    ScalarField,
    TorusGrid,
    det_array,
    flat_form,
    form_mass,
    load_form,
    load_scalar,
    save_scalar,
)


class ConfigError(Exception):
    kind = "ConfigError"

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        suffix = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{suffix}")


class MissingKey(ConfigError):
    kind = "MissingKey"


class UnknownKey(ConfigError):
    kind = "UnknownKey"


class BadValue(ConfigError):
    kind = "BadValue"


COMMANDS = ("solve", "continuation", "tian-family", "capacity", "orlicz", "verify")

# section -> key -> type tag ("int" | "float" | "str" | "inpath" | "outpath")
_SCHEMAS: Dict[str, Dict[str, Dict[str, str]]] = {
    "common": {
        "run": {"command": "str", "seed": "int", "threads": "int"},
        "grid": {"complex_dim": "int", "resolution": "int"},
    },
    "solve": {
        "solve": {
            "lambda": "float",
            "density": "str",
            "omega": "str",
            "out_potential": "outpath",
            "report": "outpath",
        },
    },
    "continuation": {
        "continuation": {
            "spec": "str",
            "lambda": "float",
            "schedule_start": "float",
            "schedule_floor": "float",
            "schedule_ratio": "float",
            "report": "outpath",
        },
    },
    "tian-family": {
        "tian-family": {
            "density": "str",
            "t_values": "str",
            "report": "outpath",
        },
    },
    "capacity": {
        "capacity": {
            "gamma": "str",
            "mask": "str",
            "family": "str",
            "family_size": "int",
            "profile": "outpath",
            "s_min": "float",
            "s_count": "int",
        },
    },
    "orlicz": {
        "orlicz": {"gauge": "str", "input": "inpath", "report": "outpath"},
    },
    "verify": {
        "verify": {"what": "str", "report": "outpath", "trials": "int"},
    },
}


@dataclass
class RunConfig:
    command: str
    sections: Dict[str, Dict[str, str]]
    seed: int = 0
    threads: int = 0

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def require(self, section: str, key: str) -> str:
        val = self.get(section, key)
        if val is None:
            raise MissingKey(f"missing key {section}.{key}")
        return val


def parse_config(text: str) -> RunConfig:
    """Parse and validate sectioned key = value text into a RunConfig."""
    sections: Dict[str, Dict[str, str]] = {}
    lines_of: Dict[Tuple[str, str], int] = {}
    current: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise BadValue(f"expected key = value, got {line!r}", lineno)
        if current is None:
            raise BadValue("key outside any [section]", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise BadValue("empty key", lineno)
        if key in sections[current]:
            raise BadValue(f"duplicate key {current}.{key}", lineno)
        sections[current][key] = value
        lines_of[(current, key)] = lineno

    command = sections.get("run", {}).get("command")
    if command is None:
        raise MissingKey("missing key run.command")
    if command not in COMMANDS:
        raise BadValue(
            f"unknown command {command!r} (expected one of {', '.join(COMMANDS)})",
            lines_of.get(("run", "command")),
        )

    known = dict(_SCHEMAS["common"])
    known.update(_SCHEMAS.get(command, {}))
    for sec, pairs in sections.items():
        if sec not in known:
            first_key = next(iter(pairs), "")
            raise UnknownKey(f"unknown section [{sec}]", lines_of.get((sec, first_key)))
        for key, value in pairs.items():
            if key not in known[sec]:
                raise UnknownKey(f"unknown key {sec}.{key}", lines_of[(sec, key)])
            _check_typed(sec, key, value, known[sec][key], lines_of[(sec, key)])

    cfg = RunConfig(command=command, sections=sections)
    if cfg.get("run", "seed") is not None:
        cfg.seed = int(cfg.get("run", "seed"))
    if cfg.get("run", "threads") is not None:
        cfg.threads = int(cfg.get("run", "threads"))
    _validate_domain(cfg, lines_of)
    return cfg


def _check_typed(sec: str, key: str, value: str, kind: str, lineno: int) -> None:
    if kind == "int":
        try:
            int(value)
        except ValueError:
            raise BadValue(f"{sec}.{key} must be an integer, got {value!r}", lineno)
    elif kind == "float":
        try:
            float(value)
        except ValueError:
            raise BadValue(f"{sec}.{key} must be a number, got {value!r}", lineno)
    elif kind == "inpath":
        if not os.path.exists(value):
            raise BadValue(f"{sec}.{key} references a missing file {value!r}", lineno)


def _validate_domain(cfg: RunConfig, lines_of) -> None:
    if cfg.command in ("solve", "continuation", "tian-family", "capacity"):
        dim = cfg.get("grid", "complex_dim")
        res = cfg.get("grid", "resolution")
        if dim is None:
            raise MissingKey("missing key grid.complex_dim")
        if res is None:
            raise MissingKey("missing key grid.resolution")
        try:
            TorusGrid(int(dim), int(res))
        except ValueError as exc:
            raise BadValue(f"grid: {exc}", lines_of.get(("grid", "resolution")))
    for sec in ("solve", "continuation"):
        lam = cfg.get(sec, "lambda")
        if lam is not None and float(lam) < 0:
            raise BadValue("lambda must be >= 0", lines_of.get((sec, "lambda")))
    # referenced input files must exist (path: prefixed expressions)
    for sec, pairs in cfg.sections.items():
        for key, value in pairs.items():
            if value.startswith("path:") and not os.path.exists(value[5:]):
                raise BadValue(
                    f"{sec}.{key} references a missing file {value[5:]!r}",
                    lines_of.get((sec, key)),
                )


def write_csv(rows: Sequence[Sequence], schema: Sequence[str], path) -> None:
    """Header + rows with 17 significant digits, newline-terminated."""
    cols = list(schema)
    out = [",".join(cols)]
    for row in rows:
        if len(row) != len(cols):
            raise ValueError(f"row arity {len(row)} != schema arity {len(cols)}")
        cells = []
        for cell in row:
            if isinstance(cell, float):
                cells.append(f"{cell:.17g}")
            else:
                cells.append(str(cell))
        out.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# field expressions
# ---------------------------------------------------------------------------

def _grid_from(cfg: RunConfig) -> TorusGrid:
    return TorusGrid(int(cfg.require("grid", "complex_dim")), int(cfg.require("grid", "resolution")))


def _density_field(expr: str, grid: TorusGrid, seed: int) -> ScalarField:
    from .samples import named_rng, random_band_limited

    if expr.startswith("path:"):
        f = load_scalar(expr[5:])
        if f.grid != grid:
            raise BadValue(f"density file grid {f.grid} != configured grid {grid}")
        return f
    if expr.startswith("const:"):
        return ScalarField(grid, np.full(grid.shape, float(expr[6:])))
    if expr.startswith("cosine:"):
        try:
            axis_s, amp_s = expr[7:].split(",")
            axis, amp = int(axis_s), float(amp_s)
            vals = 1.0 + amp * np.cos(2 * np.pi * grid.axes()[axis])
        except (ValueError, IndexError):
            raise BadValue(f"bad cosine density expression {expr!r}")
        return ScalarField(grid, np.broadcast_to(vals, grid.shape).copy())
    if expr.startswith("random:"):
        try:
            kmax_s, amp_s = expr[7:].split(",")
            f = random_band_limited(grid, named_rng(seed, "cli-density"), int(kmax_s), float(amp_s))
        except ValueError:
            raise BadValue(f"bad random density expression {expr!r}")
        vals = 1.0 + f.values - np.min(f.values)
        return ScalarField(grid, vals)
    raise BadValue(f"unknown density expression {expr!r}")


def _form_field(expr: str, grid: TorusGrid):
    if expr == "flat":
        return flat_form(grid)
    if expr.startswith("flat:"):
        return flat_form(grid, float(expr[5:]))
    if expr.startswith("path:"):
        f = load_form(expr[5:])
        if f.grid != grid:
            raise BadValue(f"form file grid {f.grid} != configured grid {grid}")
        return f
    raise BadValue(f"unknown form expression {expr!r}")


def _mask_field(expr: str, grid: TorusGrid) -> np.ndarray:
    if expr.startswith("path:"):
        f = load_scalar(expr[5:])
        if f.grid != grid:
            raise BadValue(f"mask file grid {f.grid} != configured grid {grid}")
        return f.values > 0.5
    if expr.startswith("disk:"):
        radius = float(expr[5:])
        ax = grid.axes()
        r2 = sum((a - 0.5) ** 2 for a in ax)
        return np.broadcast_to(r2 <= radius ** 2, grid.shape).copy()
    raise BadValue(f"unknown mask expression {expr!r}")


def _check_output(path: str, force: bool) -> None:
    if path and os.path.exists(path) and not force:
        raise FileExistsError(path)


# ---------------------------------------------------------------------------
# command drivers
# ---------------------------------------------------------------------------

def _run_solve(cfg: RunConfig, force: bool) -> int:
    from .solver import solve_ma

    grid = _grid_from(cfg)
    lam = float(cfg.get("solve", "lambda", "0.0"))
    out_pot = cfg.get("solve", "out_potential")
    report_path = cfg.get("solve", "report")
    for p in (out_pot, report_path):
        if p:
            _check_output(p, force)
    omega = _form_field(cfg.get("solve", "omega", "flat"), grid)
    dens = _density_field(cfg.require("solve", "density"), grid, cfg.seed)
    phi, rep = solve_ma(omega, dens, lam)
    if out_pot:
        save_scalar(phi, out_pot)
    if report_path:
        rows = [(i, r) for i, r in enumerate(rep.residual_history)]
        write_csv(rows, ["iteration", "sup_residual"], report_path)
    print(f"solve: iterations={rep.iterations} residual={rep.residual_history[-1]:.3e} "
          f"oscillation={rep.final_oscillation:.6g}")
    return 0


def _run_continuation(cfg: RunConfig, force: bool) -> int:
    from .degenerate import build_density, continuation_path, default_schedule
    from .samples import bundled_density_specs

    grid = _grid_from(cfg)
    name = cfg.get("continuation", "spec", "zeros")
    specs = bundled_density_specs(grid)
    if name not in specs:
        raise BadValue(f"unknown bundled spec {name!r} (have {', '.join(specs)})")
    spec = specs[name]
    lam = float(cfg.get("continuation", "lambda", "0.0"))
    sched = default_schedule(
        float(cfg.get("continuation", "schedule_start", "1e-1")),
        float(cfg.get("continuation", "schedule_floor", "1e-5")),
        float(cfg.get("continuation", "schedule_ratio", str(10 ** -0.5))),
    )
    report_path = cfg.get("continuation", "report")
    if report_path:
        _check_output(report_path, force)
    omega = flat_form(grid)
    alpha = flat_form(grid)
    g0 = build_density(spec.with_eps(0.0), grid)
    w = ScalarField(grid, np.full(grid.shape, form_mass(omega) / float(np.mean(g0.values))))
    phi, rep = continuation_path(omega, alpha, spec, lam, sched, vol_weight=w)
    rows = [
        (r.eps, r.c_eps, r.osc, r.sup_laplacian, r.residual, r.warm_dist)
        for r in rep.rows
    ]
    if report_path:
        write_csv(rows, ["eps_or_t", "c_eps_or_K", "oscillation", "sup_laplacian",
                         "residual", "warm_dist"], report_path)
    print(f"continuation[{name}]: floor c_eps={rep.rows[-1].c_eps:.3e} "
          f"osc ratio={max(r.osc for r in rep.rows)/min(r.osc for r in rep.rows):.3f}")
    return 0


def _run_tian(cfg: RunConfig, force: bool) -> int:
    from .degenerate import product_torus_forms, tian_family_run

    grid = _grid_from(cfg)
    if grid.complex_dim != 2:
        raise BadValue("tian-family requires complex_dim = 2")
    report_path = cfg.get("tian-family", "report")
    if report_path:
        _check_output(report_path, force)
    t_values = [float(x) for x in cfg.get("tian-family", "t_values", "1,0.3,0.1,0.03,0.01").split(",")]
    dens_expr = cfg.get("tian-family", "density", "cosine:0,0.5")
    f = _density_field(dens_expr, grid, cfg.seed)
    f = ScalarField(grid, f.values / float(np.mean(f.values)))
    py, px = product_torus_forms(grid)
    rows = tian_family_run(py, px, f, t_values)
    data = [(r.t, r.K_t, r.osc, 0.0, r.residual, 0.0) for r in rows]
    if report_path:
        write_csv(data, ["eps_or_t", "c_eps_or_K", "oscillation", "sup_laplacian",
                         "residual", "warm_dist"], report_path)
    oscs = [r.osc for r in rows]
    print(f"tian-family: osc range [{min(oscs):.6g}, {max(oscs):.6g}] over {len(rows)} values of t")
    return 0


def _run_capacity(cfg: RunConfig, force: bool) -> int:
    from .capacity import bundled_family, capacity_estimate, sublevel_profile
    from .ma_core import potential_in_class
    from .samples import cone_interior_potential, named_rng

    grid = _grid_from(cfg)
    gamma = _form_field(cfg.get("capacity", "gamma", "flat"), grid)
    profile_path = cfg.get("capacity", "profile")
    if profile_path:
        _check_output(profile_path, force)
    fam_expr = cfg.get("capacity", "family", "bundled")
    if fam_expr == "bundled":
        fam = bundled_family(gamma, named_rng(cfg.seed, "cli-family"),
                             size=int(cfg.get("capacity", "family_size", "8")))
    elif fam_expr.startswith("dir:"):
        import glob

        from .capacity import TestFamily

        paths = sorted(glob.glob(os.path.join(fam_expr[4:], "*.field")))
        if not paths:
            raise BadValue(f"no *.field files under {fam_expr[4:]!r}")
        members = []
        for path in paths:
            f = load_scalar(path)
            if f.grid != grid:
                raise BadValue(f"family file {path} grid {f.grid} != configured grid {grid}")
            members.append(potential_in_class(gamma, f))
        fam = TestFamily(tuple(members))
    else:
        raise BadValue(f"unknown family {fam_expr!r} (want 'bundled' or 'dir:<path>')")
    mask_expr = cfg.get("capacity", "mask")
    if mask_expr:
        mask = _mask_field(mask_expr, grid)
        val = capacity_estimate(gamma, mask, fam)
        print(f"capacity: mask estimate {val:.12g}")
        rows = [(0.0, val)]
    else:
        psi_raw = cone_interior_potential(grid, named_rng(cfg.seed, "cli-psi"), kmax=3)
        psi = potential_in_class(
            gamma, ScalarField(grid, psi_raw.values - np.max(psi_raw.values))
        )
        s_min = float(cfg.get("capacity", "s_min", "-1.0"))
        count = int(cfg.get("capacity", "s_count", "12"))
        s_grid = np.linspace(s_min, -1e-3, count)
        prof = sublevel_profile(gamma, psi, s_grid, fam)
        rows = list(zip(prof.s.tolist(), prof.a.tolist()))
        print(f"capacity: profile over {count} sublevels, a(max) = {prof.a[-1]:.6g}")
    if profile_path:
        write_csv(rows, ["s", "a"], profile_path)
    return 0


def _run_orlicz(cfg: RunConfig, force: bool) -> int:
    from .orlicz import exp_gauge, luxemburg_norm, plog_gauge, power_gauge

    gauge_expr = cfg.require("orlicz", "gauge")
    try:
        kind, param = gauge_expr.split(":")
        value = float(param)
    except ValueError:
        raise BadValue(f"bad gauge expression {gauge_expr!r} (want kind:parameter)")
    if kind == "power":
        gauge = power_gauge(value)
    elif kind == "plog":
        gauge = plog_gauge(value)
    elif kind == "exp":
        gauge = exp_gauge(value)
    else:
        raise BadValue(f"unknown gauge kind {kind!r}")
    f = load_scalar(cfg.require("orlicz", "input"))
    report_path = cfg.get("orlicz", "report")
    if report_path:
        _check_output(report_path, force)
    norm = luxemburg_norm(f, gauge)
    if report_path:
        write_csv([(gauge_expr, norm)], ["gauge", "luxemburg_norm"], report_path)
    print(f"orlicz: ||f||_{gauge_expr} = {norm:.17g}")
    return 0


def _run_verify(cfg: RunConfig, force: bool) -> int:
    what = cfg.get("verify", "what", "suite")
    report_path = cfg.get("verify", "report")
    if report_path:
        _check_output(report_path, force)
    trials = int(cfg.get("verify", "trials", "20"))
    seed = cfg.seed
    if what == "comparison":
        rows = _verify_comparison(seed, trials)
        schema = ["trial", "lhs", "rhs", "margin"]
    elif what == "monotone":
        rows = _verify_monotone(seed)
        schema = ["eps", "pairing", "gap"]
    elif what == "suite":
        rows = _verify_suite(seed, trials)
        schema = ["check", "trials", "worst", "status"]
        bad = [r for r in rows if r[3] != "pass"]
        if report_path:
            write_csv(rows, schema, report_path)
        for r in rows:
            print(f"verify {r[0]}: worst={r[2]:.3e} {r[3]}")
        return 0 if not bad else 5
    else:
        raise BadValue(f"unknown verify target {what!r}")
    if report_path:
        write_csv(rows, schema, report_path)
    print(f"verify {what}: {len(rows)} rows")
    return 0


def _verify_comparison(seed: int, trials: int):
    from .ma_core import comparison_check, potential_in_class
    from .samples import cone_interior_potential, named_rng

    grid = TorusGrid(1, 32)
    omega = flat_form(grid)
    rng = named_rng(seed, "verify-comparison")
    rows = []
    for i in range(trials):
        phi = potential_in_class(omega, cone_interior_potential(grid, rng, kmax=3))
        psi = potential_in_class(omega, cone_interior_potential(grid, rng, kmax=3))
        lhs, rhs, margin = comparison_check(omega, phi, psi)
        rows.append((i, lhs, rhs, margin))
    return rows


def _verify_monotone(seed: int):
    from .ma_core import monotone_convergence_probe, potential_in_class
    from .samples import cone_interior_potential, named_rng

    grid = TorusGrid(1, 32)
    omega = flat_form(grid)
    rng = named_rng(seed, "verify-monotone")
    phi = potential_in_class(omega, cone_interior_potential(grid, rng, kmax=2))
    chi = ScalarField(grid, np.ones(grid.shape))
    sched = [0.2 / 2 ** i for i in range(18)]
    rows = monotone_convergence_probe(omega, phi, sched, [(chi, None, 0, 0)], omega=omega)
    return [(r.eps, r.pairing_potential, r.gap_potential) for r in rows]


def _verify_suite(seed: int, trials: int):
    from .capacity import (
        batch_conclusion_check,
        fit_hypothesis_constant,
        random_monotone_profiles,
    )
    from .ma_core import comparison_check, potential_in_class
    from .orlicz import exp_norm_of_one, exp_gauge, holder_orlicz, luxemburg_norm
    from .samples import cone_interior_potential, named_rng, random_band_limited
    from .spectral import spectral_dd_bar

    rows = []
    grid = TorusGrid(1, 32)
    omega = flat_form(grid)
    rng = named_rng(seed, "verify-suite")

    worst = 0.0
    for _ in range(trials):
        phi = cone_interior_potential(grid, rng, kmax=3)
        gphi = omega + spectral_dd_bar(phi)
        lhs = float(np.mean(det_array(gphi.mat)))
        worst = max(worst, abs(lhs - form_mass(omega)))
    rows.append(("mass-conservation", trials, worst, "pass" if worst < 1e-10 else "fail"))

    worst = 0.0
    for _ in range(trials):
        phi = potential_in_class(omega, cone_interior_potential(grid, rng, kmax=3))
        psi = potential_in_class(omega, cone_interior_potential(grid, rng, kmax=3))
        _, _, margin = comparison_check(omega, phi, psi)
        worst = min(worst, margin) if worst else margin
    rows.append(("comparison-margin", trials, worst, "pass" if worst >= -1e-8 else "fail"))

    s, prof = random_monotone_profiles(rng, 1000, nodes=200)
    B = fit_hypothesis_constant(s, prof, 0.5)
    viol = batch_conclusion_check(s, prof, 0.5, B)
    rows.append(("kolodziej-conclusion", 1000, viol, "pass" if viol <= 0 else "fail"))

    worst = 0.0
    for _ in range(trials):
        f = random_band_limited(grid, rng, kmax=4, amplitude=float(rng.uniform(0.2, 4)))
        h = random_band_limited(grid, rng, kmax=4, amplitude=float(rng.uniform(0.2, 4)))
        lhs, rhs = holder_orlicz(f, h, beta=1.0)
        worst = max(worst, lhs - rhs)
    rows.append(("holder-inequality", trials, worst, "pass" if worst <= 1e-12 else "fail"))

    worst = 0.0
    for beta in (1.0, 2.0, 3.0):
        for vol in (0.5, 1.0, 2.0):
            w = ScalarField(grid, np.full(grid.shape, vol))
            lam = luxemburg_norm(ScalarField(grid, np.ones(grid.shape)), exp_gauge(beta), w)
            worst = max(worst, abs(lam - exp_norm_of_one(beta, vol)))
    rows.append(("exp-norm-closed-form", 9, worst, "pass" if worst < 1e-10 else "fail"))
    return rows


_RUNNERS = {
    "solve": _run_solve,
    "continuation": _run_continuation,
    "tian-family": _run_tian,
    "capacity": _run_capacity,
    "orlicz": _run_orlicz,
    "verify": _run_verify,
}


def run(cfg: RunConfig, force: bool = False) -> int:
    """Dispatch a validated config; returns the process exit status."""
    if cfg.threads:
        os.environ["TORUSMA_THREADS"] = str(cfg.threads)
    return _RUNNERS[cfg.command](cfg, force)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="sectioned key = value config file")
    common.add_argument("--seed", type=int, default=None, help="root seed for randomized families")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--threads", type=int, default=None, help="FFT worker threads")

    p = argparse.ArgumentParser(
        prog="torusma",
        description="Monge-Ampere equations on flat complex tori",
        parents=[common],
    )
    p.add_argument("--version", action="version", version=f"torusma {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=lambda **kw: argparse.ArgumentParser(
        parents=[common], **kw))

    sp = sub.add_parser("solve", help="single nondegenerate solve")
    sp.add_argument("--out-potential")
    sp.add_argument("--report")
    sp.add_argument("--lambda", dest="lam", type=float, default=None)
    sp.add_argument("--density")
    sp.add_argument("--omega")
    sp.add_argument("--dim", type=int)
    sp.add_argument("--resolution", type=int)

    cp = sub.add_parser("continuation", help="epsilon-regularized continuation run")
    cp.add_argument("--spec", choices=("zeros", "poles", "zeros-poles"))
    cp.add_argument("--report")
    cp.add_argument("--dim", type=int)
    cp.add_argument("--resolution", type=int)

    tp = sub.add_parser("tian-family", help="degenerating product-family scenario")
    tp.add_argument("--report")
    tp.add_argument("--resolution", type=int)
    tp.add_argument("--t-values")

    kp = sub.add_parser("capacity", help="capacity estimates and profiles")
    kp.add_argument("--gamma")
    kp.add_argument("--mask")
    kp.add_argument("--family")
    kp.add_argument("--profile")
    kp.add_argument("--dim", type=int)
    kp.add_argument("--resolution", type=int)

    op = sub.add_parser("orlicz", help="Luxemburg norms of field files")
    op.add_argument("--gauge", required=True, help="power:p | plog:beta | exp:beta")
    op.add_argument("--input", required=True)
    op.add_argument("--report")

    vp = sub.add_parser("verify", help="bundled property checks")
    vp.add_argument("what", nargs="?", default="suite",
                    choices=("suite", "comparison", "monotone"))
    vp.add_argument("--report")
    vp.add_argument("--trials", type=int)
    return p


def _merge_cli_into_config(args, cfg_text: Optional[str]) -> RunConfig:
    """Build the final RunConfig from an optional file plus CLI flags."""
    sections: Dict[str, Dict[str, str]] = {"run": {}}
    if cfg_text is not None:
        base = parse_config(cfg_text)
        if args.command and args.command != base.command:
            raise BadValue(
                f"config command {base.command!r} conflicts with subcommand {args.command!r}"
            )
        sections = {k: dict(v) for k, v in base.sections.items()}
    elif args.command:
        sections["run"]["command"] = args.command
    else:
        raise MissingKey("no subcommand and no --config given")

    def put(section: str, key: str, value) -> None:
        if value is not None:
            sections.setdefault(section, {})[key] = str(value)

    cmd = sections["run"].get("command", args.command)
    if args.command == "solve" or cmd == "solve":
        put("solve", "out_potential", getattr(args, "out_potential", None))
        put("solve", "report", getattr(args, "report", None))
        put("solve", "lambda", getattr(args, "lam", None))
        put("solve", "density", getattr(args, "density", None))
        put("solve", "omega", getattr(args, "omega", None))
    if args.command == "continuation":
        put("continuation", "spec", args.spec)
        put("continuation", "report", args.report)
    if args.command == "tian-family":
        put("tian-family", "report", args.report)
        put("tian-family", "t_values", getattr(args, "t_values", None))
    if args.command == "capacity":
        put("capacity", "gamma", args.gamma)
        put("capacity", "mask", args.mask)
        put("capacity", "family", args.family)
        put("capacity", "profile", args.profile)
    if args.command == "orlicz":
        put("orlicz", "gauge", args.gauge)
        put("orlicz", "input", args.input)
        put("orlicz", "report", args.report)
    if args.command == "verify":
        put("verify", "what", args.what)
        put("verify", "report", args.report)
        put("verify", "trials", getattr(args, "trials", None))
    if getattr(args, "dim", None) is not None:
        put("grid", "complex_dim", args.dim)
    if getattr(args, "resolution", None) is not None:
        put("grid", "resolution", args.resolution)
    if args.command in ("tian-family",) and "grid" in sections:
        sections["grid"].setdefault("complex_dim", "2")

    text = []
    for sec, pairs in sections.items():
        text.append(f"[{sec}]")
        for k, v in pairs.items():
            text.append(f"{k} = {v}")
    cfg = parse_config("\n".join(text))
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 is reserved for NoConvergence
        return 0 if exc.code in (0, None) else 5
    try:
        cfg_text = None
        if args.config:
            if not os.path.exists(args.config):
                raise BadValue(f"config file {args.config!r} does not exist")
            with open(args.config) as fh:
                cfg_text = fh.read()
        cfg = _merge_cli_into_config(args, cfg_text)
        return run(cfg, force=args.force)
    except ConfigError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return 5
    except FileExistsError as exc:
        print(f"error: OutputExists: {exc} (use --force to overwrite)", file=sys.stderr)
        return 4
    except NoConvergence as exc:
        print(f"error: NoConvergence: {exc}", file=sys.stderr)
        return 2
    except ConeExit as exc:
        print(f"error: ConeExit: {exc}", file=sys.stderr)
        return 3
    except (TorusmaError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
