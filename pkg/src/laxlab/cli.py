"""Command-line front end: ``laxlab simulate | lattice | scan | refine | verify``.

Configuration comes from an optional JSON file (``--config``) with sections
``lax``, ``window``, ``scan``, ``lattice`` and ``output``; any field can be
overridden by a dotted flag such as ``--lax.a 2`` or ``--scan.N 48``.

Exit codes: 0 success, 1 failed check or numerical failure, 2 configuration
error, 3 blow-up during ``simulate``, 4 degenerate curve.
Other numerical failures also exit with 1 and name the error class.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BlowUp, ConfigError, DegenerateCurve, LaxLabError
from .laxcore import REF, LaxConfig, complex_from_json, complex_to_json

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BLOWUP, EXIT_DEGENERATE = 0, 1, 2, 3, 4

_SECTIONS = {
    "window": {"re_min": -4.0, "re_max": 4.0, "im_min": -4.0, "im_max": 4.0},
    "scan": {"resolution": 64, "N": 32, "threshold": 1e-3},
    "lattice": {"mn_bound": 20, "tol": 1e-9},
    "output": {"directory": ".", "formats": ["csv", "json"]},
}
_LAX_FIELDS = ("a", "x0", "y0", "z0", "p0_weights", "tol")


@dataclass
class RunConfig:
    lax: LaxConfig = REF
    window: dict = field(default_factory=lambda: dict(_SECTIONS["window"]))
    scan: dict = field(default_factory=lambda: dict(_SECTIONS["scan"]))
    lattice: dict = field(default_factory=lambda: dict(_SECTIONS["lattice"]))
    output: dict = field(default_factory=lambda: dict(_SECTIONS["output"]))

    def validate(self):
        from .singlattice import Window

        w = self.window
        try:
            Window(w["re_min"], w["re_max"], w["im_min"], w["im_max"])
        except ValueError:
            raise ConfigError("window must be non-empty (min < max on both axes)", field="window") from None
        if self.scan["resolution"] < 16:
            raise ConfigError("scan.resolution must be at least 16", field="scan.resolution")
        if self.scan["N"] < 1:
            raise ConfigError("scan.N must be positive", field="scan.N")
        if not self.scan["threshold"] > 0:
            raise ConfigError("scan.threshold must be positive", field="scan.threshold")
        if self.lattice["mn_bound"] < 1:
            raise ConfigError("lattice.mn_bound must be at least 1", field="lattice.mn_bound")
        if not self.lattice["tol"] > 0:
            raise ConfigError("lattice.tol must be positive", field="lattice.tol")
        bad = set(self.output["formats"]) - {"csv", "json"}
        if bad:
            raise ConfigError(f"unknown output format {sorted(bad)[0]}", field="output.formats")
        return self

    @property
    def window_obj(self):
        from .singlattice import Window

        w = self.window
        return Window(w["re_min"], w["re_max"], w["im_min"], w["im_max"])

    @property
    def outdir(self):
        p = Path(self.output["directory"])
        p.mkdir(parents=True, exist_ok=True)
        return p

    def wants(self, fmt):
        return fmt in self.output["formats"]

    def to_json(self):
        return {"lax": self.lax.to_json(), "window": self.window, "scan": self.scan,
                "lattice": self.lattice, "output": self.output}


def _coerce(section, key, value):
    """Convert a JSON or command-line value to the type of the default."""
    default = _SECTIONS[section][key]
    name = f"{section}.{key}"
    if isinstance(value, str) and not isinstance(default, str):
        if isinstance(default, list):
            return [v.strip() for v in value.split(",") if v.strip()]
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            raise ConfigError(f"{name}: cannot parse {value!r}", field=name) from None
    if isinstance(default, bool) or isinstance(value, bool):
        raise ConfigError(f"{name}: unexpected boolean", field=name)
    if isinstance(default, int):
        if not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}", field=name)
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}", field=name)
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{name}: expected a list of strings", field=name)
        return value
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string", field=name)
    return value


def parse_complex_arg(text, name="value"):
    """Parse ``1.5``, ``1-2j``, ``[1, -2]`` or ``1,-2`` style complex input."""
    text = text.strip()
    if text.startswith("["):
        try:
            return complex_from_json(json.loads(text), name)
        except json.JSONDecodeError:
            raise ConfigError(f"{name}: cannot parse {text!r}", field=name) from None
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as a complex number", field=name) from None


def load_config(path=None, overrides=()):
    """Merge a JSON config file with dotted ``(key, value)`` overrides."""
    raw = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}", field="config") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            keys = re.findall(r'"([A-Za-z_][\w]*)"\s*:', text[: exc.pos])
            where = keys[-1] if keys else "config"
            raise ConfigError(f"config {path} is not valid JSON near field {where!r}: {exc}", field=where) from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object", field="config")
    unknown = set(raw) - {"lax", *_SECTIONS}
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(f"unknown config section {name}", field=name)

    lax = dict(raw.get("lax") or REF.to_json())
    sections = {}
    for sec, defaults in _SECTIONS.items():
        given = raw.get(sec, {})
        if not isinstance(given, dict):
            raise ConfigError(f"{sec} must be an object", field=sec)
        bad = set(given) - set(defaults)
        if bad:
            name = f"{sec}.{sorted(bad)[0]}"
            raise ConfigError(f"unknown field {name}", field=name)
        sections[sec] = {k: _coerce(sec, k, given.get(k, v)) for k, v in defaults.items()}

    for key, value in overrides:
        sec, _, name = key.partition(".")
        if sec == "lax":
            if name not in _LAX_FIELDS:
                raise ConfigError(f"unknown field lax.{name}", field=f"lax.{name}")
            if name == "tol":
                lax[name] = _coerce_float(value, "lax.tol")
            elif name == "p0_weights":
                try:
                    lax[name] = json.loads(value)
                except json.JSONDecodeError:
                    raise ConfigError("lax.p0_weights: invalid JSON", field="lax.p0_weights") from None
            else:
                z = parse_complex_arg(value, f"lax.{name}")
                lax[name] = [z.real, z.imag]
        elif sec in _SECTIONS and name in _SECTIONS[sec]:
            sections[sec][name] = _coerce(sec, name, value)
        else:
            raise ConfigError(f"unknown option --{key}", field=key)

    try:
        config = LaxConfig.from_json(lax)
    except ConfigError as exc:
        field_name = f"lax.{exc.field}" if exc.field and not exc.field.startswith("lax") else exc.field
        raise ConfigError(str(exc), field=field_name) from None
    return RunConfig(config, **sections).validate()


def _coerce_float(value, name):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{name}: expected a number", field=name) from None


# ----------------------------------------------------------------------------
# output helpers


def _fmt(v):
    return "%.17g" % v


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in r])


# ----------------------------------------------------------------------------
# commands


def cmd_simulate(run, args):
    from .flowint import PathSpec, integrate_system, write_trajectory_csv

    verts = [parse_complex_arg(v, "path") for v in args.path.replace(";", " ").split()]
    path = PathSpec(tuple(verts), max_step=args.max_step, tol=args.tol)
    out = run.outdir
    summary = {"config": run.lax.to_json(), "path": [complex_to_json(v) for v in path.vertices]}
    blow = None
    try:
        samples = integrate_system(run.lax, path)
        code = EXIT_OK
        summary["status"] = "ok"
    except BlowUp as exc:
        blow = exc
        samples = exc.samples
        code = EXIT_BLOWUP
        summary["status"] = "blowup"
        summary["t_star"] = complex_to_json(exc.t_est)
        summary["exponent"] = exc.exponent
    summary["samples"] = len(samples)
    summary["max_A_drift"] = max(s.drift[0] for s in samples)
    summary["max_B_drift"] = max(s.drift[1] for s in samples)
    if run.wants("csv"):
        with (out / "trajectory.csv").open("w", newline="") as fh:
            write_trajectory_csv(samples, fh)
    _write_json(out / "simulate.json", summary)
    if blow is not None:
        print(f"blow-up near t = {blow.t_est:.12g} (exponent {blow.exponent:.4g})")
    else:
        print(f"reached t = {samples[-1].t:.12g}; max drift A {summary['max_A_drift']:.3e}, "
              f"B {summary['max_B_drift']:.3e}")
    return code


def cmd_lattice(run, args):
    from .singlattice import classical_lattice, compare_lattices, period_relations, reference_orientation, rh_lattice

    win = run.window_obj
    mn, tol = run.lattice["mn_bound"], run.lattice["tol"]
    cl = classical_lattice(run.lax, win, mn, tol)
    rh = rh_lattice(run.lax, win, mn, tol)
    match = compare_lattices(cl, rh, tol=args.match_tol)
    pr = period_relations(cl.branch)
    eps = reference_orientation()
    report = {
        "config": run.lax.to_json(),
        "window": win.to_json(),
        "branch": cl.branch.to_json(),
        "offsets": {k: complex_to_json(v) for k, v in rh.offsets.items()},
        "periods": {k: complex_to_json(v) for k, v in cl.periods.items()},
        "orientation": {"eps_K": pr["eps_K"], "eps_Kp": pr["eps_Kp"],
                        "reference": [complex_to_json(e) for e in eps]},
        "period_relations": pr,
        "two_way_residual": rh.extra["two_way_residual"],
        "points": [p.to_json() for p in cl.points + rh.points],
        "match": match.to_json(),
    }
    out = run.outdir
    if run.wants("json"):
        _write_json(out / "lattice.json", report)
    if run.wants("csv"):
        _write_csv(out / "lattice.csv", ["t_re", "t_im", "m", "n", "source"],
                   [(p.t.real, p.t.imag, p.m, p.n, p.source) for p in cl.points + rh.points])
    verdict = "coincide" if match.coincide else "DIFFER"
    print(f"{len(cl.points)} classical / {len(rh.points)} factorization points; "
          f"max matched distance {match.max_distance:.3e}: {verdict}")
    return EXIT_OK if match.coincide else EXIT_FAIL


def cmd_scan(run, args):
    from .toeplitz import scan

    res = scan(run.lax, run.window_obj, run.scan["resolution"], run.scan["N"], run.scan["threshold"])
    out = run.outdir
    if run.wants("csv"):
        rows = []
        for i, y in enumerate(res.im):
            for j, x in enumerate(res.re):
                rows.append((float(x), float(y), float(res.sigma[i, j]), float(res.rho[i, j])))
        _write_csv(out / "scan.csv", ["t_re", "t_im", "sigma_min", "rho"], rows)
    cands = {
        "N": res.N,
        "threshold": res.threshold,
        "window": run.window_obj.to_json(),
        "max_tail": res.max_tail,
        "lipschitz_estimate": res.lipschitz,
        "candidates": [p.to_json() for p in res.candidates],
    }
    if run.wants("json"):
        _write_json(out / "candidates.json", cands)
    print(f"{len(res.candidates)} singularity candidates")
    return EXIT_OK


def cmd_refine(run, args):
    from .toeplitz import refine_singularity

    t0 = parse_complex_arg(args.t_guess, "t_guess")
    schedule = tuple(int(v) for v in args.schedule.split(","))
    p = refine_singularity(run.lax, t0, schedule, threshold=run.scan["threshold"])
    result = {"t_guess": complex_to_json(t0), "schedule": list(schedule), "point": p.to_json()}
    if run.wants("json"):
        _write_json(run.outdir / "refine.json", result)
    print(f"refined t* = {p.t:.15g} (sigma_min {p.sigma:.3e})")
    return EXIT_OK


def cmd_verify(run, args):
    from .verify import format_table, run_suites

    checks = run_suites(run.lax, args.suite or None)
    print(format_table(checks))
    if run.wants("json"):
        _write_json(run.outdir / "verify.json", [c.to_json() for c in checks])
    failed = sorted({c.suite for c in checks if not c.passed})
    if failed:
        print("failing suites: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "lattice": cmd_lattice,
    "scan": cmd_scan,
    "refine": cmd_refine,
    "verify": cmd_verify,
}


def build_parser():
    p = argparse.ArgumentParser(prog="laxlab", description=__doc__.split("\n")[0])
    p.add_argument("--config", help="JSON run configuration")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate the system along a polyline")
    s.add_argument("--path", default="0 1",
                   help="path vertices as one string of complex numbers, e.g. '0 0.5+0.2j 1'; "
                        "the path is prepended with 0 when it does not start there")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--max-step", type=float, default=float("inf"))

    lat = sub.add_parser("lattice", help="classical and factorization lattices and their match")
    lat.add_argument("--match-tol", type=float, default=1e-6)

    sub.add_parser("scan", help="sigma_min heat map and singularity candidates")

    r = sub.add_parser("refine", help="refine one singularity from a guess")
    r.add_argument("--t-guess", required=True)
    r.add_argument("--schedule", default="16,32,64")

    v = sub.add_parser("verify", help="run the property suites")
    v.add_argument("--suite", action="append", help="restrict to a suite (repeatable)")
    return p


_VALUE_FLAGS = ("--path", "--t-guess")


def _split_dotted(argv):
    """Pull ``--section.key value`` pairs out of ``argv``."""
    rest, overrides = [], []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_FLAGS and i + 1 < len(argv):
            # allow values with a leading minus sign, e.g. --t-guess -0.1-0.5j
            rest.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        if a.startswith("--") and "." in a.split("=", 1)[0]:
            if "=" in a:
                key, value = a[2:].split("=", 1)
            else:
                if i + 1 >= len(argv):
                    raise ConfigError(f"{a} needs a value", field=a[2:])
                key, value = a[2:], argv[i + 1]
                i += 1
            overrides.append((key, value))
        else:
            rest.append(a)
        i += 1
    return rest, overrides


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        rest, overrides = _split_dotted(argv)
        args = build_parser().parse_args(rest)
        run = load_config(args.config, overrides)
        return COMMANDS[args.command](run, args)
    except ConfigError as exc:
        where = f" [{exc.field}]" if exc.field else ""
        print(f"configuration error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateCurve as exc:
        print(f"degenerate curve: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except LaxLabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
