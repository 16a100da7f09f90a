"""Command-line entry point ``pf``.

Exit codes: 0 all checks pass, 1 an acceptance check failed, 2 usage or
parse error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .experiments import (
    ExperimentResult,
    SpecError,
    load_spec,
    parse_spec,
    run_experiment,
)
from .grid import FieldFormatError, read_field, read_field_header, write_field
from .pde import NumericalAbort

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3

log = logging.getLogger("phasefield")


class ReportError(ValueError):
    pass


def _fmt_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt_cell(v) for v in r])


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ReportError(f"{path}: empty CSV")
    return rows[0], rows[1:]


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------


def preset_names() -> list[str]:
    root = resources.files("phasefield") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def preset_text(name: str) -> str:
    f = resources.files("phasefield") / "presets" / f"{name}.ini"
    if not f.is_file():
        raise SpecError(f"unknown preset {name!r} (available: {', '.join(preset_names())})")
    return f.read_text()


def resolve_spec(arg: str):
    p = Path(arg)
    if p.is_file():
        return load_spec(p)
    name = p.name.removesuffix(".ini")
    if (p.parent.name in ("presets", "") or str(p.parent) == ".") and name in preset_names():
        return parse_spec(preset_text(name), f"presets/{name}")
    raise SpecError(f"spec file {arg!r} not found")


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


def write_result(res: ExperimentResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, table in res.tables.items():
        write_csv(out / f"{name}.csv", table.header, table.rows)
    meta = [f"name={res.spec.name}", f"kind={res.spec.kind}"]
    if res.spec.kind == "recovery_sweep" and res.spec.shape.get("type", "").strip().lower() == "circle":
        R = float(res.spec.shape["radius"])
        meta += [f"perimeter={2 * math.pi * R!r}", f"elastica={2 * math.pi / R!r}"]
    (out / "meta.txt").write_text("\n".join(meta) + "\n")
    (out / "checks.txt").write_text("".join(c.line() + "\n" for c in res.checks))


def cmd_run(args) -> int:
    spec = resolve_spec(args.spec)
    out = Path(args.output or spec.output or Path("pf-out") / spec.name)
    res = run_experiment(spec)
    write_result(res, out)
    for c in res.checks:
        print(c.line())
    print(f"{spec.name}: {'PASS' if res.passed else 'FAIL'} ({len(res.checks)} checks, {res.seconds:.1f} s) -> {out}")
    return EXIT_OK if res.passed else EXIT_FAIL


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


def _columns(path: Path, needed) -> dict[str, np.ndarray]:
    header, rows = read_csv(path)
    missing = [c for c in needed if c not in header]
    if missing:
        raise ReportError(f"{path}: missing column(s) {', '.join(missing)}")
    idx = {c: header.index(c) for c in needed}
    return {c: np.array([float(r[i]) for r in rows]) for c, i in idx.items()}


def _write_dat(path: Path, x, y, label: str) -> None:
    lines = [f"# {label}"] + [f"{a!r} {b!r}" for a, b in zip(map(float, x), map(float, y))]
    path.write_text("\n".join(lines) + "\n")


def _observed_order(eps, err) -> float:
    if len(eps) < 2 or err[-1] <= 0 or err[-2] <= 0:
        return float("nan")
    return math.log(err[-2] / err[-1]) / math.log(eps[-2] / eps[-1])


def report(directory) -> tuple[list[str], bool]:
    d = Path(directory)
    if not d.is_dir():
        raise ReportError(f"{d}: not a directory")
    sweep = d / "sweep.csv"
    meta_path = d / "meta.txt"
    if not sweep.exists() or not meta_path.exists():
        raise ReportError(f"{d}: no sweep output (expected sweep.csv and meta.txt)")
    meta = dict(line.split("=", 1) for line in meta_path.read_text().splitlines() if "=" in line)
    kind = meta.get("kind", "")
    summary = [f"experiment {meta.get('name', '?')} ({kind})"]
    passed = True

    if kind == "recovery_sweep":
        c = _columns(sweep, ["eps", "p_over_c0", "w_over_c0", "b_over_c0", "xi_ratio", "resolved_flag"])
        _write_dat(d / "p_energy.dat", c["eps"], c["p_over_c0"], "eps P_eps/c0")
        _write_dat(d / "w_energy.dat", c["eps"], c["w_over_c0"], "eps W_eps/c0")
        _write_dat(d / "b_energy.dat", c["eps"], c["b_over_c0"], "eps B_eps/c0")
        _write_dat(d / "xi_ratio.dat", c["eps"], c["xi_ratio"], "eps int|xi|/P")
        if "perimeter" in meta:
            targets = {"p_over_c0": float(meta["perimeter"]), "w_over_c0": float(meta["elastica"]),
                       "b_over_c0": float(meta["elastica"])}
            for q, t in targets.items():
                err = np.abs(c[q] - t) / t
                summary.append(f"{q}: finest {c[q][-1]!r}, target {t!r}, rel err {err[-1]:.3e}, "
                               f"observed order {_observed_order(c['eps'], err):.3f}")
    elif kind == "saddle_blowdown":
        c = _columns(sweep, ["eps", "w_energy", "b_energy", "mu_A"])
        _write_dat(d / "b_growth.dat", c["eps"], c["b_energy"], "eps B_eps")
        _write_dat(d / "w_energy.dat", c["eps"], c["w_energy"], "eps W_eps")
        _write_dat(d / "mu_A.dat", c["eps"], c["mu_A"], "eps mu_eps(A)")
        inc = bool(np.all(np.diff(c["b_energy"]) > 0))
        passed &= inc
        summary.append(f"B_eps monotone growth as eps decreases: {'yes' if inc else 'no'}")
    elif kind == "cusp_limit":
        c = _columns(sweep, ["h_index", "elastica", "limit"])
        _write_dat(d / "elastica.dat", c["h_index"], c["elastica"], "h elastica(E_h)")
        summary.append(f"elastica(E_h) at h={int(c['h_index'][-1])}: {c['elastica'][-1]!r}, limit {c['limit'][-1]!r}")
    elif kind == "tangent_probe":
        c = _columns(sweep, ["lambda", "rescaled_mass"])
        _write_dat(d / "probe_mass.dat", c["lambda"], c["rescaled_mass"], "lambda mass/lambda")
    elif kind == "energy_check":
        read_csv(sweep)
    else:
        raise ReportError(f"{meta_path}: unknown kind {kind!r}")

    checks = d / "checks.txt"
    if checks.exists():
        lines = [ln for ln in checks.read_text().splitlines() if ln.strip()]
        summary.extend(lines)
        passed &= all(ln.startswith("PASS") for ln in lines)
    summary.append(f"overall: {'PASS' if passed else 'FAIL'}")
    (d / "summary.txt").write_text("\n".join(summary) + "\n")
    return summary, passed


def cmd_report(args) -> int:
    lines, ok = report(args.dir)
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# field tools
# --------------------------------------------------------------------------


def cmd_field(args) -> int:
    if args.action == "info":
        keys, comment, _ = read_field_header(args.file)
        u = read_field(args.file)
        v = u.values
        print(f"grid {u.grid.nx}x{u.grid.ny} h=({u.grid.hx!r}, {u.grid.hy!r}) origin={u.grid.origin} bc={u.grid.bc.value}")
        if comment:
            print(f"comment: {comment}")
        print(f"min {float(v.min())!r} max {float(v.max())!r} mean {float(v.mean())!r}")
        return EXIT_OK
    if args.out is None:
        raise SpecError("field convert needs an output path")
    u = read_field(args.file)
    out = Path(args.out)
    if out.suffix == ".npy":
        np.save(out, np.asarray(u.values))
    elif out.suffix in (".txt", ".dat", ".csv"):
        X, Y = u.grid.mesh()
        cols = zip(X.ravel().tolist(), Y.ravel().tolist(), np.asarray(u.values).ravel().tolist())
        lines = [f"{x!r} {y!r} {z!r}" for x, y, z in cols]
        out.write_text("# x y value\n" + "\n".join(lines) + "\n")
    elif out.suffix == ".pf2d":
        write_field(u, out)
    else:
        raise SpecError(f"unsupported output format {out.suffix!r} (use .npy, .txt, .dat, .csv or .pf2d)")
    return EXIT_OK


def cmd_preset(args) -> int:
    for name in preset_names():
        spec = parse_spec(preset_text(name), f"presets/{name}")
        print(f"{name}\t{spec.kind}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pf", description="phase-field energy experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment spec or a named preset")
    r.add_argument("spec")
    r.add_argument("-o", "--output", help="output directory")
    r.set_defaults(func=cmd_run)
    rp = sub.add_parser("report", help="plot data and summary for a sweep directory")
    rp.add_argument("dir")
    rp.set_defaults(func=cmd_report)
    f = sub.add_parser("field", help="inspect or convert PF2D snapshots")
    f.add_argument("action", choices=["info", "convert"])
    f.add_argument("file")
    f.add_argument("out", nargs="?")
    f.set_defaults(func=cmd_field)
    ps = sub.add_parser("preset", help="list bundled presets")
    ps.add_argument("action", choices=["list"])
    ps.set_defaults(func=cmd_preset)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SpecError, ReportError, FieldFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
