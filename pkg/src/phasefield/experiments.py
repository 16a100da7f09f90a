"""Declarative experiment specs and their runners.

A spec is an INI-style file: ``[experiment]`` holds ``name``, ``kind``,
``eps_list`` and the grid rule, ``[shape]`` describes the geometry, and
``[params]`` carries kind-specific settings. Every runner returns a table of
rows plus a list of pass/fail checks.
"""

from __future__ import annotations

import configparser
import math
import re
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy import (
    check_ab_residual,
    defect_inequality_report,
    evaluate_energies,
    level_set_tensors,
    normal_field,
)
from .grid import BC, ScalarField2D, make_grid
from .pde import (
    NumericalAbort,
    allen_cahn_flow,
    allen_cahn_newton,
    ball_measure,
    blow_down,
    e_energy_and_gradient,
    flat_profile_field,
    saddle_energy_growth,
    saddle_solution,
)
from .shapes import (
    C0,
    Circle,
    Cross,
    CuspDumbbell,
    Ellipse,
    Polygon,
    c0_constant,
    cusp_approximant,
    recovery_field,
)
from .varifold import (
    Curve,
    PolylineVarifold,
    Verdict,
    blow_up_probe,
    bump_vector_field,
    diffuse_varifold,
    elastica_energy,
    extract_level_set,
    first_variation_diffuse,
    polyline_first_variation,
)

KINDS = ("recovery_sweep", "saddle_blowdown", "cusp_limit", "tangent_probe", "energy_check")
DEFAULT_MAX_NODES = 4_000_000


class SpecError(ValueError):
    """Malformed experiment spec."""


@dataclass
class ExperimentSpec:
    name: str
    kind: str
    eps_list: list[float]
    cells_per_eps: int = 8
    shape: dict = field(default_factory=dict)
    domain: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0)
    probes: list[str] = field(default_factory=list)
    output: str = ""
    max_nodes: int = DEFAULT_MAX_NODES
    params: dict = field(default_factory=dict)
    source: str = "<string>"

    def param(self, key, default=None, cast=float):
        if key not in self.params:
            return default
        raw = self.params[key]
        try:
            if cast is bool:
                return raw.strip().lower() in ("1", "true", "yes", "on")
            return cast(raw)
        except ValueError as exc:
            raise SpecError(f"{self.source}: [params] {key}: cannot parse {raw!r}") from exc

    def float_list(self, key, default=None):
        if key not in self.params:
            return default
        return _floats(self.params[key], f"{self.source}: [params] {key}")


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass
class Table:
    header: tuple
    rows: list[tuple] = field(default_factory=list)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    tables: dict[str, Table]
    checks: list[Check]
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


def _floats(raw: str, where: str) -> list[float]:
    try:
        return [float(t) for t in re.split(r"[,\s]+", raw.strip()) if t]
    except ValueError as exc:
        raise SpecError(f"{where}: expected a list of numbers, got {raw!r}") from exc


def _line_of(text: str, section: str, key: str) -> int | None:
    cur = None
    for k, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
        elif cur == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return k
    return None


def parse_spec(text: str, source: str = "<string>") -> ExperimentSpec:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise SpecError(f"{source}: {exc}") from exc
    if not cp.has_section("experiment"):
        raise SpecError(f"{source}: missing [experiment] section")
    ex = cp["experiment"]

    def where(key):
        ln = _line_of(text, "experiment", key)
        return f"{source}:{ln}" if ln else source

    for key in ("name", "kind", "eps_list"):
        if key not in ex:
            raise SpecError(f"{source}: [experiment] is missing required field '{key}'")
    kind = ex["kind"].strip()
    if kind not in KINDS:
        raise SpecError(f"{where('kind')}: unknown kind {kind!r} (expected one of {', '.join(KINDS)})")
    eps_list = _floats(ex["eps_list"], f"{where('eps_list')}: eps_list")
    if not eps_list or any(e <= 0 for e in eps_list):
        raise SpecError(f"{where('eps_list')}: eps_list must hold positive values")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise SpecError(f"{where('eps_list')}: eps_list must be strictly decreasing")
    try:
        cells = int(ex.get("cells_per_eps", "8"))
        max_nodes = int(float(ex.get("max_nodes", str(DEFAULT_MAX_NODES))))
    except ValueError as exc:
        raise SpecError(f"{source}: [experiment] cells_per_eps/max_nodes must be integers") from exc
    if cells < 1:
        raise SpecError(f"{where('cells_per_eps')}: cells_per_eps must be positive")

    domain = (-1.0, 1.0, -1.0, 1.0)
    if "domain" in ex:
        d = _floats(ex["domain"], f"{where('domain')}: domain")
        if len(d) != 4 or d[1] <= d[0] or d[3] <= d[2]:
            raise SpecError(f"{where('domain')}: domain must be 'xmin, xmax, ymin, ymax' with positive sides")
        domain = tuple(d)
    probes = [p.strip() for p in ex.get("probes", "").split(",") if p.strip()]
    shape = dict(cp["shape"]) if cp.has_section("shape") else {}
    params = dict(cp["params"]) if cp.has_section("params") else {}
    spec = ExperimentSpec(
        name=ex["name"].strip(),
        kind=kind,
        eps_list=eps_list,
        cells_per_eps=cells,
        shape=shape,
        domain=domain,
        probes=probes,
        output=ex.get("output", "").strip(),
        max_nodes=max_nodes,
        params=params,
        source=source,
    )
    if kind == "recovery_sweep":
        for eps in eps_list:
            nx, ny = grid_size(spec, eps)
            if nx * ny > spec.max_nodes:
                raise SpecError(
                    f"{where('eps_list')}: eps={eps} needs a {nx}x{ny} grid, above max_nodes={spec.max_nodes}"
                )
    return spec


def load_spec(path) -> ExperimentSpec:
    p = Path(path)
    return parse_spec(p.read_text(), str(p))


def grid_size(spec: ExperimentSpec, eps: float) -> tuple[int, int]:
    x0, x1, y0, y1 = spec.domain
    nx = int(round((x1 - x0) * spec.cells_per_eps / eps)) + 1
    ny = int(round((y1 - y0) * spec.cells_per_eps / eps)) + 1
    return nx, ny


def build_shape(block: dict, source: str = "<string>"):
    kind = block.get("type", "").strip().lower()

    def pair(key, default=None):
        if key not in block:
            if default is None:
                raise SpecError(f"{source}: [shape] {kind} needs '{key}'")
            return default
        v = _floats(block[key], f"{source}: [shape] {key}")
        if len(v) != 2:
            raise SpecError(f"{source}: [shape] {key} must be a pair")
        return tuple(v)

    def num(key, default=None):
        if key not in block:
            if default is None:
                raise SpecError(f"{source}: [shape] {kind} needs '{key}'")
            return default
        try:
            return float(block[key])
        except ValueError as exc:
            raise SpecError(f"{source}: [shape] {key}: not a number") from exc

    if kind == "circle":
        return Circle(pair("center", (0.0, 0.0)), num("radius"))
    if kind == "ellipse":
        return Ellipse(pair("center", (0.0, 0.0)), num("a"), num("b"))
    if kind == "cross":
        return Cross()
    if kind == "polygon":
        v = _floats(block.get("vertices", ""), f"{source}: [shape] vertices")
        if len(v) < 6 or len(v) % 2:
            raise SpecError(f"{source}: [shape] vertices must list at least three x y pairs")
        return Polygon(np.array(v).reshape(-1, 2))
    if kind == "cusp":
        return CuspDumbbell(L=num("L", 0.5), T=num("T", 1.5), A=num("A", 1.5)).polygons()
    raise SpecError(f"{source}: [shape] unknown type {kind!r}")


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def richardson(values: list[float]) -> tuple[float, float]:
    """Extrapolated limit and observed order from the last three values of a halving sequence."""
    if len(values) < 3:
        return (values[-1] if values else float("nan")), float("nan")
    q1, q2, q3 = values[-3:]
    d1, d2 = q1 - q2, q2 - q3
    if d2 == 0 or d1 / d2 <= 0:
        return q3, float("nan")
    p = math.log2(d1 / d2)
    if p <= 0:
        return q3, p
    return q3 + (q3 - q2) / (2.0 ** p - 1.0), p


def _rel(a, b):
    return abs(a - b) / abs(b)


def _decreasing(xs) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


def _fmt(x) -> str:
    return f"{x:.6g}"


# --------------------------------------------------------------------------
# recovery sweep
# --------------------------------------------------------------------------

RECOVERY_HEADER = (
    "eps", "nx", "p_energy", "w_energy", "b_energy", "xi_l1", "resolved_flag",
    "p_over_c0", "w_over_c0", "b_over_c0", "xi_ratio", "varifold_mass",
    "fv_lhs", "fv_rhs", "fv_polyline",
)


def run_recovery_sweep(spec: ExperimentSpec) -> ExperimentResult:
    shape = build_shape(spec.shape, spec.source)
    fv_center = tuple(spec.float_list("fv_center", [0.5, 0.0]))
    fv_radius = spec.param("fv_radius", 0.25)
    fv_dir = tuple(spec.float_list("fv_direction", [1.0, 0.0]))
    Y = bump_vector_field(fv_center, fv_radius, fv_dir)

    rows = []
    for eps in spec.eps_list:
        nx, ny = grid_size(spec, eps)
        grid = make_grid(nx, ny, spec.domain, BC.NEUMANN)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            u = recovery_field(shape, eps, grid)
            rep = evaluate_energies(u, eps)
        V = diffuse_varifold(u, eps)
        lhs, rhs = first_variation_diffuse(u, eps, Y)
        oracle = polyline_first_variation(extract_level_set(u, 0.0), Y).delta_v
        rows.append((
            eps, nx, rep.p_energy, rep.w_energy, rep.b_energy, rep.xi_l1, int(rep.resolved),
            rep.p_energy / C0, rep.w_energy / C0, rep.b_energy / C0, rep.xi_l1 / rep.p_energy,
            V.total_mass, lhs, rhs, oracle,
        ))
    table = Table(RECOVERY_HEADER, rows)
    col = {k: [r[i] for r in rows] for i, k in enumerate(RECOVERY_HEADER)}

    resolved = [r for r in rows if r[6] == 1]
    ext = Table(("quantity", "estimate", "order"))
    for q in ("p_over_c0", "w_over_c0", "b_over_c0"):
        i = RECOVERY_HEADER.index(q)
        est, order = richardson([r[i] for r in resolved])
        ext.rows.append((q, est, order))

    checks = []
    if isinstance(shape, Circle):
        R = shape.radius
        perim, elast = 2 * np.pi * R, 2 * np.pi / R
        pe = [_rel(v, perim) for v in col["p_over_c0"]]
        checks.append(Check(
            "perimeter", pe[-1] <= 0.02 and _decreasing(pe),
            f"P/c0={_fmt(col['p_over_c0'][-1])} vs {_fmt(perim)}, rel err {_fmt(pe[-1])} (<= 0.02), errors {[_fmt(e) for e in pe]}",
        ))
        we = [_rel(v, elast) for v in col["w_over_c0"]]
        be = [_rel(v, elast) for v in col["b_over_c0"]]
        gap = abs(col["w_energy"][-1] - col["b_energy"][-1]) / col["b_energy"][-1]
        checks.append(Check(
            "elastica", we[-1] <= 0.10 and be[-1] <= 0.10 and _decreasing(we) and _decreasing(be) and gap <= 0.05,
            f"W/c0 err {_fmt(we[-1])}, B/c0 err {_fmt(be[-1])} (<= 0.10), |W-B|/B {_fmt(gap)} (<= 0.05)",
        ))
        xi = col["xi_ratio"]
        checks.append(Check(
            "discrepancy", xi[-1] <= 0.05 and _decreasing(xi),
            f"int|xi|/P = {[_fmt(v) for v in xi]} (finest <= 0.05, decreasing)",
        ))
        lhs, rhs, orc = col["fv_lhs"][-1], col["fv_rhs"][-1], col["fv_polyline"][-1]
        d_lr = _rel(lhs, rhs)
        d_lo, d_ro = _rel(lhs, orc), _rel(rhs, orc)
        checks.append(Check(
            "first_variation", d_lr <= 0.02 and d_lo <= 0.05 and d_ro <= 0.05,
            f"lhs={_fmt(lhs)} rhs={_fmt(rhs)} polyline={_fmt(orc)}; |lhs-rhs| {_fmt(d_lr)} (<= 0.02), vs polyline {_fmt(max(d_lo, d_ro))} (<= 0.05)",
        ))
    return ExperimentResult(spec, {"sweep": table, "extrapolation": ext}, checks)


# --------------------------------------------------------------------------
# saddle blow-down
# --------------------------------------------------------------------------

SADDLE_HEADER = ("R", "eps", "w_energy", "b_energy", "p_energy", "mu_A", "continued")


def _saddle_rows(spec: ExperimentSpec, R: float, n: int, tol: float):
    sol = saddle_solution(R, n, tol)
    cont = spec.param("continuation", True, bool)
    center = tuple(spec.float_list("ball_center", [0.5, 0.5]))
    rad = spec.param("ball_radius", 0.2)
    rows = []
    for eps in spec.eps_list:
        b = blow_down(sol, eps, continuation=cont)
        mu = ball_measure(b.field, eps, center, rad)
        rows.append((R, eps, b.w_energy, b.b_energy, b.p_energy, mu, int(b.continued)))
    return sol, rows


def run_saddle_blowdown(spec: ExperimentSpec) -> ExperimentResult:
    R = spec.param("R", 24.0)
    n = spec.param("n", 769, int)
    tol = spec.param("tol", 1e-8)
    sol, rows = _saddle_rows(spec, R, n, tol)
    tables = {"sweep": Table(SADDLE_HEADER, rows)}
    w = [r[2] for r in rows]
    b = [r[3] for r in rows]
    mu = [r[5] for r in rows]
    w_max = spec.param("w_max", 1e-3)
    checks = [
        Check("saddle_residual", sol.residual <= 10 * tol and sol.converged,
              f"residual {sol.residual:.3e} (tol {tol:g})"),
        Check("w_zero", max(w) <= w_max, f"max W_eps {max(w):.3e} (<= {w_max:g})"),
        Check("b_increasing", all(y > x for x, y in zip(b, b[1:])), f"B_eps {[_fmt(v) for v in b]}"),
        Check("mu_off_cross", _decreasing(mu) and mu[-1] <= 0.1 * mu[0],
              f"mu_eps(A) {[f'{v:.3e}' for v in mu]} (last <= 10% of first)"),
    ]
    growth = saddle_energy_growth(sol)
    tables["growth"] = Table(("radius", "energy_over_radius"), growth)
    ratios = [g[1] for g in growth]
    checks.append(Check("energy_growth", max(ratios) <= 4 * C0,
                        f"E(B_R')/R' {[_fmt(v) for v in ratios]} (<= 4 c0 = {_fmt(4 * C0)})"))
    if spec.param("verify_doubling", False, bool):
        _, rows2 = _saddle_rows(spec, 2 * R, 2 * n - 1, tol)
        tables["doubled"] = Table(SADDLE_HEADER, rows2)
        worst = 0.0
        w_abs = 0.0
        for r1, r2 in zip(rows, rows2):
            for i in (3, 4, 5):
                worst = max(worst, _rel(r2[i], r1[i]) if r1[i] != 0 else abs(r2[i]))
            w_abs = max(w_abs, abs(r2[2] - r1[2]))
        ok = worst <= 0.01 and w_abs <= 0.01 * w_max
        checks.append(Check("doubling_R", ok,
                            f"max rel change of B, P, mu(A) {worst:.3e} (<= 0.01); |dW| {w_abs:.3e} (<= {0.01 * w_max:g})"))
    return ExperimentResult(spec, tables, checks)


# --------------------------------------------------------------------------
# cusp limit
# --------------------------------------------------------------------------


def run_cusp_limit(spec: ExperimentSpec) -> ExperimentResult:
    L = float(spec.shape.get("L", spec.param("L", 0.5)))
    T = float(spec.shape.get("T", 1.5))
    A = float(spec.shape.get("A", 1.5))
    hs = [int(h) for h in spec.float_list("h_list", [4, 8, 16, 32])]
    nv = spec.param("lobe_vertices", 4096, int)
    body = CuspDumbbell(L=L, T=T, A=A, lobe_vertices=nv)
    limit = body.limit_energy()
    rows = []
    for h in hs:
        poly = cusp_approximant(L, h, T=T, A=A, lobe_vertices=nv)
        e = elastica_energy(PolylineVarifold([Curve(poly.vertices, True, 1)]))
        rows.append((h, e, limit, _rel(e, limit), poly.area, body.area()))
    est, order = richardson([r[1] for r in rows])
    tol = spec.param("rel_tol", 0.05)
    checks = [Check("cusp_limit", rows[-1][3] <= tol,
                    f"elastica(E_{hs[-1]})={_fmt(rows[-1][1])} vs lobes+2L={_fmt(limit)}, rel err {_fmt(rows[-1][3])} (<= {tol:g})")]
    tables = {
        "sweep": Table(("h_index", "elastica", "limit", "rel_err", "area", "area_limit"), rows),
        "extrapolation": Table(("quantity", "estimate", "order"), [("elastica", est, order)]),
    }
    return ExperimentResult(spec, tables, checks)


# --------------------------------------------------------------------------
# tangent probes
# --------------------------------------------------------------------------


def run_tangent_probe(spec: ExperimentSpec) -> ExperimentResult:
    n_bins = spec.param("n_bins", 36, int)
    lam_circle = spec.float_list("circle_lambdas", [0.2, 0.1, 0.05])
    lam_cross = spec.float_list("cross_lambdas", [0.8, 0.4, 0.2])
    eps = spec.eps_list[-1]
    R = float(spec.shape.get("radius", 0.5))
    nx, ny = grid_size(spec, eps)
    grid = make_grid(nx, ny, spec.domain, BC.NEUMANN)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        u = recovery_field(Circle((0.0, 0.0), R), eps, grid)
    V = diffuse_varifold(u, eps, n_bins=n_bins)
    rc = blow_up_probe(V, (R, 0.0), lam_circle, n_bins)

    sol = saddle_solution(spec.param("R", 24.0), spec.param("n", 769, int), spec.param("tol", 1e-8))
    eps_s = spec.param("cross_eps", 0.025)
    bd = blow_down(sol, eps_s, continuation=True)
    Vs = diffuse_varifold(bd.field, eps_s, n_bins=n_bins)
    rs = blow_up_probe(Vs, (0.0, 0.0), lam_cross, n_bins)

    rows = [("circle",) + r for r in rc.csv_rows()] + [("cross",) + r for r in rs.csv_rows()]
    width = np.pi / n_bins
    d_c = abs(rc.directions[0] - np.pi / 2) if rc.directions else float("inf")
    checks = [Check("circle_unique", rc.verdict is Verdict.UNIQUE and d_c <= width,
                    f"verdict {rc.verdict.value}, direction error {_fmt(d_c)} (<= one bin {_fmt(width)})")]
    ortho = False
    if rs.verdict is Verdict.NON_UNIQUE and len(rs.directions) == 2:
        diff = abs(rs.directions[0] - rs.directions[1]) % np.pi
        ortho = abs(diff - np.pi / 2) <= width
    checks.append(Check("cross_non_unique", rs.verdict is Verdict.NON_UNIQUE and ortho,
                        f"verdict {rs.verdict.value}, directions {[_fmt(d) for d in rs.directions]}"))
    return ExperimentResult(
        spec, {"sweep": Table(("target",) + rc.CSV_HEADER, rows)}, checks
    )


# --------------------------------------------------------------------------
# energy / solver checks
# --------------------------------------------------------------------------


def bandlimited_field(grid, rng, modes: int = 4, scale: float = 2.0) -> np.ndarray:
    """tanh of a random low-mode cosine series, normalized to peak ``scale``."""
    X, Y = grid.mesh()
    x0, x1, y0, y1 = grid.extent
    sx, sy = (X - x0) / (x1 - x0), (Y - y0) / (y1 - y0)
    v = np.zeros_like(X)
    for kx in range(modes):
        for ky in range(modes):
            a = rng.standard_normal() / (1.0 + kx * kx + ky * ky)
            v += a * np.cos(np.pi * kx * sx + rng.uniform(0, 2 * np.pi)) * np.cos(np.pi * ky * sy + rng.uniform(0, 2 * np.pi))
    return np.tanh(scale * v / np.max(np.abs(v)))


def check_c0() -> Check:
    v = c0_constant()
    err = abs(v - 2.0 * math.sqrt(2.0) / 3.0)
    return Check("c0", err <= 1e-10, f"c0={v:.12f}, |c0 - 2sqrt2/3| = {err:.2e} (<= 1e-10)")


def check_inequalities(n_fields: int = 100, size: int = 65, seed: int = 0) -> tuple[Check, list[tuple]]:
    rng = np.random.default_rng(seed)
    grid = make_grid(size, size, (-1, 1, -1, 1))
    rows = []
    for k in range(n_fields):
        eps = float(rng.uniform(0.1, 0.5))
        u = ScalarField2D(grid, bandlimited_field(grid, rng))
        tg, eg = defect_inequality_report(u, eps, relative=True)
        rows.append((k, eps, tg, eg))
    worst = max(max(r[2], r[3]) for r in rows)
    return Check("pointwise_inequalities", worst <= 1e-10,
                 f"max signed gap (lhs - rhs, relative) over {n_fields} fields {worst:.2e} (<= 1e-10)"), rows


def ab_residuals(ns=(128, 256, 512), extent=(1.0, 2.0, 1.0, 2.0)) -> list[tuple[float, float]]:
    out = []
    for n in ns:
        g = make_grid(n + 1, n + 1, extent)
        u = ScalarField2D.from_function(g, lambda X, Y: X * X + Y * Y)
        out.append((g.hx, check_ab_residual(level_set_tensors(u)).value))
    return out


def check_ab() -> tuple[Check, list[tuple]]:
    rows = ab_residuals()
    orders = [math.log2(a[1] / b[1]) for a, b in zip(rows, rows[1:])]
    ok = rows[-1][1] <= 1e-6 and min(orders) >= 1.5
    return Check("ab_identities", ok,
                 f"residual {rows[-1][1]:.2e} at h=1/512 (<= 1e-6), orders {[_fmt(o) for o in orders]} (>= 1.5)"), rows


def check_solvers(n_starts: int = 20, seed: int = 1) -> tuple[Check, list[tuple]]:
    rng = np.random.default_rng(seed)
    grid = make_grid(65, 65, (-1, 1, -1, 1))
    eps = 0.1
    worst_rise = -np.inf
    worst_max = 0.0
    for _ in range(n_starts):
        u0 = ScalarField2D(grid, rng.uniform(-1.0, 1.0, grid.shape))
        u, rep = allen_cahn_flow(u0, eps, steps=200, record_every=1)
        e = [t[1] for t in rep.energy_trace]
        worst_rise = max(worst_rise, max(b - a for a, b in zip(e, e[1:])))
        worst_max = max(worst_max, float(np.max(np.abs(u.values))))
    flow_ok = worst_rise <= 1e-12 and worst_max <= 1.0

    g33 = make_grid(33, 33, (-1, 1, -1, 1))
    v = bandlimited_field(g33, rng)
    u = ScalarField2D(g33, v)
    valid = normal_field(u).valid_mask
    _, grad = e_energy_and_gradient(u, 0.2, valid=valid)
    fd = np.zeros_like(v)
    h = 1e-6
    for j in range(33):
        for i in range(33):
            vp, vm = v.copy(), v.copy()
            vp[j, i] += h
            vm[j, i] -= h
            ep, _ = e_energy_and_gradient(ScalarField2D(g33, vp), 0.2, valid=valid)
            em, _ = e_energy_and_gradient(ScalarField2D(g33, vm), 0.2, valid=valid)
            fd[j, i] = (ep - em) / (2 * h)
    grad_err = float(np.max(np.abs(fd - grad)) / np.max(np.abs(fd)))

    gN = make_grid(161, 161, (-1, 1, -1, 1))
    _, nrep = allen_cahn_newton(flat_profile_field(gN, 0.05, discrete=False), 0.05, tol=1e-8)
    ok = flow_ok and grad_err <= 1e-4 and nrep.converged and nrep.final_residual <= 1e-8
    rows = [
        ("flow_max_energy_rise", worst_rise),
        ("flow_max_abs_u", worst_max),
        ("descent_gradient_rel_err", grad_err),
        ("newton_residual", nrep.final_residual),
        ("newton_iterations", nrep.iterations),
    ]
    detail = (
        f"flow energy rise {worst_rise:.2e} (<= 1e-12), max|u| {worst_max:.15g} (<= 1), "
        f"E_eps gradient rel err {grad_err:.2e} (<= 1e-4), Newton residual {nrep.final_residual:.2e} "
        f"in {nrep.iterations} iterations (<= 1e-8)"
    )
    return Check("solver_hygiene", ok, detail), rows


def run_energy_check(spec: ExperimentSpec) -> ExperimentResult:
    which = spec.probes or ["c0", "inequalities", "ab_identity", "solvers"]
    checks, tables = [], {}
    summary = Table(("check", "quantity", "value"))
    for w in which:
        if w == "c0":
            c = check_c0()
            checks.append(c)
            summary.rows.append(("c0", "value", c0_constant()))
        elif w == "inequalities":
            c, rows = check_inequalities(spec.param("n_fields", 100, int), seed=spec.param("seed", 0, int))
            checks.append(c)
            tables["inequalities"] = Table(("field", "eps", "trace_gap_rel", "equlo_gap_rel"), rows)
        elif w == "ab_identity":
            c, rows = check_ab()
            checks.append(c)
            tables["ab_identity"] = Table(("h", "residual"), rows)
        elif w == "solvers":
            c, rows = check_solvers(spec.param("n_starts", 20, int))
            checks.append(c)
            for name, val in rows:
                summary.rows.append(("solvers", name, val))
        else:
            raise SpecError(f"{spec.source}: unknown energy_check probe {w!r}")
    tables["sweep"] = summary
    return ExperimentResult(spec, tables, checks)


RUNNERS = {
    "recovery_sweep": run_recovery_sweep,
    "saddle_blowdown": run_saddle_blowdown,
    "cusp_limit": run_cusp_limit,
    "tangent_probe": run_tangent_probe,
    "energy_check": run_energy_check,
}


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    t = time.perf_counter()
    res = RUNNERS[spec.kind](spec)
    res.seconds = time.perf_counter() - t
    return res


__all__ = [
    "Check",
    "ExperimentResult",
    "ExperimentSpec",
    "NumericalAbort",
    "SpecError",
    "Table",
    "load_spec",
    "parse_spec",
    "richardson",
    "run_experiment",
]
