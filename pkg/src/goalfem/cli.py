"""Command line front end.

``goalfem run`` drives one benchmark case through the solve / recover /
estimate / refine loop and writes a CSV report plus gnuplot-ready .dat
files.  ``goalfem verify`` runs fast self-checks (kernel backends, a
patch test, case construction) and is meant as a smoke test after
installation.

Options resolve as command line > config file > defaults.  The config
file is plain ``key = value`` lines with ``#`` comments, keys matching
the long option names.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import benchmarks, kernels
from .adaptivity import AdaptConfig, run_adaptive

_DEFAULTS = {
    "case": "cyl_1a",
    "recovery": "spr-cx",
    "refine": "adaptive",
    "target": 0.01,
    "max_iter": 8,
    "max_splits": 2,
    "out": "out",
}

_COERCE = {"target": float, "max_iter": int, "max_splits": int}

CSV_COLUMNS = ("dof", "Qees", "Qe", "theta", "thetaQoI", "etaes", "eta",
               "E2", "E3", "E4", "meanD", "sigD")
PLOT_COLUMNS = ("theta", "thetaQoI", "etaes", "eta", "meanD", "sigD")


def _fmt(v):
    if v is None or not np.isfinite(v):
        return "nan"
    return "%.17e" % float(v)


def report_values(r):
    """Report fields in CSV column order (dof first, as an int)."""
    return (r.dof, r.e_est, r.e_true, r.theta, r.theta_qoi, r.eta_est,
            r.eta_true, r.E2, r.E3, r.E4, r.mean_absD, r.std_D)


def write_outputs(reports, outdir):
    """CSV report, summary table and per-column .dat files, byte-stable."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = [",".join(CSV_COLUMNS)]
    for r in reports:
        vals = report_values(r)
        lines.append("%d," % vals[0] + ",".join(_fmt(v) for v in vals[1:]))
    (outdir / "report.csv").write_text("\n".join(lines) + "\n")
    widths = [8] + [24] * (len(CSV_COLUMNS) - 1)
    rows = ["".join("%*s" % (w, c) for w, c in zip(widths, CSV_COLUMNS))]
    for r in reports:
        vals = report_values(r)
        cells = ["%8d" % vals[0]]
        cells += ["%24s" % _fmt(v) for v in vals[1:]]
        rows.append("".join(cells))
    (outdir / "summary.txt").write_text("\n".join(rows) + "\n")
    for col in PLOT_COLUMNS:
        k = CSV_COLUMNS.index(col)
        dat = ["# dof %s" % col]
        for r in reports:
            vals = report_values(r)
            dat.append("%d %s" % (vals[0], _fmt(vals[k])))
        (outdir / ("%s.dat" % col)).write_text("\n".join(dat) + "\n")


def _read_config(path):
    opts = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SystemExit(f"config: cannot parse line {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _DEFAULTS:
            raise SystemExit(f"config: unknown key {key!r}")
        opts[key] = _COERCE.get(key, str)(val)
    return opts


def _resolve(args):
    opts = dict(_DEFAULTS)
    if args.config:
        opts.update(_read_config(args.config))
    for key in _DEFAULTS:
        v = getattr(args, key)
        if v is not None:
            opts[key] = v
    return opts


def cmd_run(args):
    opts = _resolve(args)
    case = benchmarks.make_case(opts["case"])
    config = AdaptConfig(target=opts["target"],
                         max_iter=opts["max_iter"],
                         max_splits=opts["max_splits"],
                         uniform=opts["refine"] == "uniform")

    def progress(cycle, mesh, primal, dual, report):
        print("cycle %d: elems=%d dof=%d Qest=%s eta_est=%s"
              % (cycle, mesh.n_elems, report.dof,
                 _fmt(report.q_h + report.e_est), _fmt(report.eta_est)))

    reports = run_adaptive(case, config,
                           constrained=opts["recovery"] == "spr-cx",
                           collect=progress)
    write_outputs(reports, opts["out"])
    print("wrote %s" % (Path(opts["out"]) / "report.csv"))
    return 0


def cmd_verify():
    failures = 0

    def check(label, fn):
        nonlocal failures
        try:
            fn()
            print("verify: %-28s ok" % label)
        except Exception as exc:  # noqa: BLE001 - report and keep going
            failures += 1
            print("verify: %-28s FAIL (%s)" % (label, exc))

    def backends_agree():
        rng = np.random.default_rng(0)
        coords = np.array([[0.0, 0.0], [1.1, 0.1], [1.2, 1.3],
                           [-0.1, 0.9]])[None, :, :] \
            + 0.01 * rng.standard_normal((8, 4, 2))
        from .mesh import gauss2d
        gp, gw = gauss2d(2)
        D = benchmarks.MATERIAL.D
        want = kernels._numpy.batch_stiffness(coords, D, gp, gw)
        got = kernels.batch_stiffness(coords, D, gp, gw)
        if not np.allclose(want, got, rtol=1e-12, atol=1e-12):
            raise AssertionError("backend mismatch")

    def patch_test():
        from .mesh import GeometryMap, build_initial_mesh, refine
        from .solver import DirichletBC, LoadSet, solve
        geom = GeometryMap("box", x0=0.0, y0=0.0, x1=1.0, y1=1.0)
        mesh = refine(build_initial_mesh(geom, 2, 2), [0])
        lin = lambda pts: 0.2 * pts[:, 0] - 0.1 * pts[:, 1]

        def comp(c):
            return [(t, c, lin) for t in ("bottom", "top", "left", "right")]
        f = solve(mesh, benchmarks.MATERIAL, LoadSet(),
                  DirichletBC(comps=comp(0) + comp(1)))
        from .mesh import gauss2d
        gp, _ = gauss2d(2)
        sig = f.stress(np.arange(mesh.n_elems), gp)
        if np.ptp(sig.reshape(-1, 3), axis=0).max() > 1e-8:
            raise AssertionError("stress not constant")

    def cases_build():
        for name in benchmarks.CASES:
            benchmarks.make_case(name)

    def cylinder_fields():
        from .elasticity import equilibrium_residual
        th = np.linspace(0.05, 1.5, 9)
        pts = 12.0 * np.stack([np.cos(th), np.sin(th)], axis=-1)
        a, b = benchmarks.CYL_A, benchmarks.CYL_B
        for fld, srr_a, srr_b in (
                (benchmarks.primal_lame(), -1.0, 0.0),
                (benchmarks.dual_lame_outer_mean(), 0.0,
                 1.0 / benchmarks.ARC_OUTER)):
            if equilibrium_residual(fld.stress, None, pts) > 1e-6:
                raise AssertionError("interior equilibrium violated")
            for r, want in ((a, srr_a), (b, srr_b)):
                if abs(fld.radial(r)[1] - want) > 1e-12:
                    raise AssertionError("radial boundary stress wrong")
        fld = benchmarks.dual_lame_reaction()
        if abs(fld.radial(a)[0] + 1.0 / benchmarks.ARC_INNER) > 1e-12:
            raise AssertionError("reaction dual displacement wrong")
        if abs(fld.radial(b)[1]) > 1e-12:
            raise AssertionError("reaction dual not traction free")

    def corner_fields():
        from .elasticity import equilibrium_residual, traction
        case = benchmarks.make_case("lshape_k1")
        ex = case.exact_primal
        s = np.linspace(0.1, 0.9, 5)
        pts = np.stack([-s, 0.4 + 0.3 * s], axis=-1)
        if equilibrium_residual(ex.stress, None, pts) > 1e-5:
            raise AssertionError("interior equilibrium violated")
        for face, nrm in ((np.stack([-s, 0 * s], axis=-1), (0.0, -1.0)),
                          (np.stack([0 * s, -s], axis=-1), (-1.0, 0.0))):
            t = traction(ex.stress(face), np.broadcast_to(nrm, face.shape))
            if np.abs(t).max() > 1e-8:
                raise AssertionError("reentrant face not traction free")
        exts = case._extractors
        kI = exts["I"].extract_exact(exts["I"].primary.displacement,
                                     exts["I"].primary.stress)
        kX = exts["II"].extract_exact(exts["I"].primary.displacement,
                                      exts["I"].primary.stress)
        if abs(kI - 1.0) > 1e-9 or abs(kX) > 1e-6:
            raise AssertionError("intensity extraction miscalibrated")

    print("backend: %s (numba %s)"
          % (kernels.BACKEND,
             "available" if kernels.HAS_NUMBA else "unavailable"))
    check("kernel backends agree", backends_agree)
    check("patch test", patch_test)
    check("benchmark cases build", cases_build)
    check("cylinder exact fields", cylinder_fields)
    check("corner exact fields", corner_fields)
    return 1 if failures else 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="goalfem",
        description="goal-oriented error estimation benchmarks")
    sub = parser.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run one benchmark case")
    run.add_argument("--case", choices=benchmarks.CASES)
    run.add_argument("--recovery", choices=("spr-cx", "spr"),
                     help="constrained or plain patch recovery")
    run.add_argument("--refine", choices=("adaptive", "uniform"))
    run.add_argument("--target", type=float,
                     help="stop when the estimated relative error in "
                          "the quantity drops below this")
    run.add_argument("--max-iter", type=int, dest="max_iter")
    run.add_argument("--max-splits", type=int, dest="max_splits")
    run.add_argument("--out", help="output directory")
    run.add_argument("--config", help="key = value option file")

    sub.add_parser("verify", help="installation self-checks")

    args = parser.parse_args(argv)
    if args.cmd == "verify":
        return cmd_verify()
    return cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
