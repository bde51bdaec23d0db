"""Command line front end.

Subcommands: carleson, theta, calibrate, identities, selftest.  Reports
are written as JSON; carleson also emits an optional CSV of per-scale
contributions, and --figures renders PNGs next to the outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import core, harness, report, wavelet
from .graphs import GraphFamilySpec, make_family, rng_stream
from .harness import RunConfig


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, help="group index (default 2)")
    p.add_argument(
        "--family",
        choices=["vertical-plane", "smooth-bump", "random-lipschitz"],
        help="graph family",
    )
    p.add_argument("--lambda", dest="lam", type=float, help="intrinsic Lipschitz bound")
    p.add_argument("--radius-max", type=float, help="outer radius R of the experiment")
    p.add_argument("--scales", type=int, help="number of dyadic scales")
    p.add_argument("--centers", type=int, help="net centers per scale")
    p.add_argument("--samples", type=int, help="Monte Carlo samples per beta")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--resolution", type=int, help="grid nodes per axis")
    p.add_argument("--box-halfwidth", type=float, help="graph domain halfwidth")
    p.add_argument("--feature-scale", type=float, help="family feature scale")
    p.add_argument("--config", type=Path, help="flat JSON config file")
    p.add_argument("--output", type=Path, help="JSON report path")
    p.add_argument("--csv", type=Path, help="CSV of (k, r, contribution) rows")
    p.add_argument(
        "--figures", action="store_true", help="render PNG figures next to outputs"
    )


def _merged_config(args) -> dict:
    doc = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        unknown = set(doc) - set(harness.CONFIG_KEYS)
        if unknown:
            raise SystemExit(f"config error: unknown keys {sorted(unknown)}")
    overrides = {
        "n": args.n,
        "family": args.family,
        "lambda": args.lam,
        "radius_max": args.radius_max,
        "scales": args.scales,
        "centers": args.centers,
        "samples": args.samples,
        "seed": args.seed,
        "resolution": args.resolution,
        "box_halfwidth": getattr(args, "box_halfwidth", None),
    }
    for key, val in overrides.items():
        if val is not None:
            doc[key] = val
    if args.output is not None:
        doc["output"] = str(args.output)
    if getattr(args, "csv", None) is not None:
        doc["csv"] = str(args.csv)
    if getattr(args, "feature_scale", None) is not None:
        doc["feature_scale"] = args.feature_scale
    return doc


def _config_from_doc(doc: dict) -> RunConfig:
    feature = doc.pop("feature_scale", None)
    cfg = RunConfig.from_flat_dict(doc)
    if feature is not None:
        cfg = RunConfig(
            family=GraphFamilySpec(
                family=cfg.family.family,
                n=cfg.family.n,
                lam=cfg.family.lam,
                seed=cfg.family.seed,
                resolution=cfg.family.resolution,
                box_halfwidth=cfg.family.box_halfwidth,
                feature_scale=feature,
            ),
            radius_max=cfg.radius_max,
            num_scales=cfg.num_scales,
            centers_per_scale=cfg.centers_per_scale,
            samples_per_beta=cfg.samples_per_beta,
            seed=cfg.seed,
            empirical_c=cfg.empirical_c,
            output_path=cfg.output_path,
        )
    return cfg


def _figure_prefix(args) -> str:
    for candidate in (args.csv, args.output):
        if candidate is not None:
            return str(Path(candidate).with_suffix(""))
    return "heisenbeta_report"


def _emit_json(doc: dict, path) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {path}")


def cmd_carleson(args) -> int:
    doc = _merged_config(args)
    out_path = args.output or doc.get("output")
    csv_path = args.csv or doc.get("csv")
    cfg = _config_from_doc(doc)
    rep = harness.run_carleson(cfg)
    _emit_json(rep.to_json_dict(), out_path)
    if csv_path:
        rep.write_csv(csv_path)
        print(f"wrote {csv_path}")
    if args.figures:
        prefix = str(Path(csv_path or out_path or "heisenbeta_report").with_suffix(""))
        for path in report.render_carleson_figures(rep, prefix):
            print(f"wrote {path}")
    return 0


def cmd_theta(args) -> int:
    cfg = _config_from_doc(_merged_config(args))
    rep = harness.run_theta_slices(cfg, scale_count=args.theta_scales)
    _emit_json(rep.to_json_dict(), args.output)
    if args.figures:
        for path in report.render_theta_figure(rep, _figure_prefix(args)):
            print(f"wrote {path}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _config_from_doc(_merged_config(args))
    G = make_family(cfg.family)
    radii = tuple(float(r) for r in args.radii.split(","))
    cal = harness.calibrate_c(G, radii=radii, seed=cfg.seed)
    _emit_json(cal.to_json_dict(), args.output)
    if args.figures:
        for path in report.render_calibration_figure(cal, _figure_prefix(args)):
            print(f"wrote {path}")
    return 0


def cmd_identities(args) -> int:
    rng = rng_stream(args.seed or 0, 0x1DE)
    rows = []
    failed = 0
    for d in args.dims:
        for J in args.levels:
            worst = 0.0
            ok = True
            for _ in range(args.count):
                g = wavelet.GridFunction.random(d, J, rng)
                rep = wavelet.verify_identities(g)
                worst = max(worst, rep.worst())
                ok = ok and rep.passed
            rows.append({"d": d, "J": J, "worst": worst, "passed": ok})
            state = "pass" if ok else "FAIL"
            print(f"identities d={d} J={J} x{args.count}: {state} (worst {worst:.2e})")
            failed += 0 if ok else 1
    _emit_json({"results": rows}, args.output)
    if args.figures:
        for path in report.render_identity_figure(rows, _figure_prefix(args)):
            print(f"wrote {path}")
    return 1 if failed else 0


def cmd_selftest(args) -> int:
    """Algebraic suite: group axioms and projection identities."""
    failures = 0
    t0 = time.time()
    for n in (1, 2, 3):
        rng = np.random.default_rng(100 + n)
        a = 2.0 * rng.standard_normal((1000, 2 * n + 1))
        b = 2.0 * rng.standard_normal((1000, 2 * n + 1))
        c = 2.0 * rng.standard_normal((1000, 2 * n + 1))
        checks = {}
        lhs = core.group_mul(core.group_mul(a, b), c)
        rhs = core.group_mul(a, core.group_mul(b, c))
        checks["associativity"] = float(np.abs(lhs - rhs).max())
        d0 = core.gauge_dist(a, b)
        d1 = core.gauge_dist(core.group_mul(c, a), core.group_mul(c, b))
        checks["left-invariance"] = float(np.abs(d0 - d1).max())
        d2 = core.gauge_dist(core.dilate(2.0, a), core.dilate(2.0, b))
        checks["dilation"] = float(np.abs(d2 - 2.0 * d0).max() / max(d0.max(), 1.0))
        comm = core.commutator(a, b)
        omega = core.symplectic_form(core.project_pi(a), core.project_pi(b))
        err = np.abs(core.zpart(comm) - omega) / np.maximum(1.0, np.abs(omega))
        checks["commutator"] = float(
            max(err.max(), np.abs(core.project_pi(comm)).max())
        )
        w = core.basis_vector("Y", n, n) + 0.2 * core.basis_vector("X", 1, n)
        lhs = core.project_along(w, core.group_mul(a, b))
        rhs = core.project_along(w, core.group_mul(a, core.project_along(w, b)))
        checks["projection-invariance"] = float(np.abs(lhs - rhs).max())
        for name, err in checks.items():
            ok = err < 1e-10
            failures += 0 if ok else 1
            print(f"selftest n={n} {name}: {'pass' if ok else 'FAIL'} ({err:.2e})")
    print(f"selftest finished in {time.time() - t0:.2f}s")
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="heisenbeta",
        description="beta-number experiments on intrinsic Lipschitz graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("carleson", help="multiscale Carleson sum of beta^2")
    _add_run_flags(p)
    p.set_defaults(fn=cmd_carleson)

    p = sub.add_parser("theta", help="Dorronsoro check on coset slices")
    _add_run_flags(p)
    p.add_argument("--theta-scales", type=int, default=6, help="dyadic theta scales")
    p.set_defaults(fn=cmd_theta)

    p = sub.add_parser("calibrate", help="quasibox sandwich constant")
    _add_run_flags(p)
    p.add_argument("--radii", default="0.25,1.0,4.0", help="comma-separated radii")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("identities", help="Haar projection identity suite")
    p.add_argument("--dims", type=int, nargs="+", default=[3, 4, 5])
    p.add_argument("--levels", type=int, nargs="+", default=[2, 3])
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", type=Path)
    p.add_argument("--figures", action="store_true")
    p.add_argument("--csv", type=Path, help=argparse.SUPPRESS)
    p.set_defaults(fn=cmd_identities)

    p = sub.add_parser("selftest", help="algebraic self tests")
    p.set_defaults(fn=cmd_selftest)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
