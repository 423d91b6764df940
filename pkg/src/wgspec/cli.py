"""Command-line surface: transverse / limiting / ladder / verify.

Exit codes: 0 pass, 1 verification failure, 2 config error, 3 I/O error,
4 inconclusive.  All outputs are deterministic (re-running a config
overwrites files with identical bytes).
"""

import argparse
import csv
import os
import sys

import numpy as np

from .config import dump_json, load_config
from .eigensolve import lowest_eigenpairs
from .errors import ConfigError, WgspecError
from .harness import margin_rule, run_ladder
from .modes import extract_beta_tilde, limiting_spectrum
from .stripgrid import StripGrid, assemble_limiting
from .transverse import discrete_nu, transverse_modes, transverse_modes_fd, transverse_nu

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INCONCLUSIVE = 4


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="wgspec",
        description="Spectrum of a Dirichlet strip with two distant perturbations",
    )
    parser.add_argument("--config", required=True, help="path to a wgspec-1 JSON config")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--jobs", type=int, default=None,
                        help="parallel ladder tasks (default WGSPEC_JOBS or 1)")
    parser.add_argument("--seed", type=int, default=None, help="solver seed override")
    parser.add_argument("--format", choices=["json", "csv", "svg", "all"], default=None,
                        help="output formats override")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("transverse", help="transverse mode table (+ optional FD check)")
    p_lim = sub.add_parser("limiting", help="single-perturbation spectrum and amplitudes")
    p_lim.add_argument("--side", choices=["minus", "plus"], default="minus")
    sub.add_parser("ladder", help="separation ladder with predictions and fits")
    sub.add_parser("verify", help="run the ladder and evaluate selected checks")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out is not None:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.format is not None:
        cfg.formats = ["json", "csv", "svg"] if args.format == "all" else [args.format]
    jobs = args.jobs
    if jobs is None:
        jobs = int(os.environ.get("WGSPEC_JOBS", "0")) or cfg.jobs
    cfg.jobs = max(1, jobs)

    try:
        if args.command == "transverse":
            return cmd_transverse(cfg)
        if args.command == "limiting":
            return cmd_limiting(cfg, args.side)
        if args.command == "ladder":
            return cmd_ladder(cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except WgspecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_PASS


def _ensure_out(cfg):
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        probe = os.path.join(cfg.out_dir, ".write_probe")
        with open(probe, "w", encoding="utf-8") as fh:
            fh.write("ok")
        os.remove(probe)
    except OSError as exc:
        raise OSError(f"output directory {cfg.out_dir!r} not writable: {exc}") from exc


def cmd_transverse(cfg):
    modes = transverse_modes(cfg.d, cfg.transverse_count)
    rows = []
    if cfg.transverse_fd:
        fd = transverse_modes_fd(cfg.d, cfg.transverse_Ny, cfg.transverse_count)
        header = ["j", "nu_analytic", "nu_fd", "abs_error"]
        for m, f in zip(modes, fd):
            rows.append([m.index, m.eigenvalue, f.eigenvalue,
                         abs(m.eigenvalue - f.eigenvalue)])
    else:
        header = ["j", "nu_analytic"]
        rows = [[m.index, m.eigenvalue] for m in modes]
    print("  ".join(header))
    for row in rows:
        print("  ".join(f"{v:.12g}" if isinstance(v, float) else str(v) for v in row))
    if "json" in cfg.formats or "csv" in cfg.formats:
        _ensure_out(cfg)
    if "json" in cfg.formats:
        dump_json({"header": header, "rows": rows},
                  os.path.join(cfg.out_dir, "transverse.json"))
    if "csv" in cfg.formats:
        _write_csv(os.path.join(cfg.out_dir, "transverse.csv"), header, rows)
    return EXIT_PASS


def cmd_limiting(cfg, side):
    spec = cfg.spec_minus if side == "minus" else cfg.spec_plus
    if spec is None:
        raise ConfigError(f"$.perturbations.{side}", "no perturbation configured")
    tag = "-" if side == "minus" else "+"
    est = StripGrid.build(cfg.d, cfg.h, spec.a + 12.0)
    pre = limiting_spectrum(assemble_limiting(est, spec), spec, tag, est,
                            k_max=cfg.max_pairs, seed=cfg.seed)
    lam_est = max((g.lam for g in pre.groups), default=0.5 * transverse_nu(cfg.d, 1))
    grid = StripGrid.build(cfg.d, cfg.h, spec.a + margin_rule(lam_est, cfg.d))
    op = assemble_limiting(grid, spec)
    spectrum = limiting_spectrum(op, spec, tag, grid, k_max=cfg.max_pairs, seed=cfg.seed)

    other_spec = cfg.spec_plus if side == "minus" else cfg.spec_minus
    payload = {
        "side": side,
        "nu1_discrete": spectrum.nu1_discrete,
        "groups": [],
        "note": None if spectrum.groups else "no discrete spectrum below the ceiling",
    }
    for g in spectrum.groups:
        entry = {
            "lam": g.lam,
            "multiplicity": g.multiplicity,
            "beta": g.beta,
            "plateau_dev": None if g.profile is None else g.profile.plateau_dev,
            "beta_tilde": None,
        }
        if other_spec is not None:
            other_op = assemble_limiting(grid, other_spec)
            ceiling = discrete_nu(cfg.d, grid.h, 1) - 1e-6
            other = lowest_eigenpairs(other_op, cfg.max_pairs, ceiling, seed=cfg.seed)
            if not np.any(np.abs(other.eigenvalues - g.lam) < 1e-6):
                entry["beta_tilde"] = extract_beta_tilde(
                    other_op, other_spec, g.lam, grid, side=tag)[0]
        payload["groups"].append(entry)
    print(dump_json(payload), end="")
    if cfg.formats:
        _ensure_out(cfg)
    if "json" in cfg.formats:
        dump_json(payload, os.path.join(cfg.out_dir, f"limiting_{side}.json"))
    if "csv" in cfg.formats:
        for i, g in enumerate(spectrum.groups):
            if g.profile is not None:
                g.profile.to_csv(
                    os.path.join(cfg.out_dir, f"limiting_{side}_profile{i}.csv"))
    return EXIT_PASS


def cmd_ladder(cfg):
    if not cfg.l_values:
        raise ConfigError("$.ladder", "no separations configured")
    report = run_ladder(cfg)
    _ensure_out(cfg)
    if "json" in cfg.formats:
        dump_json(report.to_json_dict(), os.path.join(cfg.out_dir, "ladder.json"))
    if "csv" in cfg.formats:
        _write_ladder_csv(report, os.path.join(cfg.out_dir, "ladder.csv"))
    if "svg" in cfg.formats:
        svg = render_gap_svg(report)
        if svg is not None:
            with open(os.path.join(cfg.out_dir, "ladder.svg"), "w",
                      encoding="utf-8") as fh:
                fh.write(svg)
    failed = [p.l for p in report.points if p.error]
    if failed:
        print(f"note: {len(failed)} ladder point(s) failed: {failed}", file=sys.stderr)
    if len(failed) == len(report.points):
        return EXIT_FAIL
    print(f"ladder written to {cfg.out_dir} ({len(report.points)} points)")
    return EXIT_PASS


def cmd_verify(cfg):
    if not cfg.theorems:
        raise ConfigError("$.verify.theorems", "no checks selected")
    report = run_ladder(cfg)
    _ensure_out(cfg)
    if "json" in cfg.formats:
        dump_json({k: v.to_json_dict() for k, v in report.verdicts.items()},
                  os.path.join(cfg.out_dir, "verify.json"))
    width = max(len(t) for t in report.verdicts)
    any_fail = any_inconclusive = False
    for name, verdict in report.verdicts.items():
        print(f"{name:<{width}}  {verdict.status.upper()}")
        for mname, m in verdict.margins.items():
            flag = "ok" if m["ok"] else "VIOLATED"
            print(f"  {mname}: {m['value']:.6g} (limit {m['limit']:.6g}) {flag}")
        for note in verdict.notes:
            print(f"  note: {note}")
        any_fail |= verdict.status == "fail"
        any_inconclusive |= verdict.status == "inconclusive"
    if any_fail:
        return EXIT_FAIL
    if any_inconclusive:
        return EXIT_INCONCLUSIVE
    return EXIT_PASS


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def _write_ladder_csv(report, path):
    header = ["l", "index", "lambda", "residual", "cluster", "pred_matrixA",
              "pred_closed"]
    rows = []
    for pt in report.points:
        per_cluster = {}
        for k, (lam, res, cl) in enumerate(
                zip(pt.eigenvalues, pt.residuals, pt.clusters)):
            rank = per_cluster.get(cl, 0)
            per_cluster[cl] = rank + 1
            pm = pt.pred_matrix.get(cl)
            pc = pt.pred_closed.get(cl)
            pm_v = sorted(pm.lambdas)[rank] if pm and rank < len(pm.lambdas) else ""
            pc_v = sorted(pc.lambdas)[rank] if pc and rank < len(pc.lambdas) else ""
            rows.append([pt.l, k, lam, res, cl, pm_v, pc_v])
    _write_csv(path, header, rows)


def render_gap_svg(report, width=800, height=600):
    """Log-gap versus separation scatter with the fitted and theory lines."""
    from .transverse import transverse_nu

    entry_ix = next((i for i, e in enumerate(report.sigma_star) if e.p >= 2), None)
    if entry_ix is None:
        return None
    entry = report.sigma_star[entry_ix]
    pts = []
    for pt in report.points:
        if pt.error:
            continue
        lams = sorted(lam for lam, c in zip(pt.eigenvalues, pt.clusters)
                      if c == entry_ix)
        if len(lams) >= 2 and lams[-1] > lams[-2]:
            pts.append((pt.l, lams[-1] - lams[-2]))
    if len(pts) < 2:
        return None
    fit = report.fits.get(f"gap[{entry_ix}]")
    s1 = float(np.sqrt(transverse_nu(report.d, 1) - entry.lam))
    theory = None
    if entry.beta_minus and entry.beta_plus:
        theory = (4.0 * abs(entry.beta_minus * entry.beta_plus) * s1, 2.0 * s1)

    margin = 70
    lmin, lmax = min(p[0] for p in pts), max(p[0] for p in pts)
    gvals = [p[1] for p in pts]
    ymin, ymax = np.log10(min(gvals)) - 0.3, np.log10(max(gvals)) + 0.3

    def X(l):
        return margin + (l - lmin) / max(lmax - lmin, 1e-12) * (width - 2 * margin)

    def Y(g):
        t = (np.log10(g) - ymin) / max(ymax - ymin, 1e-12)
        return height - margin - t * (height - 2 * margin)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height-margin}" x2="{width-margin}" '
        f'y2="{height-margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height-margin}" '
        f'stroke="black"/>',
        f'<text x="{width/2:.1f}" y="{height-20}" text-anchor="middle" '
        f'font-size="16">separation l</text>',
        f'<text x="20" y="{height/2:.1f}" text-anchor="middle" font-size="16" '
        f'transform="rotate(-90 20 {height/2:.1f})">gap (log scale)</text>',
    ]
    for dec in range(int(np.floor(ymin)), int(np.ceil(ymax)) + 1):
        if ymin <= dec <= ymax:
            y = Y(10.0**dec)
            out.append(f'<line x1="{margin-5}" y1="{y:.1f}" x2="{margin}" y2="{y:.1f}" '
                       f'stroke="black"/>')
            out.append(f'<text x="{margin-10}" y="{y+5:.1f}" text-anchor="end" '
                       f'font-size="12">1e{dec}</text>')
    for l, _ in pts:
        x = X(l)
        out.append(f'<line x1="{x:.1f}" y1="{height-margin}" x2="{x:.1f}" '
                   f'y2="{height-margin+5}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{height-margin+20}" text-anchor="middle" '
                   f'font-size="12">{l:g}</text>')

    def line(rate, pref, color, label, offset):
        x0, x1 = lmin, lmax
        y0, y1 = pref * np.exp(-rate * x0), pref * np.exp(-rate * x1)
        out.append(f'<line x1="{X(x0):.1f}" y1="{Y(y0):.1f}" x2="{X(x1):.1f}" '
                   f'y2="{Y(y1):.1f}" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{width-margin-5}" y="{margin+offset}" text-anchor="end" '
                   f'fill="{color}" font-size="13">{label}</text>')

    if fit is not None:
        line(fit.rate, fit.prefactor, "#1f77b4",
             f"fit: rate {fit.rate:.4f}, R2 {fit.r2:.5f}", 0)
    if theory is not None:
        line(theory[1], theory[0], "#d62728", f"theory: rate {theory[1]:.4f}", 18)
    for l, g in pts:
        out.append(f'<circle cx="{X(l):.1f}" cy="{Y(g):.1f}" r="4" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


if __name__ == "__main__":
    sys.exit(main())
