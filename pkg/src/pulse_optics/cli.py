"""Command-line front end.

    pulse-optics check    --config <file>
    pulse-optics profiles --config <file> --out <dir>
    pulse-optics exact    --config <file> --eps <v> --out <dir>
    pulse-optics sweep    --config <file> [--eps ...] [--out <dir>] [--acceptance]

Exit code 0 iff every enabled assertion passed.  PULSE_OPTICS_THREADS caps
the numerical thread pools; it must be applied before the first numpy
import, which is why the heavy modules are imported inside the handlers.
"""

from __future__ import annotations

import argparse
import os
import sys


def _apply_thread_env():
    n = os.environ.get("PULSE_OPTICS_THREADS")
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, n)


def _load(path):
    from .config import load_config

    return load_config(path)


def cmd_check(args) -> int:
    from .hyperbolic import phase_table, uniform_stability_scan, validate_system

    cfg = _load(args.config)
    report = validate_system(cfg.spec)
    scan = uniform_stability_scan(cfg.spec)
    table = phase_table(cfg.spec, cfg.beta)
    n_in = sum(1 for m in table.modes if m.incoming)
    print(f"hyperbolic structure: {report}")
    print(f"phase table: {len(table.modes)} modes, {n_in} incoming")
    print(f"uniform stability scan: min sigma {scan.min_sigma:.6f} "
          f"over {scan.n_samples} samples ({scan.skipped} skipped)")
    ok = scan.uniformly_stable
    print("check: PASS" if ok else "check: FAIL (stability scan)")
    return 0 if ok else 1


def cmd_profiles(args) -> int:
    from pathlib import Path

    from .hyperbolic import phase_table
    from .profiles import interaction_coefficients, solve_profiles
    from .serial import convergence_csv, save_profiles

    cfg = _load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = phase_table(cfg.spec, cfg.beta)
    coeffs = interaction_coefficients(cfg.spec, table)
    ps = solve_profiles(
        table, coeffs, cfg.pulse, cfg.profile_grid,
        tol=cfg.profile_tol, max_iter=cfg.profile_max_iter,
    )
    save_profiles(ps, out / "profiles.bin", cfg.spec)
    (out / "convergence.csv").write_text(convergence_csv(ps.convergence))
    last = ps.convergence[-1]
    print(f"profiles: {len(ps.convergence)} iterations, "
          f"final diff {last['diff']:.3e} -> {out / 'profiles.bin'}")
    return 0


def cmd_exact(args) -> int:
    from pathlib import Path

    from .exact import FineGrid, residual_norms, solve_exact
    from .serial import residual_csv, save_solution

    cfg = _load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    eps = float(args.eps)
    grid = FineGrid.build(
        eps, T=cfg.T, x_window=cfg.x_window, max_speed=cfg.max_speed,
        ppw=cfg.ppw, cfl=cfg.cfl,
    )
    sol = solve_exact(
        cfg.spec, cfg.pulse, cfg.beta, eps, grid,
        delta=cfg.delta, store_history=True,
    )
    norms = residual_norms(sol, cfg.spec, cfg.pulse, cfg.beta)
    save_solution(sol, out / "solution.bin", include_history=args.history)
    (out / "residuals.csv").write_text(residual_csv(norms))
    print(f"exact: eps {eps:g}, grid ({grid.nt}, {grid.nx}), "
          f"pde residual {norms['pde_residual_sup']:.3e}, "
          f"bc residual {norms['bc_residual_sup']:.3e}")
    return 0


def cmd_sweep(args) -> int:
    from pathlib import Path

    from .sweep import emit_report, run_sweep

    cfg = _load(args.config)
    eps_list = [float(v) for v in args.eps] if args.eps else None
    sweep_cfg = cfg.sweep_config(eps_list)
    report = run_sweep(sweep_cfg, log=print)
    if args.out:
        paths = emit_report(report, Path(args.out))
        for kind, p in sorted(paths.items()):
            print(f"wrote {kind}: {p}")

    failures = []
    for row in report.rows:
        if row.status != "ok":
            failures.append(f"eps {row.eps:g} failed: {row.status}")
    if args.acceptance:
        ok = report.ok_rows()
        for a, b in zip(ok, ok[1:]):
            if b.err_leading_sup > 1.1 * a.err_leading_sup:
                failures.append(
                    f"monotone decrease violated: err({b.eps:g}) = "
                    f"{b.err_leading_sup:.4e} > 1.1 * {a.err_leading_sup:.4e}"
                )
        fit = report.fits["leading_sup"]
        if fit["status"] == "ok" and fit["slope"] <= 0.05:
            failures.append(f"fitted slope {fit['slope']:.4f} <= 0.05")
    for msg in failures:
        print(f"FAIL: {msg}")
    if not failures:
        print("sweep: PASS")
    return 0 if not failures else 1


def main(argv=None) -> int:
    _apply_thread_env()
    ap = argparse.ArgumentParser(
        prog="pulse-optics",
        description="pulse reflection: profiles, reference solves, rate sweeps",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="validate the system and scan stability")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("profiles", help="solve profiles, write container + log")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_profiles)

    p = sub.add_parser("exact", help="reference solve at one wavelength")
    p.add_argument("--config", required=True)
    p.add_argument("--eps", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history", action="store_true",
                   help="persist the full space-time history")
    p.set_defaults(fn=cmd_exact)

    p = sub.add_parser("sweep", help="wavelength sweep with rate fits")
    p.add_argument("--config", required=True)
    p.add_argument("--eps", nargs="*", default=None,
                   help="override the configured wavelength list")
    p.add_argument("--out", default=None)
    p.add_argument("--acceptance", action="store_true",
                   help="assert monotone error decrease and a positive slope")
    p.set_defaults(fn=cmd_sweep)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
