"""Command-line interface.

Exit codes: 0 success, 1 a check failed, 2 configuration error,
3 runtime failure (escape, integration error, no convergence).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path

from . import __version__, presets
from .backstepping import (
    ExprFeedback,
    SynthesisError,
    classical_backstepping,
    synthesize,
    synthesize_phi_g,
)
from .config import ConfigError, RunConfig, load_config
from .expr import ExprError, compile_exprs, differentiate, parse, to_string
from .hybrid import simulate, simulate_batch, validate_arc, write_summary_json, write_trajectory_csv
from .hysteresis import ConstantModeController, HysteresisController
from .plant import state_names
from .sampling import SamplingError
from .verify import (
    VerificationReport,
    check_local_decrease,
    check_global_certificate,
    check_attractor_in_local,
    check_f2_nonvanishing,
    check_hybrid_conditions,
)

log = logging.getLogger("hysterix")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
OK_TERMINATIONS = ("converged", "t_max")


# ----------------------------------------------------------------------- helpers


def _config_from_args(args) -> RunConfig:
    overrides = list(args.set or [])
    seed = os.environ.get("HYSTERIX_SEED", args.seed)
    if seed is not None:
        try:
            overrides.append(f"sampling.seed={int(seed)}")
        except ValueError:
            raise ConfigError(f"seed must be an integer, got {seed!r}") from None
    if args.samples is not None:
        overrides.append(f"sampling.n_samples={int(args.samples)}")
    return load_config(getattr(args, "config", None), overrides)


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.output.get("dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _is_builtin_example(cfg: RunConfig) -> bool:
    ref = presets.certificate_text()
    c = cfg.certificate
    return (cfg.build_plant().name == "paper_example"
            and all(c.get(key) == ref[key] for key in ("V1", "phi1", "alpha", "Psi")))


def _global_controller(cfg: RunConfig, plant, cert):
    s = cfg.synthesis
    c = s.get("c", "auto")
    if c == "auto":
        syn = synthesize(plant, cert, s["a"], "auto", s.get("quad_order", 8), s.get("variant", "derived"),
                         cfg.sample_config())
        return syn.controller
    return synthesize_phi_g(plant, cert, s["a"], float(c), s.get("quad_order", 8),
                            s.get("variant", "derived"))


def build_controller(cfg: RunConfig):
    """Controller and row functions ``(V1, V, V_ell)`` for the trajectory CSV."""
    plant = cfg.build_plant()
    kind = cfg.controller["type"]
    local = cfg.build_local()
    if kind == "classical":
        try:
            phi_b, V_b = classical_backstepping(plant, float(cfg.controller.get("c1", 1.0)),
                                                float(cfg.controller.get("c2", 1.0)))
        except SynthesisError as exc:
            raise ConfigError(str(exc)) from exc
        vb = ExprFeedback(V_b, tuple(state_names(plant.n)))
        return plant, ConstantModeController(phi_b), (None, vb, local.V_at)
    cert = cfg.build_certificate()
    V1 = lambda x: cert.V1_at(x[:-1])  # noqa: E731
    if kind == "local":
        return plant, ConstantModeController(local.phi_at), (V1, None, local.V_at)
    phi_g = _global_controller(cfg, plant, cert)
    V = lambda x: cert.composite_V(x, phi_g.k)  # noqa: E731
    if kind == "global":
        return plant, ConstantModeController(phi_g), (V1, V, local.V_at)
    ctrl = HysteresisController(local, phi_g, float(cfg.local["v_ell_tilde"]))
    return plant, ctrl, (V1, V, local.V_at)


# ----------------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    plant, ctrl, (V1, V, V_ell) = build_controller(cfg)
    out = _out_dir(args, cfg)
    prefix = cfg.output.get("prefix", "run")
    ics = cfg.ics()
    if not isinstance(ctrl, HysteresisController):
        ics = [(x, ctrl.q) for x, _ in ics]
    arcs = simulate_batch(plant, ctrl, ics, cfg.integrator_config(), workers=args.workers)
    status = EXIT_OK
    for i, ((x0, q0), arc) in enumerate(zip(ics, arcs)):
        validate_arc(arc)
        stem = out / f"{prefix}_ic{i}"
        write_trajectory_csv(arc, f"{stem}.csv", plant.n, V1, V, V_ell)
        write_summary_json(arc, f"{stem}_summary.json", x0=list(x0), q0=q0, message=arc.message)
        jumps = ", ".join(f"t={jr.t:.6g} q{jr.q_from}->{jr.q_to}" for jr in arc.jumps) or "none"
        print(f"ic{i} x0={x0} q0={q0}: {arc.termination} at t={arc.t_final:.6g}; jumps: {jumps}")
        if arc.termination not in OK_TERMINATIONS:
            status = EXIT_RUNTIME
            if arc.message:
                print(f"  {arc.message}", file=sys.stderr)
    return status


def run_verification(cfg: RunConfig, hybrid: bool = False) -> VerificationReport:
    plant = cfg.build_plant()
    cert = cfg.build_certificate()
    local = cfg.build_local()
    scfg = cfg.sample_config()
    report = VerificationReport()
    report.extend(check_f2_nonvanishing(plant, cfg=scfg))
    report.extend(check_local_decrease(plant, local, scfg))
    report.extend(check_global_certificate(plant, cert, cfg=scfg))
    report.extend(check_attractor_in_local(cert, local, scfg))
    if hybrid:
        phi_g = _global_controller(cfg, plant, cert)
        ctrl = HysteresisController(local, phi_g, float(cfg.local["v_ell_tilde"]))
        report.extend(check_hybrid_conditions(ctrl, plant, cert, float(cfg.synthesis["a"]), scfg,
                                               sim_cfg=cfg.integrator_config()))
    return report


def cmd_verify(args) -> int:
    cfg = _config_from_args(args)
    report = run_verification(cfg, hybrid=args.hybrid)
    print(report.to_table())
    if args.out:
        out = _out_dir(args, cfg)
        (out / "verify.json").write_text(report.to_json() + "\n")
    print("all checks passed" if report.passed else "some checks FAILED")
    return EXIT_OK if report.passed else EXIT_CHECK


def cmd_synthesize(args) -> int:
    cfg = _config_from_args(args)
    plant = cfg.build_plant()
    cert = cfg.build_certificate()
    s = cfg.synthesis
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            syn = synthesize(plant, cert, s["a"], s.get("c", "auto"), s.get("quad_order", 8),
                             s.get("variant", "derived"), cfg.sample_config())
    except (SynthesisError, SamplingError) as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    data = syn.params.as_dict()
    for key in ("k", "a_prime", "a_tilde", "zeta", "K_alpha", "c_g", "c"):
        print(f"{key:<8} = {data[key]!r}")
    for note in syn.warnings:
        print(f"warning: {note}")
    data["warnings"] = list(syn.warnings)
    data["variant"] = syn.controller.variant
    if _is_builtin_example(cfg):
        p = cfg.certificate["params"]
        text = presets.global_closed_form_text(p["theta"], p["c1"], data["k"], data["c"],
                                               syn.controller.variant)
        print(f"phi_g    = {text}")
        data["phi_g"] = text
    if args.out:
        out = _out_dir(args, cfg)
        (out / "synthesis.json").write_text(json.dumps(data, indent=2) + "\n")
    return EXIT_OK


def reproduce(out: Path, cfg: RunConfig | None = None, plot: bool = True) -> dict:
    """Run the worked example with both global-feedback variants and write all artifacts."""
    from .plotting import plot_state_and_mode, write_panel_data

    cfg = cfg or load_config(None)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    arcs = {}
    for variant in ("derived", "paper-literal"):
        vcfg = RunConfig.from_dict(cfg.to_dict(), [f'synthesis.variant="{variant}"',
                                                   'controller.type="hybrid"'])
        plant, ctrl, (V1, V, V_ell) = build_controller(vcfg)
        x0, q0 = vcfg.ics()[0]
        t0 = time.perf_counter()
        arc = simulate(plant, ctrl, x0, q0, vcfg.integrator_config())
        elapsed = time.perf_counter() - t0
        validate_arc(arc)
        arcs[variant] = arc
        stem = out / f"paper_{variant.replace('-', '_')}"
        write_trajectory_csv(arc, f"{stem}.csv", plant.n, V1, V, V_ell)
        switch = [jr for jr in arc.jumps if jr.q_from == 2 and jr.q_to == 1]
        results[variant] = {
            "termination": arc.termination,
            "t_final": arc.t_final,
            "x_final": list(arc.x_final),
            "t_switch": switch[0].t if switch else None,
            "V_ell_at_switch": ctrl.local.V_at(switch[0].x) if switch else None,
            "jumps": [{"t": jr.t, "j": jr.j, "q_from": jr.q_from, "q_to": jr.q_to,
                       "x": list(jr.x), "V_ell": ctrl.local.V_at(jr.x), "guard": jr.guard,
                       "localized": jr.localized} for jr in arc.jumps],
            "runtime_s": elapsed,
        }
    write_panel_data(arcs["derived"], out / "fig1_data.dat")
    write_panel_data(arcs["paper-literal"], out / "fig1_data_paper_literal.dat")
    summary = {"published_switch_time": presets.PAPER_SWITCH_TIME, "variants": results,
               "config": cfg.to_dict()}
    (out / "paper_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if plot:
        plot_state_and_mode(arcs, out / "fig1.png", t_max=10.0)
    return summary


def cmd_reproduce_paper(args) -> int:
    cfg = _config_from_args(args)
    out = Path(args.out or "paper_out")
    summary = reproduce(out, cfg, plot=not args.no_plot)
    print(f"{'variant':<14} {'t':>12} {'j':>6} {'q':>6} {'V_ell':>12} {'guard':>10}")
    for variant, r in summary["variants"].items():
        for jr in r["jumps"]:
            print(f"{variant:<14} {jr['t']:>12.6f} {jr['j']:>2}->{jr['j'] + 1:<2} "
                  f"{jr['q_from']:>2}->{jr['q_to']:<2} {jr['V_ell']:>12.8f} {jr['guard']:>10.2e}")
    status = EXIT_OK
    for variant, r in summary["variants"].items():
        t_sw = r["t_switch"]
        t_txt = "none" if t_sw is None else f"{t_sw:.6f}"
        print(f"{variant}: t* = {t_txt} (published {presets.PAPER_SWITCH_TIME}), "
              f"{r['termination']} at t = {r['t_final']:.4f}")
        if r["termination"] != "converged":
            status = EXIT_RUNTIME
    print(f"artifacts written to {out}")
    return status


def _expr_vars(args) -> list[str] | None:
    if args.vars:
        return [v.strip() for v in args.vars.split(",") if v.strip()]
    return None


def cmd_parse_check(args) -> int:
    if args.expressions:
        vars = _expr_vars(args)
        ok = True
        for text in args.expressions:
            try:
                e = parse(text, vars)
            except ExprError as exc:
                ok = False
                print(f"error: {exc}")
                off = getattr(exc, "offset", None)
                if off is not None:
                    print(f"  {text}\n  {' ' * off}^")
                continue
            print(to_string(e))
            if args.diff:
                for v in sorted(e.free_vars()):
                    print(f"  d/d{v}: {to_string(differentiate(e, v))}")
            if args.at:
                ctx = json.loads(args.at)
                try:
                    print(f"  value: {compile_exprs([e], list(ctx))(*ctx.values())[0]!r}")
                except ExprError as exc:
                    ok = False
                    print(f"  evaluation error: {exc}")
        return EXIT_OK if ok else EXIT_CHECK
    # no expressions: lint every expression of the configuration
    cfg = _config_from_args(args)
    cfg.build_plant()
    cfg.build_certificate()
    cfg.build_local()
    print("all configuration expressions parse")
    return EXIT_OK


# ----------------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser, with_config: bool = True) -> None:
    if with_config:
        p.add_argument("--config", metavar="PATH", help="JSON run configuration (default: built-in example)")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--seed", type=int, help="sampling seed (HYSTERIX_SEED overrides)")
    p.add_argument("--samples", type=int, help="number of quasi-random samples")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", default=[],
                   help="override a config entry, e.g. --set local.v_ell=0.2 (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hysterix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate every initial condition of a config")
    _common(p)
    p.add_argument("--workers", type=int, default=None, help="parallel simulations")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="sampling-based check of the standing assumptions")
    _common(p)
    p.add_argument("--hybrid", action="store_true",
                   help="also check the tube condition and run the mode-1 reachability grid")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("synthesize", help="compute the global-feedback constants")
    _common(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("reproduce-paper", help="run the built-in worked example end to end")
    _common(p)
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    p.set_defaults(func=cmd_reproduce_paper)

    p = sub.add_parser("parse-check", help="parse expressions (or every expression in a config)")
    _common(p)
    p.add_argument("expressions", nargs="*", help="expressions to check")
    p.add_argument("--vars", help="comma-separated allowed variables (default: any)")
    p.add_argument("--diff", action="store_true", help="print partial derivatives")
    p.add_argument("--at", metavar="JSON", help='evaluate at a point, e.g. \'{"x1": 1.0}\'')
    p.set_defaults(func=cmd_parse_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
