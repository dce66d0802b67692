"""Command-line entry point.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from mgar_topopt.config import ConfigError, ParsedConfig, load_config
from mgar_topopt.export import export_all, read_csv_field, write_json, write_metrics
from mgar_topopt.fem import element_sensitivities
from mgar_topopt.metrics import summarize
from mgar_topopt.mgcg import mgcg_solve
from mgar_topopt.model import ModelError, build_model, heat_load
from mgar_topopt.multigrid import build_hierarchy
from mgar_topopt.optimizer import OptResult, run
from mgar_topopt.postprocess import PostprocessResult, postprocess

log = logging.getLogger("mgar_topopt")


def _output_dir(cfg: ParsedConfig, override: str | None) -> str:
    out = override or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _post_summary(post: PostprocessResult) -> dict:
    return {
        "ns_level": post.field.level,
        "volume_before": post.volume_before,
        "volume_after": post.field.volume,
        "objective_before": post.objective_before,
        "objective_after": post.objective_after,
    }


def write_run(result: OptResult, out: str, post: PostprocessResult | None = None) -> dict:
    cfg = result.config
    nel = result.model.nel
    with open(os.path.join(out, "config.resolved.cfg"), "w") as fh:
        fh.write(cfg.to_text())
    export_all(result.rho_phys, nel, out, "density")
    write_metrics(result.history, os.path.join(out, "metrics.csv"), cfg.record_wall_time)
    summary = {
        "final_objective": result.history[-1].objective,
        "final_volume": result.history[-1].volume,
        "wall_ms": result.wall_ms,
        **result.summary.as_dict(),
    }
    if post is not None:
        export_all(post.field.density, nel, out, "smoothed")
        summary["postprocess"] = _post_summary(post)
    write_json(summary, os.path.join(out, "summary.json"))
    return summary


def _run_config(path: str, out_override: str | None = None):
    cfg = load_config(path)
    result = run(cfg)
    post = None
    if cfg.post_enabled:
        post = postprocess(result.rho_phys, result.sensitivities, result.model, cfg)
    out = _output_dir(cfg, out_override)
    summary = write_run(result, out, post)
    return cfg, result, summary, out


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    build_model(cfg)
    print(f"{args.config}: ok ({cfg.dim}D, nel={','.join(map(str, cfg.nel))}, "
          f"solver={cfg.method})")
    return 0


def cmd_run(args) -> int:
    _, result, summary, out = _run_config(args.config, args.out)
    print(f"final objective {summary['final_objective']:.6g} after "
          f"{summary['cycles']} cycles; {summary['mgcg_evaluations']} MGCG evaluations, "
          f"{summary['total_vcycles']} V-cycles; outputs in {out}")
    return 0


def cmd_compare(args) -> int:
    cfg_a, res_a, _, out_a = _run_config(args.config_a, args.out_a)
    cfg_b, res_b, _, out_b = _run_config(args.config_b, args.out_b)
    base = res_b.summary
    vs = summarize(res_a.history, baseline=base)
    fa, fb = res_a.history[-1].objective, res_b.history[-1].objective
    report = {
        "a": {"config": args.config_a, "method": cfg_a.method, "objective": fa,
              "total_vcycles": res_a.summary.total_vcycles,
              "mgcg_evaluations": res_a.summary.mgcg_evaluations, "wall_ms": res_a.wall_ms},
        "b": {"config": args.config_b, "method": cfg_b.method, "objective": fb,
              "total_vcycles": base.total_vcycles,
              "mgcg_evaluations": base.mgcg_evaluations, "wall_ms": res_b.wall_ms},
        "objective_relative_difference": abs(fa - fb) / abs(fb),
        "normalized_cost_vcycles": vs.normalized_cost,
        "improvement_vcycles": vs.improvement_vcycles,
        "improvement_wall": vs.improvement_wall,
    }
    if args.report:
        write_json(report, args.report)
    print(f"objective A {fa:.8g}  B {fb:.8g}  relative difference "
          f"{report['objective_relative_difference']:.4%}")
    print(f"V-cycles A {report['a']['total_vcycles']}  B {report['b']['total_vcycles']}  "
          f"improvement {vs.improvement_vcycles:.2%} (wall {vs.improvement_wall:.2%})")
    return 0


def cmd_postprocess(args) -> int:
    cfg = load_config(args.config)
    model = build_model(cfg)
    rho_phys = read_csv_field(args.field, model.nel)
    if np.any(rho_phys < 0) or np.any(rho_phys > 1):
        raise ConfigError(f"{args.field}: densities must lie in [0, 1]")
    q = heat_load(model)
    H = build_hierarchy(model, rho_phys, cfg.nl, cfg.omega_jac, cfg.nu_pre, cfg.nu_post)
    t, _ = mgcg_solve(H, q, None, cfg.eps2, cfg.cg_max_iters)
    sens = element_sensitivities(t, rho_phys, model)
    post = postprocess(rho_phys, sens, model, cfg)
    out = _output_dir(cfg, args.out)
    export_all(post.field.density, model.nel, out, "smoothed")
    write_json(_post_summary(post), os.path.join(out, "postprocess.json"))
    print(f"ns_level {post.field.level:.6g}; volume {post.volume_before:.4f} -> "
          f"{post.field.volume:.4f}; objective {post.objective_before:.6g} -> "
          f"{post.objective_after:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mgar-topopt",
        description="Heat-conduction topology optimization with MGCG or MGAR solves.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every cycle")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full design loop")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run two configs and report parity and cost")
    p.add_argument("config_a")
    p.add_argument("config_b", help="baseline for the improvement figures")
    p.add_argument("--out-a")
    p.add_argument("--out-b")
    p.add_argument("--report", help="also write the report as JSON")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("postprocess", help="smooth an existing density field")
    p.add_argument("config")
    p.add_argument("field", help="CSV density field as written by 'run'")
    p.add_argument("--out")
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("validate", help="parse and validate a config")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, ModelError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 2
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
