"""Operator entry point: synthesize benchmarks, run adaptation streams,
verify gradients, and re-evaluate saved score tables.

Exit codes: 0 ok, 2 usage error, 3 data error, 4 gradient check failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .container import DataError
from .data_model import (
    DISABLE_CHOICES,
    EngineConfig,
    load_feasibility,
    load_prototype_bank,
    load_stream,
    save_feasibility,
    save_prototype_bank,
    save_stream,
    shuffle_stream,
)
from .engine import EngineState, run_stream
from .gradcheck import run_gradcheck
from .kam import save_kam_checkpoint
from .metrics import ScoreTable, summarize, sweep
from .reporting import (
    build_manifest,
    load_score_table,
    save_score_table,
    write_curve_csv,
    write_manifest,
    write_report,
    write_summary_json,
    write_trend_csv,
)
from .synth import SynthConfig, generate, uniform_feasibility

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_GRADCHECK = 4

_CONFIG_KEYS = {
    "K": int, "alpha": float, "beta": float, "theta": float, "lambda": float,
    "lr": float, "adamw_eps": float, "adamw_weight_decay": float,
    "adamw_betas": None, "seed": int, "open_world": bool,
    "feasibility_path": str, "feasibility_threshold": float,
    "visual_weight_source": str, "admission_prototypes": str,
    "fused_use_tau": bool, "disable": None,
}


def load_config_file(path: str | Path) -> dict:
    """Read a TOML run config; keys match the engine knobs one to one."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise DataError("missing_file", f"{path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise DataError("bad_header", f"{path}: {exc}") from exc
    unknown = set(raw) - set(_CONFIG_KEYS)
    if unknown:
        raise DataError("bad_header", f"{path}: unknown config keys {sorted(unknown)}")
    return raw


def make_engine_config(file_values: dict, overrides: dict) -> EngineConfig:
    """File values first, CLI overrides on top."""
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    kwargs = {}
    for key, value in merged.items():
        if key == "lambda":
            kwargs["lam"] = float(value)
        elif key == "adamw_betas":
            b1, b2 = value
            kwargs["adamw_betas"] = (float(b1), float(b2))
        elif key == "disable":
            items = value.split(",") if isinstance(value, str) else value
            kwargs["disable"] = frozenset(s.strip() for s in items if s.strip())
        else:
            kwargs[key] = value
    return EngineConfig(**kwargs)


def config_as_dict(config: EngineConfig) -> dict:
    out = dataclasses.asdict(config)
    out["lambda"] = out.pop("lam")
    out["adamw_betas"] = list(config.adamw_betas)
    out["disable"] = sorted(config.disable)
    return out


def _add_run_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--K", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--lambda", dest="lambda_", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--disable", type=str,
                   help=f"comma-separated subset of {','.join(DISABLE_CHOICES)}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tmct",
                                 description="online prototype adaptation over "
                                             "embedding streams")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic benchmark")
    sp.add_argument("--attributes", type=int, default=8)
    sp.add_argument("--objects", type=int, default=10)
    sp.add_argument("--dim", type=int, default=64)
    sp.add_argument("--seen-fraction", type=float, default=0.6)
    sp.add_argument("--samples-per-comp", type=int, default=40)
    sp.add_argument("--visual-noise", type=float, default=0.25)
    sp.add_argument("--prototype-noise", type=float, default=0.1)
    sp.add_argument("--unseen-shift", type=float, default=0.35)
    sp.add_argument("--temperature", type=float, default=0.05)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--bank-out", required=True)
    sp.add_argument("--stream-out", required=True)
    sp.add_argument("--feasibility-out", help="also emit a uniform-score stub")

    rp = sub.add_parser("run", help="adapt over a stream and evaluate")
    rp.add_argument("--bank", required=True)
    rp.add_argument("--stream", required=True)
    rp.add_argument("--config", help="TOML run config")
    rp.add_argument("--open-world", action="store_true")
    rp.add_argument("--feasibility")
    rp.add_argument("--feasibility-threshold", type=float)
    rp.add_argument("--shuffle-seed", type=int,
                    help="permute the stream deterministically before the run")
    rp.add_argument("--checkpoint-out")
    rp.add_argument("--report-out", default="run-report.jsonl")
    rp.add_argument("--summary-out")
    rp.add_argument("--curve-out")
    rp.add_argument("--scores-out")
    rp.add_argument("--trend-out", help="prefix top-1 accuracy CSV (trend plots)")
    _add_run_overrides(rp)

    gp = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    gp.add_argument("--seeds", type=int, default=20)
    gp.add_argument("--start-seed", type=int, default=0)
    gp.add_argument("--step", type=float, default=1e-5)
    gp.add_argument("--tol", type=float, default=1e-4)

    ep = sub.add_parser("eval", help="recompute metrics from saved scores")
    ep.add_argument("--scores", required=True)
    ep.add_argument("--summary-out", required=True)
    ep.add_argument("--curve-out")
    ep.add_argument("--trend-out")
    return ap


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        num_attributes=args.attributes, num_objects=args.objects, dim=args.dim,
        seen_fraction=args.seen_fraction, samples_per_composition=args.samples_per_comp,
        visual_noise=args.visual_noise, prototype_noise=args.prototype_noise,
        unseen_shift=args.unseen_shift, temperature=args.temperature, seed=args.seed,
    )
    result = generate(cfg)
    save_prototype_bank(args.bank_out, result.space, result.bank)
    save_stream(args.stream_out, result.samples,
                cfg.num_attributes, cfg.num_objects)
    outputs = {"bank": args.bank_out, "stream": args.stream_out}
    if args.feasibility_out:
        save_feasibility(args.feasibility_out, uniform_feasibility(result.space))
        outputs["feasibility"] = args.feasibility_out
    manifest = build_manifest("synth", dataclasses.asdict(cfg), {}, outputs,
                              seed=cfg.seed)
    write_manifest(Path(args.bank_out).with_suffix(".manifest.json"), manifest)
    print(f"wrote {args.bank_out} ({result.space.num_test} compositions) and "
          f"{args.stream_out} ({len(result.samples)} samples)")
    return EXIT_OK


def cmd_run(args) -> int:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {
        "K": args.K, "alpha": args.alpha, "beta": args.beta, "theta": args.theta,
        "lambda": args.lambda_, "lr": args.lr, "seed": args.seed,
        "disable": args.disable,
        "feasibility_threshold": args.feasibility_threshold,
        "feasibility_path": args.feasibility,
    }
    if args.open_world:
        overrides["open_world"] = True
    config = make_engine_config(file_values, overrides)
    if config.open_world and not config.feasibility_path:
        print("error: open-world mode requires --feasibility", file=sys.stderr)
        return EXIT_USAGE
    if not config.open_world and args.feasibility:
        print("error: --feasibility only applies with --open-world", file=sys.stderr)
        return EXIT_USAGE

    space, bank = load_prototype_bank(args.bank)
    samples = list(load_stream(args.stream, expected_dim=bank.dim))
    test_index = space.test_index()
    for i, s in enumerate(samples):
        if (s.attr_idx, s.obj_idx) not in test_index:
            raise DataError("index_range",
                            f"{args.stream}: sample {i} labeled outside the test pairs")
    if args.shuffle_seed is not None:
        samples = shuffle_stream(samples, args.shuffle_seed)
    feas = (load_feasibility(config.feasibility_path, space)
            if config.open_world else None)

    state = EngineState(space, bank, config, feasibility=feas)
    outcomes = run_stream(state, [s.feature for s in samples])

    # Ground truth enters here, after adaptation is complete.
    gt = np.array([test_index[(s.attr_idx, s.obj_idx)] for s in samples],
                  dtype=np.int64)
    logits = (np.stack([o.prediction.logits for o in outcomes])
              if outcomes else np.zeros((0, space.num_test)))
    table = ScoreTable(logits=logits, gt=gt, seen_mask=space.seen_mask())
    summary = summarize(table, space)
    summary["incidents"] = sum(1 for o in outcomes if o.incident)
    summary["admitted"] = sum(1 for o in outcomes if o.admitted)
    summary["config"] = config_as_dict(config)
    summary["shuffle_seed"] = args.shuffle_seed

    report_out = Path(args.report_out)
    summary_out = Path(args.summary_out or report_out.with_suffix(".summary.json"))
    curve_out = Path(args.curve_out or report_out.with_suffix(".curve.csv"))
    scores_out = Path(args.scores_out or report_out.with_suffix(".scores"))

    write_report(report_out, outcomes, extra_summary={"shuffle_seed": args.shuffle_seed})
    write_summary_json(summary_out, summary)
    write_curve_csv(curve_out, sweep(table))
    save_score_table(scores_out, table, space)
    outputs = {"report": report_out, "summary": summary_out,
               "curve": curve_out, "scores": scores_out}
    if args.trend_out:
        write_trend_csv(args.trend_out, table)
        outputs["trend"] = args.trend_out
    if args.checkpoint_out:
        save_kam_checkpoint(args.checkpoint_out, state.kam, state.opt)
        outputs["checkpoint"] = args.checkpoint_out
    inputs = {"bank": args.bank, "stream": args.stream}
    if config.open_world:
        inputs["feasibility"] = config.feasibility_path
    if args.config:
        inputs["config"] = args.config
    manifest = build_manifest("run", config_as_dict(config), inputs, outputs,
                              seed=config.seed, shuffle_seed=args.shuffle_seed)
    write_manifest(report_out.with_suffix(".manifest.json"), manifest)

    print(f"samples={summary['samples']} auc={summary['auc']:.4f} "
          f"hm={summary['hm']:.4f} seen={summary['seen']:.4f} "
          f"unseen={summary['unseen']:.4f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(num_seeds=args.seeds, start_seed=args.start_seed,
                            step=args.step, tol=args.tol)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"seed {r.seed:4d}  max_rel_err {r.max_rel_err:.3e}  {status}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} instances passed "
          f"(tol {args.tol:g})")
    return EXIT_OK if not failed else EXIT_GRADCHECK


def cmd_eval(args) -> int:
    table, space = load_score_table(args.scores)
    summary = summarize(table, space)
    write_summary_json(args.summary_out, summary)
    outputs = {"summary": args.summary_out}
    if args.curve_out:
        write_curve_csv(args.curve_out, sweep(table))
        outputs["curve"] = args.curve_out
    if args.trend_out:
        write_trend_csv(args.trend_out, table)
        outputs["trend"] = args.trend_out
    manifest = build_manifest("eval", {}, {"scores": args.scores}, outputs)
    write_manifest(Path(args.summary_out).with_suffix(".manifest.json"), manifest)
    print(f"auc={summary['auc']:.4f} hm={summary['hm']:.4f} "
          f"seen={summary['seen']:.4f} unseen={summary['unseen']:.4f}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"synth": cmd_synth, "run": cmd_run,
                "gradcheck": cmd_gradcheck, "eval": cmd_eval}
    try:
        return handlers[args.command](args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
