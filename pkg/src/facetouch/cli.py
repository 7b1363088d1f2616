"""Command-line interface.

Subcommands:
  synth      synthesize protocol trials and prompted session logs
  train      fit the per-prefix forests and weight them by CV F1
  tune       two-stage hyperparameter search per prefix instant
  eval       score an ensemble against session logs, write report + figures
  detect     run the detector over a stream CSV (or stdin) and emit events
  plot-bins  binned per-axis distribution summary of a trial file

Stochastic commands (synth, train, tune) require --seed; given the same
inputs and seed they are bit-reproducible. Exit status is 0 only when every
requested output was fully written.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import dataset, ensemble as ens_mod, evaluate, forest, plots
from .features import FEATURE_ORDER_HASH
from .seeds import derive_rng, derive_seed
from .signal import (
    FrameSchedule,
    StreamError,
    parse_stream_line,
    read_stream_csv,
    resample_uniform,
    slide,
    write_stream_csv,
)


def _parse_instants(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad schedule {text!r}; expected e.g. 1.0,1.1,1.2")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="facetouch", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="synthesize trials and session logs")
    sp.add_argument("--seed", type=int, required=True, help="master RNG seed (required)")
    sp.add_argument("--out-dir", required=True, help="directory for generated files")
    sp.add_argument("--participants", type=int, default=1, metavar="N",
                    help="number of participants to synthesize (default 1)")
    sp.add_argument("--config", help="generator config file (key = value lines)")
    sp.add_argument("--noise", type=float, default=None, metavar="SIGMA",
                    help="override the generator noise sigma (g)")
    sp.add_argument("--duration", type=float, default=1800.0,
                    help="session log length in seconds (default 1800)")
    sp.add_argument("--prompts", type=int, default=30,
                    help="prompted touches per session log (default 30)")
    sp.add_argument("--min-gap", type=float, default=10.0,
                    help="minimum gap between prompts in seconds (default 10)")
    sp.add_argument("--skip-sessions", action="store_true",
                    help="only write the trial file, no session logs")
    sp.set_defaults(func=cmd_synth)

    tp = sub.add_parser("train", help="train the temporal ensemble from a trial file")
    tp.add_argument("--seed", type=int, required=True, help="training RNG seed (required)")
    tp.add_argument("--trials", required=True, help="trial file (line-delimited JSON)")
    tp.add_argument("--out", required=True, help="output ensemble directory")
    tp.add_argument("--hyperparams", help="hyperparameter CSV (one row per prefix instant); "
                                          "defaults to the built-in tuned table")
    tp.add_argument("--tune", action="store_true",
                    help="run the two-stage search per instant before training (slow)")
    tp.add_argument("--schedule", type=_parse_instants, default=ens_mod.DEFAULT_PREFIX_INSTANTS,
                    metavar="T1,T2,...", help="prefix instants in seconds (default 1.0..1.5)")
    tp.add_argument("--weight-lambda", type=float, default=ens_mod.DEFAULT_LAMBDA,
                    help="weight sharpness lambda (default 10)")
    tp.add_argument("--folds", type=int, default=10, help="CV folds for the F1 weights (default 10)")
    tp.set_defaults(func=cmd_train)

    up = sub.add_parser("tune", help="two-stage hyperparameter search per prefix instant")
    up.add_argument("--seed", type=int, required=True, help="search RNG seed (required)")
    up.add_argument("--trials", required=True, help="trial file (line-delimited JSON)")
    up.add_argument("--out", required=True, help="output hyperparameter CSV")
    up.add_argument("--schedule", type=_parse_instants, default=ens_mod.DEFAULT_PREFIX_INSTANTS,
                    metavar="T1,T2,...", help="prefix instants in seconds (default 1.0..1.5)")
    up.add_argument("--n-iter", type=int, default=60,
                    help="randomized candidates before the grid stage (default 60)")
    up.add_argument("--folds", type=int, default=10, help="CV folds (default 10)")
    up.add_argument("--skip-random", action="store_true",
                    help="skip the randomized stage and grid-search the whole space")
    up.add_argument("--space", help="JSON file overriding the search space")
    up.set_defaults(func=cmd_tune)

    ep = sub.add_parser("eval", help="evaluate an ensemble on session logs")
    ep.add_argument("--ensemble", required=True, help="ensemble directory from `train`")
    ep.add_argument("--session", action="append", default=[], metavar="STREAM.csv:PROMPTS.csv",
                    help="stream/prompt file pair; repeatable")
    ep.add_argument("--sessions-dir", help="directory of session_*.csv + session_*_prompts.csv pairs")
    ep.add_argument("--out-dir", required=True, help="directory for the report files")
    ep.add_argument("--compare-full", action="store_true",
                    help="also score the full-window model alone for comparison")
    ep.add_argument("--stride", type=float, default=0.25, help="candidate stride in seconds")
    ep.add_argument("--refractory", type=float, default=ens_mod.DEFAULT_REFRACTORY_S,
                    help="suppression window after an event (default 3.0 s)")
    ep.add_argument("--label-window", type=float, default=evaluate.DEFAULT_LABEL_WINDOW_S,
                    help="seconds after a prompt that count as that touch (default 3.0)")
    ep.set_defaults(func=cmd_eval)

    dp = sub.add_parser("detect", help="run the detector over a stream")
    dp.add_argument("--ensemble", required=True, help="ensemble directory from `train`")
    group = dp.add_mutually_exclusive_group(required=True)
    group.add_argument("--input", help="stream CSV (t,ax,ay,az)")
    group.add_argument("--stdin", action="store_true", help="read the stream CSV from stdin")
    dp.add_argument("--out", help="event log path (line-delimited JSON); default stdout")
    dp.add_argument("--stride", type=float, default=0.25, help="candidate stride in seconds")
    dp.add_argument("--refractory", type=float, default=ens_mod.DEFAULT_REFRACTORY_S,
                    help="suppression window after an event (default 3.0 s)")
    dp.set_defaults(func=cmd_detect)

    bp = sub.add_parser("plot-bins", help="binned distribution summary of a trial file")
    bp.add_argument("--trials", required=True, help="trial file (line-delimited JSON)")
    bp.add_argument("--bins", type=int, default=15, help="bins per window (default 15)")
    bp.add_argument("--out-dir", required=True, help="directory for CSVs and the figure")
    bp.set_defaults(func=cmd_plot_bins)
    return p


def cmd_synth(args) -> int:
    cfg = dataset.GenConfig.from_file(args.config) if args.config else dataset.GenConfig()
    if args.noise is not None:
        import dataclasses

        cfg = dataclasses.replace(cfg, noise_sigma=args.noise)
    if args.participants < 1:
        raise ValueError("--participants must be >= 1")
    os.makedirs(args.out_dir, exist_ok=True)
    cfg.to_file(os.path.join(args.out_dir, "generator.cfg"))

    all_trials: List[dataset.TrialRecord] = []
    for i in range(args.participants):
        user = f"u{i + 1:02d}"
        stubs = dataset.protocol_manifest(derive_seed(args.seed, 10, i), user_id=user)
        all_trials.extend(dataset.synth_trials(stubs, derive_seed(args.seed, 11, i), cfg))
    trials_path = os.path.join(args.out_dir, "trials.jsonl")
    dataset.save_trials(all_trials, trials_path)

    n_touch = sum(1 for t in all_trials if t.is_touch)
    print(f"wrote {trials_path}: {len(all_trials)} trials "
          f"({n_touch} touch, {len(all_trials) - n_touch} no-touch)")
    for part in dataset.TOUCH_PARTS:
        n = sum(1 for t in all_trials if t.is_touch and t.behavior.part == part)
        print(f"  {part}: {n}")

    if not args.skip_sessions:
        for i in range(args.participants):
            user = f"p{i + 1:02d}"
            spec = dataset.ParticipantSpec(
                user_id=user, duration_s=args.duration, n_prompts=args.prompts,
                min_gap_s=args.min_gap,
            )
            log = dataset.session_log(spec, derive_rng(args.seed, 12, i), cfg)
            stream_path = os.path.join(args.out_dir, f"session_{user}.csv")
            prompts_path = os.path.join(args.out_dir, f"session_{user}_prompts.csv")
            write_stream_csv(log.stream, stream_path)
            dataset.write_prompts_csv(log.prompts, prompts_path)
            print(f"wrote {stream_path} ({args.duration:.0f} s, {args.prompts} prompts)")
    return 0


def _load_hp_table(args, instants) -> Dict[float, forest.Hyperparams]:
    if args.hyperparams:
        table = ens_mod.read_hyperparams_csv(args.hyperparams)
        missing = [t for t in instants if t not in table]
        if missing:
            raise ValueError(f"{args.hyperparams}: no rows for instants {missing}")
        return table
    missing = [t for t in instants if t not in ens_mod.DEFAULT_HYPERPARAMS_BY_PREFIX]
    if missing:
        raise ValueError(
            f"no built-in hyperparameters for instants {missing}; pass --hyperparams"
        )
    return dict(ens_mod.DEFAULT_HYPERPARAMS_BY_PREFIX)


def cmd_train(args) -> int:
    trials = dataset.load_trials(args.trials)
    if args.tune:
        hp_by_t = _tune_table(trials, args.schedule, args.seed, n_iter=60,
                              k=args.folds, skip_random=False, space=None)
    else:
        hp_by_t = _load_hp_table(args, args.schedule)
    ens = ens_mod.train_ensemble(
        trials, seed=args.seed, hp_by_t=hp_by_t, instants=args.schedule,
        lam=args.weight_lambda, k=args.folds,
    )
    ens_mod.save_ensemble(ens, args.out)
    evaluate.write_f1_curve_csv(ens.f1_by_t, os.path.join(args.out, "f1_curve.csv"))
    plots.render_f1_curve(ens.f1_by_t, os.path.join(args.out, "f1_curve.png"))
    print(f"trained on {len(trials)} trials; ensemble written to {args.out}")
    print("t (s)    cv F1    weight")
    for t in ens.instants:
        print(f"{t:5.2f}  {ens.f1_by_t[t]:7.4f}  {ens.weights[t]:8.4f}")
    return 0


def _tune_table(trials, instants, seed, n_iter, k, skip_random, space) -> Dict[float, forest.Hyperparams]:
    import json as _json

    from .features import featurize_windows

    if space is not None:
        with open(space) as fh:
            space = {k2: list(v) for k2, v in _json.load(fh).items()}
    stack = np.stack([tr.window.data for tr in trials])
    y = np.array([tr.label_sign for tr in trials], dtype=np.int64)
    rate = trials[0].window.rate_hz
    table = {}
    for i, t in enumerate(instants):
        x = featurize_windows(stack[:, : int(round(t * rate)), :], t)
        hp, score = forest.two_stage_search(
            x, y, space=space, seed=derive_seed(seed, 20, i), n_iter=n_iter, k=k,
            skip_random=skip_random,
        )
        table[t] = hp
        print(f"t={t:.2f} s: best CV F1 {score:.4f} with {hp}")
    return table


def cmd_tune(args) -> int:
    trials = dataset.load_trials(args.trials)
    table = _tune_table(trials, args.schedule, args.seed, n_iter=args.n_iter,
                        k=args.folds, skip_random=args.skip_random, space=args.space)
    ens_mod.write_hyperparams_csv(table, args.out)
    print(f"wrote {args.out}")
    return 0


def _session_pairs(args) -> List[Tuple[str, str]]:
    pairs = []
    for spec in args.session:
        stream, sep, prompts = spec.partition(":")
        if not sep:
            raise ValueError(f"--session {spec!r}: expected STREAM.csv:PROMPTS.csv")
        pairs.append((stream, prompts))
    if args.sessions_dir:
        for prompts in sorted(glob.glob(os.path.join(args.sessions_dir, "*_prompts.csv"))):
            stream = prompts.replace("_prompts.csv", ".csv")
            if os.path.exists(stream):
                pairs.append((stream, prompts))
    if not pairs:
        raise ValueError("no sessions given; use --session or --sessions-dir")
    return pairs


def _load_session(stream_path: str, prompts_path: str) -> dataset.PromptLog:
    stream = read_stream_csv(stream_path)
    prompts = dataset.read_prompts_csv(prompts_path)
    user = os.path.basename(stream_path).replace(".csv", "")
    return dataset.PromptLog(stream=stream, prompts=prompts, user_id=user)


def cmd_eval(args) -> int:
    ens = ens_mod.load_ensemble(args.ensemble)
    schedule = FrameSchedule(window_s=ens.window_s, stride_s=args.stride, rate_hz=ens.rate_hz)
    pairs = _session_pairs(args)
    os.makedirs(args.out_dir, exist_ok=True)

    results, full_results = [], []
    for stream_path, prompts_path in pairs:
        log = _load_session(stream_path, prompts_path)
        if args.compare_full:
            r, rf = evaluate.compare_full_window(
                log, ens, schedule, args.refractory, args.label_window
            )
            full_results.append(rf)
        else:
            r = evaluate.evaluate_session(log, ens, schedule, args.refractory, args.label_window)
        results.append(r)
        ens_mod.write_event_log(
            r.events, os.path.join(args.out_dir, f"events_{r.user_id}.jsonl")
        )

    overall = evaluate.aggregate(results)
    text = evaluate.format_report_table(results, overall, title="Temporal ensemble")
    text += "\n" + evaluate.format_early_histogram(overall, ens.instants)
    kv = evaluate.report_kv_lines(results, overall, prefix="ensemble_")
    if args.compare_full:
        full_overall = evaluate.aggregate(full_results)
        text += "\n" + evaluate.format_report_table(
            full_results, full_overall, title="Full-window model only"
        )
        kv += evaluate.report_kv_lines(full_results, full_overall, prefix="full_window_")

    with open(os.path.join(args.out_dir, "report.txt"), "w") as fh:
        fh.write(text)
    with open(os.path.join(args.out_dir, "report.kv"), "w") as fh:
        fh.write("\n".join(sorted(kv)) + "\n")
    evaluate.write_early_histogram_csv(
        overall.early_histogram, ens.instants, os.path.join(args.out_dir, "early_histogram.csv")
    )
    plots.render_early_histogram(
        overall.early_histogram, ens.instants, os.path.join(args.out_dir, "early_histogram.png")
    )
    print(text, end="")
    print(f"report written to {args.out_dir}")
    return 0


def cmd_detect(args) -> int:
    ens = ens_mod.load_ensemble(args.ensemble)
    if args.input:
        stream = read_stream_csv(args.input)
        uniform, gaps = resample_uniform(stream, ens.rate_hz)
        schedule = FrameSchedule(window_s=ens.window_s, stride_s=args.stride, rate_hz=ens.rate_hz)
        windows = slide(uniform, schedule)
        events = ens_mod.detect_stream(windows, ens, refractory_s=args.refractory)
    else:
        detector = ens_mod.StreamDetector(ens, stride_s=args.stride,
                                          refractory_s=args.refractory)
        events = []
        header = sys.stdin.readline()
        if header.strip() != "t,ax,ay,az":
            raise StreamError("line 1: expected header t,ax,ay,az")
        for line_no, line in enumerate(sys.stdin, start=2):
            if not line.strip():
                continue
            events.extend(detector.push(*parse_stream_line(line, line_no)))
        gaps = detector.gaps
    if gaps:
        print(f"warning: {len(gaps)} gap(s) in the input stream were interpolated",
              file=sys.stderr)
    if args.out:
        ens_mod.write_event_log(events, args.out)
        print(f"{len(events)} event(s) written to {args.out}")
    else:
        for e in events:
            print(e.to_json_line())
    return 0


def cmd_plot_bins(args) -> int:
    trials = dataset.load_trials(args.trials)
    summary = plots.bin_summary(trials, n_bins=args.bins)
    os.makedirs(args.out_dir, exist_ok=True)
    for cls in ("touch", "no_touch"):
        sub = summary[summary["class"] == cls]
        if len(sub):
            sub.to_csv(os.path.join(args.out_dir, f"bins_{cls}.csv"), index=False)
    plots.render_bins(summary, os.path.join(args.out_dir, "bins.png"))
    print(f"binned summary for {len(trials)} trials written to {args.out_dir}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
