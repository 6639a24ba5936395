"""Command-line surface.

Subcommands: `data synth-toy|ingest`, `train <stage>`, `eval <task>`,
`synth` (one-shot file in, WAV out) and `serve`.  Every subcommand takes
--config (a config file path or a bare profile name) and --seed.  Commands
exit non-zero on any error.  Eval commands write a JSON report, a CSV table
and mel-comparison figures into the run's reports/ directory; metrics.jsonl
stays timestamp-free so reruns reproduce it byte-for-byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import dsp, evaluation, reporting, training
from .config import ConfigError, RunConfig
from .data import DatasetManifest, MelDataset, ToySpec, ingest_nsynth, synth_toy_dataset
from .hypernet import refine
from .models import PitchLabel
from .runs import Workspace
from .synthapi import SlotStore, load_synthesis_stack, synthesize

_PREREQ_RUN = {"base": "extractor", "hypernet-pre": "base", "hypernet-adv": "hypernet-pre"}


def _load_config(value: str) -> RunConfig:
    if value in ("desk", "paper", "micro"):
        return RunConfig.from_profile(value)
    path = Path(value)
    if not path.exists():
        raise ConfigError(f"config file not found: {value}")
    return RunConfig.from_file(path)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default="desk", help="config file or profile name (desk|paper|micro)")
    parser.add_argument("--seed", type=int, default=None, help="run seed (defaults to the config's seed)")


def _cfg_seed(args) -> tuple[RunConfig, int]:
    cfg = _load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    return cfg, seed


def _manifest(cfg: RunConfig, args) -> DatasetManifest:
    path = Path(args.manifest) if getattr(args, "manifest", None) else Path(cfg.get("paths.data_dir"))
    if not path.exists():
        raise FileNotFoundError(
            f"dataset manifest not found at {path}; run `hypersynth data synth-toy` first or pass --manifest")
    return DatasetManifest.load(path)


def _workspace(cfg: RunConfig, args) -> Workspace:
    root = getattr(args, "runs_root", None)
    return Workspace(root) if root else Workspace.from_config(cfg)


# --- data ----------------------------------------------------------------------


def cmd_data_synth_toy(args) -> int:
    cfg, seed = _cfg_seed(args)
    out = Path(args.out) if args.out else Path(cfg.get("paths.data_dir"))
    toy_tree = dict(cfg.tree["toy"])
    if args.seed is not None:
        toy_tree["rng_seed"] = seed
    spec = ToySpec.from_config_tree(toy_tree)
    manifest = synth_toy_dataset(spec, out, cfg.mel)
    print(f"wrote {len(manifest.entries)} clips ({len(manifest.families)} timbres) to {out}")
    print(f"normalization: [{manifest.norm_min_db:.2f}, {manifest.norm_max_db:.2f}] dB")
    return 0


def cmd_data_ingest(args) -> int:
    cfg, _seed = _cfg_seed(args)
    manifest = ingest_nsynth(args.root, mel_config=cfg.mel)
    train_n = len(manifest.split("train"))
    valid_n = len(manifest.split("valid"))
    print(f"ingested {train_n} train / {valid_n} valid clips, {len(manifest.families)} families")
    return 0


# --- train ---------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg, seed = _cfg_seed(args)
    manifest = _manifest(cfg, args)
    ws = _workspace(cfg, args)
    run_name = args.run_name or args.stage
    run = ws.run(run_name).create(cfg, fresh=not args.resume)

    prereq = None
    if args.stage in _PREREQ_RUN:
        if args.prereq:
            prereq = Path(args.prereq)
        else:
            prereq = ws.run(_PREREQ_RUN[args.stage]).checkpoint_path()
        if not prereq.exists():
            raise FileNotFoundError(
                f"prerequisite checkpoint {prereq} missing; train the "
                f"'{_PREREQ_RUN[args.stage]}' stage first or pass --prereq")

    out = training.run_stage(cfg, args.stage, manifest, run, prereq_ckpt=prereq,
                             seed=seed, iters=args.iters, resume=args.resume)
    records = run.read_metrics()
    stage_key = {"hypernet-pre": "pre", "hypernet-adv": "fine"}.get(args.stage, args.stage)
    reporting.training_curve_figure(run.reports / f"{stage_key}_loss.png", records, stage_key)
    print(f"stage {args.stage} done -> {out}")
    return 0


# --- eval ----------------------------------------------------------------------


def _eval_stack(cfg: RunConfig, args, ws: Workspace):
    ckpt = Path(args.checkpoint) if args.checkpoint else ws.run("hypernet-adv").checkpoint_path()
    clf = Path(args.classifiers) if args.classifiers else ws.run("classifiers").checkpoint_path()
    if not ckpt.exists():
        raise FileNotFoundError(f"model checkpoint {ckpt} missing; train the pipeline or pass --checkpoint")
    if not clf.exists():
        raise FileNotFoundError(f"classifier checkpoint {clf} missing; train 'classifiers' or pass --classifiers")
    return load_synthesis_stack(cfg, ckpt, clf)


def _print_table(task: str, init: dict, fine: dict) -> None:
    cols = [c for c in ("mse", "fid", "pitch_accuracy") if init.get(c) is not None]
    header = f"{task:<16}" + "".join(f"{c:>16}" for c in cols)
    print(header)
    for name, rep in (("initial", init), ("refined", fine)):
        print(f"{name:<16}" + "".join(f"{rep[c]:>16.4f}" for c in cols))


def cmd_eval(args) -> int:
    cfg, seed = _cfg_seed(args)
    ws = _workspace(cfg, args)
    run = ws.run(args.run_name or f"eval-{args.task}").create(cfg, fresh=True)
    stack = _eval_stack(cfg, args, ws)

    if args.task == "efficiency":
        report = evaluation.efficiency_report(stack, cfg)
        run.write_report("efficiency", report)
        run.log_metrics({"stage": "eval:efficiency", "param_counts": report["param_counts"]})
        print(json.dumps(report["param_counts"], indent=2, sort_keys=True))
        print(f"latency: init {report['latency_init_s'] * 1e3:.1f} ms, "
              f"fine {report['latency_fine_s'] * 1e3:.1f} ms")
        return 0

    manifest = _manifest(cfg, args)
    dataset = MelDataset(manifest, manifest.mel_config(cfg.mel), split=args.split)
    fn = {"recon": evaluation.eval_reconstruction,
          "synth": evaluation.eval_synthesis,
          "interp": evaluation.eval_interpolation}[args.task]
    kwargs = {} if args.task == "recon" else {"seed": seed}
    rep_fine = fn(stack, dataset, refined=True, **kwargs)
    rep_init = fn(stack, dataset, refined=False, **kwargs)

    payload = {"task": rep_fine.task, "seed": seed, "split": args.split,
               "init": rep_init.as_dict(), "fine": rep_fine.as_dict()}
    run.write_report(args.task, payload)
    rows = [{"path": "init", **rep_init.as_dict()}, {"path": "fine", **rep_fine.as_dict()}]
    reporting.write_csv(run.reports / f"{args.task}.csv", rows)

    # A few example clips rendered real / initial / refined.
    n_fig = min(3, len(dataset))
    fig_rows = []
    for i in range(n_fig):
        res = refine(stack.extractor, stack.generator, stack.hypernet,
                     torch.from_numpy(dataset.pitch_idx[i : i + 1]),
                     x=torch.from_numpy(dataset.mels[i : i + 1]))
        fig_rows.append({"real": dataset.mels[i], "initial": res.x_init[0].numpy(),
                         "refined": res.x_fine[0].numpy()})
    reporting.mel_grid_figure(run.reports / f"{args.task}_mels.png", fig_rows,
                              suptitle=f"{rep_fine.task} examples")

    run.log_metrics({"stage": f"eval:{args.task}", "seed": seed,
                     "init": rep_init.as_dict(), "fine": rep_fine.as_dict()})
    _print_table(rep_fine.task, rep_init.as_dict(), rep_fine.as_dict())
    return 0


# --- synth / serve ----------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg, _seed = _cfg_seed(args)
    ws = _workspace(cfg, args)
    ckpt = Path(args.checkpoint) if args.checkpoint else ws.run("hypernet-adv").checkpoint_path()
    if not ckpt.exists():
        raise FileNotFoundError(f"model checkpoint {ckpt} missing; train the pipeline or pass --checkpoint")
    stack = load_synthesis_stack(cfg, ckpt)

    inputs = [Path(p) for p in args.inputs]
    for p in inputs:
        if not p.exists():
            raise FileNotFoundError(f"input sound {p} not found")
    alphas = args.alpha if args.alpha else [1.0 / len(inputs)] * len(inputs)
    pitch = PitchLabel(args.pitch)

    store = SlotStore()
    slots = [store.add(stack, p.read_bytes(), p.name) for p in inputs]
    result = synthesize(stack, slots, alphas, pitch, refine_output=args.refine)
    out = Path(args.out)
    dsp.save_wav(out, result.wav)
    if args.save_mel:
        mel_path = out.with_suffix(".png")
        panels = {"initial": result.mel_init}
        if result.mel_fine is not None:
            panels["refined"] = result.mel_fine
        reporting.mel_comparison_figure(mel_path, panels, suptitle=f"pitch {args.pitch}")
        print(f"wrote {mel_path}")
    print(f"wrote {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg, _seed = _cfg_seed(args)
    ws = _workspace(cfg, args)
    ckpt = Path(args.checkpoint) if args.checkpoint else ws.run("hypernet-adv").checkpoint_path()
    if not ckpt.exists():
        raise FileNotFoundError(f"model checkpoint {ckpt} missing; train the pipeline or pass --checkpoint")
    stack = load_synthesis_stack(cfg, ckpt)
    app = create_app(stack, frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypersynth",
                                     description="hypernetwork-refined one-shot instrument synthesizer")
    sub = parser.add_subparsers(dest="command", required=True)

    p_data = sub.add_parser("data", help="dataset tooling")
    data_sub = p_data.add_subparsers(dest="data_command", required=True)
    p_toy = data_sub.add_parser("synth-toy", help="write the synthetic toy corpus")
    _common(p_toy)
    p_toy.add_argument("--out", default=None, help="output directory (default: config paths.data_dir)")
    p_toy.set_defaults(func=cmd_data_synth_toy)
    p_ing = data_sub.add_parser("ingest", help="index an NSynth-format folder")
    _common(p_ing)
    p_ing.add_argument("--root", required=True)
    p_ing.set_defaults(func=cmd_data_ingest)

    p_train = sub.add_parser("train", help="run one training stage")
    p_train.add_argument("stage", choices=list(training.STAGE_NAMES))
    _common(p_train)
    p_train.add_argument("--manifest", default=None)
    p_train.add_argument("--runs-root", default=None)
    p_train.add_argument("--run-name", default=None)
    p_train.add_argument("--prereq", default=None, help="prerequisite checkpoint override")
    p_train.add_argument("--iters", type=int, default=None)
    p_train.add_argument("--resume", action="store_true")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="run an evaluation protocol")
    p_eval.add_argument("task", choices=["recon", "synth", "interp", "efficiency"])
    _common(p_eval)
    p_eval.add_argument("--manifest", default=None)
    p_eval.add_argument("--runs-root", default=None)
    p_eval.add_argument("--run-name", default=None)
    p_eval.add_argument("--checkpoint", default=None)
    p_eval.add_argument("--classifiers", default=None)
    p_eval.add_argument("--split", default="valid", choices=["train", "valid"])
    p_eval.set_defaults(func=cmd_eval)

    p_synth = sub.add_parser("synth", help="one-shot synthesis: sound file(s) in, WAV out")
    _common(p_synth)
    p_synth.add_argument("--in", dest="inputs", action="append", required=True, help="input sound (repeatable)")
    p_synth.add_argument("--alpha", type=float, action="append", default=None, help="mix weight per input")
    p_synth.add_argument("--pitch", type=int, required=True, help="target MIDI pitch (21-108)")
    p_synth.add_argument("--refine", action=argparse.BooleanOptionalAction, default=True)
    p_synth.add_argument("--out", default="out.wav")
    p_synth.add_argument("--save-mel", action="store_true", help="also write a mel figure next to the WAV")
    p_synth.add_argument("--checkpoint", default=None)
    p_synth.add_argument("--runs-root", default=None)
    p_synth.set_defaults(func=cmd_synth)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    _common(p_serve)
    p_serve.add_argument("--checkpoint", default=None)
    p_serve.add_argument("--runs-root", default=None)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.add_argument("--frontend", default=None, help="static frontend directory to mount at /")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
