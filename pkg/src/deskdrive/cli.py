"""Command-line surface: data generation, training, evaluation, ablations.

Exit codes: 0 success, 2 configuration/usage error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import torch

from deskdrive.annotate import annotate_clips, write_vqa_jsonl
from deskdrive.model import DrivingModel, ModelPolicy
from deskdrive.simworld import make_scenario, run_episode, score_episode
from deskdrive.trainer import (
    AXES,
    ConfigError,
    RunConfig,
    build_dataset,
    default_stages,
    eval_closed_loop,
    eval_open_loop,
    gen_clips,
    load_checkpoint,
    load_config,
    plot_abilities,
    plot_trajectories,
    plot_training_curves,
    run_ablation,
    save_checkpoint,
    train,
    write_default_config,
    write_episode_csv,
    write_metrics_table,
    write_summary_json,
)

log = logging.getLogger("deskdrive")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="INI config file")
    p.add_argument("--seed", type=int, default=None, help="override [run] seed")
    p.add_argument("--profile", choices=("desk", "paper"), default=None)
    p.add_argument("--planner", choices=("vae", "diffusion"), default=None)
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deskdrive")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate expert clips and VQA pairs")
    _add_common(p)

    p = sub.add_parser("train", help="run the three-stage schedule")
    _add_common(p)
    p.add_argument("--ckpt", type=Path, default=None, help="checkpoint output path")

    p = sub.add_parser("eval-open", help="open-loop trajectory metrics")
    _add_common(p)
    p.add_argument("--ckpt", type=Path, default=None)

    p = sub.add_parser("eval-close", help="closed-loop scenario scoring")
    _add_common(p)
    p.add_argument("--ckpt", type=Path, default=None)
    p.add_argument(
        "--untrained", action="store_true",
        help="score a freshly initialized model instead of a checkpoint",
    )
    p.add_argument("--workers", type=int, default=None, help="episode fan-out")

    p = sub.add_parser("annotate", help="emit the VQA JSONL for generated clips")
    _add_common(p)

    p = sub.add_parser("ablate", help="run the directional toggle matrix")
    _add_common(p)
    p.add_argument("--axis", choices=AXES + ("all",), default="all")
    p.add_argument("--ablate-seeds", type=int, default=3, help="seeds per variant")

    p = sub.add_parser("plot", help="render metric tables and trajectory plots")
    _add_common(p)
    p.add_argument("--ckpt", type=Path, default=None)

    p = sub.add_parser("replay", help="dump one episode as JSONL")
    _add_common(p)
    p.add_argument("--family", default="lead_brake")
    p.add_argument("--ckpt", type=Path, default=None, help="drive with a checkpoint")

    p = sub.add_parser("init-config", help="write the default config file")
    _add_common(p)

    return parser


def _load(args) -> RunConfig:
    return load_config(
        path=args.config, profile=args.profile, planner=args.planner, seed=args.seed
    )


def _fresh_model(cfg: RunConfig) -> DrivingModel:
    torch.manual_seed(cfg.seed)
    return DrivingModel(cfg.model)


def _dataset(cfg: RunConfig, seed=None, with_vqa=None):
    return build_dataset(
        cfg.data.n_clips,
        seed=cfg.seed if seed is None else seed,
        families=cfg.data.families,
        with_vqa=cfg.data.vqa if with_vqa is None else with_vqa,
        max_frames_per_clip=cfg.data.max_frames_per_clip,
        include_history_questions=cfg.data.history_questions,
    )


def _eval_clips(cfg: RunConfig):
    # Held-out open-loop clips: disjoint seed range from training data.
    return gen_clips(
        cfg.eval.open_clips,
        seed=cfg.seed + 1,
        families=cfg.data.families,
        max_frames_per_clip=cfg.data.max_frames_per_clip,
    )


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    data = _dataset(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    result = annotate_clips(data.clips, seed=cfg.seed)
    write_vqa_jsonl(result, args.out / "vqa.jsonl")
    summary = {
        "n_clips": len(data.clips),
        "n_frames": data.n_frames,
        "n_pairs": len(result.pairs),
        "clips": [
            {"scenario_id": c.scenario_id, "family": c.family,
             "seed": c.seed, "frames": len(c.frames)}
            for c in data.clips
        ],
    }
    write_summary_json(summary, args.out / "dataset.json")
    print(f"{len(data.clips)} clips, {data.n_frames} frames, "
          f"{len(result.pairs)} VQA pairs -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    model = _fresh_model(cfg)
    data = _dataset(cfg)
    stages = default_stages(cfg.train.epochs, cfg.train.batch_size)
    report = train(
        model, data, stages,
        seed=cfg.seed, lr=cfg.train.lr, loss_weights=cfg.train.loss_weights,
    )
    ckpt = args.ckpt or (args.out / "ckpt.pt")
    save_checkpoint(
        ckpt, model,
        stage=stages[-1].stage,
        step=sum(s.steps for s in report.stages),
        seed=cfg.seed,
        loss_weights=cfg.train.loss_weights,
    )
    plot_training_curves(report, args.out / "training.png")
    write_summary_json(
        {
            "seed": report.seed,
            "stages": [
                {"stage": s.stage, "steps": s.steps,
                 "final_loss": s.losses[-1] if s.losses else None}
                for s in report.stages
            ],
        },
        args.out / "train_report.json",
    )
    print(f"trained {len(report.stages)} stages -> {ckpt}")
    return 0


def cmd_eval_open(args) -> int:
    if args.ckpt is None:
        print("eval-open requires --ckpt <path>", file=sys.stderr)
        return 2
    cfg = _load(args)
    model, _ = load_checkpoint(args.ckpt)
    report = eval_open_loop(model, _eval_clips(cfg))
    write_summary_json(report.to_json(), args.out / "open_metrics.json")
    write_metrics_table(report, None, args.out / "open_metrics.txt")
    print(f"avg L2 {report.avg_l2:.4f} m, collision {report.collision_rate:.2f}% "
          f"over {report.n_frames} frames")
    return 0


def cmd_eval_close(args) -> int:
    if args.ckpt is None and not args.untrained:
        print("eval-close requires --ckpt <path> (or --untrained)", file=sys.stderr)
        return 2
    cfg = _load(args)
    if args.untrained:
        model = _fresh_model(cfg)
    else:
        model, _ = load_checkpoint(args.ckpt)
    report = eval_closed_loop(
        model,
        families=cfg.eval.closed_families,
        seeds=range(cfg.eval.closed_seeds),
        seed_offset=cfg.eval.closed_seed_offset,
        workers=args.workers or cfg.eval.workers,
    )
    write_episode_csv(report, args.out / "episodes.csv")
    write_summary_json(report.to_json(), args.out / "closed_metrics.json")
    write_metrics_table(None, report, args.out / "closed_metrics.txt")
    plot_abilities(report, args.out / "abilities.png")
    s = report.summary
    print(f"DS {s['driving_score']:.2f}, SR {s['success_rate']:.1f}% "
          f"over {s['episodes']} episodes")
    return 0


def cmd_annotate(args) -> int:
    cfg = _load(args)
    clips = gen_clips(
        cfg.data.n_clips, seed=cfg.seed, families=cfg.data.families,
        max_frames_per_clip=cfg.data.max_frames_per_clip,
    )
    result = annotate_clips(clips, seed=cfg.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    manifest = write_vqa_jsonl(result, args.out / "vqa.jsonl")
    print(f"{len(result.pairs)} pairs -> {args.out / 'vqa.jsonl'} ({manifest})")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load(args)
    axes = AXES if args.axis == "all" else (args.axis,)
    seeds = tuple(range(args.ablate_seeds))
    results = run_ablation(cfg, axes=axes, seeds=seeds)
    write_summary_json(results, args.out / "ablation.json")
    for axis, payload in results.items():
        print(f"[{axis}]")
        for name, metrics in payload["means"].items():
            print(f"  {name:16s} DS {metrics['driving_score']:6.2f}  "
                  f"SR {metrics['success_rate']:5.1f}%")
    return 0


def cmd_plot(args) -> int:
    cfg = _load(args)
    if args.ckpt is None:
        print("plot requires --ckpt <path>", file=sys.stderr)
        return 2
    model, _ = load_checkpoint(args.ckpt)
    clips = _eval_clips(cfg)
    report = eval_open_loop(model, clips)
    samples = []
    with torch.no_grad():
        for clip in clips[:8]:
            memory = model.new_memory()
            frame = clip.frames[0]
            qtout = model.perceive([frame.obs], memory, 0)
            out, _ = model.generate_plan(qtout, frame.command)
            samples.append(
                (out.selected[0].cpu().numpy(), frame.gt_traj.waypoints)
            )
    plot_trajectories(samples, args.out / "trajectories.png")
    write_metrics_table(report, None, args.out / "open_metrics.txt")
    print(f"plots -> {args.out}")
    return 0


def cmd_replay(args) -> int:
    cfg = _load(args)
    scenario = make_scenario(args.family, cfg.seed)
    policy = None
    if args.ckpt is not None:
        model, _ = load_checkpoint(args.ckpt)
        policy = ModelPolicy(model)
        policy.reset()
    record = run_episode(scenario, policy=policy, record=True)
    score = score_episode(record.result)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"replay_{scenario.id}.jsonl"
    with open(path, "w") as fh:
        header = {
            "scenario_id": scenario.id,
            "family": args.family,
            "seed": cfg.seed,
            "success": record.result.success,
            "driving_score": score.driving_score,
            "infractions": record.result.infractions,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for snap in record.states:
            row = dataclasses.asdict(snap)
            row["light"] = snap.light.value
            row["command"] = snap.command.value
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    print(f"{len(record.states)} states -> {path}")
    return 0


def cmd_init_config(args) -> int:
    path = args.out / "deskdrive.ini"
    write_default_config(path, args.profile or "desk")
    print(f"wrote {path}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval-open": cmd_eval_open,
    "eval-close": cmd_eval_close,
    "annotate": cmd_annotate,
    "ablate": cmd_ablate,
    "plot": cmd_plot,
    "replay": cmd_replay,
    "init-config": cmd_init_config,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure contract
        log.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main(argv=sys.argv[1:]))
