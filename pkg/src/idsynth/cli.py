"""Command-line entry point.

Subcommands: train, generate, morph, attack, detect, eval. Exit code 0 on
success, 1 on bad input (usage, config, or validation errors), 2 on
runtime failures (unreadable files, training divergence). Reports are
written as tab-separated text with a rendered figure next to them.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import torch

from .adversarial import AttackConfig, DetectorModel, craft_adversarial, detect
from .config import datasets_from, load_config, train_config_from
from .checkpoint import load_checkpoint
from .errors import ConfigurationError, LoadError, TrainingError, ValidationError
from .evaluation import (
    ProbeConfig,
    ablation_variants,
    attribute_leakage_probe,
    high_frequency_energy,
    split_gallery_queries,
    top1_identification,
)
from .images import load_image, save_image
from .reporting import render_loss_curves, render_metric_bars, render_score_histogram
from .synthesis import morph_attributes, recombine, reconstruct
from .trainer import train


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems instead of exiting the process."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="idsynth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_train = sub.add_parser("train", help="train a model from a config file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--resume", default=None, help="checkpoint directory to resume")

    p_gen = sub.add_parser("generate", help="recombine a subject with attributes")
    p_gen.add_argument("--ckpt", required=True)
    p_gen.add_argument("--subject", required=True)
    p_gen.add_argument("--attribute", required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--sample", action="store_true",
                       help="sample the attribute vector instead of using its mean")

    p_morph = sub.add_parser("morph", help="interpolate between two attribute images")
    p_morph.add_argument("--ckpt", required=True)
    p_morph.add_argument("--subject", required=True)
    p_morph.add_argument("--attr1", required=True)
    p_morph.add_argument("--attr2", required=True)
    p_morph.add_argument("--steps", type=int, required=True)
    p_morph.add_argument("--out", required=True)

    p_attack = sub.add_parser("attack", help="craft an adversarial example")
    p_attack.add_argument("--ckpt", required=True)
    p_attack.add_argument("--source", required=True)
    p_attack.add_argument("--target", required=True)
    p_attack.add_argument("--theta", type=float, required=True)
    p_attack.add_argument("--out", required=True)

    p_detect = sub.add_parser("detect", help="score images with a trained detector")
    p_detect.add_argument("--ckpt", required=True)
    p_detect.add_argument("--detector", required=True)
    p_detect.add_argument("--inputs", required=True,
                          help="text file listing one image path per line")
    p_detect.add_argument("--out", default=None,
                          help="optional directory for the TSV report and histogram")

    p_eval = sub.add_parser("eval", help="run an evaluation protocol")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--protocol", required=True, choices=["top1", "probe", "ablation"])
    p_eval.add_argument("--config", required=True)

    return parser


def _load_images(state, paths: list[str]) -> list[torch.Tensor]:
    size = state.config.image_size
    return [load_image(path, size=size) for path in paths]


def _write_report(rows: list[tuple[str, float]], out_dir: Path, name: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"{key}\t{value:.6f}" for key, value in rows]
    (out_dir / f"{name}.tsv").write_text("\n".join(lines) + "\n")
    render_metric_bars(dict(rows), out_dir / f"{name}.png", title=name)
    for line in lines:
        print(line)


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if "out_dir" not in cfg:
        raise ConfigurationError("training config requires 'out_dir'")
    labeled, pool = datasets_from(cfg)
    config = train_config_from(cfg, labeled.num_identities)
    state = load_checkpoint(args.resume) if args.resume else None
    out_dir = Path(cfg["out_dir"])

    every = max(1, config.total_steps // 10)

    def progress(outcome) -> None:
        if outcome.step % every == 0 or outcome.step == config.total_steps:
            print(f"step {outcome.step}/{config.total_steps}", file=sys.stderr)

    train(config, labeled, pool, out_dir=out_dir, on_step=progress, state=state)
    render_loss_curves(out_dir / "training.log", out_dir / "loss_curves.png")
    print(out_dir / "checkpoint")
    return 0


def _cmd_generate(args: argparse.Namespace) -> int:
    state = load_checkpoint(args.ckpt)
    subject, attribute = _load_images(state, [args.subject, args.attribute])
    noise = torch.Generator().manual_seed(0) if args.sample else None
    out = recombine(state, subject, attribute, deterministic=not args.sample, noise_rng=noise)
    save_image(out, args.out)
    print(args.out)
    return 0


def _cmd_morph(args: argparse.Namespace) -> int:
    state = load_checkpoint(args.ckpt)
    subject, attr1, attr2 = _load_images(state, [args.subject, args.attr1, args.attr2])
    sequence = morph_attributes(state, subject, attr1, attr2, args.steps)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    index_lines = []
    for i, (frame, alpha) in enumerate(zip(sequence.frames, sequence.alphas)):
        name = f"frame_{i:03d}.png"
        save_image(frame, out_dir / name)
        index_lines.append(f"{name}\t{alpha:.6f}")
    (out_dir / "index.tsv").write_text("\n".join(index_lines) + "\n")
    print(out_dir / "index.tsv")
    return 0


def _cmd_attack(args: argparse.Namespace) -> int:
    state = load_checkpoint(args.ckpt)
    source, target = _load_images(state, [args.source, args.target])
    result = craft_adversarial(state, source, target, AttackConfig(theta=args.theta))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_image(result.x_adv, out_dir / "x_adv.png")
    record = {
        "success": result.success,
        "theta": args.theta,
        "achieved_distance": result.achieved_distance,
        "perturbation_norm": result.perturbation_norm,
        "iterations": result.iterations,
    }
    (out_dir / "attack.json").write_text(json.dumps(record, indent=2) + "\n")
    print(json.dumps(record))
    return 0


def _cmd_detect(args: argparse.Namespace) -> int:
    state = load_checkpoint(args.ckpt)
    model = DetectorModel.load(args.detector)
    try:
        paths = [line.strip() for line in Path(args.inputs).read_text().splitlines()
                 if line.strip()]
    except FileNotFoundError:
        raise LoadError(f"input list not found: {args.inputs}") from None
    if not paths:
        raise ValidationError(f"input list {args.inputs} is empty")
    scores, labels, lines = [], [], []
    for path in paths:
        image = load_image(path, size=state.config.image_size)
        score, label = detect(model, state, image)
        scores.append(score)
        labels.append(label)
        lines.append(f"{path}\t{score:.6f}\t{label}")
    print("\n".join(lines))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "detect.tsv").write_text("\n".join(lines) + "\n")
        render_score_histogram(scores, labels, out_dir / "detect.png")
    return 0


def _eval_top1(state, cfg: dict) -> list[tuple[str, float]]:
    labeled, _ = datasets_from(cfg)
    gallery, queries = split_gallery_queries(labeled)
    seed = cfg.get("eval_seed", 0)
    raw = top1_identification(state, gallery, queries, mode="raw")
    generated = top1_identification(
        state, gallery, queries, mode="generated",
        attribute_pool=labeled.images, seed=seed,
    )
    return [
        ("top1_raw", raw),
        ("top1_generated", generated),
        ("chance", 1.0 / labeled.num_identities),
    ]


def _eval_probe(state, cfg: dict) -> list[tuple[str, float]]:
    labeled, _ = datasets_from(cfg)
    probe_cfg = ProbeConfig(
        hidden=cfg.get("probe_hidden", 256),
        steps=cfg.get("probe_steps", 2000),
        lr=float(cfg.get("probe_lr", 1e-3)),
        seed=cfg.get("eval_seed", 0),
    )
    result = attribute_leakage_probe(
        state, labeled, split_ratio=float(cfg.get("split_ratio", 0.8)), probe_config=probe_cfg
    )
    return [
        ("probe_train", result.train_accuracy),
        ("probe_validation", result.validation_accuracy),
        ("chance", result.chance),
    ]


def _eval_ablation(state, cfg: dict) -> list[tuple[str, float]]:
    labeled, pool = datasets_from(cfg)
    base = train_config_from(cfg, labeled.num_identities)
    gallery, queries = split_gallery_queries(labeled)
    rows: list[tuple[str, float]] = []
    for name, variant in ablation_variants(base).items():
        variant_state = train(variant, labeled, pool)
        accuracy = top1_identification(
            variant_state, gallery, queries, mode="generated",
            attribute_pool=labeled.images, seed=cfg.get("eval_seed", 0),
        )
        sharpness = high_frequency_energy(
            torch.stack([reconstruct(variant_state, x) for x in queries.images[:64]])
        )
        rows.append((f"{name}_top1_generated", accuracy))
        rows.append((f"{name}_hf_energy", sharpness))
    return rows


def _cmd_eval(args: argparse.Namespace) -> int:
    state = load_checkpoint(args.ckpt)
    cfg = load_config(args.config)
    if "out_dir" not in cfg:
        raise ConfigurationError("eval config requires 'out_dir'")
    handlers = {"top1": _eval_top1, "probe": _eval_probe, "ablation": _eval_ablation}
    rows = handlers[args.protocol](state, cfg)
    _write_report(rows, Path(cfg["out_dir"]), f"eval_{args.protocol}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "generate": _cmd_generate,
    "morph": _cmd_morph,
    "attack": _cmd_attack,
    "detect": _cmd_detect,
    "eval": _cmd_eval,
}


def run(argv: Optional[list[str]] = None) -> int:
    """Parse arguments, dispatch, and map failures to exit codes."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    except SystemExit as exit_:  # --help
        return int(exit_.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ValidationError, ConfigurationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (LoadError, TrainingError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # pragma: no cover - safety net
        print(f"unexpected error: {err}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
