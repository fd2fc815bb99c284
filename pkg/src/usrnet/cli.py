"""Command-line entry point: synthesize degraded corpora, train, restore
images, and evaluate restoration quality.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import degrade, imgio
from .degrade import KINDS, DegradationSpec


class UsageError(Exception):
    """Bad arguments or configuration (exit code 2)."""


def _echo_config(command: str, resolved: dict) -> None:
    print(f"config[{command}]: {json.dumps(resolved, sort_keys=True)}", file=sys.stderr)


def _resolve_seed(flag_value, config_value=None) -> int:
    if flag_value is not None:
        return int(flag_value)
    if config_value is not None:
        return int(config_value)
    env = os.environ.get("USRNET_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"USRNET_SEED must be an integer, got {env!r}") from exc
    return 0


def _list_pngs(directory: str) -> list:
    if not os.path.isdir(directory):
        raise UsageError(f"not a directory: {directory}")
    files = sorted(
        os.path.join(directory, f) for f in os.listdir(directory)
        if f.lower().endswith(".png")
    )
    if not files:
        raise UsageError(f"no PNG files in {directory}")
    return files


def _item_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence((seed, index)).generate_state(1)[0])


# ----------------------------------------------------------------- synthesize


def cmd_synthesize(args) -> int:
    seed = _resolve_seed(args.seed)
    clean_files = _list_pngs(args.clean_dir)
    file_spec = None
    if args.spec_file:
        try:
            with open(args.spec_file) as fh:
                file_spec = DegradationSpec.from_json_dict(json.load(fh))
        except (ValueError, json.JSONDecodeError) as exc:
            raise UsageError(f"bad spec file {args.spec_file}: {exc}") from exc
        if file_spec.kind != args.kind:
            raise UsageError(
                f"spec file kind {file_spec.kind!r} does not match --kind {args.kind!r}"
            )
    _echo_config("synthesize", {
        "clean_dir": args.clean_dir, "out_dir": args.out_dir, "kind": args.kind,
        "count": args.count, "seed": seed, "spec_file": args.spec_file,
    })
    os.makedirs(args.out_dir, exist_ok=True)
    manifest_path = os.path.join(args.out_dir, "manifest.jsonl")
    specs_path = os.path.join(args.out_dir, "specs.jsonl")
    with open(manifest_path, "w") as mf, open(specs_path, "w") as sf:
        for i in range(args.count):
            clean_path = os.path.abspath(clean_files[i % len(clean_files)])
            spec = file_spec or degrade.random_spec(args.kind, _item_seed(seed, i))
            image = imgio.read_image(clean_path)
            degraded = degrade.degrade_image(image, spec)
            stem = os.path.splitext(os.path.basename(clean_path))[0]
            out_path = os.path.join(args.out_dir, f"{stem}_{args.kind}_{i:04d}.png")
            imgio.write_image(out_path, degraded)
            mf.write(json.dumps({
                "clean_path": clean_path, "kind": args.kind, "spec": spec.to_json_dict(),
            }) + "\n")
            sf.write(json.dumps({
                "degraded_path": os.path.abspath(out_path), "clean_path": clean_path,
                "kind": args.kind, "spec": spec.to_json_dict(),
            }) + "\n")
    print(f"wrote {args.count} degraded images + {manifest_path}")
    return 0


# ---------------------------------------------------------------------- train


def cmd_train(args) -> int:
    from .trainer import TrainConfig, train

    overrides = {}
    if args.config:
        try:
            with open(args.config) as fh:
                overrides = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad config file {args.config}: {exc}") from exc
        if not isinstance(overrides, dict):
            raise UsageError(f"config file {args.config} must hold a JSON object")
    for key in ("epochs", "seed", "mode"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    overrides["seed"] = _resolve_seed(None, overrides.get("seed"))
    try:
        cfg = TrainConfig.from_dict(overrides)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad training config: {exc}") from exc

    _echo_config("train", cfg.to_dict())
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "run_config.json"), "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
    ckpt_path, log_path = train(cfg, args.manifest, args.out, resume=args.resume)
    print(f"checkpoint: {ckpt_path}")
    print(f"loss log: {log_path}")
    return 0


# -------------------------------------------------------------------- restore


def cmd_restore(args) -> int:
    import torch

    from .checkpoint import build_model, load_checkpoint

    torch.set_num_threads(1)
    model = build_model(load_checkpoint(args.checkpoint))
    model.eval()
    if args.mode != "all" and args.mode not in model.bank.kinds:
        raise UsageError(
            f"--mode {args.mode!r} not available; checkpoint holds nodes {model.bank.kinds}"
        )
    inputs = _list_pngs(args.input) if os.path.isdir(args.input) else [args.input]
    _echo_config("restore", {
        "checkpoint": args.checkpoint, "input": args.input, "out": args.out,
        "mode": args.mode, "save_edge": args.save_edge,
    })
    os.makedirs(args.out, exist_ok=True)
    for path in inputs:
        image = imgio.read_image(path)
        x = torch.from_numpy(image.astype(np.float32)).permute(2, 0, 1).unsqueeze(0)
        with torch.no_grad():
            out = model(x, route=args.mode)
        restored = out.restored[0].permute(1, 2, 0).numpy().astype(np.float64)
        name = os.path.basename(path)
        imgio.write_image(os.path.join(args.out, name), restored)
        if args.save_edge:
            edge = out.edge_map[0, 0].abs()
            edge = (edge / edge.max().clamp_min(1e-8)).numpy().astype(np.float64)
            imgio.write_image(
                os.path.join(args.out, os.path.splitext(name)[0] + "_edge.png"), edge
            )
    print(f"restored {len(inputs)} image(s) into {args.out}")
    return 0


# ------------------------------------------------------------------- evaluate


def cmd_evaluate(args) -> int:
    from .metrics import evaluate_set

    base = os.path.dirname(os.path.abspath(args.pairs_manifest))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    pairs, names = [], []
    with open(args.pairs_manifest) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                image, reference = record["image"], record["reference"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise UsageError(
                    f"{args.pairs_manifest}:{lineno}: expected "
                    f'{{"image": ..., "reference": ...}} ({exc})'
                ) from exc
            pairs.append((imgio.read_image(resolve(image)), imgio.read_image(resolve(reference))))
            names.append(os.path.basename(image))
    if not pairs:
        raise UsageError(f"pairs manifest {args.pairs_manifest} is empty")
    _echo_config("evaluate", {"pairs_manifest": args.pairs_manifest, "report": args.report})
    report = evaluate_set(pairs, names=names)
    with open(args.report, "w") as fh:
        fh.write(report.to_json())
    print(report.format_table())
    return 0


# --------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="usrnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="degrade clean images into a training corpus")
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--spec-file", default=None,
                   help="JSON DegradationSpec applied verbatim to every output")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("train", help="train on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", default=None, help="JSON config file (TrainConfig fields)")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=("all_in_one", "one_to_one"), default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("restore", help="restore degraded images with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="PNG file or directory of PNGs")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", default="all",
                   help='"all" chains every node; a kind name uses that node only')
    p.add_argument("--save-edge", action="store_true")
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("evaluate", help="PSNR/SSIM report over (image, reference) pairs")
    p.add_argument("--pairs-manifest", required=True,
                   help='JSON lines: {"image": path, "reference": path}')
    p.add_argument("--report", required=True, help="output JSON path")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures: I/O, bad checkpoints, ...
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
