"""Command-line interface.

Subcommands: soundboard, curate, train, infer, eval, stats.
Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from collisionseg import evaluation, pipeline as pipe  # noqa: E402
from collisionseg.audio import load_wav  # noqa: E402
from collisionseg.checkpoint import CheckpointError, load_checkpoint  # noqa: E402
from collisionseg.config import (  # noqa: E402
    STRATEGIES,
    ConfigError,
    RunConfig,
    load_config,
    source_revision,
)
from collisionseg.curation import (  # noqa: E402
    CurationConfig,
    OracleClassifier,
    SoundEvent,
    extract_clips,
    filter_collisions,
    write_drop_report,
)
from collisionseg.manifest import ManifestError, read_manifest, write_manifest  # noqa: E402
from collisionseg.masks import Image, mask_to_rle, save_mask_png  # noqa: E402
from collisionseg.model import build_bundle  # noqa: E402
from collisionseg.sampling import DirectoryStore  # noqa: E402
from collisionseg.soundboard import SoundboardConfig, generate_soundboard  # noqa: E402
from collisionseg.stats import dataset_stats  # noqa: E402

log = logging.getLogger("collisionseg")


class UsageError(Exception):
    """Bad invocation or inputs; exit code 2."""


def cache_dir() -> Path:
    return Path(os.environ.get("COLLISIONSEG_CACHE", Path.home() / ".cache" / "collisionseg"))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="collisionseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("soundboard", help="generate the synthetic benchmark dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--materials", type=int, default=6)
    p.add_argument("--canvas", type=int, default=64)
    p.add_argument("--train", type=int, default=2000)
    p.add_argument("--test", type=int, default=200)
    p.add_argument("--distractors", type=int, default=3)
    p.add_argument("--single-rate", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("curate", help="extract clips, filter collisions, write manifest")
    p.add_argument("--annotations", required=True)
    p.add_argument("--media", default=None, help="media root for amplitude probing")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", default=None, help="YAML file listing collision classes")
    p.add_argument("--min-amplitude", type=float, default=None)
    p.add_argument("--split", default="train", choices=["train", "test"])

    p = sub.add_parser("train", help="train the audio branch on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--set", dest="overrides", action="append", default=[])
    p.add_argument("--resume", default=None)

    p = sub.add_parser("infer", help="predict collision masks for one image + audio")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--audio", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-hoi", action="store_true", help="audio-conditioned mask only")
    p.add_argument(
        "--hands",
        default=None,
        choices=["right", "left", "right-left", "right-av", "left-av", "touch"],
        help="hand-based candidate strategy instead of full verification",
    )
    p.add_argument("--manifest", default=None, help="manifest for oracle adapters")
    p.add_argument("--sample-id", default=None)
    p.add_argument("--set", dest="overrides", action="append", default=[])

    p = sub.add_parser("eval", help="evaluate a predictor over a test manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--baseline", default=None, choices=["centre", "random", "oracle"])
    p.add_argument("--strategy", default=None, choices=list(STRATEGIES))
    p.add_argument("--ablate", action="store_true", help="run the ablation variant matrix")
    p.add_argument("--force", action="store_true", help="allow mixed config hashes")
    p.add_argument("--config", default=None)
    p.add_argument("--set", dest="overrides", action="append", default=[])
    p.add_argument("--seed", type=int, default=None, help="seed for the random baseline")

    p = sub.add_parser("stats", help="dataset statistics report from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("LOGLEVEL", "INFO"), format="%(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "soundboard": cmd_soundboard,
        "curate": cmd_curate,
        "train": cmd_train,
        "infer": cmd_infer,
        "eval": cmd_eval,
        "stats": cmd_stats,
    }
    try:
        return handlers[args.command](args)
    except (UsageError, ConfigError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        log.exception("command failed: %s", exc)
        return 1


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def cmd_soundboard(args) -> int:
    cfg = SoundboardConfig(
        n_materials=args.materials,
        canvas=args.canvas,
        n_train=args.train,
        n_test=args.test,
        n_distractors=args.distractors,
        single_object_rate=args.single_rate,
        seed=args.seed,
    )
    summary = generate_soundboard(cfg, args.out)
    print(
        f"soundboard written to {summary.out_dir}: {summary.n_train} train / "
        f"{summary.n_test} test, max pair correlation {summary.max_pair_correlation:.3f}"
    )
    return 0


def cmd_curate(args) -> int:
    path = _require_file(args.annotations, "annotations file")
    spec = json.loads(path.read_text())
    mode = spec.get("mode", "sound-intervals")
    durations = {vid: info["duration"] for vid, info in spec.get("videos", {}).items()}
    events = [SoundEvent(**ev) for ev in spec.get("events", [])]

    kwargs = {}
    if args.classes:
        import yaml

        listed = yaml.safe_load(_require_file(args.classes, "classes file").read_text())
        kwargs["collision_classes"] = frozenset(listed)
    if args.min_amplitude is not None:
        kwargs["min_mean_amplitude"] = args.min_amplitude
    ccfg = CurationConfig(**kwargs)

    records, extraction_drops = extract_clips(events, durations, ccfg, mode, split=args.split)

    amplitudes = {
        f"{ev.video_id}:{idx:06d}": ev.mean_amplitude
        for idx, ev in enumerate(events)
        if ev.mean_amplitude is not None
    }
    store = DirectoryStore(args.media) if args.media else None

    def amplitude_fn(rec) -> float:
        if rec.sample_id in amplitudes:
            return amplitudes[rec.sample_id]
        if store is not None:
            return store.mean_amplitude(rec)
        raise UsageError(
            f"no amplitude source for {rec.sample_id}: provide --media or mean_amplitude fields"
        )

    kept, filter_drops = filter_collisions(records, OracleClassifier(), ccfg, amplitude_fn)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "kind": "curated",
        "mode": mode,
        "config_hash": ccfg.config_hash(),
        "revision": source_revision(),
        "n_kept": len(kept),
        "n_dropped": len(extraction_drops) + len(filter_drops),
    }
    write_manifest(kept, out / "manifest.ndjson", meta)
    write_drop_report(extraction_drops + filter_drops, out / "drop_report.csv")
    dataset_stats(kept, out / "stats")
    print(f"kept {len(kept)} records, dropped {meta['n_dropped']}; manifest at {out}")
    return 0


def cmd_train(args) -> int:
    from collisionseg.train import train

    manifest = _require_file(args.manifest, "manifest")
    data = _require_file(args.data, "data directory")
    cfg = load_config(args.config, args.overrides)
    out = Path(args.out) if args.out else cache_dir() / "train"
    store = DirectoryStore(data)
    result = train(cfg, manifest, store, out, resume=args.resume)
    print(
        f"trained {result.steps_run} steps; loss {result.first_loss:.4f} -> "
        f"{result.last_loss:.4f}; checkpoint at {result.checkpoint_path}"
    )
    return 0


def cmd_infer(args) -> int:
    image_path = _require_file(args.image, "image")
    audio_path = _require_file(args.audio, "audio file")
    loaded = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    cfg = _apply_overrides(loaded.cfg, args.overrides)

    record = None
    if args.manifest:
        _, records = read_manifest(_require_file(args.manifest, "manifest"))
        by_id = {r.sample_id: r for r in records}
        if args.sample_id not in by_id:
            raise UsageError(f"sample id {args.sample_id!r} not present in manifest")
        record = by_id[args.sample_id]

    from PIL import Image as PILImage

    image = Image.from_uint8(np.asarray(PILImage.open(image_path).convert("RGB")))
    clip = load_wav(audio_path)

    strategy = "av" if args.no_hoi else (args.hands or cfg.strategy)
    runner = pipe.CollisionPipeline(loaded.bundle, cfg)
    prediction = runner.predict(image, clip, record=record, strategy=strategy)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "config_hash": cfg.config_hash(),
        "revision": source_revision(),
        "strategy": strategy,
        "n_masks": len(prediction.masks),
        "provenance": list(prediction.provenance),
        "frame_size": [image.height, image.width],
        "masks_rle": [mask_to_rle(m) for m in prediction.masks],
    }
    (out / "prediction.json").write_text(json.dumps(payload, indent=2))
    for i, mask in enumerate(prediction.masks):
        save_mask_png(mask, out / f"mask_{i}.png")
    _save_overlay(image, prediction, out / "overlay.png")
    print(f"predicted {len(prediction.masks)} mask(s) -> {out}")
    return 0


def _apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    updates = {}
    from collisionseg.config import _coerce

    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown config key {key!r}")
        updates[key] = _coerce(value, getattr(cfg, key), key)
    return cfg.replace(**updates)


def _save_overlay(image: Image, prediction, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(np.transpose(image.pixels, (1, 2, 0)))
    colors = ((1.0, 0.2, 0.2), (0.2, 0.6, 1.0))
    for mask, color in zip(prediction.masks, colors):
        overlay = np.zeros((*mask.shape, 4))
        overlay[mask.grid.astype(bool)] = (*color, 0.45)
        ax.imshow(overlay)
    ax.set_axis_off()
    fig.tight_layout(pad=0)
    fig.savefig(path, dpi=130)
    plt.close(fig)


def cmd_eval(args) -> int:
    manifest_path = _require_file(args.manifest, "manifest")
    data = _require_file(args.data, "data directory")
    meta, records = read_manifest(manifest_path)
    test_records = [r for r in records if r.split == "test"]
    if not test_records:
        raise UsageError("manifest contains no test records")
    store = DirectoryStore(data)
    out = Path(args.out) if args.out else cache_dir() / "eval"

    if (args.checkpoint is None) == (args.baseline is None):
        raise UsageError("provide exactly one of --checkpoint or --baseline")
    if args.ablate and args.checkpoint is None:
        raise UsageError("--ablate requires a checkpoint")

    run_meta = {
        "manifest_hash": meta.get("data_hash", ""),
        "revision": source_revision(),
    }

    if args.baseline == "centre":
        result = evaluation.evaluate_records(test_records, pipe.make_centre_predictor())
        evaluation.write_eval_outputs(result, out, {**run_meta, "predictor": "centre"})
        print(f"centre baseline: mIoU {result.miou:.2f} AUC {result.auc:.2f}")
        return 1 if result.n_failures else 0
    if args.baseline == "oracle":
        result = evaluation.evaluate_records(test_records, pipe.make_oracle_predictor())
        evaluation.write_eval_outputs(result, out, {**run_meta, "predictor": "oracle"})
        print(f"oracle predictor: mIoU {result.miou:.2f} AUC {result.auc:.2f}")
        return 1 if result.n_failures else 0
    if args.baseline == "random":
        cfg = load_config(args.config, args.overrides)
        bundle = build_bundle(cfg)
        seed = args.seed if args.seed is not None else cfg.seed + 1
        bundle = pipe.randomized_audio_branch(bundle, seed)
        runner = pipe.CollisionPipeline(bundle, cfg)
        predictor = pipe.make_record_predictor(
            runner, store, strategy="av", flags=pipe.VariantFlags(use_sam_av=False)
        )
        result = evaluation.evaluate_records(test_records, predictor, cfg.per_sample_first)
        evaluation.write_eval_outputs(
            result,
            out,
            {
                **run_meta,
                "predictor": "random",
                "config_hash": cfg.config_hash(),
                "config": cfg.to_dict(),
            },
        )
        print(f"random baseline: mIoU {result.miou:.2f} AUC {result.auc:.2f}")
        return 1 if result.n_failures else 0

    loaded = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    if loaded.manifest_hash and meta.get("data_hash") and loaded.manifest_hash != meta["data_hash"]:
        if not args.force:
            raise UsageError(
                "manifest hash does not match the one this checkpoint was trained on "
                "(rerun with --force to evaluate anyway)"
            )
    cfg = _apply_overrides(loaded.cfg, args.overrides)
    runner = pipe.CollisionPipeline(loaded.bundle, cfg)

    model_meta = {**run_meta, "config_hash": cfg.config_hash(), "config": cfg.to_dict()}
    if args.ablate:
        rows = []
        for name, flags in pipe.ABLATION_VARIANTS:
            predictor = pipe.make_record_predictor(runner, store, strategy="verify", flags=flags)
            result = evaluation.evaluate_records(test_records, predictor, cfg.per_sample_first)
            evaluation.write_eval_outputs(result, out / name, {**model_meta, "predictor": name})
            rows.append({"variant": name, "miou": round(result.miou, 4), "auc": round(result.auc, 4)})
            print(f"{name}: mIoU {result.miou:.2f} AUC {result.auc:.2f}")
        (out / "ablation_summary.json").write_text(json.dumps(rows, indent=2))
        return 0

    strategy = args.strategy or cfg.strategy
    flags = pipe.VariantFlags() if strategy != "av" else pipe.VariantFlags(use_sam_av=False)
    predictor = pipe.make_record_predictor(runner, store, strategy=strategy, flags=flags)
    result = evaluation.evaluate_records(test_records, predictor, cfg.per_sample_first)
    evaluation.write_eval_outputs(result, out, {**model_meta, "predictor": strategy})
    print(f"{strategy}: mIoU {result.miou:.2f} AUC {result.auc:.2f}")
    return 1 if result.n_failures else 0


def cmd_stats(args) -> int:
    manifest_path = _require_file(args.manifest, "manifest")
    _, records = read_manifest(manifest_path)
    report = dataset_stats(records, args.out)
    print(json.dumps(report["summary"], indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
