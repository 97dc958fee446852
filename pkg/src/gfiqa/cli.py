"""Command-line entry point.

Subcommands: synth, build-pairs, train, eval, serve-study, spectrum. Every
run writes its outputs under a run directory named by timestamp and seed and
logs the fully resolved configuration there. Exit codes: 0 success, 1 usage
error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from .config import (
    LossWeights,
    MetaConfig,
    ModelConfig,
    PairPlan,
    TrainConfig,
    apply_overrides,
    load_train_config,
)
from .errors import ConfigurationError, DataError, GfiqaError, PreconditionError

logger = logging.getLogger(__name__)

DATA_ROOT_ENV = "GFIQA_DATA_ROOT"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the toolkit contract is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self._usage_exit(message))

    def _usage_exit(self, message) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return 1


def _data_root() -> Path:
    return Path(os.environ.get(DATA_ROOT_ENV, "."))


def _run_dir(args) -> Path:
    base = Path(args.out) if args.out else _data_root() / "runs"
    seed = getattr(args, "seed", None)
    stamp = time.strftime("%Y%m%d-%H%M%S", time.gmtime())
    run = base / f"{stamp}-seed{0 if seed is None else seed}"
    run.mkdir(parents=True, exist_ok=True)
    return run


def _log_resolved(run_dir: Path, payload: dict) -> None:
    (run_dir / "resolved_config.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=str)
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="gfiqa", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("synth", help="generate the synthetic degradation corpus")
    p.add_argument("--out", default=None, help="output directory root")
    p.add_argument("--n-per-domain", type=int, default=300)
    p.add_argument(
        "--degradations",
        default="blur,noise,block",
        help="comma-separated degradation domains",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-size", type=int, default=256)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-pairs", help="build quality-discriminable pairs")
    p.add_argument("--manifest", action="append", required=True, dest="manifests")
    p.add_argument("--out", default=None)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--top-k", type=int, default=50)
    p.add_argument("--bottom-k", type=int, default=50)
    p.add_argument("--per-anchor", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_build_pairs)

    p = sub.add_parser("train", help="train the quality model")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument(
        "--ablation",
        default="full",
        choices=["full", "no_meta", "no_cba", "no_aba"],
    )
    p.add_argument(
        "--unseen-domain",
        type=int,
        default=None,
        help="domain id excluded from the source domains",
    )
    p.add_argument("--out", default=None)
    p.add_argument(
        "--set",
        action="append",
        default=[],
        dest="overrides",
        metavar="SECTION.KEY=VALUE",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="leave-one-domain-out evaluation report")
    p.add_argument(
        "--checkpoint",
        action="append",
        required=True,
        dest="checkpoints",
        metavar="DOMAIN=PATH",
    )
    p.add_argument("--manifest", action="append", required=True, dest="manifests")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve-study", help="run the subjective-study service")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve_study)

    p = sub.add_parser("spectrum", help="average-spectrum domain diagnostic")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--max-images", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_spectrum)

    return parser


def cmd_synth(args) -> int:
    from .synth import synth_corpus

    run_dir = _run_dir(args)
    degradations = [d.strip() for d in args.degradations.split(",") if d.strip()]
    _log_resolved(
        run_dir,
        {
            "command": "synth",
            "n_per_domain": args.n_per_domain,
            "degradations": degradations,
            "seed": args.seed,
            "image_size": args.image_size,
        },
    )
    manifests = synth_corpus(
        run_dir / "corpus",
        n_per_domain=args.n_per_domain,
        degradations=degradations,
        seed=args.seed,
        image_size=args.image_size,
    )
    for domain_id, path in sorted(manifests.items()):
        print(f"domain {domain_id}: {path}")
    return 0


def cmd_build_pairs(args) -> int:
    from .data import (
        assign_quality_levels,
        build_pairs,
        group_by_domain,
        load_manifest,
        write_pairs,
    )

    run_dir = _run_dir(args)
    plan = PairPlan(
        n_levels=args.levels,
        top_k=args.top_k,
        bottom_k=args.bottom_k,
        per_anchor=args.per_anchor,
        seed=args.seed,
    )
    _log_resolved(
        run_dir,
        {
            "command": "build-pairs",
            "manifests": args.manifests,
            "plan": dataclasses.asdict(plan),
        },
    )
    total = 0
    for manifest in args.manifests:
        images = load_manifest(manifest)
        for domain_id, domain_images in sorted(group_by_domain(images).items()):
            levels = assign_quality_levels(domain_images, plan.n_levels)
            pairs = build_pairs(levels, plan)
            out_path = run_dir / f"pairs_domain{domain_id}.csv"
            write_pairs(pairs, out_path)
            total += len(pairs)
            print(f"domain {domain_id}: {len(pairs)} pairs -> {out_path}")
    print(f"total pairs: {total}")
    return 0


def _load_domains(config: TrainConfig, unseen: Optional[int]):
    from .data import (
        attach_conventional_seg_paths,
        group_by_domain,
        images_by_key,
        load_manifest,
        load_pairs,
    )
    from .training import DomainDataset

    if not config.data.manifests:
        raise DataError("config [data].manifests is empty; nothing to train on")
    if not config.data.pairs_files:
        raise DataError(
            "config [data].pairs_files is empty; run `gfiqa build-pairs` first"
        )
    all_images = []
    manifest_paths: dict[int, Path] = {}
    for manifest in config.data.manifests:
        images = attach_conventional_seg_paths(
            load_manifest(manifest), Path(manifest).parent, config.data.seg_suffix
        )
        all_images.extend(images)
        for domain_id in {im.domain_id for im in images}:
            manifest_paths[domain_id] = Path(manifest)
    key_map = images_by_key(all_images)
    pairs = []
    for pairs_file in config.data.pairs_files:
        pairs.extend(load_pairs(pairs_file, key_map))
    by_domain: dict[int, list] = {}
    for p in pairs:
        by_domain.setdefault(p.domain_id, []).append(p)
    domains = []
    for domain_id, domain_pairs in sorted(by_domain.items()):
        if unseen is not None and domain_id == unseen:
            continue
        domains.append(
            DomainDataset(
                domain_id=domain_id,
                pairs=domain_pairs,
                is_inpainting=(domain_id == config.loss.inpainting_domain),
            )
        )
    if not domains:
        raise DataError("no source domains remain after exclusions")
    images_per_domain = group_by_domain(all_images)
    return domains, manifest_paths, images_per_domain


def cmd_train(args) -> int:
    from .training import BatchAssembler, MetaTrainer, seed_everything

    config = load_train_config(args.config)
    if args.overrides:
        config = apply_overrides(config, args.overrides)
    if args.seed is not None:
        config = apply_overrides(config, [f"meta.seed={args.seed}"])
    args.seed = config.meta.seed
    run_dir = _run_dir(args)
    _log_resolved(
        run_dir,
        {
            "command": "train",
            "config": config.to_dict(),
            "ablation": args.ablation,
            "unseen_domain": args.unseen_domain,
        },
    )
    domains, manifest_paths, images_per_domain = _load_domains(
        config, args.unseen_domain
    )
    seed_everything(config.meta.seed)
    assembler = BatchAssembler(
        manifest_paths,
        images_per_domain,
        config.model,
        inpainting_domain=config.loss.inpainting_domain,
    )
    trainer = MetaTrainer(
        domains=domains,
        assembler=assembler,
        weights=config.loss,
        config=config.meta,
        run_dir=run_dir,
        model_config=config.model,
        ablation=args.ablation,
    )
    result = trainer.train()
    print(f"final checkpoint: {result.final_checkpoint}")
    print(f"best checkpoint:  {result.best_checkpoint}")
    print(f"metrics log:      {result.metrics_path}")
    return 0


def cmd_eval(args) -> int:
    from .data import group_by_domain, load_manifest
    from .evaluation import leave_one_out_eval

    run_dir = _run_dir(args)
    checkpoints: dict[int, Path] = {}
    for item in args.checkpoints:
        if "=" not in item:
            raise ConfigurationError(
                f"--checkpoint {item!r} must be DOMAIN=PATH"
            )
        domain, path = item.split("=", 1)
        ckpt = Path(path)
        if not ckpt.is_file():
            raise DataError(f"checkpoint not found: {ckpt}")
        checkpoints[int(domain)] = ckpt

    test_sets = {}
    manifest_paths = {}
    for manifest in args.manifests:
        images = load_manifest(manifest)
        for domain_id, domain_images in group_by_domain(images).items():
            test_sets[domain_id] = domain_images
            manifest_paths[domain_id] = Path(manifest)
    _log_resolved(
        run_dir,
        {
            "command": "eval",
            "checkpoints": {str(k): str(v) for k, v in checkpoints.items()},
            "manifests": args.manifests,
        },
    )
    report = leave_one_out_eval(
        checkpoints,
        test_sets,
        manifest_paths,
        config_echo={"checkpoints": {str(k): str(v) for k, v in checkpoints.items()}},
    )
    (run_dir / "report.json").write_text(report.to_json())
    text = report.render_text()
    (run_dir / "report.txt").write_text(text)
    print(text, end="")
    return 0


def cmd_serve_study(args) -> int:
    import uvicorn

    from .service import create_app

    data_dir = Path(args.data_dir) if args.data_dir else _data_root() / "study-data"
    app = create_app(data_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_spectrum(args) -> int:
    from .data import load_manifest, resolve_image_path
    from .evaluation import average_spectrum, render_spectrum, save_spectrum
    from .images import to_grayscale

    run_dir = _run_dir(args)
    images = load_manifest(args.manifest)
    if args.max_images is not None:
        images = images[: args.max_images]
    _log_resolved(
        run_dir,
        {
            "command": "spectrum",
            "manifest": args.manifest,
            "n_images": len(images),
        },
    )
    arrays = [
        to_grayscale(resolve_image_path(args.manifest, im)) for im in images
    ]
    spectrum = average_spectrum(arrays)
    save_spectrum(spectrum, run_dir / "spectrum.txt")
    render_spectrum(spectrum, run_dir / "spectrum.png")
    print(f"spectrum matrix: {run_dir / 'spectrum.txt'}")
    print(f"spectrum figure: {run_dir / 'spectrum.png'}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (ConfigurationError, PreconditionError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except GfiqaError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        logger.exception("unhandled failure")
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
