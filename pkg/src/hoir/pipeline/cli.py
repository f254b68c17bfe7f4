"""``hoir`` command line.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
``HOIR_THREADS`` caps numba and BLAS worker threads.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from .config import ConfigError, Variant, load_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("hoir")


def _thread_limit():
    n = os.environ.get("HOIR_THREADS", "").strip()
    if not n:
        return nullcontext()
    try:
        n = int(n)
    except ValueError:
        raise ConfigError(f"HOIR_THREADS must be an integer, got {n!r}") from None
    if n < 1:
        raise ConfigError("HOIR_THREADS must be >= 1")
    from threadpoolctl import threadpool_limits

    from .. import accel
    accel.set_threads(n)
    return threadpool_limits(n)


def _config(args, need_dataset=True, **overrides):
    """Load ``--config``, apply command-line overrides, then validate."""
    cfg = load_config(args.config, need_dataset=False)
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "steps":
            cfg.training.steps = value
        elif key == "seed":
            cfg.training.seed = value
        else:
            setattr(cfg, key, str(Path(value).resolve()))
    return cfg.validate(need_dataset)


def _existing(path, what):
    if not Path(path).exists():
        raise ConfigError(f"{what} not found: {path}")
    return Path(path)


def cmd_gen_data(args):
    cfg = _config(args, need_dataset=False, dataset=args.out)
    if args.seed is not None:
        cfg.generate_seed = args.seed
    from ..scenegen.dataset import generate_dataset
    out = cfg.dataset_dir
    if (out / "dataset.json").exists() and not args.force:
        raise ConfigError(f"{out} already holds a dataset (use --force to overwrite)")
    ids = generate_dataset(out, cfg.generate_seed, cfg.generate, log.info)
    print(f"wrote {len(ids)} scenes to {out}")


def cmd_train(args):
    cfg = _config(args, dataset=args.data, steps=args.steps, seed=args.seed)
    variant = Variant("main", cfg.ablation)
    if args.variant:
        matches = [v for v in cfg.parsed_variants() if v.name == args.variant]
        if not matches:
            raise ConfigError(f"no variant named {args.variant!r} in the config")
        variant = matches[0]
    out = Path(args.out) if args.out else cfg.output_dir / "model.hock"
    from . import runner
    samples = runner.training_data(cfg, log.info)
    digest = runner.data_hash(samples)
    log.info("training data sha256 %s", digest)
    trained = runner.train_variant(cfg, variant, samples, log.info)
    for p in runner.save_trained(trained, out, {"data_hash": digest, "variant": variant.name}):
        print(f"checkpoint: {p}")


def cmd_reconstruct(args):
    from . import runner
    from .inpaint import make_inpainter
    if args.ckpt:
        if not (args.view and args.out):
            raise ConfigError("--ckpt needs --view and --out")
        cfg = _config(args, need_dataset=False) if args.config else None
        if not Path(args.ckpt).exists() and not runner.checkpoint_paths(args.ckpt, ["human"])["human"].exists():
            raise ConfigError(f"checkpoint not found: {args.ckpt}")
        _existing(args.view, "view directory")
        trained = runner.load_trained(args.ckpt)
        inpaint = make_inpainter(cfg.inpainter if cfg else "oracle")
        _, paths = runner.reconstruct_view(trained, args.view, args.res, args.out, inpaint)
        for p in paths:
            print(f"mesh: {p}")
        return
    if not args.config:
        raise ConfigError("reconstruct needs --config or --ckpt/--view/--out")
    cfg = _config(args)
    if args.res:
        cfg.grid_resolution = args.res
    trained = runner.load_trained(cfg.output_dir / "model.hock")
    runner.reconstruct_all(cfg, trained, cfg.output_dir / "recon", log=log.info)
    print(f"meshes written under {cfg.output_dir / 'recon'}")


def cmd_evaluate(args):
    from . import runner
    files = (args.pred, args.pred_human, args.gt, args.gt_human)
    if any(files):
        if not all(files) or not args.out:
            raise ConfigError("file mode needs --pred, --pred-human, --gt, --gt-human and --out")
        from ..geometry.mesh import load_obj
        from ..metrics import DEFAULT_SAMPLES, evaluate
        pred, pred_h, gt, gt_h = (load_obj(_existing(f, "mesh")) for f in files)
        report = evaluate(pred, pred_h, gt, gt_h, n_samples=args.samples or DEFAULT_SAMPLES, tau=args.tau,
                          direction=args.direction).to_dict()
        runner.write_json(args.out, report)
        print("  ".join(f"{k}={report[k]:.6g}" for k in ("p2s", "cd", "iou", "normal", "fscore")))
        return
    if not args.config:
        raise ConfigError("evaluate needs --config or the --pred/--gt file arguments")
    cfg = _config(args)
    ckpt = cfg.output_dir / "model.hock"
    trained = runner.load_trained(ckpt)
    report = runner.evaluate_dir(cfg, cfg.output_dir / "recon", trained.union, log.info)
    runner.write_json(args.out or cfg.output_dir / "metrics.json", report)
    m = report["mean"]["joint"]
    print("joint mean: " + "  ".join(f"{k}={m[k]:.4f}" for k in ("p2s", "cd", "iou", "normal", "fscore")))
    print(f"raw distances: p2s={m['p2s_raw']:.6g} cd={m['cd_raw']:.6g}")


def cmd_ablate(args):
    cfg = _config(args)
    if args.variants:
        cfg.variants = [v.strip() for v in args.variants.split(",") if v.strip()]
        cfg.validate()
    from . import runner
    rows = runner.run_ablation_matrix(cfg, log=log.info, out_dir=cfg.output_dir / "ablation")
    runner.write_json(cfg.output_dir / "ablation.json", rows)
    table = runner.format_table(rows)
    (cfg.output_dir / "ablation.txt").write_text(table + "\n")
    print(table)
    if any(r["error"] for r in rows):
        return EXIT_RUNTIME


def cmd_selftest(args):
    from .selftest import run_selftest
    ok = run_selftest(print, quick=args.quick)
    return EXIT_OK if ok else EXIT_RUNTIME


def build_parser():
    p = argparse.ArgumentParser(prog="hoir", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, fn, help_, config_required=True):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=config_required, help="experiment JSON file")
        sp.set_defaults(fn=fn)
        return sp

    g = command("gen-data", cmd_gen_data, "generate the synthetic dataset")
    g.add_argument("--out", help="dataset directory (overrides the config)")
    g.add_argument("--seed", type=int, help="generation seed (overrides the config)")
    g.add_argument("--force", action="store_true", help="overwrite an existing dataset")

    t = command("train", cmd_train, "train a model on the training views")
    t.add_argument("--data", help="dataset directory (overrides the config)")
    t.add_argument("--out", help="checkpoint path (default <output>/model.hock)")
    t.add_argument("--steps", type=int, help="training steps (overrides the config)")
    t.add_argument("--seed", type=int, help="training seed (overrides the config)")
    t.add_argument("--variant", help="train this named variant instead of the main ablation")

    r = command("reconstruct", cmd_reconstruct, "extract meshes from a trained model", False)
    r.add_argument("--ckpt", help="checkpoint file (single-view mode)")
    r.add_argument("--view", help="dataset view directory scenes/<id>/views/<k>")
    r.add_argument("--res", type=int, default=None, help="grid nodes along the longest axis")
    r.add_argument("--out", help="output prefix; writes <prefix>_{human,object,joint}.obj")

    e = command("evaluate", cmd_evaluate, "score reconstructed meshes", False)
    e.add_argument("--pred", help="predicted joint mesh (file mode)")
    e.add_argument("--pred-human", help="predicted human mesh")
    e.add_argument("--gt", help="ground-truth joint mesh")
    e.add_argument("--gt-human", help="ground-truth human mesh")
    e.add_argument("--out", help="report JSON path")
    e.add_argument("--samples", type=int, help="surface samples per direction (default 10000)")
    e.add_argument("--tau", type=float, help="f-score threshold (default 1%% of the gt diagonal)")
    e.add_argument("--direction", choices=("pred_to_gt", "gt_to_pred"), default="pred_to_gt")

    a = command("ablate", cmd_ablate, "train and score every variant")
    a.add_argument("--variants", help="comma-separated variant names overriding the config")

    s = sub.add_parser("selftest", help="run the built-in oracle and gradient checks")
    s.add_argument("--quick", action="store_true", help="skip the slower checks")
    s.set_defaults(fn=cmd_selftest)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        with _thread_limit():
            code = args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        raise
    except Exception as e:  # noqa: BLE001 - reported, not swallowed
        log.debug("failure", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
