"""Command-line interface.

Subcommands: gen-data, train, eval, traverse, sample, ablate, sweep.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical abort.
Every run-producing command requires --seed and --out.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace

from devae.config import RunConfig
from devae.errors import ConfigurationError, DataError, NumericalAbort

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_CONFIG_FLAGS = [f.name for f in fields(RunConfig) if f.name not in ("seed", "out_dir", "resume")]


def _add_config_flags(parser: argparse.ArgumentParser, include_run_keys: bool = True) -> None:
    parser.add_argument("--config", help="key = value config file; flags override its entries")
    parser.add_argument("--seed", type=int, required=True, help="run seed (mandatory)")
    parser.add_argument("--out", required=True, help="output directory (mandatory)")
    if include_run_keys:
        for name in _CONFIG_FLAGS:
            parser.add_argument(f"--{name.replace('_', '-')}", dest=name, default=None)


def _build_config(args: argparse.Namespace) -> RunConfig:
    from devae.config import parse_kv_text

    config = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {
        name: str(getattr(args, name))
        for name in _CONFIG_FLAGS
        if getattr(args, name, None) is not None
    }
    if overrides:
        config = RunConfig.from_mapping({**parse_kv_text(config.to_text()), **overrides})
    config = replace(config, seed=args.seed, out_dir=args.out)
    if getattr(args, "resume", False):
        config = replace(config, resume=True)
    return config.validate()


def _cmd_gen_data(args) -> int:
    from devae.data import generate_dataset, parse_spec_string, save_dataset

    specs = parse_spec_string(args.spec)
    dataset = generate_dataset(specs, resolution=args.resolution, seed=args.seed)
    save_dataset(args.out, dataset)
    print(f"wrote {len(dataset)} images ({dataset.resolution}px) to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    from devae.training import train

    config = _build_config(args)
    result = train(config)
    print(f"finished {result.final_iteration} iterations; report at {result.report_path}")
    for i, space in enumerate(result.report.spaces):
        fv = "n/a" if space.factor_vae_score is None else f"{space.factor_vae_score:.3f}"
        print(
            f"space {i}: mig={space.mig:.3f} dci={space.dci_disentanglement:.3f} "
            f"factor-vae={fv} recon={space.recon_error:.2f}"
        )
    return EXIT_OK


def _cmd_eval(args) -> int:
    from devae.metrics import evaluate_model
    from devae.training import load_model, load_run_dataset

    model, config, iteration, _ = load_model(args.checkpoint)
    dataset = load_run_dataset(replace(config, dataset=args.dataset or config.dataset))
    report = evaluate_model(
        model,
        dataset,
        seed=args.seed,
        n_samples=config.eval_samples,
        bins=config.mi_bins,
        votes=config.fv_votes,
        fv_batch=config.fv_batch,
        kl_threshold=config.kl_prune_threshold,
        recon_samples=config.recon_samples,
        loss_kind=config.loss,
    )
    report.metadata["config"] = config.to_text()
    report.metadata["iteration"] = iteration
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    print(f"wrote report to {args.out}")
    return EXIT_OK


def _cmd_traverse(args) -> int:
    from devae.training import load_model, load_run_dataset
    from devae.traversal import traverse

    model, config, _, _ = load_model(args.checkpoint)
    config = replace(config, seed=args.seed)
    dataset = load_run_dataset(config)
    paths = traverse(
        model,
        dataset,
        config,
        args.out,
        space_i=args.space,
        value_range=(args.low, args.high),
        steps=args.steps,
        top_k=args.top_k,
        n_seeds=args.seeds,
    )
    print(f"wrote {len(paths)} traversal grids to {args.out}")
    return EXIT_OK


def _cmd_sample(args) -> int:
    from devae.training import load_model
    from devae.traversal import sample_prior

    model, config, _, _ = load_model(args.checkpoint)
    config = replace(config, seed=args.seed)
    paths = sample_prior(model, config, args.out, args.n)
    print(f"wrote {len(paths)} samples to {args.out}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    from devae.experiments import ablate

    config = _build_config(args)
    summary = ablate(config, args.out)
    for variant, spaces in summary["variants"].items():
        migs = "/".join(f"{s['mig']:.3f}" for s in spaces)
        recons = "/".join(f"{s['recon_error']:.1f}" for s in spaces)
        print(f"{variant:12s} mig {migs}  recon {recons}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from devae.experiments import sweep

    config = _build_config(args)
    if args.mode == "ladder":
        values = [[float(v) for v in ladder.split(",")] for ladder in args.values.split(";")]
    else:
        values = [float(v) for v in args.values.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    records = sweep(config, args.mode, values, args.out, seeds=seeds)
    print(f"swept {len(records)} runs; frontier at {args.out}/frontier.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="devae",
        description="Hierarchical-latent-space disentanglement laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render a factor-labeled sprite dataset")
    p.add_argument("--spec", required=True, help="e.g. pos_x:16,pos_y:16,scale:4")
    p.add_argument("--resolution", type=int, default=16)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output dataset file")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="run the training loop")
    _add_config_flags(p)
    p.add_argument("--resume", action="store_true", help="continue from latest.ckpt in --out")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", default=None, help="override the dataset path")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output report path (JSON)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("traverse", help="emit latent traversal grids")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--space", type=int, default=0)
    p.add_argument("--low", type=float, default=-2.0)
    p.add_argument("--high", type=float, default=2.0)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--seeds", type=int, default=3, help="number of seed images")
    p.set_defaults(func=_cmd_traverse)

    p = sub.add_parser("sample", help="decode unit-normal prior draws")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("ablate", help="train and compare the four variants")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("sweep", help="grid sweeps over bottleneck pressures")
    _add_config_flags(p)
    p.add_argument("--mode", required=True, choices=("beta_x", "beta_1_x", "beta_x_40", "ladder"))
    p.add_argument("--values", required=True, help="comma list, or ';'-separated ladders")
    p.add_argument("--seeds", default=None, help="comma list of seeds (default: --seed)")
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
