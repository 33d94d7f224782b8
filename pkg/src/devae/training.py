"""The training loop: batches, optimizer steps, tracking, checkpoints, resume.

Artifacts written into the run's output directory:

* ``config.txt``    - the serialized configuration.
* ``losses.csv``    - one row per iteration: total loss, per-space recon/KL.
* ``metrics.csv``   - one row per evaluation checkpoint: loss terms,
                      per-dimension KL, and the NMI row of the highest-KL
                      dimension (space 0).
* ``latest.ckpt``   - rolling checkpoint (parameters + Adam state), enables
                      resume with no discontinuity: per-iteration random
                      streams are keyed by iteration index, so the continued
                      run replays exactly what an uninterrupted one would do.
* ``model.ckpt``    - final checkpoint.
* ``report.json``   - full metric report at the end of training.
* ``abort.txt``     - written only when a non-finite loss stops the run.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from devae.checkpoint import load_checkpoint, save_checkpoint
from devae.config import RunConfig, parse_kv_text
from devae.data import FactorDataset, generate_dataset, load_dataset, parse_spec_string
from devae.errors import ConfigurationError, NumericalAbort
from devae.metrics import MetricsReport, collect_latents, evaluate_model, nmi_track
from devae.models import Model, forward_loss
from devae.nn import AdamState, Tape, adam_step
from devae.rng import stream

__all__ = ["TrainResult", "train", "load_run_dataset", "load_model", "read_csv"]

STATE_SEPARATOR = "--- state ---"


@dataclass
class TrainResult:
    out_dir: str
    checkpoint_path: str
    losses_csv: str
    metrics_csv: str
    report_path: str
    report: MetricsReport
    final_iteration: int


def load_run_dataset(config: RunConfig) -> FactorDataset:
    if config.dataset:
        return load_dataset(config.dataset)
    return generate_dataset(
        parse_spec_string(config.data_spec), resolution=config.resolution, seed=config.seed
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def _config_comment(config: RunConfig) -> str:
    return "".join(f"# {line}\n" for line in config.to_text().splitlines())


def _noise_for(config: RunConfig, iteration: int, batch: int) -> np.ndarray:
    gen = stream(config.seed, "noise", iteration)
    k, d = config.spaces, config.latent_dim
    if config.shared_noise:
        shared = gen.standard_normal((1, batch, d))
        return np.repeat(shared, k, axis=0)
    return gen.standard_normal((k, batch, d))


def _state_header(config: RunConfig, iteration: int, adam: AdamState, n_params: int) -> str:
    return (
        config.to_text()
        + STATE_SEPARATOR
        + "\n"
        + f"iteration = {iteration}\n"
        + f"adam_step = {adam.step}\n"
        + f"n_params = {n_params}\n"
    )


def _save_state(path: str, config: RunConfig, iteration: int, model: Model, adam: AdamState):
    params = [p.data for p in model.parameters()]
    tensors = params + adam.m + adam.v
    save_checkpoint(path, _state_header(config, iteration, adam, len(params)), tensors)


def load_model(path: str) -> tuple[Model, RunConfig, int, AdamState]:
    """Rebuild a model (and optimizer state) from a checkpoint file."""
    header, tensors = load_checkpoint(path)
    config_text, _, state_text = header.partition(STATE_SEPARATOR)
    config = RunConfig.from_text(config_text)
    state = parse_kv_text(state_text)
    iteration = int(state["iteration"])
    n_params = int(state["n_params"])
    model = Model(config.variant, config.hierarchy(), config.architecture(), seed=config.seed)
    params = model.parameters()
    if len(params) != n_params or len(tensors) != 3 * n_params:
        raise ConfigurationError(f"{path} does not match the configured parameter layout")
    for p, arr in zip(params, tensors[:n_params]):
        if p.data.shape != arr.shape:
            raise ConfigurationError(f"parameter shape mismatch in {path}")
        p.data = arr
    adam = AdamState(params)
    adam.load(tensors[n_params : 2 * n_params], tensors[2 * n_params :], int(state["adam_step"]))
    return model, config, iteration, adam


def read_csv(path: str) -> tuple[list[str], np.ndarray]:
    """Read one of the run CSVs: returns (column names, float matrix)."""
    names: list[str] = []
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if not names:
                names = line.split(",")
                continue
            rows.append([float(v) for v in line.split(",")])
    return names, np.array(rows)


def train(config: RunConfig) -> TrainResult:
    """Run the optimization loop described by ``config``.

    Per iteration: encode the batch, sample every space (space 0 directly,
    later spaces through the transition cascade), decode each sample with its
    space indicator, assemble the pressure-weighted objective, and take one
    Adam step.
    """
    config.validate()
    if not config.out_dir:
        raise ConfigurationError("out_dir must be set")
    os.makedirs(config.out_dir, exist_ok=True)
    dataset = load_run_dataset(config)
    if dataset.resolution != config.resolution or dataset.channels != config.channels:
        raise ConfigurationError(
            f"dataset geometry {dataset.resolution}x{dataset.resolution}x{dataset.channels} "
            f"does not match config {config.resolution}x{config.resolution}x{config.channels}"
        )

    model = Model(config.variant, config.hierarchy(), config.architecture(), seed=config.seed)
    params = model.parameters()
    adam = AdamState(params)
    start_iteration = 0

    out = config.out_dir
    latest = os.path.join(out, "latest.ckpt")
    losses_path = os.path.join(out, "losses.csv")
    metrics_path = os.path.join(out, "metrics.csv")

    if config.resume and os.path.exists(latest):
        model, _, start_iteration, adam = load_model(latest)
        params = model.parameters()
        mode = "a"
    else:
        mode = "w"

    with open(os.path.join(out, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(config.to_text())

    k = config.spaces
    factor_count = dataset.num_factors
    losses_fh = open(losses_path, mode, encoding="utf-8")
    metrics_fh = open(metrics_path, mode, encoding="utf-8")
    try:
        if mode == "w":
            losses_fh.write(_config_comment(config))
            losses_fh.write(
                "iteration,loss,"
                + ",".join(f"recon_{i}" for i in range(k))
                + ","
                + ",".join(f"kl_{i}" for i in range(k))
                + "\n"
            )
            metrics_fh.write(_config_comment(config))
            metrics_fh.write(
                "iteration,loss,"
                + ",".join(f"recon_{i}" for i in range(k))
                + ","
                + ",".join(f"kl_{i}" for i in range(k))
                + ","
                + ",".join(f"kld_{j}" for j in range(config.latent_dim))
                + ",top_dim,"
                + ",".join(f"nmi_{f}" for f in range(factor_count))
                + "\n"
            )

        last_iteration = start_iteration
        for t in range(start_iteration, config.iterations):
            batch_idx = stream(config.seed, "data", t).integers(0, len(dataset), config.batch_size)
            x = dataset.batch(batch_idx)
            noise = _noise_for(config, t, config.batch_size)
            try:
                with Tape() as tape:
                    out_loss = forward_loss(model, x, noise, loss_kind=config.loss, iteration=t)
                tape.backward(out_loss.total)
            except NumericalAbort as abort:
                with open(os.path.join(out, "abort.txt"), "w", encoding="utf-8") as fh:
                    fh.write(f"iteration = {t}\nterm = {abort.term}\nmessage = {abort}\n")
                raise
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
            adam_step(
                params,
                grads,
                adam,
                lr=config.lr,
                beta1=config.adam_beta1,
                beta2=config.adam_beta2,
                eps=config.adam_eps,
            )
            for p in params:
                p.zero_grad()

            total = out_loss.total.item()
            recons = out_loss.recon_values
            kls = out_loss.kl_totals
            losses_fh.write(
                f"{t},{_fmt(total)},"
                + ",".join(_fmt(v) for v in recons)
                + ","
                + ",".join(_fmt(v) for v in kls)
                + "\n"
            )

            done = t + 1
            if done % config.eval_every == 0 or done == config.iterations:
                tracked = collect_latents(
                    model,
                    dataset,
                    0,
                    n=config.track_samples,
                    rng=stream(config.seed, "track", t),
                    representation="mean",
                )
                _, nmi_row, top_dim = nmi_track(tracked, bins=config.mi_bins)
                metrics_fh.write(
                    f"{t},{_fmt(total)},"
                    + ",".join(_fmt(v) for v in recons)
                    + ","
                    + ",".join(_fmt(v) for v in kls)
                    + ","
                    + ",".join(_fmt(v) for v in tracked.kl_per_dim)
                    + f",{top_dim},"
                    + ",".join(_fmt(v) for v in nmi_row)
                    + "\n"
                )
                metrics_fh.flush()
                losses_fh.flush()
                _save_state(latest, config, done, model, adam)
            last_iteration = done
    finally:
        losses_fh.close()
        metrics_fh.close()

    final_path = os.path.join(out, "model.ckpt")
    _save_state(final_path, config, last_iteration, model, adam)
    report = evaluate_model(
        model,
        dataset,
        seed=config.seed,
        n_samples=config.eval_samples,
        bins=config.mi_bins,
        votes=config.fv_votes,
        fv_batch=config.fv_batch,
        kl_threshold=config.kl_prune_threshold,
        recon_samples=config.recon_samples,
        loss_kind=config.loss,
    )
    report.metadata["config"] = config.to_text()
    report.metadata["iteration"] = last_iteration
    report_path = os.path.join(out, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    return TrainResult(
        out_dir=out,
        checkpoint_path=final_path,
        losses_csv=losses_path,
        metrics_csv=metrics_path,
        report_path=report_path,
        report=report,
        final_iteration=last_iteration,
    )
