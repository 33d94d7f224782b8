"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Fast criteria (1-5, 9) run in about two minutes. Criteria 6-8 train
desk-scale models (5 seeds x 20k iterations plus the pressure sweeps) and
dominate the runtime; they share their training runs through module-scoped
fixtures. Run just the fast ones with:

    pytest tests/test_acceptance.py -k "not desk and not sweep"
"""

import os
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

from devae.config import RunConfig
from devae.data import generate_dataset, sample_fixed_factor_batch, toy_default_specs
from devae.hierarchy import (
    DiTChain,
    GaussianParams,
    HierarchyConfig,
    cascade_params,
    correlation_matrix,
    dit_apply,
    kl_chain,
    kl_standard,
)
from devae.metrics import (
    LatentSampleSet,
    collect_latents,
    dci_disentanglement,
    discretize,
    factor_vae_score,
    mig,
    nmi_track,
)
from devae.models import ArchitectureConfig, Model, ModelVariant, forward_loss
from devae.nn import Tape, Tensor, central_difference, max_relative_error, ops
from devae.nn.convolution import conv2d, deconv2d
from devae.rng import stream
from devae.training import read_csv, train

# ---------------------------------------------------------------------------
# Desk-scale configuration shared by criteria 6-8
# ---------------------------------------------------------------------------

DESK_SEEDS = (0, 1, 2, 3, 4)
DESK_ITERATIONS = 20_000
DESK_LR = 1e-4
SWEEP_ITERATIONS = 8_000

DESK_KW = dict(
    data_spec="pos_x:16,pos_y:16,scale:4",
    resolution=16,
    arch_widths=(128, 128),
    latent_dim=10,
    batch_size=64,
    eval_every=500,
    track_samples=2048,
    eval_samples=10_000,
    recon_samples=1024,
    fv_votes=400,
    lr=DESK_LR,
    iterations=DESK_ITERATIONS,
)


def _verdict(number: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"\n[ACCEPTANCE {number}] {name}: {status}{suffix}")
    assert ok, f"criterion {number} ({name}) failed: {detail}"


@pytest.fixture(scope="module")
def toy():
    return generate_dataset(toy_default_specs(), resolution=16, seed=0)


@pytest.fixture(scope="module")
def quick_checkpoint(tmp_path_factory, toy):
    """A modest but genuinely trained model for the invariance suite."""
    out = str(tmp_path_factory.mktemp("quick_ckpt"))
    config = RunConfig(
        variant="devae",
        spaces=2,
        betas=(1.0, 40.0),
        seed=13,
        out_dir=out,
        lr=1e-3,
        iterations=2000,
        eval_every=1000,
        track_samples=1024,
        eval_samples=2048,
        recon_samples=512,
        fv_votes=100,
        **{k: v for k, v in DESK_KW.items() if k in ("data_spec", "resolution", "arch_widths", "latent_dim", "batch_size")},
    )
    result = train(config)
    from devae.training import load_model

    model, _, _, _ = load_model(result.checkpoint_path)
    return model


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    """Criterion 6/8 training runs: 5-seed DeVAE (1,10,40) and beta-VAE(1)."""
    root = str(tmp_path_factory.mktemp("desk"))
    runs = {"devae": [], "beta": []}
    for seed in DESK_SEEDS:
        cfg = RunConfig(
            variant="devae", spaces=3, betas=(1.0, 10.0, 40.0), seed=seed,
            out_dir=os.path.join(root, f"devae_{seed}"), **DESK_KW,
        )
        runs["devae"].append(train(cfg))
        cfg = RunConfig(
            variant="beta-vae", spaces=1, betas=(1.0,), seed=seed,
            out_dir=os.path.join(root, f"beta_{seed}"), **DESK_KW,
        )
        runs["beta"].append(train(cfg))
    return runs


@pytest.fixture(scope="module")
def sweep_runs(tmp_path_factory):
    """Criterion 7 runs: pressure sweeps at reduced iteration count."""
    from devae.experiments import sweep

    root = str(tmp_path_factory.mktemp("sweeps"))
    base = RunConfig(variant="devae", **{**DESK_KW, "iterations": SWEEP_ITERATIONS})
    disent = sweep(
        base, "beta_1_x", [1, 5, 10, 20, 40], os.path.join(root, "b1x"), seeds=DESK_SEEDS
    )
    recon = sweep(base, "beta_x_40", [1, 2, 4], os.path.join(root, "bx40"), seeds=DESK_SEEDS)
    return {"disent": disent, "recon": recon}


# ---------------------------------------------------------------------------
# 1. Gradient oracle
# ---------------------------------------------------------------------------


def test_criterion_1_gradient_oracle(toy):
    started = time.time()
    rng = np.random.default_rng(100)
    errors = []

    # Full desk-architecture hierarchy loss: affine + relu + the latent
    # cascade + both KL routes + BCE, checked at 2 coordinates per tensor.
    arch = ArchitectureConfig(kind="mlp", widths=(128, 128), resolution=16, latent_dim=10)
    model = Model(ModelVariant.DEVAE, HierarchyConfig(3, (1.0, 10.0, 40.0)), arch, seed=101)
    batch = toy.batch(rng.integers(0, len(toy), size=8))
    noise = rng.standard_normal((3, 8, 10))

    def mlp_loss():
        return forward_loss(model, batch, noise).total

    params = model.parameters()
    coords = []
    for pi, p in enumerate(params):
        for flat in rng.integers(0, p.size, size=2):
            coords.append((pi, np.unravel_index(int(flat), p.shape)))
    with Tape() as tape:
        loss = mlp_loss()
    tape.backward(loss)
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    for pi, idx in coords:
        numeric = central_difference(lambda: mlp_loss().item(), params[pi], idx, step=1e-5)
        errors.append(max_relative_error(float(analytic[pi][idx]), numeric))

    # Convolution / transposed-convolution layer types on a small composed loss.
    x = Tensor(rng.uniform(0, 1, (2, 1, 8, 8)))
    k1 = Tensor(rng.standard_normal((4, 1, 4, 4)) * 0.3, requires_grad=True)
    k2 = Tensor(rng.standard_normal((2, 1, 4, 4)) * 0.3, requires_grad=True)
    w = Tensor(rng.standard_normal((64, 32)) * 0.2, requires_grad=True)
    b = Tensor(np.zeros(32), requires_grad=True)

    def conv_loss():
        h = ops.relu(conv2d(x, k1))  # [2, 4, 4, 4]
        h = ops.relu(ops.affine(ops.reshape(h, (2, 64)), w, b))  # [2, 32]
        up = deconv2d(ops.reshape(h, (2, 2, 4, 4)), k2)  # [2, 1, 8, 8]
        return ops.bce_with_logits(up, x)

    conv_params = [k1, k2, w, b]
    conv_coords = []
    for pi, p in enumerate(conv_params):
        for flat in rng.integers(0, p.size, size=5):
            conv_coords.append((pi, np.unravel_index(int(flat), p.shape)))
    with Tape() as tape:
        closs = conv_loss()
    tape.backward(closs)
    conv_analytic = [p.grad for p in conv_params]
    for pi, idx in conv_coords:
        numeric = central_difference(lambda: conv_loss().item(), conv_params[pi], idx, step=1e-5)
        errors.append(max_relative_error(float(conv_analytic[pi][idx]), numeric))

    elapsed = time.time() - started
    worst = max(errors)
    _verdict(
        1,
        "gradient oracle",
        worst <= 1e-4 and len(errors) >= 50 and elapsed < 60,
        f"{len(errors)} coordinates, worst rel err {worst:.2e}, {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 2. KL-chain consistency
# ---------------------------------------------------------------------------


def test_criterion_2_kl_chain_consistency():
    rng = np.random.default_rng(200)
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(1, 12))
        batch = int(rng.integers(1, 6))
        transitions = int(rng.integers(1, 5))
        params = GaussianParams(
            Tensor(rng.standard_normal((batch, d))),
            Tensor(rng.standard_normal((batch, d)) * 0.7),
        )
        chain = DiTChain(
            [Tensor(rng.standard_normal(d) * 0.6) for _ in range(transitions)],
            [Tensor(rng.standard_normal(d) * 0.6) for _ in range(transitions)],
        )
        i = int(rng.integers(0, transitions + 1))
        direct = kl_chain(params, chain, i).total.item()
        via_cascade = kl_standard(cascade_params(params, chain, i)).total.item()
        worst = max(worst, abs(direct - via_cascade))
    _verdict(2, "KL-chain consistency", worst <= 1e-9, f"1000 triples, worst gap {worst:.2e}")


# ---------------------------------------------------------------------------
# 3. Invariance suite on a trained checkpoint
# ---------------------------------------------------------------------------


def test_criterion_3_invariance_suite(quick_checkpoint, toy):
    model = quick_checkpoint
    rng = np.random.default_rng(300)

    samples = collect_latents(model, toy, 0, n=4096, rng=stream(300, "acc3"))
    scales = np.exp(rng.standard_normal(samples.dim))

    rho_before, _ = correlation_matrix(samples.z)
    rho_after, _ = correlation_matrix(samples.z * scales)
    corr_gap = float(np.abs(rho_before - rho_after).max())

    bins_equal = all(
        np.array_equal(
            discretize(samples.z[:, j])[0], discretize(samples.z[:, j] * scales[j])[0]
        )
        for j in range(samples.dim)
    )

    # Metric equality before vs after a transition applied to the posterior.
    eval_rng = stream(301, "acc3-metrics")
    idx = eval_rng.integers(0, len(toy), size=2048)
    base = model.posterior(toy.batch(idx), 0)
    w1 = Tensor(rng.standard_normal(samples.dim) * 0.8)
    w2 = Tensor(rng.standard_normal(samples.dim) * 0.8)
    shifted = dit_apply(base, w1, w2)
    labels = toy.labels[idx]

    def sample_set(params):
        mean = params.mean.data
        logvar = params.logvar.data
        kl = 0.5 * (mean**2 + np.exp(logvar) - 1.0 - logvar).mean(axis=0)
        return LatentSampleSet(z=mean, labels=labels, kl_per_dim=kl, representation="mean")

    before = sample_set(base)
    after = sample_set(shifted)
    mig_equal = mig(before) == mig(after)
    nmi_equal = np.array_equal(nmi_track(before)[0], nmi_track(after)[0])
    dci_gap = abs(dci_disentanglement(before) - dci_disentanglement(after))

    _verdict(
        3,
        "invariance suite",
        corr_gap <= 1e-10 and bins_equal and mig_equal and nmi_equal and dci_gap <= 1e-9,
        f"corr gap {corr_gap:.1e}, bins equal {bins_equal}, MIG equal {mig_equal}, "
        f"NMI equal {nmi_equal}, DCI gap {dci_gap:.1e}",
    )


# ---------------------------------------------------------------------------
# 4. Metric oracles
# ---------------------------------------------------------------------------


def test_criterion_4_metric_oracles(toy):
    started = time.time()
    rng = np.random.default_rng(400)
    cards = (16, 16, 4)
    perm = (2, 0, 1)
    scales = np.array([0.7, 1.3, 2.1])

    # Sampled permutation code at n = 10,000 for the MI-based scores.
    sampled_labels = np.stack([rng.integers(0, c, size=10_000) for c in cards], axis=1)
    sampled_z = sampled_labels[:, list(perm)].astype(np.float64) * scales
    sampled = LatentSampleSet(sampled_z, sampled_labels, np.ones(3))
    mig_perm = mig(sampled)

    # Exactly balanced (tiled factorial) labels make the DCI importance
    # matrix exactly one-hot, which is what the 1e-9 tolerance needs.
    grids = np.meshgrid(*[np.arange(c) for c in cards], indexing="ij")
    balanced_labels = np.tile(
        np.stack([g.reshape(-1) for g in grids], axis=1).astype(np.int32), (10, 1)
    )
    balanced_z = balanced_labels[:, list(perm)].astype(np.float64) * scales
    balanced = LatentSampleSet(balanced_z, balanced_labels, np.ones(3))
    dci_perm = dci_disentanglement(balanced)

    # The vote metric runs on the real dataset through a label-true encoder.
    images = toy.batch(np.arange(len(toy)))
    lookup = {images[i].tobytes(): toy.labels[i] for i in range(len(toy))}

    def represent(batch_images):
        rows = np.stack([lookup[img.tobytes()] for img in batch_images])
        return rows[:, list(perm)].astype(np.float64) * scales

    fv_perm = factor_vae_score(represent, toy, stream(400, "acc4"), votes=800, batch=100)

    noise = LatentSampleSet(
        rng.standard_normal((10_000, 3)), sampled_labels, np.ones(3)
    )
    mig_noise = mig(noise)

    noise_rng = np.random.default_rng(401)

    def represent_noise(batch_images):
        return noise_rng.standard_normal((batch_images.shape[0], 5))

    fv_noise = factor_vae_score(represent_noise, toy, stream(401, "acc4"), votes=800, batch=100)
    chance = 1.0 / toy.num_factors
    elapsed = time.time() - started

    _verdict(
        4,
        "metric oracles",
        mig_perm >= 0.95
        and abs(dci_perm - 1.0) <= 1e-9
        and fv_perm == 1.0
        and mig_noise <= 0.05
        and abs(fv_noise - chance) <= 0.2
        and elapsed < 120,
        f"perm: MIG {mig_perm:.3f}, DCI 1-{abs(dci_perm - 1.0):.1e}, FV {fv_perm}; "
        f"noise: MIG {mig_noise:.3f}, FV {fv_noise:.3f} (chance {chance:.2f}); {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 5. Special-case equivalence
# ---------------------------------------------------------------------------


def _data_lines(path):
    return [l for l in open(path, encoding="utf-8").read().splitlines() if not l.startswith("#")]


@pytest.fixture(scope="module")
def equivalence_runs(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("equiv"))
    kw = {**DESK_KW, "iterations": 500, "eval_every": 500}
    beta = train(
        RunConfig(variant="beta-vae", spaces=1, betas=(6.0,), seed=77,
                  out_dir=os.path.join(root, "beta"), **kw)
    )
    devae = train(
        RunConfig(variant="devae", spaces=1, betas=(6.0,), seed=77,
                  out_dir=os.path.join(root, "devae"), **kw)
    )
    return beta, devae


def test_criterion_5_special_case_equivalence(equivalence_runs):
    started = time.time()
    beta, devae = equivalence_runs
    loss_equal = _data_lines(beta.losses_csv) == _data_lines(devae.losses_csv)
    metrics_equal = _data_lines(beta.metrics_csv) == _data_lines(devae.metrics_csv)
    elapsed = time.time() - started
    _verdict(
        5,
        "single-space equivalence",
        loss_equal and metrics_equal,
        f"500 iterations, losses bitwise equal {loss_equal}, metrics {metrics_equal}; "
        f"verified in {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 9. Reproducibility (cheap; runs before the desk fixtures)
# ---------------------------------------------------------------------------


def test_criterion_9_reproducibility(equivalence_runs, tmp_path_factory):
    _, devae = equivalence_runs
    embedded = RunConfig.load(os.path.join(devae.out_dir, "config.txt"))
    rerun = train(replace(embedded, out_dir=str(tmp_path_factory.mktemp("re-run"))))
    metrics_equal = (
        open(devae.metrics_csv, "rb").read() == open(rerun.metrics_csv, "rb").read()
    )
    losses_equal = open(devae.losses_csv, "rb").read() == open(rerun.losses_csv, "rb").read()
    _verdict(
        9,
        "bitwise reproducibility from embedded config",
        metrics_equal and losses_equal,
        f"metrics bitwise {metrics_equal}, losses bitwise {losses_equal}",
    )


# ---------------------------------------------------------------------------
# 6. Desk-scale per-space pattern
# ---------------------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.acceptance
def test_criterion_6_desk_scale_pattern(desk_runs):
    devae_reports = [r.report for r in desk_runs["devae"]]
    beta_reports = [r.report for r in desk_runs["beta"]]

    mig_identical = all(
        r.spaces[0].mig == r.spaces[1].mig == r.spaces[2].mig for r in devae_reports
    )
    recon_medians = [
        float(np.median([r.spaces[i].recon_error for r in devae_reports])) for i in range(3)
    ]
    recon_increasing = recon_medians[0] < recon_medians[1] < recon_medians[2]
    gaps = [
        devae.spaces[0].mig - beta.spaces[0].mig
        for devae, beta in zip(devae_reports, beta_reports)
    ]
    gap_median = float(np.median(gaps))
    _verdict(
        6,
        "desk-scale per-space pattern",
        mig_identical and recon_increasing and gap_median >= 0.05,
        f"MIG identical {mig_identical}; recon medians {[round(r, 1) for r in recon_medians]}; "
        f"median MIG gap over beta-VAE(1) {gap_median:.3f}",
    )


# ---------------------------------------------------------------------------
# 7. Pressure-sweep trends
# ---------------------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.acceptance
def test_criterion_7_pressure_sweep_trends(sweep_runs):
    def medians(records, key):
        by_value = {}
        for rec in records:
            by_value.setdefault(tuple(rec["betas"]), []).append(rec[key])
        items = sorted(by_value.items())
        return [betas for betas, _ in items], [float(np.median(vs)) for _, vs in items]

    disent_betas, disent_migs = medians(sweep_runs["disent"], "mig")
    beta1_values = [b[1] for b in disent_betas]
    rho_disent, _ = spearmanr(beta1_values, disent_migs)

    recon_betas, recon_errs = medians(sweep_runs["recon"], "recon_error")
    beta0_values = [b[0] for b in recon_betas]
    rho_recon, _ = spearmanr(beta0_values, recon_errs)

    _verdict(
        7,
        "pressure-sweep trends",
        rho_disent > 0 and rho_recon > 0,
        f"spearman(beta1, MIG median) = {rho_disent:.2f} over {beta1_values}; "
        f"spearman(beta0, recon median) = {rho_recon:.2f} over {beta0_values}",
    )


# ---------------------------------------------------------------------------
# 8. Information-diffusion stability
# ---------------------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.acceptance
def test_criterion_8_information_stability(desk_runs):
    worst_drops = []
    for run in desk_runs["devae"]:
        names, rows = read_csv(run.metrics_csv)
        nmi_cols = [i for i, n in enumerate(names) if n.startswith("nmi_")]
        iterations = rows[:, 0]
        tail = rows[iterations >= DESK_ITERATIONS / 4]
        drop = 0.0
        for col in nmi_cols:
            series = tail[:, col]
            running_max = np.maximum.accumulate(series)
            drop = max(drop, float((running_max - series).max()))
        worst_drops.append(drop)
    median_drop = float(np.median(worst_drops))
    _verdict(
        8,
        "information-diffusion stability",
        median_drop <= 0.15,
        f"median worst NMI drop after first quarter: {median_drop:.3f} "
        f"(per-seed {[round(d, 3) for d in worst_drops]})",
    )
