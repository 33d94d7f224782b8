"""Scratch: desk-scale hyperparameter probe (not part of the package)."""

import json
import os
import sys
from dataclasses import replace
from multiprocessing import Pool

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

from devae.config import RunConfig
from devae.training import train


def desk_config(variant, spaces, betas, seed, lr, iters, out):
    return RunConfig(
        variant=variant,
        spaces=spaces,
        betas=betas,
        seed=seed,
        lr=lr,
        iterations=iters,
        out_dir=out,
        data_spec="pos_x:16,pos_y:16,scale:4",
        resolution=16,
        arch_widths=(128, 128),
        latent_dim=10,
        batch_size=64,
        eval_every=1000,
        track_samples=2048,
        eval_samples=10000,
        recon_samples=1024,
        fv_votes=200,
    )


def run(job):
    variant, spaces, betas, seed, lr, iters = job
    tag = f"{variant}_lr{lr}_s{seed}_{iters}"
    out = f"/tmp/tune/{tag}"
    if os.path.exists(os.path.join(out, "report.json")):
        report = json.load(open(os.path.join(out, "report.json")))
    else:
        result = train(desk_config(variant, spaces, betas, seed, lr, iters, out))
        report = json.loads(result.report.to_json())
    migs = [round(s["mig"], 3) for s in report["spaces"]]
    recons = [round(s["recon_error"], 1) for s in report["spaces"]]
    fvs = [None if s["factor_vae_score"] is None else round(s["factor_vae_score"], 2) for s in report["spaces"]]
    return f"{tag:34s} mig={migs} recon={recons} fv={fvs}"


if __name__ == "__main__":
    lr = float(sys.argv[1])
    iters = int(sys.argv[2])
    seeds = [int(s) for s in sys.argv[3].split(",")]
    jobs = []
    for seed in seeds:
        jobs.append(("devae", 3, (1.0, 10.0, 40.0), seed, lr, iters))
        jobs.append(("beta-vae", 1, (1.0,), seed, lr, iters))
    with Pool(2) as pool:
        for line in pool.imap(run, jobs):
            print(line, flush=True)
