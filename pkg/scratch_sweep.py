"""Scratch: sweep-trend probe (not part of the package)."""

import json
import os
import sys
from multiprocessing import Pool

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

from devae.config import RunConfig
from devae.training import train


def cfg_for(betas, seed, iters):
    return RunConfig(
        variant="devae", spaces=len(betas), betas=tuple(float(b) for b in betas),
        seed=seed, lr=1e-4, iterations=iters,
        out_dir=f"/tmp/tune/sweep_{'_'.join(str(b) for b in betas)}_s{seed}_{iters}",
        data_spec="pos_x:16,pos_y:16,scale:4", resolution=16,
        arch_widths=(128, 128), latent_dim=10, batch_size=64,
        eval_every=2000, track_samples=1024, eval_samples=10000,
        recon_samples=1024, fv_votes=100,
    )


def run(job):
    betas, seed, iters = job
    config = cfg_for(betas, seed, iters)
    report_path = os.path.join(config.out_dir, "report.json")
    if os.path.exists(report_path):
        report = json.load(open(report_path))
    else:
        report = json.loads(train(config).report.to_json())
    s0 = report["spaces"][0]
    return f"betas={betas} seed={seed} mig={s0['mig']:.3f} recon={s0['recon_error']:.2f}"


if __name__ == "__main__":
    mode = sys.argv[1]
    iters = int(sys.argv[2])
    seeds = [int(s) for s in sys.argv[3].split(",")]
    if mode == "b1x":
        betass = [[1, x] for x in (1, 5, 10, 20, 40)]
    else:
        betass = [[x, 40] for x in (1, 2, 4)]
    jobs = [(b, s, iters) for b in betass for s in seeds]
    with Pool(2) as pool:
        for line in pool.imap(run, jobs):
            print(line, flush=True)
