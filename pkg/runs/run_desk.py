"""Sequential desk-profile training runs used by the acceptance checks."""
import sys, time
from crossroads.config import make_config
from crossroads.trainer import Trainer

JOBS = [
    (7, "runs/desk_seed7_a"),
    (7, "runs/desk_seed7_b"),
    (1, "runs/desk_seed1"),
    (2, "runs/desk_seed2"),
]

for seed, out in JOBS:
    t0 = time.time()
    cfg = make_config("desk", seed=seed, out_dir=out)
    Trainer(cfg).train()
    print(f"done seed={seed} out={out} in {(time.time()-t0)/60:.1f} min", flush=True)
