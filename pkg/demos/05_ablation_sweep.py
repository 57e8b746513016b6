"""A small multi-seed ablation: the four arms on a reduced benchmark.

The entropy-scaling effect to look for is in the spread column: scaling the
regularizer by each layer's entropy z-score pulls the layer entropies
together, while the uniform-penalty arm leaves them dispersed. Accuracy
differences between arms at this scale sit near the seed-noise floor; see the
full acceptance suite for the 20-seed treatment.
"""

from dataclasses import replace

import numpy as np

from entrocl import RunConfig, StreamConfig, make_synthetic_stream, run_sequence
from entrocl.cli import apply_arm

ARMS = ("full", "no_entropy_scaling", "no_adaptive_training", "plain_er")
SEEDS = range(5)

stream_cfgs = {seed: StreamConfig(seed=seed, train_per_class=200) for seed in SEEDS}
streams = {seed: make_synthetic_stream(cfg) for seed, cfg in stream_cfgs.items()}

print(f"{'arm':24s} {'acc':>8s} {'forgetting':>11s} {'spread':>8s}")
for arm in ARMS:
    accs, afs, spreads = [], [], []
    for seed in SEEDS:
        cfg = replace(apply_arm(RunConfig(buffer_capacity=100), arm), seed=seed)
        summary = run_sequence(streams[seed], cfg).summary
        accs.append(summary["acc_final"])
        afs.append(summary["average_forgetting"])
        spreads.append(summary["entropy_spread_final"])
    print(f"{arm:24s} {np.mean(accs):8.4f} {np.mean(afs):11.4f} {np.mean(spreads):8.4f}")
