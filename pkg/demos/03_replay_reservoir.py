"""The reservoir buffer keeps a uniform sample of an unbounded stream:
after n insertions each item is resident with probability capacity/n."""

import numpy as np

from entrocl import ReplayBuffer

capacity, stream_length, trials = 10, 500, 4000
rng = np.random.default_rng(1)

counts = np.zeros(stream_length)
for _ in range(trials):
    buf = ReplayBuffer(capacity, rng)
    buf.extend(range(stream_length))
    counts[buf.items] += 1

freq = counts / trials
target = capacity / stream_length
print(f"target residency probability: {target}")
print(f"empirical range over items : [{freq.min():.4f}, {freq.max():.4f}]")
print(f"early items (first 10)     : {np.round(freq[:10], 4)}")
print(f"late items (last 10)       : {np.round(freq[-10:], 4)}")
