"""One full training run on the default synthetic benchmark, end to end:
stream construction, the task loop, and the evaluation artifacts."""

import numpy as np

from entrocl import RunConfig, StreamConfig, make_synthetic_stream, run_sequence

stream_cfg = StreamConfig(seed=0)
tasks = make_synthetic_stream(stream_cfg)
print(f"{len(tasks)} tasks over {stream_cfg.num_classes} classes;"
      f" task 1 classes={tasks[0].class_ids}, train={tasks[0].train_size}")

cfg = RunConfig(seed=0)
result = run_sequence(tasks, cfg)

print("\naccuracy matrix (row = after task t, column = eval task s):")
T = result.matrix.num_tasks
for t in range(1, T + 1):
    row = " ".join(f"{result.matrix.get(t, s):.3f}" for s in range(1, t + 1))
    print(f"  t={t}: {row}")

s = result.summary
print(f"\nfinal average accuracy : {s['acc_final']:.4f}")
print(f"backward transfer      : {s['bwt']:+.4f}")
print(f"average forgetting     : {s['average_forgetting']:.4f}")
print(f"final entropy spread   : {s['entropy_spread_final']:.4f}")
print(f"entropy deviation by task: {np.round(s['delta_t_per_task'], 4)}")

last_task = result.telemetry[-1].task
rows = [r.telemetry.entropy.per_layer for r in result.telemetry if r.task == last_task]
print(f"\nper-layer mean entropy over the last task's final 10 steps:")
print(" ", np.round(np.mean(rows[-10:], axis=0), 4))
