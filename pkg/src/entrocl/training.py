"""Sequential task training with replay mixing and layer-wise modulation.

One run works through a task stream in order. At each task boundary (from the
second task on) the per-layer accuracy modulators are refreshed from the
validation buffer; within a task, every optimizer step sees the current batch
concatenated with a replay batch, computes the modulated multi-head objective
on it, and then feeds the current-task examples into the reservoir buffer.
Everything stochastic draws from generators derived from the run seed, so a
run is a pure function of (config, stream).
"""

import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import tensor as T
from .buffers import ReplayBuffer, ValidationBuffer, evaluate_layer_accuracies
from .errors import ConfigError
from .metrics import (
    AccuracyMatrix,
    average_forgetting,
    backward_transfer,
    cross_layer_entropy_spread,
    entropy_deviation,
    final_average_accuracy,
)
from .model import LayeredNet
from .modulation import ENTROPY_SIGNS, ModulatorState, alpha_from_accuracies, composite_loss
from .streams import batches

SPREAD_WINDOW = 50


@dataclass
class RunConfig:
    beta: float = 0.005
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 10
    buffer_batch_size: int = 64
    buffer_capacity: int = 200
    val_quota: int = 64
    enable_entropy_scaling: bool = True
    enable_adaptive_training: bool = True
    entropy_sign: str = "penalize"
    seed: int = 0
    widths: tuple = (64, 64, 64, 64)
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self):
        if self.beta < 0:
            raise ConfigError(f"beta must be nonnegative, got {self.beta}")
        if self.enable_entropy_scaling and self.beta == 0:
            raise ConfigError("entropy scaling needs beta > 0")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight decay must be nonnegative, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be positive, got {self.batch_size}")
        if self.buffer_batch_size < 0:
            raise ConfigError("buffer batch size must be nonnegative")
        if self.buffer_capacity < 1:
            raise ConfigError("buffer capacity must be positive")
        if self.val_quota < 1:
            raise ConfigError("validation quota must be positive")
        if self.entropy_sign not in ENTROPY_SIGNS:
            raise ConfigError(f"entropy_sign must be one of {ENTROPY_SIGNS}")
        if len(self.widths) < 2:
            raise ConfigError("need at least 2 layer widths")
        if any(w < 1 for w in self.widths):
            raise ConfigError(f"widths must be positive, got {self.widths}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be adam or sgd, got {self.optimizer!r}")

    def to_dict(self):
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d


class AdamState:
    """First/second moment estimates plus the shared step counter."""

    def __init__(self, params):
        self.m = {name: np.zeros_like(arr) for name, arr in params}
        self.v = {name: np.zeros_like(arr) for name, arr in params}
        self.t = 0


def adam_step(params, grads, moments, lr, wd, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam with decoupled weight decay.

    The decay multiplies parameters by (1 - lr*wd) before the Adam update, so
    the gradient path stays exactly the gradient of the loss.
    """
    moments.t += 1
    t = moments.t
    shrink = 1.0 - lr * wd
    for name, arr in params:
        g = grads[name]
        m = moments.m[name]
        v = moments.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        if wd:
            arr *= shrink
        arr -= lr * m_hat / (np.sqrt(v_hat) + eps)


def sgd_step(params, grads, lr, wd):
    shrink = 1.0 - lr * wd
    for name, arr in params:
        if wd:
            arr *= shrink
        arr -= lr * grads[name]


@dataclass
class StepRecord:
    step: int
    task: int
    telemetry: object  # modulation.StepTelemetry


@dataclass
class RunState:
    net: LayeredNet
    moments: AdamState
    buffer: ReplayBuffer
    vbuf: ValidationBuffer
    rng: np.random.Generator
    alpha: tuple
    modulators: ModulatorState
    task_index: int = 0
    step: int = 0
    telemetry: list = field(default_factory=list)


def init_state(cfg, input_dim, num_classes):
    cfg.validate()
    net = LayeredNet.init(input_dim, cfg.widths, num_classes, seed=cfg.seed)
    train_seq, buffer_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    num_layers = net.num_layers
    alpha = (1.0,) * num_layers
    modulators = ModulatorState(
        alpha=alpha,
        gamma=(cfg.beta,) * num_layers,
        beta=cfg.beta,
        source_accuracies=(),
        mu_acc=0.0,
        sigma_acc=0.0,
    )
    return RunState(
        net=net,
        moments=AdamState(net.parameters()),
        buffer=ReplayBuffer(cfg.buffer_capacity, np.random.default_rng(buffer_seq)),
        vbuf=ValidationBuffer(cfg.val_quota),
        rng=np.random.default_rng(train_seq),
        alpha=alpha,
        modulators=modulators,
    )


def run_task(state, task, cfg):
    """Train on one task for a single epoch, per the outer-loop protocol."""
    cfg.validate()
    if task.train_size == 0:
        raise ConfigError(f"task {task.task_id} has no training examples")
    if task.task_id <= state.task_index:
        raise ConfigError(
            f"task ids must be strictly increasing, got {task.task_id} after "
            f"{state.task_index}"
        )
    state.task_index = task.task_id
    num_layers = state.net.num_layers

    # the from-the-second-task guard: modulators need past-task validation data
    if cfg.enable_adaptive_training and state.vbuf.num_tasks > 0:
        accuracies = evaluate_layer_accuracies(state.net, state.vbuf)
        alpha, mu_acc, sigma_acc, _ = alpha_from_accuracies(accuracies)
        state.alpha = alpha
        state.modulators = ModulatorState(
            alpha=alpha,
            gamma=state.modulators.gamma,
            beta=cfg.beta,
            source_accuracies=tuple(accuracies),
            mu_acc=mu_acc,
            sigma_acc=sigma_acc,
        )

    gamma_override = None
    if not cfg.enable_entropy_scaling:
        gamma_override = (cfg.beta,) * num_layers

    for batch_x, batch_y in batches(task, cfg.batch_size, state.rng):
        replay = state.buffer.sample(cfg.buffer_batch_size, state.rng)
        if replay:
            rx = np.stack([item[0] for item in replay])
            ry = np.asarray([item[1] for item in replay], dtype=np.int64)
            x = np.concatenate([batch_x, rx], axis=0)
            y = np.concatenate([batch_y, ry])
        else:
            x, y = batch_x, batch_y

        record = state.net.forward(x)
        total, telemetry = composite_loss(
            record,
            y,
            alpha=state.alpha,
            beta=cfg.beta,
            entropy_sign=cfg.entropy_sign,
            gamma=gamma_override,
        )
        grads_map = T.backward(total)
        grads = {
            name: grads_map.wrt(record.params[name])
            for name, _ in state.net.parameters()
        }
        if cfg.optimizer == "adam":
            adam_step(
                state.net.parameters(),
                grads,
                state.moments,
                cfg.learning_rate,
                cfg.weight_decay,
                cfg.adam_beta1,
                cfg.adam_beta2,
                cfg.adam_eps,
            )
        else:
            sgd_step(state.net.parameters(), grads, cfg.learning_rate, cfg.weight_decay)

        state.buffer.extend(
            [(bx, int(by), task.task_id) for bx, by in zip(batch_x, batch_y)]
        )
        state.step += 1
        state.modulators = ModulatorState(
            alpha=state.alpha,
            gamma=telemetry.gamma,
            beta=cfg.beta,
            source_accuracies=state.modulators.source_accuracies,
            mu_acc=state.modulators.mu_acc,
            sigma_acc=state.modulators.sigma_acc,
        )
        state.telemetry.append(StepRecord(state.step, task.task_id, telemetry))

    state.vbuf.update(task.train_x, task.train_y, task.task_id, state.rng)
    return state


@dataclass
class RunResult:
    matrix: AccuracyMatrix
    per_layer: list
    telemetry: list
    summary: dict
    runtime_seconds: float


def run_sequence(tasks, cfg, out_dir=None, manifest_extra=None):
    """Run the whole stream and evaluate after every task.

    Returns a RunResult; when ``out_dir`` is given, also writes the manifest,
    accuracy matrices, telemetry and summary there.
    """
    cfg.validate()
    if len(tasks) < 2:
        raise ConfigError("a sequence needs at least 2 tasks")
    for task in tasks:
        if task.train_size == 0:
            raise ConfigError(f"task {task.task_id} has no training examples")
    ids = [task.task_id for task in tasks]
    if ids != sorted(ids) or len(set(ids)) != len(ids):
        raise ConfigError(f"task ids must be strictly increasing, got {ids}")

    input_dim = tasks[0].train_x.shape[1]
    num_classes = max(max(task.class_ids) for task in tasks) + 1
    state = init_state(cfg, input_dim, num_classes)
    num_layers = state.net.num_layers

    matrix = AccuracyMatrix(len(tasks))
    per_layer = [AccuracyMatrix(len(tasks)) for _ in range(num_layers)]

    started = time.perf_counter()
    for t, task in enumerate(tasks, start=1):
        run_task(state, task, cfg)
        for s, seen in enumerate(tasks[:t], start=1):
            record = state.net.forward(seen.test_x)
            for layer in range(num_layers):
                preds = record.probs[layer].value.argmax(axis=1)
                acc = float((preds == seen.test_y).mean())
                per_layer[layer].set(t, s, acc)
                if layer == num_layers - 1:
                    matrix.set(t, s, acc)
    runtime = time.perf_counter() - started

    summary = build_summary(matrix, state.telemetry, runtime)
    result = RunResult(matrix, per_layer, state.telemetry, summary, runtime)
    if out_dir is not None:
        write_run_artifacts(out_dir, cfg, result, manifest_extra)
    return result


def build_summary(matrix, telemetry, runtime_seconds):
    task_ids = sorted({rec.task for rec in telemetry})
    deltas = []
    for task_id in task_ids:
        rows = np.asarray(
            [rec.telemetry.entropy.per_layer for rec in telemetry if rec.task == task_id]
        )
        tail = rows[-min(SPREAD_WINDOW, len(rows)) :]
        deltas.append(entropy_deviation(tail.mean(axis=0)))
    final_rows = np.asarray(
        [rec.telemetry.entropy.per_layer for rec in telemetry if rec.task == task_ids[-1]]
    )
    return {
        "acc_final": final_average_accuracy(matrix),
        "bwt": backward_transfer(matrix),
        "average_forgetting": average_forgetting(matrix),
        "entropy_spread_final": cross_layer_entropy_spread(final_rows, SPREAD_WINDOW),
        "delta_t_per_task": deltas,
        "runtime_seconds": runtime_seconds,
    }


def write_telemetry_csv(fh, telemetry):
    fh.write("step,task,layer,entropy,z,gamma,alpha,loss\n")
    for rec in telemetry:
        t = rec.telemetry
        for layer in range(len(t.entropy.per_layer)):
            fh.write(
                f"{rec.step},{rec.task},{layer},"
                f"{t.entropy.per_layer[layer]!r},{t.entropy.z[layer]!r},"
                f"{t.gamma[layer]!r},{t.alpha[layer]!r},{t.layer_losses[layer]!r}\n"
            )


def write_run_artifacts(out_dir, cfg, result, manifest_extra=None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = {
        "run_config": cfg.to_dict(),
        "seed": cfg.seed,
        "version": __version__,
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    with open(out_dir / "accuracy_matrix.csv", "w", encoding="utf-8") as fh:
        result.matrix.to_csv(fh)
    with open(out_dir / "per_layer_accuracy.csv", "w", encoding="utf-8") as fh:
        fh.write("after_task,eval_task,layer,accuracy\n")
        T_tasks = result.matrix.num_tasks
        for t in range(1, T_tasks + 1):
            for s in range(1, t + 1):
                for layer, m in enumerate(result.per_layer):
                    fh.write(f"{t},{s},{layer},{m.get(t, s)!r}\n")
    with open(out_dir / "telemetry.csv", "w", encoding="utf-8") as fh:
        write_telemetry_csv(fh, result.telemetry)
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(result.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
