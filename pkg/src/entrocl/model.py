"""A stack of affine+tanh feature blocks, each with its own linear head.

Every block feeds the next one; every block also feeds a dedicated
classification head over the full global label space, so one forward pass
yields per-layer logits and probabilities. Head losses are not detached:
gradients from head L flow into blocks 1..L of the shared backbone.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DimensionError, FormatError

CHECKPOINT_DTYPE = "<f8"


@dataclass
class ForwardRecord:
    """Per-layer tensors from one forward pass, plus the bound parameters."""

    activations: list
    logits: list
    probs: list
    params: dict
    tape: T.Tape

    @property
    def num_layers(self):
        return len(self.activations)


class LayeredNet:
    def __init__(self, input_dim, widths, num_classes, blocks, heads):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2:
            raise ValueError("a layered net needs at least 2 blocks")
        if num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if len(blocks) != len(widths) or len(heads) != len(widths):
            raise ValueError("blocks, heads and widths must have equal length")
        for layer, ((wb, _), (wh, _)) in enumerate(zip(blocks, heads)):
            if wb.shape[1] != widths[layer] or wh.shape[0] != widths[layer]:
                raise DimensionError(
                    f"layer {layer}: head input width {wh.shape[0]} does not match "
                    f"block output width {wb.shape[1]}"
                )
        self.input_dim = int(input_dim)
        self.widths = widths
        self.num_classes = int(num_classes)
        self.blocks = blocks
        self.heads = heads

    @property
    def num_layers(self):
        return len(self.widths)

    @classmethod
    def init(cls, input_dim, widths, num_classes, seed):
        """Deterministic fan-scaled uniform init; biases start at zero."""
        rng = np.random.default_rng(seed)
        widths = tuple(int(w) for w in widths)

        def affine(fan_in, fan_out):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            return w, np.zeros(fan_out)

        blocks = []
        fan_in = int(input_dim)
        for width in widths:
            blocks.append(affine(fan_in, width))
            fan_in = width
        heads = [affine(width, int(num_classes)) for width in widths]
        return cls(input_dim, widths, num_classes, blocks, heads)

    def parameters(self):
        """Canonical (name, array) list: blocks then heads, weight then bias."""
        out = []
        for i, (w, b) in enumerate(self.blocks):
            out.append((f"block{i}.w", w))
            out.append((f"block{i}.b", b))
        for i, (w, b) in enumerate(self.heads):
            out.append((f"head{i}.w", w))
            out.append((f"head{i}.b", b))
        return out

    def clone(self):
        blocks = [(w.copy(), b.copy()) for w, b in self.blocks]
        heads = [(w.copy(), b.copy()) for w, b in self.heads]
        return LayeredNet(self.input_dim, self.widths, self.num_classes, blocks, heads)

    def forward(self, x, tape=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DimensionError(
                f"input shape {x.shape} does not match input width {self.input_dim}"
            )
        if tape is None:
            tape = T.Tape()
        params = {name: tape.leaf(arr) for name, arr in self.parameters()}
        h = tape.leaf(x)
        activations, logits, probs = [], [], []
        for layer in range(self.num_layers):
            h = T.tanh(
                T.add_bias(
                    T.matmul(h, params[f"block{layer}.w"]), params[f"block{layer}.b"]
                )
            )
            z = T.add_bias(
                T.matmul(h, params[f"head{layer}.w"]), params[f"head{layer}.b"]
            )
            activations.append(h)
            logits.append(z)
            probs.append(T.softmax(z))
        return ForwardRecord(activations, logits, probs, params, tape)

    def predict_layer(self, x, layer):
        """Argmax classes from one head; ties resolve to the lowest index."""
        if not 0 <= layer < self.num_layers:
            raise ValueError(
                f"layer index {layer} out of range [0, {self.num_layers})"
            )
        record = self.forward(x)
        return record.probs[layer].value.argmax(axis=1)


def save_checkpoint(net, path):
    """One JSON header line, then the parameters as little-endian float64."""
    header = {
        "input_dim": net.input_dim,
        "widths": list(net.widths),
        "num_classes": net.num_classes,
        "num_layers": net.num_layers,
        "order": [name for name, _ in net.parameters()],
        "dtype": CHECKPOINT_DTYPE,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        for _, arr in net.parameters():
            fh.write(np.ascontiguousarray(arr, dtype=CHECKPOINT_DTYPE).tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"unreadable checkpoint header: {exc}", offset=0)
        payload = fh.read()

    input_dim = header["input_dim"]
    widths = header["widths"]
    num_classes = header["num_classes"]
    shapes = {}
    fan_in = input_dim
    for i, width in enumerate(widths):
        shapes[f"block{i}.w"] = (fan_in, width)
        shapes[f"block{i}.b"] = (width,)
        fan_in = width
    for i, width in enumerate(widths):
        shapes[f"head{i}.w"] = (width, num_classes)
        shapes[f"head{i}.b"] = (num_classes,)

    arrays = {}
    offset = 0
    itemsize = np.dtype(CHECKPOINT_DTYPE).itemsize
    for name in header["order"]:
        shape = shapes[name]
        count = int(np.prod(shape))
        nbytes = count * itemsize
        if offset + nbytes > len(payload):
            raise FormatError(
                f"checkpoint truncated while reading {name}",
                offset=len(header_line) + offset,
            )
        arrays[name] = (
            np.frombuffer(payload, dtype=CHECKPOINT_DTYPE, count=count, offset=offset)
            .astype(np.float64)
            .reshape(shape)
        )
        offset += nbytes
    if offset != len(payload):
        raise FormatError(
            "checkpoint has trailing bytes", offset=len(header_line) + offset
        )

    blocks = [(arrays[f"block{i}.w"], arrays[f"block{i}.b"]) for i in range(len(widths))]
    heads = [(arrays[f"head{i}.w"], arrays[f"head{i}.b"]) for i in range(len(widths))]
    return LayeredNet(input_dim, widths, num_classes, blocks, heads)
