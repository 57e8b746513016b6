import numpy as np
import pytest

from entrocl import LayeredNet, composite_loss
from entrocl import tensor as T

# acceptance criteria append their PASS/FAIL lines here; echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def relative_error(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / denom


def rebuild_net(template, params):
    """A LayeredNet over the given parameter dict (shared structure)."""
    L = template.num_layers
    blocks = [(params[f"block{i}.w"], params[f"block{i}.b"]) for i in range(L)]
    heads = [(params[f"head{i}.w"], params[f"head{i}.b"]) for i in range(L)]
    return LayeredNet(
        template.input_dim, template.widths, template.num_classes, blocks, heads
    )


def loss_fn(template, x, y, alpha, beta, gamma):
    """Scalar loss as a function of a parameter dict, with gamma/alpha frozen."""

    def f(params):
        net = rebuild_net(template, params)
        record = net.forward(x)
        total, _ = composite_loss(record, y, alpha=alpha, beta=beta, gamma=gamma)
        return total.item()

    return f


def analytic_gradients(net, x, y, alpha, beta, gamma):
    record = net.forward(x)
    total, _ = composite_loss(record, y, alpha=alpha, beta=beta, gamma=gamma)
    grads = T.backward(total)
    return {name: grads.wrt(record.params[name]) for name, _ in net.parameters()}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
