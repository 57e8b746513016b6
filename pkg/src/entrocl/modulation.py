"""Layer-wise loss modulation driven by entropy and past-task accuracy.

Two per-layer coefficients shape the training objective:

* an entropy scaling factor ``gamma[l] = beta * exp(tanh(z[l]))`` where
  ``z[l]`` is the z-score of layer ``l``'s mean batch entropy across layers,
  so relatively uncertain layers are regularized harder; and
* an accuracy modulator ``alpha[l] = exp(tanh(-s[l]))`` where ``s[l]`` is the
  z-score of layer ``l``'s accuracy on held-out past-task data, so layers that
  already perform well are updated more gently.

Both are bounded in [e^-1, e] times their scale by construction. The z-scores
use the population standard deviation over the L layer values and collapse to
zero when the values tie, which makes the modulation neutral (gamma = beta,
alpha = 1).

The composite objective is sum_l alpha[l] * ce[l] + sign * gamma[l] * H[l].
gamma and alpha enter as plain float coefficients: gradients flow through the
entropy values inside the regularizer, never through the cross-layer
statistics that produced the coefficients.
"""

import math
from dataclasses import dataclass

from . import tensor as T

# Below this spread the layer values are treated as tied and all z-scores are 0.
EPS_SIGMA = 1e-8

ENTROPY_SIGNS = ("penalize", "reward")


@dataclass(frozen=True)
class EntropyStats:
    """Per-layer mean batch entropies with their cross-layer z-scores."""

    per_layer: tuple
    mu: float
    sigma: float
    z: tuple


@dataclass(frozen=True)
class ModulatorState:
    """Current coefficients plus the statistics that produced them."""

    alpha: tuple
    gamma: tuple
    beta: float
    source_accuracies: tuple
    mu_acc: float
    sigma_acc: float


@dataclass(frozen=True)
class StepTelemetry:
    """Everything worth logging about one optimization step."""

    entropy: EntropyStats
    gamma: tuple
    alpha: tuple
    layer_losses: tuple
    total: float


def batch_entropy(probs):
    """Mean row entropy of a probability tensor, in nats (differentiable)."""
    return T.mean_entropy(probs)


def layer_zscores(values):
    """Mean, population std and z-scores of the per-layer values.

    With fewer than two layers the statistics are meaningless and a ValueError
    is raised; when the population std is below EPS_SIGMA every z is zero.
    """
    values = [float(v) for v in values]
    n = len(values)
    if n < 2:
        raise ValueError(f"z-scores need at least 2 layer values, got {n}")
    mu = math.fsum(values) / n
    sigma = math.sqrt(math.fsum((v - mu) ** 2 for v in values) / n)
    if sigma < EPS_SIGMA:
        z = [0.0] * n
    else:
        z = [(v - mu) / sigma for v in values]
    return mu, sigma, z


def entropy_summary(per_layer_entropies):
    mu, sigma, z = layer_zscores(per_layer_entropies)
    return EntropyStats(
        per_layer=tuple(float(v) for v in per_layer_entropies),
        mu=mu,
        sigma=sigma,
        z=tuple(z),
    )


def gamma_from_entropies(stats, beta):
    """Entropy scaling factors beta * exp(tanh(z)) per layer."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return tuple(beta * math.exp(math.tanh(z)) for z in stats.z)


def alpha_from_accuracies(accuracies):
    """Accuracy modulators exp(tanh(-s)) per layer.

    Returns (alpha, mu, sigma, scores). Above-average accuracy gives
    alpha < 1, below-average gives alpha > 1.
    """
    accuracies = [float(a) for a in accuracies]
    for a in accuracies:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"accuracy {a} outside [0, 1]")
    mu, sigma, scores = layer_zscores(accuracies)
    alpha = tuple(math.exp(math.tanh(-s)) for s in scores)
    return alpha, mu, sigma, scores


def composite_loss(record, labels, alpha, beta, entropy_sign="penalize", gamma=None):
    """Total objective over all heads for one batch.

    ``alpha`` must hold one coefficient per layer. ``gamma`` overrides the
    entropy-derived scaling when given (used by ablations; pass ``beta`` per
    layer for uniform scaling, zeros to drop the regularizer). With
    ``entropy_sign="penalize"`` the entropy term is added to the minimized
    loss; ``"reward"`` flips its sign.

    Returns (total tensor, StepTelemetry).
    """
    if entropy_sign not in ENTROPY_SIGNS:
        raise ValueError(f"entropy_sign must be one of {ENTROPY_SIGNS}")
    num_layers = record.num_layers
    alpha = tuple(float(a) for a in alpha)
    if len(alpha) != num_layers:
        raise ValueError(
            f"got {len(alpha)} alpha values for {num_layers} layers"
        )

    layer_losses = [T.cross_entropy(p, labels) for p in record.probs]
    layer_entropies = [batch_entropy(p) for p in record.probs]
    stats = entropy_summary([h.item() for h in layer_entropies])
    if gamma is None:
        gamma = gamma_from_entropies(stats, beta)
    else:
        gamma = tuple(float(g) for g in gamma)
        if len(gamma) != num_layers:
            raise ValueError(
                f"got {len(gamma)} gamma values for {num_layers} layers"
            )
    sign = 1.0 if entropy_sign == "penalize" else -1.0

    total = layer_losses[0] * alpha[0] + layer_entropies[0] * (sign * gamma[0])
    for l in range(1, num_layers):
        total = total + layer_losses[l] * alpha[l]
        total = total + layer_entropies[l] * (sign * gamma[l])

    telemetry = StepTelemetry(
        entropy=stats,
        gamma=gamma,
        alpha=alpha,
        layer_losses=tuple(loss.item() for loss in layer_losses),
        total=total.item(),
    )
    return total, telemetry
