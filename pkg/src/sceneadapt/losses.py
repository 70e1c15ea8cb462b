"""Loss functions for the adversarial adaptation setup.

Semantic cross entropy applies only to labeled (source) batches.
Reconstruction is a per-element L1 mean so magnitudes are comparable
across resolutions. The adversarial pair is the standard sigmoid BCE on
raw patch scores, with the non-saturating generator form by default.
Every log argument is clamped to [PROB_FLOOR, 1] so a confident
discriminator cannot produce an infinite loss.
"""

from __future__ import annotations

from dataclasses import dataclass

from .diffcore import (Tensor, absolute, add, add_scalar, clamp, gather_class, log,
                       mean_all, scale, sigmoid, softmax_channels, sub)
from .errors import ConfigurationError, UsageError

PROB_FLOOR = 1e-7


@dataclass
class LossReport:
    """Scalar loss values from one training step; l_sem is None for unlabeled batches."""

    l_sem: float | None
    l_rec: float
    l_gan_g: float
    l_gan_d: float
    total: float


def _mean_neg_log(probs: Tensor) -> Tensor:
    return scale(mean_all(log(clamp(probs, PROB_FLOOR, 1.0))), -1.0)


def sem_loss(scores: Tensor, labels) -> Tensor:
    """Mean pixel-wise cross entropy of [B, C, H, W] scores against [B, H, W] labels."""
    picked = gather_class(softmax_channels(scores), labels)
    return _mean_neg_log(picked)


def rec_loss(reconstruction: Tensor, original: Tensor) -> Tensor:
    """Mean absolute difference between a reconstruction and its input."""
    if reconstruction.shape != original.shape:
        raise UsageError(
            f"reconstruction shape {reconstruction.shape} does not match "
            f"input shape {original.shape}")
    return mean_all(absolute(sub(reconstruction, original)))


def _one_minus(t: Tensor) -> Tensor:
    return add_scalar(scale(t, -1.0), 1.0)


def gan_d_loss(d_real: Tensor, d_fake_detached: Tensor) -> Tensor:
    """Discriminator BCE: real patches score high, reconstructed ones low.

    The fake scores must come from a detached reconstruction so this loss
    trains D alone.
    """
    real_term = _mean_neg_log(sigmoid(d_real))
    fake_term = _mean_neg_log(_one_minus(sigmoid(d_fake_detached)))
    return add(real_term, fake_term)


def gan_g_loss(d_fake: Tensor, saturating: bool = False) -> Tensor:
    """Generator-side adversarial loss on raw patch scores of a reconstruction.

    Default is the non-saturating -log D(fake). With saturating=True the
    original minimax +log(1 - D(fake)) is used instead; it can go negative
    and stalls when D is confident, so it exists for fidelity runs only.
    """
    if saturating:
        return mean_all(log(clamp(_one_minus(sigmoid(d_fake)), PROB_FLOOR, 1.0)))
    return _mean_neg_log(sigmoid(d_fake))


def total_loss(l_sem: Tensor | None, l_rec: Tensor | None, l_gan_g: Tensor | None,
               weights: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> Tensor:
    """Weighted sum of whichever loss terms are enabled.

    A None term is absent from the graph entirely, not multiplied by zero,
    so ablations propagate no gradient from disabled terms.
    """
    w_sem, w_rec, w_gan = weights
    terms = []
    for term, w in ((l_sem, w_sem), (l_rec, w_rec), (l_gan_g, w_gan)):
        if term is None:
            continue
        terms.append(term if w == 1.0 else scale(term, w))
    if not terms:
        raise ConfigurationError("all loss terms are disabled; nothing to optimize")
    out = terms[0]
    for term in terms[1:]:
        out = add(out, term)
    return out
