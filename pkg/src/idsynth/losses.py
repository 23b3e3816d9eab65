"""Loss terms and the attribute sampler.

Every function here is a pure map from tensors to a scalar tensor (batch
mean) and is differentiable through all tensor arguments. Weighting of the
reconstruction and KL terms is the trainer's job; these return base values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch

from .errors import ValidationError
from .datasets import Phase

# Probabilities are clamped this far from {0, 1} before taking logs.
PROB_EPS = 1e-7


def classification_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean negative log softmax probability of the true class.

    Computed via log-sum-exp, so large logits do not overflow.
    """
    if logits.dim() != 2:
        raise ValidationError(f"logits must be (n, K), got {tuple(logits.shape)}")
    if labels.shape != (logits.shape[0],):
        raise ValidationError("labels must be one integer per logit row")
    k = logits.shape[1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= k):
        raise ValidationError(f"labels must lie in [0, {k})")
    log_probs = logits - torch.logsumexp(logits, dim=1, keepdim=True)
    return -log_probs[torch.arange(logits.shape[0]), labels].mean()


def reconstruction_loss(x_out: torch.Tensor, x_attr: torch.Tensor) -> torch.Tensor:
    """Half squared error, summed over pixels and averaged over batch rows.

    Returns the unweighted base value; the caller weights it (1 for
    reconstruction steps, lambda for transformation steps).
    """
    if x_out.shape != x_attr.shape:
        raise ValidationError(
            f"shape mismatch: {tuple(x_out.shape)} vs {tuple(x_attr.shape)}"
        )
    diff = (x_attr - x_out).flatten(start_dim=1)
    return 0.5 * diff.pow(2).sum(dim=1).mean()


def kl_loss(mu: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    """KL divergence of N(mu, diag exp(eps)) from the standard normal.

    Per row: 0.5 * (mu.mu + sum_j exp(eps_j) - eps_j - 1), then the batch
    mean. Nonnegative, zero exactly at mu=0, eps=0.
    """
    if mu.shape != eps.shape:
        raise ValidationError(f"shape mismatch: {tuple(mu.shape)} vs {tuple(eps.shape)}")
    mu2 = mu.flatten(start_dim=1) if mu.dim() > 1 else mu.unsqueeze(0)
    eps2 = eps.flatten(start_dim=1) if eps.dim() > 1 else eps.unsqueeze(0)
    per_row = 0.5 * (mu2.pow(2).sum(dim=1) + (eps2.exp() - eps2 - 1.0).sum(dim=1))
    return per_row.mean()


def reparameterize(
    mu: torch.Tensor,
    eps: torch.Tensor,
    r: torch.Tensor,
    literal_exp: bool = False,
) -> torch.Tensor:
    """Draw z = mu + r * scale from the predicted attribute distribution.

    By default eps is treated as log-variance, so scale = exp(eps / 2),
    which matches the KL term. literal_exp=True uses scale = exp(eps)
    instead (eps read as log standard deviation).
    """
    if mu.shape != eps.shape or mu.shape != r.shape:
        raise ValidationError("mu, eps, r must share a shape")
    scale = eps.exp() if literal_exp else (0.5 * eps).exp()
    return mu + r * scale


def discriminator_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """Binary real/fake loss -E[log D(real)] - E[log(1 - D(fake))].

    Inputs are probabilities; they are clamped to [1e-7, 1 - 1e-7] so the
    logs stay finite.
    """
    d_real = d_real.clamp(PROB_EPS, 1.0 - PROB_EPS)
    d_fake = d_fake.clamp(PROB_EPS, 1.0 - PROB_EPS)
    return -(d_real.log().mean() + (1.0 - d_fake).log().mean())


def feature_matching_loss(f_a: torch.Tensor, f_b: torch.Tensor) -> torch.Tensor:
    """Half squared distance between feature vectors, batch-averaged."""
    if f_a.shape != f_b.shape:
        raise ValidationError(f"shape mismatch: {tuple(f_a.shape)} vs {tuple(f_b.shape)}")
    a = f_a.flatten(start_dim=1) if f_a.dim() > 1 else f_a.unsqueeze(0)
    b = f_b.flatten(start_dim=1) if f_b.dim() > 1 else f_b.unsqueeze(0)
    return 0.5 * (a - b).pow(2).sum(dim=1).mean()


def latent_code(identity: torch.Tensor, attribute: torch.Tensor) -> torch.Tensor:
    """Concatenate identity and attribute vectors into generator input."""
    if identity.dim() != 2 or attribute.dim() != 2:
        raise ValidationError("identity and attribute must be (n, d) matrices")
    if identity.shape[0] != attribute.shape[0]:
        raise ValidationError("identity and attribute batch sizes differ")
    return torch.cat([identity, attribute], dim=1)


@dataclass
class LossReport:
    """Scalar value of every loss term computed in one training step.

    Terms a phase skips are None. ``lam`` is the reconstruction weight the
    trainer applied on this step.
    """

    phase: Phase
    lam: float
    l_i: Optional[float] = None
    l_c: Optional[float] = None
    l_d: Optional[float] = None
    l_gr: Optional[float] = None
    l_gd: Optional[float] = None
    l_gc: Optional[float] = None
    l_kl: Optional[float] = None

    _NONNEGATIVE = ("l_kl", "l_gr", "l_gd", "l_gc")

    def __post_init__(self) -> None:
        import math

        for name in ("l_i", "l_c", "l_d", "l_gr", "l_gd", "l_gc", "l_kl"):
            value = getattr(self, name)
            if value is None:
                continue
            if not math.isfinite(value):
                raise ValidationError(f"{name} is not finite: {value}")
            if name in self._NONNEGATIVE and value < 0:
                raise ValidationError(f"{name} must be >= 0, got {value}")

    def as_dict(self) -> dict[str, Optional[float]]:
        return {
            "L_I": self.l_i,
            "L_C": self.l_c,
            "L_D": self.l_d,
            "L_KL": self.l_kl,
            "L_GR": self.l_gr,
            "L_GD": self.l_gd,
            "L_GC": self.l_gc,
        }
