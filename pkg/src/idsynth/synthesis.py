"""Inference-time recombination of identity and attribute vectors.

All functions run the networks in evaluation mode and never consult
identity labels, so subjects may come from identities the model never
saw in training. Frontalization has no dedicated mechanism: recombining
a subject with a frontal-pose attribute image is the whole trick.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch

from .errors import ValidationError
from .losses import latent_code, reparameterize
from .networks import ModelState, forward_attribute, forward_identity, generate


@dataclass
class MorphSequence:
    """Frames of an attribute interpolation plus the weights and codes used.

    alphas[i] weighs the first attribute image in frame i's latent code.
    """

    frames: list[torch.Tensor]
    alphas: list[float]
    codes: list[torch.Tensor]


def _as_batch(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if x.dim() == 3:
        return x.unsqueeze(0), True
    return x, False


@torch.no_grad()
def attribute_vector(
    state: ModelState,
    x: torch.Tensor,
    deterministic: bool = True,
    noise_rng: Optional[torch.Generator] = None,
    literal_exp: bool = False,
) -> torch.Tensor:
    """Attribute vector z for a batch of images; z = mu when deterministic."""
    x, squeeze = _as_batch(x)
    state.set_training(False)
    dist = forward_attribute(state, x)
    if deterministic:
        z = dist.mu
    else:
        r = torch.randn(dist.mu.shape, generator=noise_rng, dtype=dist.mu.dtype)
        z = reparameterize(dist.mu, dist.eps, r, literal_exp=literal_exp)
    return z.squeeze(0) if squeeze else z


@torch.no_grad()
def identity_vector(state: ModelState, x: torch.Tensor) -> torch.Tensor:
    """Identity vector f_I for a batch of images (no labels involved)."""
    x, squeeze = _as_batch(x)
    state.set_training(False)
    f_i, _ = forward_identity(state, x)
    return f_i.squeeze(0) if squeeze else f_i


@torch.no_grad()
def recombine(
    state: ModelState,
    x_subject: torch.Tensor,
    x_attribute: torch.Tensor,
    deterministic: bool = True,
    noise_rng: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Generate an image with the subject's identity and the other image's
    attributes.

    deterministic=True uses the attribute mean (z = mu), making repeated
    calls bit-identical; otherwise z is sampled.
    """
    x_subject, squeeze = _as_batch(x_subject)
    x_attribute, _ = _as_batch(x_attribute)
    if x_subject.shape != x_attribute.shape:
        raise ValidationError("subject and attribute batches must have identical shapes")
    state.set_training(False)
    f_i, _ = forward_identity(state, x_subject)
    z = attribute_vector(state, x_attribute, deterministic, noise_rng)
    out = generate(state, latent_code(f_i, z))
    return out.squeeze(0) if squeeze else out


@torch.no_grad()
def reconstruct(state: ModelState, x: torch.Tensor) -> torch.Tensor:
    """The model's deterministic reconstruction of x (its own attributes)."""
    return recombine(state, x, x, deterministic=True)


@torch.no_grad()
def morph_attributes(
    state: ModelState,
    x_subject: torch.Tensor,
    x_attr_1: torch.Tensor,
    x_attr_2: torch.Tensor,
    steps: int,
) -> MorphSequence:
    """Interpolate attributes between two images under a fixed identity.

    Emits ``steps`` frames with weights alpha evenly spaced over [0, 1];
    alpha weighs the first attribute image. Endpoint frames reuse the
    endpoint attribute vectors exactly, so they are bit-identical to
    direct recombination with x_attr_1 / x_attr_2.
    """
    if steps < 2:
        raise ValidationError(f"steps must be >= 2, got {steps}")
    x_subject, _ = _as_batch(x_subject)
    state.set_training(False)
    f_i, _ = forward_identity(state, x_subject)
    z1 = attribute_vector(state, _as_batch(x_attr_1)[0], deterministic=True)
    z2 = attribute_vector(state, _as_batch(x_attr_2)[0], deterministic=True)

    result = MorphSequence(frames=[], alphas=[], codes=[])
    for alpha in torch.linspace(0.0, 1.0, steps).tolist():
        if alpha == 0.0:
            z = z2
        elif alpha == 1.0:
            z = z1
        else:
            z = alpha * z1 + (1.0 - alpha) * z2
        code = latent_code(f_i, z)
        result.frames.append(generate(state, code).squeeze(0))
        result.alphas.append(alpha)
        result.codes.append(code.squeeze(0))
    return result


@torch.no_grad()
def recombination_grid(
    state: ModelState,
    subjects: torch.Tensor,
    attributes: torch.Tensor,
) -> torch.Tensor:
    """All subject x attribute recombinations, ordered row-major by subject.

    Feed the result to images.image_grid for a subjects-as-rows,
    attributes-as-columns mosaic.
    """
    if subjects.dim() != 4 or attributes.dim() != 4:
        raise ValidationError("subjects and attributes must be image batches")
    outputs = []
    for i in range(subjects.shape[0]):
        row_subject = subjects[i : i + 1].expand(attributes.shape[0], -1, -1, -1)
        outputs.append(recombine(state, row_subject.contiguous(), attributes))
    return torch.cat(outputs, dim=0)
