"""Training loop: alternating reconstruction/transformation steps with a
per-network update partition.

Each step computes every active loss at the pre-update parameters, takes
one gradient list per network, and applies the five optimizer updates in
the order identity, classifier, discriminator, generator, attribute. The
generator's objective contains no adversarial log term; it matches
discriminator and classifier features of the generated image instead.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .datasets import (
    Batch,
    LabeledDataset,
    Phase,
    UnlabeledPool,
    require_pairable,
    sample_reconstruction_batch,
    sample_transformation_batch,
    sample_unlabeled,
)
from .errors import ConfigurationError, TrainingError, ValidationError
from .losses import (
    LossReport,
    classification_loss,
    discriminator_loss,
    feature_matching_loss,
    kl_loss,
    latent_code,
    reconstruction_loss,
    reparameterize,
)
from .networks import ModelConfig, ModelState, OptimizerSettings, build_networks

UPDATE_ORDER = ("identity", "classifier", "discriminator", "generator", "attribute")

LOG_COLUMNS = ("L_I", "L_C", "L_D", "L_KL", "L_GR", "L_GD", "L_GC")


@dataclass(frozen=True)
class TrainConfig:
    """Schedule, weighting, and ablation switches for one training run."""

    total_steps: int
    batch_size: int = 32
    lam: float = 0.1
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    unsupervised_ratio: float = 0.0
    checkpoint_every: int = 1000
    seed: int = 0
    # eps convention for the attribute sampler: False = exp(eps/2).
    literal_exp: bool = False
    # True weights the attribute update as lam*(L_KL + L_G); False drops lam.
    scaled_attribute_update: bool = True
    enable_gc: bool = True
    enable_gd: bool = True
    enable_kl: bool = True
    enable_transformation: bool = True
    model: Optional[ModelConfig] = None

    def __post_init__(self) -> None:
        if self.total_steps < 1:
            raise ConfigurationError("total_steps must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not 0.0 < self.lam <= 1.0:
            raise ConfigurationError(f"lam must be in (0, 1], got {self.lam}")
        if not 0.0 <= self.unsupervised_ratio <= 1.0:
            raise ConfigurationError("unsupervised_ratio must be in [0, 1]")
        if self.checkpoint_every < 1:
            raise ConfigurationError("checkpoint_every must be >= 1")


@dataclass
class StepOutcome:
    """What one training step computed and which networks it updated."""

    step: int
    report: LossReport
    updated: dict[str, bool]


def format_log_line(step: int, report: LossReport) -> str:
    """One tab-separated log line; losses a phase skips print as '-'."""
    values = report.as_dict()
    cells = [str(step), report.phase.value]
    for column in LOG_COLUMNS:
        value = values[column]
        cells.append("-" if value is None else f"{value:.6f}")
    return "\t".join(cells)


def _take(value: Optional[torch.Tensor], name: str, step: int) -> Optional[float]:
    if value is None:
        return None
    scalar = float(value.detach())
    if not math.isfinite(scalar):
        raise TrainingError(f"non-finite {name} at step {step}")
    return scalar


def train_step(
    state: ModelState,
    batch: Batch,
    config: TrainConfig,
    noise_rng: Optional[torch.Generator] = None,
) -> StepOutcome:
    """Run one step of the alternating scheme on the given batch.

    All losses are evaluated at the current parameters; the per-network
    gradients are gathered first and the optimizers stepped afterwards, so
    no update sees another update's effect within the step. Unsupervised
    batches freeze the identity encoder and classifier entirely: their
    forwards run in evaluation mode and their optimizers are not stepped.
    """
    supervised = batch.phase is not Phase.UNSUPERVISED
    step = state.step + 1
    lam_phase = 1.0 if batch.phase is Phase.RECONSTRUCTION else config.lam
    x_s, x_a = batch.subject, batch.attribute

    frozen = [state.trunk, state.identity_head, state.classifier_head]
    was_training = [m.training for m in frozen]
    if not supervised:
        for m in frozen:
            m.eval()
    try:
        h_s = state.trunk(x_s)
        logits_i, f_i = state.identity_head(h_s)
        logits_c, f_c_subject = state.classifier_head(h_s)
        l_i = classification_loss(logits_i, batch.labels) if supervised else None
        l_c = classification_loss(logits_c, batch.labels) if supervised else None

        mu, eps = state.attribute(x_a)
        l_kl = kl_loss(mu, eps) if config.enable_kl else None
        r = torch.randn(mu.shape, generator=noise_rng, dtype=mu.dtype)
        z = reparameterize(mu, eps, r, literal_exp=config.literal_exp)
        x_out = state.generator(latent_code(f_i.detach(), z))

        prob_real, f_d_real = state.discriminator(x_a)
        prob_fake, f_d_fake = state.discriminator(x_out)
        l_d = discriminator_loss(prob_real, prob_fake)

        l_gr = reconstruction_loss(x_out, x_a)
        l_gd = (
            feature_matching_loss(f_d_fake, f_d_real.detach())
            if config.enable_gd
            else None
        )
        if config.enable_gc:
            _, f_c_fake = state.classifier_head(state.trunk(x_out))
            l_gc = feature_matching_loss(f_c_fake, f_c_subject.detach())
        else:
            l_gc = None
    finally:
        for m, flag in zip(frozen, was_training):
            m.train(flag)

    report = LossReport(
        phase=batch.phase,
        lam=lam_phase,
        l_i=_take(l_i, "L_I", step),
        l_c=_take(l_c, "L_C", step),
        l_d=_take(l_d, "L_D", step),
        l_gr=_take(l_gr, "L_GR", step),
        l_gd=_take(l_gd, "L_GD", step),
        l_gc=_take(l_gc, "L_GC", step),
        l_kl=_take(l_kl, "L_KL", step),
    )

    generator_objective = lam_phase * l_gr
    if l_gd is not None:
        generator_objective = generator_objective + l_gd
    if l_gc is not None:
        generator_objective = generator_objective + l_gc
    attribute_objective = generator_objective
    if l_kl is not None:
        attribute_objective = attribute_objective + l_kl
    if config.scaled_attribute_update:
        attribute_objective = lam_phase * attribute_objective

    objectives: dict[str, torch.Tensor] = {
        "discriminator": l_d,
        "generator": generator_objective,
        "attribute": attribute_objective,
    }
    if supervised:
        objectives["identity"] = l_i
        objectives["classifier"] = l_c

    grads: dict[str, list[Optional[torch.Tensor]]] = {}
    for name in UPDATE_ORDER:
        if name not in objectives:
            continue
        params = state.parameters_of(name)
        grads[name] = list(
            torch.autograd.grad(
                objectives[name], params, retain_graph=True, allow_unused=True
            )
        )

    for name in UPDATE_ORDER:
        if name not in grads:
            continue
        params = state.parameters_of(name)
        for param, grad in zip(params, grads[name]):
            param.grad = grad if grad is not None else torch.zeros_like(param)
        state.optimizers[name].step()
        for param in params:
            param.grad = None

    state.step = step
    updated = {name: name in grads for name in UPDATE_ORDER}
    return StepOutcome(step=step, report=report, updated=updated)


def _resolve_model_config(config: TrainConfig, labeled: LabeledDataset) -> ModelConfig:
    if config.model is None:
        return ModelConfig(
            num_identities=labeled.num_identities,
            image_size=labeled.image_size,
            init_seed=config.seed,
        )
    if config.model.num_identities != labeled.num_identities:
        raise ConfigurationError(
            f"model expects {config.model.num_identities} identities, "
            f"dataset has {labeled.num_identities}"
        )
    if config.model.image_size != labeled.image_size:
        raise ConfigurationError(
            f"model expects {config.model.image_size}px images, "
            f"dataset has {labeled.image_size}px"
        )
    return config.model


def train(
    config: TrainConfig,
    labeled: LabeledDataset,
    unlabeled: Optional[UnlabeledPool] = None,
    out_dir: Optional[str | os.PathLike] = None,
    on_step: Optional[Callable[[StepOutcome], None]] = None,
    state: Optional[ModelState] = None,
) -> ModelState:
    """Train until the step counter reaches config.total_steps.

    Odd (1-based) steps run the reconstruction phase, even steps the
    transformation phase. When an unlabeled pool is given, a
    config.unsupervised_ratio fraction of transformation steps instead
    draws the pool images, coin-flipping whether they serve as subjects
    (unsupervised, identity networks frozen) or as attribute images (the
    labeled subjects keep their labels). Passing ``state`` resumes a run;
    ``out_dir`` enables the step log and periodic checkpoints.
    """
    require_pairable(labeled)
    if state is None:
        state = build_networks(_resolve_model_config(config, labeled), config.optimizer)
    state.set_training(True)

    root_ss = np.random.SeedSequence(config.seed)
    batch_ss, noise_ss, coin_ss = root_ss.spawn(3)
    batch_rng = np.random.default_rng(batch_ss)
    coin_rng = np.random.default_rng(coin_ss)
    noise_rng = torch.Generator().manual_seed(int(noise_ss.generate_state(1)[0]))

    log_file = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log_file = open(out_dir / "training.log", "a")
    try:
        while state.step < config.total_steps:
            step = state.step + 1
            reconstruction = step % 2 == 1 or not config.enable_transformation
            if reconstruction:
                batch = sample_reconstruction_batch(labeled, config.batch_size, batch_rng)
            elif (
                unlabeled is not None
                and config.unsupervised_ratio > 0.0
                and coin_rng.random() < config.unsupervised_ratio
            ):
                role = "subject" if coin_rng.random() < 0.5 else "attribute"
                batch = sample_unlabeled(
                    unlabeled, config.batch_size, role, labeled, batch_rng
                )
            else:
                batch = sample_transformation_batch(labeled, config.batch_size, batch_rng)

            outcome = train_step(state, batch, config, noise_rng)
            if log_file is not None:
                log_file.write(format_log_line(outcome.step, outcome.report) + "\n")
            if on_step is not None:
                on_step(outcome)
            if out_dir is not None and step % config.checkpoint_every == 0:
                save_checkpoint(state, Path(out_dir) / "checkpoints" / f"step_{step:06d}")
    finally:
        if log_file is not None:
            log_file.close()
    if out_dir is not None:
        save_checkpoint(state, Path(out_dir) / "checkpoint")
    return state
