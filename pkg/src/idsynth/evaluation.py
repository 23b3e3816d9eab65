"""Quantitative evaluation: identity retrieval, attribute-leakage probing,
ablation configurations, and a sharpness proxy.

Identification matches classifier features by cosine similarity against a
one-image-per-identity gallery. The leakage probe trains a small
perceptron to recover identity from attribute vectors; low accuracy means
the attribute code carries little identity information.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch
import torch.nn as nn

from .datasets import LabeledDataset
from .errors import ValidationError
from .networks import ModelState, classify, forward_attribute, forward_identity
from .synthesis import recombine
from .trainer import TrainConfig


def split_gallery_queries(dataset: LabeledDataset) -> tuple[LabeledDataset, LabeledDataset]:
    """First image of each identity becomes the gallery; the rest query."""
    labels = dataset.labels.numpy()
    seen: set[int] = set()
    gallery_idx, query_idx = [], []
    for i, label in enumerate(labels):
        if int(label) in seen:
            query_idx.append(i)
        else:
            seen.add(int(label))
            gallery_idx.append(i)
    if not query_idx:
        raise ValidationError("dataset has no second image of any identity to query with")

    def subset(idx: list[int]) -> LabeledDataset:
        return LabeledDataset(
            images=dataset.images[idx],
            labels=dataset.labels[idx],
            num_identities=dataset.num_identities,
        )

    return subset(gallery_idx), subset(query_idx)


@torch.no_grad()
def top1_identification(
    state: ModelState,
    gallery: LabeledDataset,
    queries: LabeledDataset,
    mode: str = "raw",
    attribute_pool: torch.Tensor | None = None,
    seed: int = 0,
) -> float:
    """Fraction of queries whose nearest gallery identity is correct.

    mode="generated" first re-renders each query with the identity kept
    and the attributes taken from a randomly drawn pool image, then
    matches the synthesized image instead of the original. Matching uses
    cosine similarity of classifier features; ties resolve to the lowest
    gallery index.
    """
    if mode not in ("raw", "generated"):
        raise ValidationError(f"mode must be 'raw' or 'generated', got {mode!r}")
    gallery_labels = gallery.labels.numpy()
    if len(np.unique(gallery_labels)) != len(gallery_labels):
        raise ValidationError("gallery must hold exactly one image per identity")
    if not set(queries.labels.tolist()) <= set(gallery.labels.tolist()):
        raise ValidationError("every query identity must appear in the gallery")

    state.set_training(False)
    probes = queries.images
    if mode == "generated":
        if attribute_pool is None or attribute_pool.dim() != 4 or attribute_pool.shape[0] == 0:
            raise ValidationError("generated mode needs a nonempty attribute_pool")
        rng = np.random.default_rng(seed)
        draw = rng.integers(0, attribute_pool.shape[0], size=len(queries))
        probes = recombine(state, queries.images, attribute_pool[draw])

    _, f_query = classify(state, probes)
    _, f_gallery = classify(state, gallery.images)
    f_query = f_query / f_query.norm(dim=1, keepdim=True).clamp_min(1e-12)
    f_gallery = f_gallery / f_gallery.norm(dim=1, keepdim=True).clamp_min(1e-12)
    similarity = (f_query @ f_gallery.T).numpy()
    nearest = similarity.argmax(axis=1)  # first maximum = lowest gallery index
    predicted = gallery_labels[nearest]
    return float((predicted == queries.labels.numpy()).mean())


@dataclass(frozen=True)
class ProbeConfig:
    """Architecture and optimization of the leakage probe."""

    hidden: int = 256
    steps: int = 2000
    lr: float = 1e-3
    seed: int = 0
    feature: str = "attribute"  # or "identity" for the sanity inversion

    def __post_init__(self) -> None:
        if self.feature not in ("attribute", "identity"):
            raise ValidationError("feature must be 'attribute' or 'identity'")
        if self.hidden < 1 or self.steps < 1 or self.lr <= 0:
            raise ValidationError("hidden, steps must be >= 1 and lr > 0")


@dataclass
class ProbeResult:
    train_accuracy: float
    validation_accuracy: float
    chance: float


def _stratified_split(
    labels: np.ndarray, split_ratio: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Per-identity split keeping at least one image on each side."""
    train_idx, val_idx = [], []
    for label in np.unique(labels):
        members = np.nonzero(labels == label)[0]
        if members.size < 2:
            raise ValidationError(
                f"identity {label} has {members.size} image(s); probing needs >= 2"
            )
        members = rng.permutation(members)
        n_train = int(round(split_ratio * members.size))
        n_train = min(max(n_train, 1), members.size - 1)
        train_idx.extend(members[:n_train])
        val_idx.extend(members[n_train:])
    return np.array(train_idx), np.array(val_idx)


def _init_linear(layer: nn.Linear, rng: torch.Generator) -> None:
    bound = 1.0 / float(layer.in_features) ** 0.5
    layer.weight.data.uniform_(-bound, bound, generator=rng)
    layer.bias.data.uniform_(-bound, bound, generator=rng)


@torch.no_grad()
def _extract_probe_features(
    state: ModelState, dataset: LabeledDataset, feature: str
) -> torch.Tensor:
    state.set_training(False)
    if feature == "attribute":
        return forward_attribute(state, dataset.images).mu
    f_i, _ = forward_identity(state, dataset.images)
    return f_i


def attribute_leakage_probe(
    state: ModelState,
    dataset: LabeledDataset,
    split_ratio: float = 0.8,
    probe_config: ProbeConfig = ProbeConfig(),
) -> ProbeResult:
    """How well identity can be read out of the attribute code.

    Extracts the attribute mean vector of every image, trains a two-
    hidden-layer perceptron to classify identity on a stratified split,
    and reports accuracy on both sides plus the 1/K chance level.
    """
    if dataset.num_identities < 2:
        raise ValidationError("probing needs at least two identities")
    if not 0.0 < split_ratio < 1.0:
        raise ValidationError("split_ratio must be in (0, 1)")

    features = _extract_probe_features(state, dataset, probe_config.feature).detach()
    labels = dataset.labels.numpy()
    rng = np.random.default_rng(probe_config.seed)
    train_idx, val_idx = _stratified_split(labels, split_ratio, rng)

    torch_rng = torch.Generator().manual_seed(probe_config.seed)
    probe = nn.Sequential(
        nn.Linear(features.shape[1], probe_config.hidden),
        nn.ReLU(),
        nn.Linear(probe_config.hidden, probe_config.hidden),
        nn.ReLU(),
        nn.Linear(probe_config.hidden, dataset.num_identities),
    )
    for module in probe.modules():
        if isinstance(module, nn.Linear):
            _init_linear(module, torch_rng)

    x_train = features[train_idx]
    y_train = dataset.labels[train_idx]
    optimizer = torch.optim.Adam(probe.parameters(), lr=probe_config.lr)
    loss_fn = nn.CrossEntropyLoss()
    for _ in range(probe_config.steps):
        optimizer.zero_grad()
        loss = loss_fn(probe(x_train), y_train)
        loss.backward()
        optimizer.step()

    probe.eval()
    with torch.no_grad():
        train_acc = float((probe(x_train).argmax(1) == y_train).float().mean())
        val_pred = probe(features[val_idx]).argmax(1)
        val_acc = float((val_pred == dataset.labels[val_idx]).float().mean())
    return ProbeResult(
        train_accuracy=train_acc,
        validation_accuracy=val_acc,
        chance=1.0 / dataset.num_identities,
    )


def ablation_variants(base: TrainConfig) -> dict[str, TrainConfig]:
    """The five training configurations of the ablation study.

    Every variant is a pure configuration change; no code paths differ.
    """
    return {
        "full": base,
        "no_gc": replace(base, enable_gc=False),
        "no_gd": replace(base, enable_gd=False),
        "no_transformation": replace(base, enable_transformation=False),
        "no_unsupervised": replace(base, unsupervised_ratio=0.0),
    }


def high_frequency_energy(images: torch.Tensor) -> float:
    """Mean squared Laplacian response over luminance; low values mean blur."""
    if images.dim() == 3:
        images = images.unsqueeze(0)
    if images.dim() != 4:
        raise ValidationError(f"expected (n, C, H, W) images, got {tuple(images.shape)}")
    arr = images.detach().cpu().numpy().astype(np.float64)
    if arr.shape[1] == 3:
        gray = 0.299 * arr[:, 0] + 0.587 * arr[:, 1] + 0.114 * arr[:, 2]
    else:
        gray = arr[:, 0]
    lap = (
        gray[:, :-2, 1:-1]
        + gray[:, 2:, 1:-1]
        + gray[:, 1:-1, :-2]
        + gray[:, 1:-1, 2:]
        - 4.0 * gray[:, 1:-1, 1:-1]
    )
    return float(np.mean(lap**2))
