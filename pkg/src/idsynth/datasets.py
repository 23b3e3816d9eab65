"""Datasets: manifest loading, procedural synthetic data, and batch sampling.

The synthetic dataset assigns every identity a fixed procedural glyph
(a smooth star-like blob with a fixed foreground color) and renders each
image of that identity under randomly drawn nuisance factors: translation,
rotation, background hue, and a global illumination scale. Identity is
therefore ground-truth separable from the nuisance factors, which makes
disentanglement measurable.
"""

from __future__ import annotations

import colorsys
import enum
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import torch

from .errors import LoadError, ValidationError
from .images import from_uint8, load_image


class Phase(enum.Enum):
    """Which of the three training regimes a batch feeds."""

    RECONSTRUCTION = "reconstruction"
    TRANSFORMATION = "transformation"
    UNSUPERVISED = "unsupervised"


Role = Literal["subject", "attribute"]


@dataclass
class LabeledDataset:
    """Images with dense integer identity labels in [0, num_identities).

    Training additionally needs every identity to appear at least twice
    (see require_pairable); evaluation galleries hold one image per
    identity, so that is not a construction-time requirement.
    """

    images: torch.Tensor  # (N, C, H, W) float32 in [-1, 1]
    labels: torch.Tensor  # (N,) int64
    num_identities: int

    def __post_init__(self) -> None:
        if self.images.dim() != 4:
            raise ValidationError(f"images must be (N, C, H, W), got {tuple(self.images.shape)}")
        if self.labels.shape != (self.images.shape[0],):
            raise ValidationError("labels must be one integer per image")
        if len(self) == 0:
            raise ValidationError("dataset is empty")
        labels = self.labels.numpy()
        if labels.min() < 0 or labels.max() >= self.num_identities:
            raise ValidationError(
                f"labels must lie in [0, {self.num_identities}), got range "
                f"[{labels.min()}, {labels.max()}]"
            )

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def image_size(self) -> int:
        return self.images.shape[-1]


def require_pairable(dataset: LabeledDataset) -> LabeledDataset:
    """Check that every identity has >= 2 images.

    Transformation training draws same-identity reconstruction targets, so
    datasets entering training must pass this; single-image evaluation
    galleries legitimately do not.
    """
    counts = np.bincount(dataset.labels.numpy(), minlength=dataset.num_identities)
    thin = np.nonzero(counts < 2)[0]
    if thin.size:
        raise ValidationError(
            f"every identity needs >= 2 images; identities {thin.tolist()} have fewer"
        )
    return dataset


@dataclass
class UnlabeledPool:
    """Images without identity labels, shape-compatible with a labeled dataset."""

    images: torch.Tensor  # (N, C, H, W) float32 in [-1, 1]

    def __post_init__(self) -> None:
        if self.images.dim() != 4:
            raise ValidationError(f"images must be (N, C, H, W), got {tuple(self.images.shape)}")
        if len(self) == 0:
            raise ValidationError("unlabeled pool is empty")

    def __len__(self) -> int:
        return self.images.shape[0]

    @classmethod
    def from_dataset(cls, dataset: LabeledDataset) -> "UnlabeledPool":
        """Strip the labels off a labeled dataset."""
        return cls(images=dataset.images)


@dataclass(frozen=True)
class AttributeRanges:
    """Per-factor (low, high) ranges the synthetic renderer draws from."""

    translation: tuple[float, float] = (-4.0, 4.0)  # pixels, both axes
    rotation: tuple[float, float] = (-45.0, 45.0)  # degrees
    background_hue: tuple[float, float] = (0.0, 1.0)
    illumination: tuple[float, float] = (0.55, 1.0)  # global brightness scale

    def __post_init__(self) -> None:
        for name in ("translation", "rotation", "background_hue", "illumination"):
            low, high = getattr(self, name)
            if not low < high:
                raise ValidationError(f"degenerate range for {name}: ({low}, {high})")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a procedural dataset; generation is a pure function of this spec."""

    num_identities: int
    images_per_identity: int
    image_size: int = 32
    attribute_ranges: AttributeRanges = field(default_factory=AttributeRanges)
    seed: int = 0
    # Offsets the per-identity glyph derivation so two specs can produce
    # disjoint identity populations (e.g. a held-out unlabeled pool).
    identity_offset: int = 0

    def __post_init__(self) -> None:
        if self.num_identities < 1 or self.images_per_identity < 1:
            raise ValidationError("need at least one identity and one image per identity")
        if self.image_size < 16 or self.image_size % 16 != 0:
            raise ValidationError(
                "image_size must be >= 16 and a multiple of the generator's total "
                f"upsampling factor (16), got {self.image_size}"
            )


@dataclass
class Batch:
    """A (subject, attribute) image pair batch for one training phase.

    Reconstruction batches reuse the subject images as attribute images;
    transformation batches pair each subject with a different record.
    Labels are present exactly when the phase is not unsupervised.
    """

    subject: torch.Tensor  # (n, C, H, W)
    attribute: torch.Tensor  # (n, C, H, W)
    labels: torch.Tensor | None  # (n,) int64, None only for unsupervised
    phase: Phase

    def __post_init__(self) -> None:
        if self.subject.shape != self.attribute.shape:
            raise ValidationError("subject and attribute batches must have identical shapes")
        if self.phase is Phase.RECONSTRUCTION and not torch.equal(self.subject, self.attribute):
            raise ValidationError("reconstruction batches require attribute == subject")
        if (self.labels is None) != (self.phase is Phase.UNSUPERVISED):
            raise ValidationError("labels must be present exactly when the phase is supervised")
        if self.labels is not None and self.labels.shape != (self.subject.shape[0],):
            raise ValidationError("labels must be one integer per subject row")

    def __len__(self) -> int:
        return self.subject.shape[0]


# ---------------------------------------------------------------------------
# Manifest loading
# ---------------------------------------------------------------------------


def load_image_dataset(
    root: str | os.PathLike, manifest: str | os.PathLike, image_size: int
) -> LabeledDataset:
    """Load a labeled dataset described by a tab-separated manifest.

    Each manifest line is ``relative/path<TAB>identity_string``. Identity
    strings are densified to integers in first-appearance order. Images are
    resized to ``image_size`` and rescaled to [-1, 1].
    """
    root = Path(root)
    try:
        lines = Path(manifest).read_text().splitlines()
    except FileNotFoundError:
        raise LoadError(f"manifest not found: {manifest}") from None

    images: list[torch.Tensor] = []
    labels: list[int] = []
    identity_ids: dict[str, int] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise LoadError(f"{manifest}:{lineno}: expected 'path<TAB>identity', got {line!r}")
        rel, identity = parts
        images.append(load_image(root / rel, size=image_size))
        labels.append(identity_ids.setdefault(identity, len(identity_ids)))

    if not images:
        raise LoadError(f"manifest {manifest} lists no images")
    return require_pairable(
        LabeledDataset(
            images=torch.stack(images),
            labels=torch.tensor(labels, dtype=torch.int64),
            num_identities=len(identity_ids),
        )
    )


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

_GOLDEN = 0.618033988749895


def _glyph_parameters(spec: SyntheticSpec, identity: int) -> dict:
    """Deterministic glyph shape and foreground color for one identity.

    The hue is spaced by the golden-ratio conjugate, so any two identities
    get distinct foreground colors; the blob's radial harmonics make each
    glyph rotation-sensitive and further distinguish shapes.
    """
    key = spec.identity_offset + identity
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 104729 + key)))
    hue = (key * _GOLDEN) % 1.0
    fg = colorsys.hsv_to_rgb(hue, 0.75, 0.95)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    return {
        "fg": np.array(fg, dtype=np.float64),
        "base_radius": 0.22 + 0.08 * rng.random(),  # fraction of image size
        # First harmonic bounded away from zero so no glyph is rotation-invariant.
        "harmonics": np.array(
            [
                sign * (0.15 + 0.15 * rng.random()),
                rng.uniform(-0.18, 0.18),
                rng.uniform(-0.12, 0.12),
            ]
        ),
        "phases": rng.uniform(0.0, 2.0 * np.pi, size=3),
    }


def _render_glyph(
    spec: SyntheticSpec,
    glyph: dict,
    translation: tuple[float, float],
    rotation_deg: float,
    background_hue: float,
    illumination: float,
) -> np.ndarray:
    """Render one (H, W, 3) uint8 image of a glyph under the given factors."""
    size = spec.image_size
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    cx = (size - 1) / 2.0 + translation[0]
    cy = (size - 1) / 2.0 + translation[1]
    dx, dy = xs - cx, ys - cy
    dist = np.hypot(dx, dy)
    angle = np.arctan2(dy, dx) - np.deg2rad(rotation_deg)

    radius = glyph["base_radius"] * size
    wobble = np.zeros_like(angle)
    for j, (amp, phase) in enumerate(zip(glyph["harmonics"], glyph["phases"]), start=1):
        wobble += amp * np.cos(j * angle + phase)
    boundary = radius * (1.0 + wobble)

    # ~1px soft edge so factor changes move pixel values smoothly.
    mask = np.clip((boundary - dist) + 0.5, 0.0, 1.0)

    bg = np.array(colorsys.hsv_to_rgb(background_hue % 1.0, 0.35, 0.85))
    img = bg[None, None, :] * (1.0 - mask[..., None]) + glyph["fg"][None, None, :] * mask[..., None]
    img = np.clip(img * illumination, 0.0, 1.0)
    return np.rint(img * 255.0).astype(np.uint8)


def generate_synthetic_dataset(spec: SyntheticSpec) -> LabeledDataset:
    """Generate the procedural dataset described by ``spec``.

    Bit-identical for equal specs; images of different identities differ
    even under identical nuisance factors because glyph colors are distinct.
    """
    if spec.images_per_identity < 2:
        raise ValidationError("images_per_identity must be >= 2 for a labeled dataset")
    ranges = spec.attribute_ranges
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 7)))
    images: list[torch.Tensor] = []
    labels: list[int] = []
    for identity in range(spec.num_identities):
        glyph = _glyph_parameters(spec, identity)
        for _ in range(spec.images_per_identity):
            factors = {
                "translation": tuple(rng.uniform(*ranges.translation, size=2)),
                "rotation_deg": rng.uniform(*ranges.rotation),
                "background_hue": rng.uniform(*ranges.background_hue),
                "illumination": rng.uniform(*ranges.illumination),
            }
            images.append(from_uint8(_render_glyph(spec, glyph, **factors)))
            labels.append(identity)
    return require_pairable(
        LabeledDataset(
            images=torch.stack(images),
            labels=torch.tensor(labels, dtype=torch.int64),
            num_identities=spec.num_identities,
        )
    )


def generate_synthetic_pool(spec: SyntheticSpec) -> UnlabeledPool:
    """Generate a synthetic unlabeled pool (identities are drawn but discarded)."""
    ranges = spec.attribute_ranges
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 7)))
    images: list[torch.Tensor] = []
    for identity in range(spec.num_identities):
        glyph = _glyph_parameters(spec, identity)
        for _ in range(spec.images_per_identity):
            factors = {
                "translation": tuple(rng.uniform(*ranges.translation, size=2)),
                "rotation_deg": rng.uniform(*ranges.rotation),
                "background_hue": rng.uniform(*ranges.background_hue),
                "illumination": rng.uniform(*ranges.illumination),
            }
            images.append(from_uint8(_render_glyph(spec, glyph, **factors)))
    return UnlabeledPool(images=torch.stack(images))


# ---------------------------------------------------------------------------
# Batch sampling (always with replacement; step counts define epochs)
# ---------------------------------------------------------------------------


def sample_reconstruction_batch(
    dataset: LabeledDataset, n: int, rng: np.random.Generator
) -> Batch:
    """Sample n records; attribute images are the subject images themselves."""
    if n < 1:
        raise ValidationError("batch size must be >= 1")
    idx = rng.integers(0, len(dataset), size=n)
    subject = dataset.images[idx]
    return Batch(
        subject=subject,
        attribute=subject,
        labels=dataset.labels[idx],
        phase=Phase.RECONSTRUCTION,
    )


def sample_transformation_batch(
    dataset: LabeledDataset, n: int, rng: np.random.Generator
) -> Batch:
    """Sample n (subject, attribute) pairs with per-row distinct record indices.

    Identities of a pair may coincide; only the record indices must differ.
    """
    if n < 1:
        raise ValidationError("batch size must be >= 1")
    if len(dataset) < 2:
        raise ValidationError("transformation sampling needs at least 2 records")
    size = len(dataset)
    subject_idx = rng.integers(0, size, size=n)
    # Uniform over the other size-1 records, so attribute index != subject index.
    attribute_idx = (subject_idx + 1 + rng.integers(0, size - 1, size=n)) % size
    return Batch(
        subject=dataset.images[subject_idx],
        attribute=dataset.images[attribute_idx],
        labels=dataset.labels[subject_idx],
        phase=Phase.TRANSFORMATION,
    )


def sample_unlabeled(
    pool: UnlabeledPool,
    n: int,
    role: Role,
    companion: LabeledDataset,
    rng: np.random.Generator,
) -> Batch:
    """Sample a batch that uses pool images in the given role.

    role="attribute": subjects (and labels) come from the companion labeled
    dataset, attributes from the pool; training treats this exactly like a
    transformation batch. role="subject": subjects come from the pool and
    carry no labels; attributes are drawn from the pool and companion
    combined.
    """
    if n < 1:
        raise ValidationError("batch size must be >= 1")
    if len(pool) == 0:
        raise ValidationError("unlabeled pool is empty")
    if role == "attribute":
        subject_idx = rng.integers(0, len(companion), size=n)
        attribute_idx = rng.integers(0, len(pool), size=n)
        return Batch(
            subject=companion.images[subject_idx],
            attribute=pool.images[attribute_idx],
            labels=companion.labels[subject_idx],
            phase=Phase.TRANSFORMATION,
        )
    if role == "subject":
        subject_idx = rng.integers(0, len(pool), size=n)
        combined = len(pool) + len(companion)
        attribute_idx = rng.integers(0, combined, size=n)
        attribute = torch.stack(
            [
                pool.images[i] if i < len(pool) else companion.images[i - len(pool)]
                for i in attribute_idx
            ]
        )
        return Batch(
            subject=pool.images[subject_idx],
            attribute=attribute,
            labels=None,
            phase=Phase.UNSUPERVISED,
        )
    raise ValidationError(f"role must be 'subject' or 'attribute', got {role!r}")
