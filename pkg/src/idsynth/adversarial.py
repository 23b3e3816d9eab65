"""Feature-space adversarial attacks on the classifier and their detection.

The attack finds a minimal perturbation r such that the classifier
features of x1 + r fall within a threshold of another image's features,
by descending a penalty relaxation ||r||^2 + c * violation with an
escalating coefficient c. Detection exploits that the generative model
reconstructs the attacked identity rather than the input's appearance:
a linear classifier over LBP texture histograms of (input,
reconstruction) pairs separates genuine from adversarial inputs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from sklearn.svm import LinearSVC

from .errors import LoadError, ValidationError
from .networks import ModelState, classify
from .synthesis import reconstruct

LBP_BINS = 59
LBP_GRID = 8

# Offsets of the 8 neighbors at radius 1, clockwise from the top-left.
_NEIGHBORS = (
    (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1),
)


def _uniform_lookup() -> np.ndarray:
    """Map each 8-bit neighborhood code to its uniform-pattern bin.

    Patterns with at most two 0/1 transitions around the circle get their
    own bin (58 of them); everything else shares the final bin.
    """
    table = np.full(256, LBP_BINS - 1, dtype=np.int64)
    next_bin = 0
    for code in range(256):
        bits = [(code >> i) & 1 for i in range(8)]
        transitions = sum(bits[i] != bits[(i + 1) % 8] for i in range(8))
        if transitions <= 2:
            table[code] = next_bin
            next_bin += 1
    return table


_UNIFORM_TABLE = _uniform_lookup()


def _luminance(image: np.ndarray) -> np.ndarray:
    if image.ndim == 2:
        return image.astype(np.float64)
    if image.ndim == 3 and image.shape[0] in (1, 3):
        if image.shape[0] == 1:
            return image[0].astype(np.float64)
        r, g, b = image.astype(np.float64)
        return 0.299 * r + 0.587 * g + 0.114 * b
    raise ValidationError(f"expected (H, W) or (C, H, W) image, got {image.shape}")


def lbp_features(image: torch.Tensor | np.ndarray, grid: int = LBP_GRID) -> np.ndarray:
    """Uniform LBP histogram features of one image.

    The image is reduced to luminance, each interior pixel is encoded by
    comparing its 8 neighbors at radius 1 against it (neighbor >= center),
    and per-cell histograms over a grid x grid partition of the code map
    are L1-normalized and concatenated: grid^2 * 59 values.
    """
    if isinstance(image, torch.Tensor):
        image = image.detach().cpu().numpy()
    gray = _luminance(image)
    h, w = gray.shape
    if h - 2 < grid or w - 2 < grid:
        raise ValidationError(
            f"image interior {h - 2}x{w - 2} is smaller than the {grid}x{grid} grid"
        )
    center = gray[1:-1, 1:-1]
    codes = np.zeros(center.shape, dtype=np.int64)
    for bit, (dy, dx) in enumerate(_NEIGHBORS):
        neighbor = gray[1 + dy : h - 1 + dy, 1 + dx : w - 1 + dx]
        codes |= (neighbor >= center).astype(np.int64) << bit
    binned = _UNIFORM_TABLE[codes]

    row_edges = np.linspace(0, binned.shape[0], grid + 1).astype(np.int64)
    col_edges = np.linspace(0, binned.shape[1], grid + 1).astype(np.int64)
    features = np.zeros(grid * grid * LBP_BINS, dtype=np.float64)
    cell = 0
    for i in range(grid):
        for j in range(grid):
            patch = binned[row_edges[i] : row_edges[i + 1], col_edges[j] : col_edges[j + 1]]
            hist = np.bincount(patch.ravel(), minlength=LBP_BINS).astype(np.float64)
            features[cell * LBP_BINS : (cell + 1) * LBP_BINS] = hist / hist.sum()
            cell += 1
    return features


# ---------------------------------------------------------------------------
# Attack
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttackConfig:
    """Penalty-method hyperparameters for adversarial crafting."""

    theta: float
    initial_c: float = 1.0
    c_growth: float = 10.0
    epochs: int = 5
    iterations: int = 100  # per epoch
    step_size: float = 0.05
    margin: float = 0.9  # fraction of theta the relaxation aims below

    def __post_init__(self) -> None:
        if self.theta <= 0:
            raise ValidationError("theta must be > 0")
        if not 0.0 < self.margin <= 1.0:
            raise ValidationError("margin must be in (0, 1]")
        if self.epochs < 1 or self.iterations < 1:
            raise ValidationError("epochs and iterations must be >= 1")
        if self.step_size <= 0 or self.initial_c <= 0 or self.c_growth <= 1:
            raise ValidationError("step_size, initial_c > 0 and c_growth > 1 required")


@dataclass
class AttackResult:
    """Outcome of one crafting run.

    On success the constraint holds strictly: achieved_distance < theta.
    On failure the fields carry the best (lowest-distance) iterate seen.
    objective_trace holds the penalty objective at every accepted iterate,
    one list per penalty epoch; within an epoch it decreases monotonically.
    """

    success: bool
    x_adv: torch.Tensor
    r: torch.Tensor
    achieved_distance: float
    perturbation_norm: float
    iterations: int
    objective_trace: list[list[float]]


def craft_adversarial(
    state: ModelState, x1: torch.Tensor, x2: torch.Tensor, cfg: AttackConfig
) -> AttackResult:
    """Perturb x1 so its classifier features approach those of x2.

    Minimizes ||r||^2 + c * max(0, d(r) - margin*theta) where
    d(r) = ||f_C(clamp(x1 + r)) - f_C(x2)||^2, escalating c each epoch.
    Iterates stay projected into the valid image range, so the returned
    perturbation never exceeds the range width. If the features already
    satisfy the constraint, r = 0 is returned without any optimization.
    """
    if x1.shape != x2.shape:
        raise ValidationError("x1 and x2 must have identical shapes")
    squeeze = x1.dim() == 3
    if squeeze:
        x1, x2 = x1.unsqueeze(0), x2.unsqueeze(0)
    state.set_training(False)

    with torch.no_grad():
        _, f_target = classify(state, x2)

    def distance_of(x_adv: torch.Tensor) -> torch.Tensor:
        _, f_adv = classify(state, x_adv)
        return (f_adv - f_target).pow(2).sum()

    def finish(success: bool, r: torch.Tensor, dist: float, iters: int,
               trace: list[list[float]]) -> AttackResult:
        x_adv = (x1 + r).clamp(-1.0, 1.0)
        return AttackResult(
            success=success,
            x_adv=x_adv.squeeze(0) if squeeze else x_adv,
            r=r.squeeze(0) if squeeze else r,
            achieved_distance=dist,
            perturbation_norm=float(r.pow(2).sum()),
            iterations=iters,
            objective_trace=trace,
        )

    with torch.no_grad():
        d0 = float(distance_of(x1))
    if d0 < cfg.theta:
        return finish(True, torch.zeros_like(x1), d0, 0, [])

    target = cfg.margin * cfg.theta
    r = torch.zeros_like(x1)
    best_feasible: Optional[torch.Tensor] = None
    best_feasible_norm = float("inf")
    best_distance = d0
    best_distance_r = r.clone()
    iterations = 0
    trace: list[list[float]] = []

    def objective(r_t: torch.Tensor, c: float) -> tuple[torch.Tensor, torch.Tensor]:
        d = distance_of((x1 + r_t).clamp(-1.0, 1.0))
        return r_t.pow(2).sum() + c * torch.clamp(d - target, min=0.0), d

    c = cfg.initial_c
    for _ in range(cfg.epochs):
        epoch_trace: list[float] = []
        with torch.no_grad():
            current_obj, current_d = objective(r, c)
        for _ in range(cfg.iterations):
            r_t = r.clone().requires_grad_(True)
            obj, _ = objective(r_t, c)
            (grad,) = torch.autograd.grad(obj, r_t)

            step = cfg.step_size
            accepted = False
            for _ in range(20):
                with torch.no_grad():
                    candidate = ((x1 + r - step * grad).clamp(-1.0, 1.0) - x1)
                    cand_obj, cand_d = objective(candidate, c)
                if float(cand_obj) < float(current_obj):
                    r = candidate
                    current_obj, current_d = cand_obj, cand_d
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break
            iterations += 1
            epoch_trace.append(float(current_obj))
            d_val = float(current_d)
            if d_val < best_distance:
                best_distance = d_val
                best_distance_r = r.clone()
            if d_val < cfg.theta:
                norm = float(r.pow(2).sum())
                if norm < best_feasible_norm:
                    best_feasible = r.clone()
                    best_feasible_norm = norm
        trace.append(epoch_trace)
        c *= cfg.c_growth

    if best_feasible is not None:
        with torch.no_grad():
            final_d = float(distance_of((x1 + best_feasible).clamp(-1.0, 1.0)))
        return finish(True, best_feasible, final_d, iterations, trace)
    return finish(False, best_distance_r, best_distance, iterations, trace)


@torch.no_grad()
def calibrate_theta(
    state: ModelState,
    images: torch.Tensor,
    labels: torch.Tensor,
    quantile: float = 0.25,
    max_pairs: int = 2000,
    seed: int = 0,
) -> float:
    """A feature-distance threshold scaled to a trained model.

    Returns the given quantile of squared classifier-feature distances
    over sampled different-identity pairs. Pairs below the threshold are
    already confusable; the attack must close the gap for the rest.
    """
    if not 0.0 < quantile < 1.0:
        raise ValidationError("quantile must be in (0, 1)")
    state.set_training(False)
    _, features = classify(state, images)
    rng = np.random.default_rng(seed)
    n = images.shape[0]
    distances = []
    for _ in range(max_pairs):
        i, j = rng.integers(0, n, size=2)
        if labels[i] == labels[j]:
            continue
        distances.append(float((features[i] - features[j]).pow(2).sum()))
    if not distances:
        raise ValidationError("no different-identity pairs found")
    return float(np.quantile(distances, quantile))


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------


@dataclass
class DetectorModel:
    """Linear detector over LBP histograms of (input, reconstruction) pairs.

    Positive scores mean adversarial. weight spans the concatenation of
    both images' LBP features, so its length is twice one feature vector.
    """

    weight: np.ndarray
    bias: float
    training_accuracy: float
    grid: int = LBP_GRID

    def __post_init__(self) -> None:
        expected = 2 * self.grid * self.grid * LBP_BINS
        if self.weight.shape != (expected,):
            raise ValidationError(
                f"weight must have shape ({expected},), got {self.weight.shape}"
            )

    def save(self, path: str | os.PathLike) -> None:
        np.savez(
            path,
            weight=self.weight,
            bias=np.float64(self.bias),
            training_accuracy=np.float64(self.training_accuracy),
            grid=np.int64(self.grid),
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DetectorModel":
        try:
            data = np.load(path)
        except (FileNotFoundError, ValueError) as err:
            raise LoadError(f"cannot read detector file {path}: {err}") from None
        for key in ("weight", "bias", "training_accuracy", "grid"):
            if key not in data:
                raise LoadError(f"detector file {path} lacks field {key!r}")
        return cls(
            weight=data["weight"],
            bias=float(data["bias"]),
            training_accuracy=float(data["training_accuracy"]),
            grid=int(data["grid"]),
        )


def pair_features(x: torch.Tensor, x_recon: torch.Tensor, grid: int = LBP_GRID) -> np.ndarray:
    """Concatenated LBP features of an image and its reconstruction."""
    return np.concatenate([lbp_features(x, grid), lbp_features(x_recon, grid)])


def train_detector(
    genuine: list[tuple[torch.Tensor, torch.Tensor]],
    adversarial: list[tuple[torch.Tensor, torch.Tensor]],
    grid: int = LBP_GRID,
) -> DetectorModel:
    """Fit the linear detector on (image, reconstruction) pairs per class.

    Soft-margin linear classification with regularization constant 1.0;
    genuine pairs are the negative class, adversarial the positive.
    """
    if len(genuine) == 0 or len(adversarial) == 0:
        raise ValidationError("both genuine and adversarial examples are required")
    rows = [pair_features(x, recon, grid) for x, recon in genuine]
    rows += [pair_features(x, recon, grid) for x, recon in adversarial]
    features = np.stack(rows)
    targets = np.concatenate([np.zeros(len(genuine)), np.ones(len(adversarial))])
    svm = LinearSVC(C=1.0)
    svm.fit(features, targets)
    accuracy = float(svm.score(features, targets))
    return DetectorModel(
        weight=svm.coef_.ravel().astype(np.float64),
        bias=float(svm.intercept_[0]),
        training_accuracy=accuracy,
        grid=grid,
    )


def detect(
    model: DetectorModel, state: ModelState, x: torch.Tensor
) -> tuple[float, str]:
    """Score one image; positive scores are labeled adversarial."""
    recon = reconstruct(state, x)
    score = float(model.weight @ pair_features(x, recon, model.grid) + model.bias)
    return score, ("adversarial" if score > 0 else "genuine")
