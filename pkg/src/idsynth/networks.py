"""The five networks: identity encoder, classifier, attribute encoder,
generator, discriminator.

The identity encoder and the classifier share one conv trunk instance,
so trunk updates applied through either are visible through both. All
architectures are declarative over ModelConfig: stride-2 conv stages on
the way down, nearest-neighbor upsampling + conv on the way up.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import torch
import torch.nn as nn

from .errors import ConfigurationError, ValidationError

NETWORK_NAMES = ("identity", "classifier", "attribute", "generator", "discriminator")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters shared by all five networks."""

    num_identities: int
    image_size: int = 32
    image_channels: int = 3
    d_identity: int = 64
    d_attribute: int = 128
    base_channels: int = 16
    num_stages: int = 4
    init_std: float = 0.02
    init_seed: int = 0

    def __post_init__(self) -> None:
        if self.num_identities < 2:
            raise ConfigurationError("num_identities must be >= 2")
        for name in ("image_size", "image_channels", "d_identity", "d_attribute",
                     "base_channels", "num_stages"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        factor = 2 ** self.num_stages
        if self.image_size % factor != 0 or self.image_size < factor:
            raise ConfigurationError(
                f"image_size {self.image_size} must be a positive multiple of "
                f"2^num_stages = {factor} so encoder and generator stages line up"
            )

    @property
    def stage_channels(self) -> tuple[int, ...]:
        """Encoder channel widths, doubling per stage."""
        return tuple(self.base_channels * (2 ** i) for i in range(self.num_stages))

    @property
    def bottleneck_size(self) -> int:
        return self.image_size // (2 ** self.num_stages)

    @property
    def trunk_dim(self) -> int:
        return self.stage_channels[-1] * self.bottleneck_size ** 2

    @property
    def latent_width(self) -> int:
        return self.d_identity + self.d_attribute


@dataclass(frozen=True)
class OptimizerSettings:
    """Adaptive-moment optimizer hyperparameters, per network.

    ``lr_overrides`` maps a network name to a learning rate that replaces
    the shared default for that network (0.0 freezes it exactly).
    """

    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    lr_overrides: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for key in self.lr_overrides:
            if key not in NETWORK_NAMES:
                raise ConfigurationError(f"unknown network in lr_overrides: {key!r}")

    def lr_for(self, network: str) -> float:
        return self.lr_overrides.get(network, self.learning_rate)


@dataclass
class AttributeDistribution:
    """Predicted attribute posterior: mean and log-variance, both (n, d_A)."""

    mu: torch.Tensor
    eps: torch.Tensor

    def __post_init__(self) -> None:
        if self.mu.shape != self.eps.shape:
            raise ValidationError("mu and eps must share a shape")
        if not (torch.isfinite(self.mu).all() and torch.isfinite(self.eps).all()):
            raise ValidationError("attribute distribution parameters must be finite")


class EncoderTrunk(nn.Module):
    """Stride-2 conv stages ending in a flat feature vector."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        layers: list[nn.Module] = []
        in_ch = config.image_channels
        for out_ch in config.stage_channels:
            layers += [
                nn.Conv2d(in_ch, out_ch, kernel_size=4, stride=2, padding=1),
                nn.BatchNorm2d(out_ch),
                nn.ReLU(inplace=True),
            ]
            in_ch = out_ch
        self.stages = nn.Sequential(*layers)
        self.out_dim = config.trunk_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.stages(x).flatten(start_dim=1)


class ClassificationHead(nn.Module):
    """Feature embedding plus class logits over trunk output.

    The feature is the input of the final fully connected layer; it is what
    feature-matching losses and identity retrieval consume.
    """

    def __init__(self, in_dim: int, feature_dim: int, num_classes: int):
        super().__init__()
        self.embed = nn.Linear(in_dim, feature_dim)
        self.out = nn.Linear(feature_dim, num_classes)

    def forward(self, h: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        feature = self.embed(h)
        return self.out(feature), feature


class AttributeEncoder(nn.Module):
    """Conv trunk with two linear heads predicting (mu, eps)."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.trunk = EncoderTrunk(config)
        self.mu = nn.Linear(self.trunk.out_dim, config.d_attribute)
        self.eps = nn.Linear(self.trunk.out_dim, config.d_attribute)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.trunk(x)
        return self.mu(h), self.eps(h)


class Generator(nn.Module):
    """Latent code to image: linear stem, then upsample+conv stages, tanh out."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        channels = tuple(reversed(config.stage_channels))
        self.start_channels = channels[0]
        self.start_size = config.bottleneck_size
        self.stem = nn.Sequential(
            nn.Linear(config.latent_width, self.start_channels * self.start_size ** 2),
            nn.BatchNorm1d(self.start_channels * self.start_size ** 2),
            nn.ReLU(inplace=True),
        )
        layers: list[nn.Module] = []
        in_ch = channels[0]
        for i in range(config.num_stages):
            out_ch = channels[i + 1] if i + 1 < len(channels) else channels[-1]
            layers += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=1, padding=1),
                nn.BatchNorm2d(out_ch),
                nn.ReLU(inplace=True),
            ]
            in_ch = out_ch
        layers += [
            nn.Conv2d(in_ch, config.image_channels, kernel_size=3, stride=1, padding=1),
            nn.Tanh(),
        ]
        self.stages = nn.Sequential(*layers)

    def forward(self, code: torch.Tensor) -> torch.Tensor:
        h = self.stem(code)
        h = h.view(h.shape[0], self.start_channels, self.start_size, self.start_size)
        return self.stages(h)


class Discriminator(nn.Module):
    """Strided conv real/fake critic exposing its pre-final-layer feature."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        layers: list[nn.Module] = []
        in_ch = config.image_channels
        for i, out_ch in enumerate(config.stage_channels):
            layers.append(nn.Conv2d(in_ch, out_ch, kernel_size=4, stride=2, padding=1))
            if i > 0:
                layers.append(nn.BatchNorm2d(out_ch))
            layers.append(nn.LeakyReLU(0.2, inplace=True))
            in_ch = out_ch
        self.stages = nn.Sequential(*layers)
        self.out = nn.Linear(config.trunk_dim, 1)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        feature = self.stages(x).flatten(start_dim=1)
        prob = torch.sigmoid(self.out(feature)).squeeze(1)
        return prob, feature


@dataclass
class ModelState:
    """Parameters and optimizer state of all five networks.

    ``trunk`` is the single shared conv trunk of the identity encoder and
    the classifier; both heads read it and both their optimizers update it.
    """

    config: ModelConfig
    trunk: EncoderTrunk
    identity_head: ClassificationHead
    classifier_head: ClassificationHead
    attribute: AttributeEncoder
    generator: Generator
    discriminator: Discriminator
    optimizers: dict[str, torch.optim.Adam]
    step: int = 0

    def modules_of(self, network: str) -> list[nn.Module]:
        """The modules making up one logical network."""
        table: dict[str, list[nn.Module]] = {
            "identity": [self.trunk, self.identity_head],
            "classifier": [self.trunk, self.classifier_head],
            "attribute": [self.attribute],
            "generator": [self.generator],
            "discriminator": [self.discriminator],
        }
        if network not in table:
            raise ValidationError(f"unknown network {network!r}")
        return table[network]

    def parameters_of(self, network: str) -> list[nn.Parameter]:
        params: list[nn.Parameter] = []
        for module in self.modules_of(network):
            params.extend(module.parameters())
        return params

    def sharing_map(self) -> dict[str, tuple[str, ...]]:
        """Which parameter arrays the identity encoder and classifier alias."""
        shared = tuple(f"trunk.{name}" for name, _ in self.trunk.named_parameters())
        return {"identity": shared, "classifier": shared}

    def all_modules(self) -> Iterator[nn.Module]:
        yield from (
            self.trunk,
            self.identity_head,
            self.classifier_head,
            self.attribute,
            self.generator,
            self.discriminator,
        )

    def set_training(self, flag: bool) -> None:
        for module in self.all_modules():
            module.train(flag)


def _init_module(module: nn.Module, std: float, rng: torch.Generator) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            m.weight.data.normal_(0.0, std, generator=rng)
            if m.bias is not None:
                m.bias.data.zero_()
        elif isinstance(m, (nn.BatchNorm1d, nn.BatchNorm2d)):
            m.weight.data.fill_(1.0)
            m.bias.data.zero_()


def build_networks(
    config: ModelConfig, optimizer: OptimizerSettings | None = None
) -> ModelState:
    """Construct and initialize the five networks plus their optimizers.

    Initialization is deterministic in config.init_seed: conv and linear
    weights are drawn from N(0, init_std), biases start at zero, and
    normalization layers start as the identity map.
    """
    optimizer = optimizer or OptimizerSettings()
    rng = torch.Generator().manual_seed(config.init_seed)
    trunk = EncoderTrunk(config)
    identity_head = ClassificationHead(config.trunk_dim, config.d_identity, config.num_identities)
    classifier_head = ClassificationHead(config.trunk_dim, config.d_identity, config.num_identities)
    attribute = AttributeEncoder(config)
    generator = Generator(config)
    discriminator = Discriminator(config)
    for module in (trunk, identity_head, classifier_head, attribute, generator, discriminator):
        _init_module(module, config.init_std, rng)

    state = ModelState(
        config=config,
        trunk=trunk,
        identity_head=identity_head,
        classifier_head=classifier_head,
        attribute=attribute,
        generator=generator,
        discriminator=discriminator,
        optimizers={},
    )
    for name in NETWORK_NAMES:
        state.optimizers[name] = torch.optim.Adam(
            state.parameters_of(name),
            lr=optimizer.lr_for(name),
            betas=(optimizer.beta1, optimizer.beta2),
        )
    return state


def _check_images(state: ModelState, x: torch.Tensor) -> None:
    expected = (state.config.image_channels, state.config.image_size, state.config.image_size)
    if x.dim() != 4 or tuple(x.shape[1:]) != expected:
        raise ValidationError(
            f"expected image batch of shape (n, {expected[0]}, {expected[1]}, "
            f"{expected[2]}), got {tuple(x.shape)}"
        )


def _check_finite(name: str, *tensors: torch.Tensor) -> None:
    for t in tensors:
        if not torch.isfinite(t).all():
            raise ValidationError(f"{name} produced non-finite values")


def forward_identity(state: ModelState, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Identity vectors f_I and identity logits for a batch of images."""
    _check_images(state, x)
    logits, feature = state.identity_head(state.trunk(x))
    _check_finite("identity encoder", feature, logits)
    return feature, logits


def classify(state: ModelState, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Class logits and classifier features f_C for a batch of images."""
    _check_images(state, x)
    logits, feature = state.classifier_head(state.trunk(x))
    _check_finite("classifier", logits, feature)
    return logits, feature


def forward_attribute(state: ModelState, x: torch.Tensor) -> AttributeDistribution:
    """Attribute posterior (mu, eps) for a batch of images."""
    _check_images(state, x)
    mu, eps = state.attribute(x)
    return AttributeDistribution(mu=mu, eps=eps)


def generate(state: ModelState, code: torch.Tensor) -> torch.Tensor:
    """Decode latent codes [identity ; attribute] into images in [-1, 1]."""
    if code.dim() != 2 or code.shape[1] != state.config.latent_width:
        raise ValidationError(
            f"latent code must be (n, {state.config.latent_width}), got {tuple(code.shape)}"
        )
    images = state.generator(code)
    _check_finite("generator", images)
    return images


def discriminate(state: ModelState, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Real-image probabilities and discriminator features f_D."""
    _check_images(state, x)
    prob, feature = state.discriminator(x)
    _check_finite("discriminator", prob, feature)
    return prob, feature
