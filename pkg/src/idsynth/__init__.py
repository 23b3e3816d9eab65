"""Identity-preserving image synthesis via identity/attribute disentanglement.

A five-network adversarial scheme: an identity encoder and a classifier
(sharing a conv trunk) supply identity vectors, a variational attribute
encoder supplies attribute vectors, a generator recombines the two, and a
discriminator grounds realism through feature matching. On top of the
trained model: attribute morphing, open-set recombination, feature-space
adversarial attacks, and their reconstruction-based detection.
"""

from .adversarial import (
    AttackConfig,
    AttackResult,
    DetectorModel,
    calibrate_theta,
    craft_adversarial,
    detect,
    lbp_features,
    pair_features,
    train_detector,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config
from .datasets import (
    AttributeRanges,
    Batch,
    LabeledDataset,
    Phase,
    SyntheticSpec,
    UnlabeledPool,
    generate_synthetic_dataset,
    generate_synthetic_pool,
    load_image_dataset,
    require_pairable,
    sample_reconstruction_batch,
    sample_transformation_batch,
    sample_unlabeled,
)
from .errors import (
    ConfigurationError,
    IdsynthError,
    LoadError,
    TrainingError,
    ValidationError,
)
from .evaluation import (
    ProbeConfig,
    ProbeResult,
    ablation_variants,
    attribute_leakage_probe,
    high_frequency_energy,
    split_gallery_queries,
    top1_identification,
)
from .images import from_uint8, image_grid, load_image, save_image, to_uint8
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
from .networks import (
    AttributeDistribution,
    ModelConfig,
    ModelState,
    OptimizerSettings,
    build_networks,
    classify,
    discriminate,
    forward_attribute,
    forward_identity,
    generate,
)
from .reporting import (
    parse_training_log,
    render_loss_curves,
    render_metric_bars,
    render_score_histogram,
)
from .synthesis import (
    MorphSequence,
    attribute_vector,
    identity_vector,
    morph_attributes,
    recombine,
    recombination_grid,
    reconstruct,
)
from .trainer import (
    StepOutcome,
    TrainConfig,
    format_log_line,
    train,
    train_step,
)

__version__ = "0.1.0"
