"""Bone-age progression/regression workbench."""

from .config import ModelConfig, TrainConfig, desk_model_config, desk_train_config
from .networks import BoneAgeModel, SelfAttention2d, build_model
from .losses import (LossBundle, adversarial_losses, age_classification_losses,
                     compose_losses, reconstruction_loss, smooth_age_label,
                     smooth_one_hot_exact, soft_cross_entropy)
from .spectral import spectral_normalize
from .data import (BoneDataset, SampleRecord, augment, bin_age, load_dataset,
                   load_manifest, preprocess, split_dataset)
from .phantom import PhantomSpec, generate_phantom, write_phantom_dataset
from .trainer import (TrainState, evaluate_losses, load_checkpoint,
                      load_model_from_checkpoint, save_checkpoint, train,
                      train_step)
from .metrics import (FeatureStats, ablation_report, age_invariant_reconstruct,
                      compute_stats, extract_features, frechet_distance,
                      measure_gap_width, progress_image)
from .tsne import tsne_embed

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
