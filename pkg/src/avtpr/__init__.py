"""Trimodal (audio / visible / thermal) person recognition robust to missing modalities."""

from .config import AVTNetConfig, SynthConfig, TrainConfig
from .losses import missing_modality_loss, total_loss, triplet_hard_loss
from .mining import build_masks, loss_components, pairwise_distances

__version__ = "0.1.0"
