"""The proposed model, its ablations and the baselines, as declarative configs."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .config import AVTNetConfig
from .losses import missing_modality_loss, triplet_hard_loss
from .model import AVTNet, EndToEndClassifier, Recognizer

LOSSES = ("missing_modality", "triplet_hard", "triplet_prototypical")


@dataclass(frozen=True)
class VariantConfig:
    name: str
    modalities: tuple[str, ...] = ("audio", "visible", "thermal")
    individual: bool = True
    joint: str | None = "transformer"       # "transformer" | "dense" | None
    individual_loss: str = "missing_modality"
    joint_loss: str = "triplet_hard"
    end_to_end: bool = False
    label: str | None = None

    def __post_init__(self):
        if self.individual_loss not in LOSSES or self.joint_loss not in LOSSES:
            raise ValueError(f"{self.name}: unknown loss")
        if not self.end_to_end and not self.individual and self.joint is None:
            raise ValueError(f"{self.name}: no embeddings")

    @property
    def display_name(self) -> str:
        return self.label or self.name

    @property
    def n_embeddings(self) -> int:
        return (len(self.modalities) if self.individual else 0) + (self.joint is not None)


VARIANTS: dict[str, VariantConfig] = {v.name: v for v in [
    VariantConfig("Prop"),
    VariantConfig("Prop-I", joint="dense"),
    VariantConfig("Prop-II", individual_loss="triplet_hard"),
    VariantConfig("Prop-III", individual=False),
    VariantConfig("Dense-Triplet", individual_loss="triplet_hard", joint="dense"),
    VariantConfig("JER-1", individual=False, joint="dense"),
    VariantConfig("JER-2", individual=False, joint="dense", joint_loss="triplet_prototypical",
                  label="JER-2 (interpreted)"),
    VariantConfig("E2E", individual=False, joint=None, end_to_end=True),
    VariantConfig("AV", modalities=("audio", "visible")),
    VariantConfig("AT", modalities=("audio", "thermal")),
    VariantConfig("VT", modalities=("visible", "thermal")),
]}

BIMODAL = ("AV", "AT", "VT")


def get_variant(name: str) -> VariantConfig:
    try:
        return VARIANTS[name]
    except KeyError:
        raise KeyError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}") from None


def build_variant(variant: VariantConfig | str, cfg: AVTNetConfig) -> tuple[nn.Module, Recognizer | None]:
    """Return ``(embedder, recognizer)``; end-to-end variants return ``(classifier, None)``."""
    if isinstance(variant, str):
        variant = get_variant(variant)
    if variant.end_to_end:
        return EndToEndClassifier(cfg, variant.modalities), None
    embedder = AVTNet(cfg, variant.modalities, individual=variant.individual, joint=variant.joint)
    in_dim = cfg.embed_dim * len(embedder.embedding_names)
    if in_dim != cfg.embed_dim * variant.n_embeddings:
        raise AssertionError(f"{variant.name}: recognizer width {in_dim} does not match variant")
    return embedder, Recognizer(in_dim, cfg.n_classes, cfg.recognizer_dense)


def triplet_prototypical_loss(X: torch.Tensor, Y: torch.Tensor, margin: float = 0.2) -> torch.Tensor:
    """Batch-hard triplet hinge plus a prototype cross-entropy.

    Class prototypes are batch centroids; each sample is classified by a
    softmax over negative distances to the prototypes.
    """
    Y = torch.as_tensor(Y, device=X.device)
    classes, inverse = torch.unique(Y, return_inverse=True)
    if len(classes) < 2:
        return X.sum() * 0.0
    onehot = torch.nn.functional.one_hot(inverse, len(classes)).to(X.dtype)
    protos = (onehot.T @ X) / onehot.sum(0, keepdim=True).T
    dists = torch.cdist(X, protos)
    proto_ce = torch.nn.functional.cross_entropy(-dists, inverse)
    return triplet_hard_loss(X, Y, margin=margin) + proto_ce


def embedding_loss(name: str, X: torch.Tensor, Y: torch.Tensor, B: torch.Tensor | None, margin: float):
    if name == "missing_modality":
        return missing_modality_loss(X, Y, B)
    if name == "triplet_hard":
        return triplet_hard_loss(X, Y, margin=margin)
    return triplet_prototypical_loss(X, Y, margin=margin)

