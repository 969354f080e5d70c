"""Metric-learning losses for the individual and joint embeddings."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import torch

from .mining import build_masks, loss_components, pairwise_distances

log = logging.getLogger(__name__)


@dataclass
class LossBreakdown:
    visible: torch.Tensor
    thermal: torch.Tensor
    audio: torch.Tensor
    joint: torch.Tensor

    @property
    def total(self) -> torch.Tensor:
        return self.visible + self.thermal + self.audio + self.joint

    def as_floats(self) -> dict[str, float]:
        vals = {"L_c": self.visible, "L_t": self.thermal, "L_s": self.audio, "L_j": self.joint, "L_total": self.total}
        return {k: v.detach().item() for k, v in vals.items()}


def stable_softplus(x: torch.Tensor) -> torch.Tensor:
    """log(1 + e^x) without overflow for large |x|."""
    return torch.clamp(x, min=0.0) + torch.log1p(torch.exp(-torch.abs(x)))


def _check_batch(X: torch.Tensor, Y: torch.Tensor, B: torch.Tensor | None = None) -> None:
    if X.dim() != 2:
        raise ValueError(f"embeddings must be (K, D), got {tuple(X.shape)}")
    if Y.dim() != 1 or Y.shape[0] != X.shape[0]:
        raise ValueError(f"labels shape {tuple(Y.shape)} does not match batch size {X.shape[0]}")
    if B is not None and (B.dim() != 1 or B.shape[0] != X.shape[0]):
        raise ValueError(f"validity shape {tuple(B.shape)} does not match batch size {X.shape[0]}")


def missing_modality_loss(
    X: torch.Tensor,
    Y: torch.Tensor,
    B: torch.Tensor,
    squared: bool = False,
    missing_cap: float | None = None,
    literal: bool = False,
) -> torch.Tensor:
    """Triplet-style loss that also pushes valid anchors off the missing point.

    Per valid anchor ``i``::

        alpha_i = d(hard valid positive) - d(hard valid negative) - d(nearest missing)
        loss_i  = softplus(alpha_i)

    averaged over anchors with ``B == 1``; zero when there are none.
    ``missing_cap`` optionally clips the nearest-missing distance.
    """
    Y = torch.as_tensor(Y, device=X.device)
    B = torch.as_tensor(B, device=X.device)
    _check_batch(X, Y, B)
    valid = B.bool()
    if not valid.any():
        return X.sum() * 0.0

    P = pairwise_distances(X, squared=squared)
    masks = build_masks(Y, valid)
    d_ap, d_an, d_am = loss_components(P, masks, valid, literal=literal)
    if missing_cap is not None:
        d_am = torch.clamp(d_am, max=missing_cap)
    alpha = d_ap - d_an - d_am
    per_anchor = stable_softplus(alpha)
    return per_anchor[valid].mean()


def triplet_hard_loss(
    X: torch.Tensor,
    Y: torch.Tensor,
    margin: float = 0.2,
    squared: bool = False,
) -> torch.Tensor:
    """Batch-hard triplet loss, mean hinge over anchors with a positive and a negative."""
    Y = torch.as_tensor(Y, device=X.device)
    _check_batch(X, Y)
    K = X.shape[0]
    P = pairwise_distances(X, squared=squared)
    eye = torch.eye(K, dtype=torch.bool, device=X.device)
    same = Y.unsqueeze(0) == Y.unsqueeze(1)
    pos = same & ~eye
    neg = ~same

    usable = pos.any(dim=1) & neg.any(dim=1)
    if not usable.any():
        if not neg.any():
            log.warning("triplet_hard_loss: single-class batch, no negatives")
        return X.sum() * 0.0

    # reuse the masked max/min helpers with every sample treated as valid
    masks_valid = torch.ones(K, dtype=torch.bool, device=X.device)
    masks = build_masks(Y, masks_valid)
    d_ap, d_an, _ = loss_components(P, masks, masks_valid)
    hinge = torch.clamp(d_ap - d_an + margin, min=0.0)
    return hinge[usable].mean()


def total_loss(
    visible: tuple[torch.Tensor, torch.Tensor, torch.Tensor],
    thermal: tuple[torch.Tensor, torch.Tensor, torch.Tensor],
    audio: tuple[torch.Tensor, torch.Tensor, torch.Tensor],
    joint: tuple[torch.Tensor, torch.Tensor],
    margin: float = 0.2,
) -> LossBreakdown:
    """Sum of the three missing-modality losses and the joint triplet loss.

    ``visible``, ``thermal`` and ``audio`` are ``(X, Y, B)`` triples; ``joint``
    is ``(X, Y)``. All four must describe the same samples in the same order.
    """
    Y_ref = torch.as_tensor(joint[1])
    for name, batch in (("visible", visible), ("thermal", thermal), ("audio", audio)):
        Y = torch.as_tensor(batch[1])
        if Y.shape != Y_ref.shape or not torch.equal(Y.to(Y_ref.device), Y_ref):
            raise ValueError(f"{name} batch is not aligned with the joint batch")
    return LossBreakdown(
        visible=missing_modality_loss(*visible),
        thermal=missing_modality_loss(*thermal),
        audio=missing_modality_loss(*audio),
        joint=triplet_hard_loss(joint[0], joint[1], margin=margin),
    )
