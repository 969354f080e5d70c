"""Batch-hard mining with validity-aware mask matrices.

Everything here is vectorized over a mini-batch of ``K`` embeddings. The
three distances returned by :func:`loss_components` feed the
missing-modality loss in :mod:`avtpr.losses`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

import torch


@dataclass(frozen=True)
class MaskSet:
    """The six K x K boolean masks used for mining.

    ``pos``       same label
    ``valid``     both samples valid
    ``missing``   NOT valid
    ``pos_valid`` pos AND valid, diagonal cleared
    ``neg``       NOT pos
    ``neg_valid`` neg AND valid
    """

    pos: torch.Tensor
    valid: torch.Tensor
    missing: torch.Tensor
    pos_valid: torch.Tensor
    neg: torch.Tensor
    neg_valid: torch.Tensor

    def as_dict(self) -> dict[str, torch.Tensor]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _safe_sqrt(x: torch.Tensor) -> torch.Tensor:
    # sqrt has an infinite derivative at 0; route zeros through a dummy value
    zero = x <= 0
    safe = torch.where(zero, torch.ones_like(x), x)
    return torch.where(zero, torch.zeros_like(x), torch.sqrt(safe))


def pairwise_distances(X: torch.Tensor, squared: bool = False) -> torch.Tensor:
    """Euclidean distance matrix between the rows of ``X``.

    Uses the Gram expansion ``|a|^2 - 2 a.b + |b|^2``, clamps negatives from
    round-off to zero and forces an exact zero diagonal.
    """
    if X.dim() != 2:
        raise ValueError(f"expected a (K, D) matrix, got shape {tuple(X.shape)}")
    gram = X @ X.T
    sq = torch.diagonal(gram)
    d2 = sq.unsqueeze(1) - 2.0 * gram + sq.unsqueeze(0)
    d2 = torch.clamp(d2, min=0.0)
    eye = torch.eye(X.shape[0], dtype=torch.bool, device=X.device)
    d2 = d2.masked_fill(eye, 0.0)
    # symmetrize so P == P.T bitwise
    d2 = 0.5 * (d2 + d2.T)
    if squared:
        return d2
    return _safe_sqrt(d2)


def build_masks(Y: torch.Tensor, B: torch.Tensor) -> MaskSet:
    Y = torch.as_tensor(Y)
    B = torch.as_tensor(B).bool()
    if Y.shape != B.shape or Y.dim() != 1:
        raise ValueError(f"labels {tuple(Y.shape)} and validity {tuple(B.shape)} must be equal-length vectors")
    K = Y.shape[0]
    eye = torch.eye(K, dtype=torch.bool, device=Y.device)

    pos = Y.unsqueeze(0) == Y.unsqueeze(1)
    valid = B.unsqueeze(0) & B.unsqueeze(1)
    missing = ~valid
    pos_valid = pos & valid & ~eye
    neg = ~pos
    neg_valid = neg & valid
    return MaskSet(pos, valid, missing, pos_valid, neg, neg_valid)


def _masked_row_max(P: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    # P >= 0, so zeroed entries never beat a real candidate; empty rows give 0
    hadamard = P * mask.to(P.dtype)
    idx = torch.argmax(hadamard, dim=1, keepdim=True)
    return torch.gather(hadamard, 1, idx).squeeze(1)


def _masked_row_min(P: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    sentinel = (P.detach().max(dim=1, keepdim=True).values + 1.0).expand_as(P)
    shifted = torch.where(mask, P, sentinel)
    idx = torch.argmin(shifted, dim=1, keepdim=True)
    picked = torch.gather(shifted, 1, idx).squeeze(1)
    has_candidate = mask.any(dim=1)
    return torch.where(has_candidate, picked, torch.zeros_like(picked))


def _literal_row_min(P: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    hadamard = P * mask.to(P.dtype)
    idx = torch.argmin(hadamard, dim=1, keepdim=True)
    return torch.gather(hadamard, 1, idx).squeeze(1)


def loss_components(
    P: torch.Tensor,
    masks: MaskSet,
    B: torch.Tensor,
    literal: bool = False,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Per-anchor (hard positive, hard negative, nearest missing) distances.

    All three are multiplied by ``B`` so missing anchors contribute zeros.
    Anchors with an empty candidate set get 0 for that component.

    ``literal=True`` takes the row minimum of the Hadamard product directly,
    in which case masked-out zeros win the minimum. Kept for comparison only.
    """
    K = P.shape[0]
    if P.shape != (K, K) or masks.pos.shape != (K, K) or B.shape[0] != K:
        raise ValueError("P, masks and B disagree on batch size")
    Bf = torch.as_tensor(B, device=P.device).to(P.dtype)
    eye = torch.eye(K, dtype=torch.bool, device=P.device)
    missing_cand = masks.missing & ~eye

    d_ap = _masked_row_max(P, masks.pos_valid)
    if literal:
        d_an = _literal_row_min(P, masks.neg_valid)
        d_am = _literal_row_min(P, missing_cand)
    else:
        d_an = _masked_row_min(P, masks.neg_valid)
        d_am = _masked_row_min(P, missing_cand)
    return d_ap * Bf, d_an * Bf, d_am * Bf


def dump_debug(
    path: str | Path,
    P: torch.Tensor,
    masks: MaskSet,
    components: tuple[torch.Tensor, torch.Tensor, torch.Tensor],
) -> None:
    """Write P, every mask and the components as tab-separated blocks."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t")
        blocks = {"P": P, **masks.as_dict()}
        for name, mat in blocks.items():
            writer.writerow([f"# {name}"])
            for row in mat.detach().cpu().tolist():
                writer.writerow([f"{float(v):.10g}" for v in row])
        writer.writerow(["# components", "d_ap", "d_an", "d_am"])
        d_ap, d_an, d_am = (c.detach().cpu().tolist() for c in components)
        for i, (a, n, m) in enumerate(zip(d_ap, d_an, d_am)):
            writer.writerow([i, f"{a:.10g}", f"{n:.10g}", f"{m:.10g}"])
