"""AVTNet: per-modality feature branches, embedding heads, attention joint branch,
and the recognizer head trained on frozen embeddings."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .config import AVTNetConfig

MODALITIES = ("audio", "visible", "thermal")
EMBEDDINGS = ("audio", "visible", "thermal", "joint")


def l2_normalize(x: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    return x / torch.sqrt((x * x).sum(dim=-1, keepdim=True) + eps)


class AudioBranch(nn.Module):
    """Conv1D stack over time with mel bands as channels, then global average pool."""

    def __init__(self, cfg: AVTNetConfig):
        super().__init__()
        layers, ch = [], cfg.n_mels
        for _ in range(cfg.audio_layers):
            layers += [nn.Conv1d(ch, cfg.audio_filters, cfg.audio_kernel), nn.ReLU()]
            ch = cfg.audio_filters
        if ch != cfg.feature_dim:
            layers += [nn.Conv1d(ch, cfg.feature_dim, 1), nn.ReLU()]
        self.net = nn.Sequential(*layers)
        self.in_shape = (cfg.n_mels, cfg.n_frames)

    def forward(self, spec: torch.Tensor) -> torch.Tensor:
        if tuple(spec.shape[1:]) != self.in_shape:
            raise ValueError(f"spectrogram batch must be (N, {self.in_shape[0]}, {self.in_shape[1]}), "
                             f"got {tuple(spec.shape)}")
        return self.net(spec).mean(dim=-1)


class ImageBranch(nn.Module):
    """[Conv3x3 + ReLU + MaxPool2] x n, Conv1x1 + ReLU, global average pool. Takes NHWC."""

    def __init__(self, cfg: AVTNetConfig, channels: int):
        super().__init__()
        layers, ch = [], channels
        for _ in range(cfg.image_layers):
            layers += [nn.Conv2d(ch, cfg.image_filters, 3), nn.ReLU(), nn.MaxPool2d(2)]
            ch = cfg.image_filters
        layers += [nn.Conv2d(ch, cfg.feature_dim, 1), nn.ReLU()]
        self.net = nn.Sequential(*layers)
        self.in_shape = (cfg.image_size, cfg.image_size, channels)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        if tuple(img.shape[1:]) != self.in_shape:
            raise ValueError(f"image batch must be (N, {', '.join(map(str, self.in_shape))}), "
                             f"got {tuple(img.shape)}")
        return self.net(img.permute(0, 3, 1, 2)).mean(dim=(2, 3))


class EmbeddingHead(nn.Module):
    def __init__(self, in_dim: int, embed_dim: int, depth: int = 2):
        super().__init__()
        layers, d = [], in_dim
        for _ in range(depth - 1):
            layers += [nn.Linear(d, embed_dim), nn.ReLU()]
            d = embed_dim
        layers.append(nn.Linear(d, embed_dim))
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return l2_normalize(self.net(x))


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        self.heads = heads
        self.d_head = width // heads
        self.qkv = nn.Linear(width, 3 * width)
        self.out = nn.Linear(width, width)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        N, T, W = x.shape
        q, k, v = self.qkv(x).view(N, T, 3, self.heads, self.d_head).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)   # (N, H, T, T)
        weights = scores.softmax(dim=-1)
        ctx = (weights @ v).transpose(1, 2).reshape(N, T, W)
        return self.out(ctx), weights


class EncoderBlock(nn.Module):
    """Self-attention and a 2-layer feed-forward, each with residual + LayerNorm."""

    def __init__(self, width: int, heads: int, ff: int):
        super().__init__()
        self.attn = MultiHeadSelfAttention(width, heads)
        self.norm1 = nn.LayerNorm(width)
        self.ff = nn.Sequential(nn.Linear(width, ff), nn.ReLU(), nn.Linear(ff, width))
        self.norm2 = nn.LayerNorm(width)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        a, weights = self.attn(x)
        x = self.norm1(x + a)
        x = self.norm2(x + self.ff(x))
        return x, weights


class JointTransformer(nn.Module):
    """Tokenize the branch features, run one encoder block, flatten, embed.

    ``tokenization="modality"`` makes one token per modality feature;
    ``"chunked"`` slices the concatenated features into ``chunk_size`` pieces.
    """

    def __init__(self, cfg: AVTNetConfig, n_modalities: int):
        super().__init__()
        self.mode = cfg.tokenization
        concat = n_modalities * cfg.feature_dim
        if self.mode == "modality":
            self.n_tokens, token_dim = n_modalities, cfg.feature_dim
        else:
            if concat % cfg.chunk_size:
                raise ValueError("chunk_size must divide the concatenated feature length")
            self.n_tokens, token_dim = concat // cfg.chunk_size, cfg.chunk_size
        self.token_dim = token_dim
        self.project = nn.Linear(token_dim, cfg.transformer_width)
        self.block = EncoderBlock(cfg.transformer_width, cfg.transformer_heads, cfg.transformer_ff)
        self.head = EmbeddingHead(self.n_tokens * cfg.transformer_width, cfg.embed_dim)

    def forward(self, feats: list[torch.Tensor]) -> tuple[torch.Tensor, torch.Tensor]:
        tokens = torch.cat(feats, dim=-1).view(feats[0].shape[0], self.n_tokens, self.token_dim)
        x, weights = self.block(self.project(tokens))
        return self.head(x.flatten(1)), weights


class DenseJoint(nn.Module):
    """Three dense-256 layers (ReLU, ReLU, linear) over the concatenated features."""

    def __init__(self, in_dim: int, embed_dim: int):
        super().__init__()
        self.head = EmbeddingHead(in_dim, embed_dim, depth=3)

    def forward(self, feats: list[torch.Tensor]) -> tuple[torch.Tensor, None]:
        return self.head(torch.cat(feats, dim=-1)), None


@dataclass
class EmbeddingBundle:
    """Unit-norm embeddings keyed by head name; absent heads are simply missing."""

    embeddings: dict[str, torch.Tensor]
    features: dict[str, torch.Tensor]
    attention: torch.Tensor | None = None

    def concat(self, names: tuple[str, ...]) -> torch.Tensor:
        return torch.cat([self.embeddings[n] for n in names], dim=-1)


class AVTNet(nn.Module):
    def __init__(
        self,
        cfg: AVTNetConfig,
        modalities: tuple[str, ...] = MODALITIES,
        individual: bool = True,
        joint: str | None = "transformer",
    ):
        super().__init__()
        if joint not in ("transformer", "dense", None):
            raise ValueError(f"unknown joint branch {joint!r}")
        if not individual and joint is None:
            raise ValueError("model would produce no embeddings")
        self.cfg = cfg
        self.modalities = tuple(m for m in MODALITIES if m in modalities)
        self.branches = nn.ModuleDict()
        for m in self.modalities:
            self.branches[m] = AudioBranch(cfg) if m == "audio" else ImageBranch(cfg, 3 if m == "visible" else 1)
        self.heads = nn.ModuleDict(
            {m: EmbeddingHead(cfg.feature_dim, cfg.embed_dim) for m in self.modalities} if individual else {}
        )
        if joint == "transformer":
            self.joint = JointTransformer(cfg, len(self.modalities))
        elif joint == "dense":
            self.joint = DenseJoint(len(self.modalities) * cfg.feature_dim, cfg.embed_dim)
        else:
            self.joint = None

    @property
    def embedding_names(self) -> tuple[str, ...]:
        names = tuple(self.heads.keys())
        return names + (("joint",) if self.joint is not None else ())

    def features(self, inputs: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
        return {m: self.branches[m](inputs[m]) for m in self.modalities}

    def forward(self, inputs: dict[str, torch.Tensor]) -> EmbeddingBundle:
        feats = self.features(inputs)
        emb = {m: head(feats[m]) for m, head in self.heads.items()}
        attention = None
        if self.joint is not None:
            emb["joint"], attention = self.joint([feats[m] for m in self.modalities])
        return EmbeddingBundle(emb, feats, attention)


class Recognizer(nn.Module):
    """Dense 512 and 256 with batch norm and ReLU, then a linear layer to class logits."""

    def __init__(self, in_dim: int, n_classes: int, hidden: tuple[int, int] = (512, 256)):
        super().__init__()
        layers, d = [], in_dim
        for h in hidden:
            layers += [nn.Linear(d, h), nn.BatchNorm1d(h), nn.ReLU()]
            d = h
        layers.append(nn.Linear(d, n_classes))
        self.net = nn.Sequential(*layers)
        self.in_dim = in_dim
        self.n_classes = n_classes

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)

    def predict_proba(self, x: torch.Tensor) -> torch.Tensor:
        return F.softmax(self(x), dim=-1)


class EndToEndClassifier(nn.Module):
    """Feature branches feeding the recognizer directly, trained with cross-entropy only."""

    def __init__(self, cfg: AVTNetConfig, modalities: tuple[str, ...] = MODALITIES):
        super().__init__()
        self.cfg = cfg
        self.modalities = tuple(m for m in MODALITIES if m in modalities)
        self.branches = nn.ModuleDict({
            m: AudioBranch(cfg) if m == "audio" else ImageBranch(cfg, 3 if m == "visible" else 1)
            for m in self.modalities
        })
        self.classifier = Recognizer(len(self.modalities) * cfg.feature_dim, cfg.n_classes, cfg.recognizer_dense)

    def forward(self, inputs: dict[str, torch.Tensor]) -> torch.Tensor:
        feats = [self.branches[m](inputs[m]) for m in self.modalities]
        return self.classifier(torch.cat(feats, dim=-1))


def sample_inputs(sample, dtype=torch.float32) -> dict[str, torch.Tensor]:
    """Batch-of-one model inputs from a :class:`~avtpr.data.ModalitySample`."""
    return {
        "audio": torch.as_tensor(np.asarray(sample.spectrogram), dtype=dtype)[None],
        "visible": torch.as_tensor(np.asarray(sample.visible), dtype=dtype)[None],
        "thermal": torch.as_tensor(np.asarray(sample.thermal), dtype=dtype)[None],
    }


def avtnet_forward(model: AVTNet, sample) -> EmbeddingBundle:
    was_training = model.training
    model.eval()
    with torch.no_grad():
        bundle = model(sample_inputs(sample, next(model.parameters()).dtype))
    model.train(was_training)
    return bundle
