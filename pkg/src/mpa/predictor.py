"""Trajectory heads: a single 6-mode decoder, or a bank of decoders fused by attention."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import torch
from torch import nn

from .config import doc
from .encoder import MCGStack, SceneEncoder, mlp

NUM_MODES = 6
HEADS = ("single", "multi")


@dataclass(frozen=True)
class ModelConfig:
    """Encoder and decoder sizes."""

    head: str = doc("trajectory head: single | multi", "single")
    d_model: int = doc("embedding width D", 128)
    hidden: int = doc("hidden width of every perceptron", 128)
    num_cg_blocks: int = doc("CG blocks per encoder MCG stack", 3)
    fusion_cg_blocks: int = doc("CG blocks refining the attention output of the multi head", 2)
    num_modes: int = doc("modes per decoder", NUM_MODES)
    num_decoders: int = doc("decoders in the multi head", 5)
    history_steps: int = doc("history length H", 11)
    future_steps: int = doc("prediction horizon T", 80)
    max_neighbors: int = doc("neighbor cap N_max, nearest kept", 8)
    max_polylines: int = doc("polyline cap, nearest kept", 32)
    max_nodes: int = doc("nodes per polyline", 20)

    def validate(self) -> None:
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        for name in ("d_model", "hidden", "num_modes", "num_decoders", "history_steps", "future_steps", "max_nodes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"model config: {name} must be positive")


@dataclass
class ModeSet:
    """M trajectories with per-step covariance parameters and mode logits.

    Leading batch dimensions are allowed: trajectories ``(..., M, T, 2)``,
    cov_raw ``(..., M, T, 3)``, logits ``(..., M)``.
    """

    trajectories: torch.Tensor
    cov_raw: torch.Tensor
    logits: torch.Tensor

    @property
    def probabilities(self) -> torch.Tensor:
        return torch.softmax(self.logits, dim=-1)

    @property
    def num_modes(self) -> int:
        return self.logits.shape[-1]

    def covariances(self) -> torch.Tensor:
        from .objective import covariance_matrix

        return covariance_matrix(self.cov_raw)

    def detach(self) -> "ModeSet":
        return ModeSet(self.trajectories.detach(), self.cov_raw.detach(), self.logits.detach())

    def __getitem__(self, idx) -> "ModeSet":
        return ModeSet(self.trajectories[idx], self.cov_raw[idx], self.logits[idx])


class ModeHead(nn.Module):
    """Decode a mode embedding into offsets (prefix-summed), covariances and a logit."""

    def __init__(self, dim: int, hidden: int, future_steps: int):
        super().__init__()
        self.future_steps = future_steps
        self.net = mlp(dim, hidden, future_steps * 5 + 1)

    def forward(self, mode_emb: torch.Tensor) -> ModeSet:
        T = self.future_steps
        out = self.net(mode_emb)
        offsets = out[..., : 2 * T].unflatten(-1, (T, 2))
        cov_raw = out[..., 2 * T : 5 * T].unflatten(-1, (T, 3))
        return ModeSet(torch.cumsum(offsets, dim=-2), cov_raw, out[..., -1])


class ModeEmbedder(nn.Module):
    def __init__(self, dim: int, hidden: int, num_modes: int):
        super().__init__()
        self.num_modes = num_modes
        self.net = mlp(dim, hidden, num_modes * dim)

    def forward(self, embedding: torch.Tensor) -> torch.Tensor:
        return self.net(embedding).unflatten(-1, (self.num_modes, -1))


class SingleDecoder(nn.Module):
    def __init__(self, dim: int, hidden: int, future_steps: int, num_modes: int = NUM_MODES):
        super().__init__()
        self.modes = ModeEmbedder(dim, hidden, num_modes)
        self.head = ModeHead(dim, hidden, future_steps)

    def forward(self, embedding: torch.Tensor) -> ModeSet:
        return self.head(self.modes(embedding))


class MultiDecoder(nn.Module):
    """K decoders of M modes each; learned queries attend over the K*M modes.

    Each of the M queries reads the intermediate mode embeddings with
    single-head scaled dot-product attention; an MCG stack conditioned on the
    scene embedding refines the M results before the shared mode head decodes
    them. The intermediate modes are decoded with the same head.
    """

    def __init__(self, dim: int, hidden: int, future_steps: int, num_modes: int = NUM_MODES,
                 num_decoders: int = 5, fusion_blocks: int = 2):
        super().__init__()
        self.num_modes = num_modes
        self.decoders = nn.ModuleList(ModeEmbedder(dim, hidden, num_modes) for _ in range(num_decoders))
        self.head = ModeHead(dim, hidden, future_steps)
        self.queries = nn.Parameter(torch.randn(num_modes, dim) / math.sqrt(dim))
        self.query_proj = nn.Linear(dim, dim)
        self.key_proj = nn.Linear(dim, dim)
        self.value_proj = nn.Linear(dim, dim)
        self.refine = MCGStack(dim, hidden, fusion_blocks)

    def intermediate_embeddings(self, embedding: torch.Tensor) -> torch.Tensor:
        """``(..., K*M, D)`` mode embeddings from all decoders."""
        return torch.cat([dec(embedding) for dec in self.decoders], dim=-2)

    def fuse(self, mode_emb: torch.Tensor, embedding: torch.Tensor) -> torch.Tensor:
        queries = self.query_proj(self.queries + embedding.unsqueeze(-2))
        keys = self.key_proj(mode_emb)
        values = self.value_proj(mode_emb)
        scores = queries @ keys.transpose(-1, -2) / math.sqrt(keys.shape[-1])
        attended = torch.softmax(scores, dim=-1) @ values
        mask = torch.ones(attended.shape[:-1], dtype=torch.bool, device=attended.device)
        refined, _ = self.refine(attended, mask, embedding)
        return refined

    def forward(self, embedding: torch.Tensor, return_intermediate: bool = False):
        mode_emb = self.intermediate_embeddings(embedding)
        final = self.head(self.fuse(mode_emb, embedding))
        if return_intermediate:
            return final, self.head(mode_emb)
        return final


class MotionPredictor(nn.Module):
    def __init__(self, config: Optional[ModelConfig] = None):
        super().__init__()
        self.config = config = config or ModelConfig()
        config.validate()
        self.encoder = SceneEncoder(config.history_steps, config.max_nodes, config.d_model, config.hidden, config.num_cg_blocks)
        if config.head == "single":
            self.decoder = SingleDecoder(config.d_model, config.hidden, config.future_steps, config.num_modes)
        else:
            self.decoder = MultiDecoder(config.d_model, config.hidden, config.future_steps, config.num_modes,
                                        config.num_decoders, config.fusion_cg_blocks)

    def forward(self, batch) -> ModeSet:
        return self.decoder(self.encoder(batch))

    def decoder_parameters(self, k: int) -> List[nn.Parameter]:
        """Parameters of decoder ``k`` in the multi head."""
        if not isinstance(self.decoder, MultiDecoder):
            raise ValueError("decoder blocking only applies to the multi head")
        return list(self.decoder.decoders[k].parameters())


def sample_update_mask(num_decoders: int, rng, p_update: float = 0.5) -> np.ndarray:
    """Per-decoder update flags; redrawn until at least one decoder updates.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if num_decoders < 1:
        raise ValueError("need at least one decoder")
    if not 0.0 < p_update <= 1.0:
        raise ValueError("p_update must be in (0, 1]")
    while True:
        flags = rng.random(num_decoders) < p_update
        if flags.any():
            return flags
