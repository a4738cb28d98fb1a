"""Context-gating set encoders for histories, neighbors and the road graph.

A context-gating (CG) block gates every set element with a shared context
vector and max-pools the gated elements into a new context. Stacking several
blocks with running-average skip connections gives a multi-context-gating
(MCG) stack. There is no dedicated encoder for the autonomous vehicle; when
present it is just another neighbor.
"""
from __future__ import annotations

from typing import Tuple

import torch
from torch import nn

from .features import NODE_FEATURES, NUM_AGENT_TYPES, TRACK_FEATURES
from .synth import NUM_LANE_TYPES


def mlp(in_dim: int, hidden: int, out_dim: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(in_dim, hidden), nn.LayerNorm(hidden), nn.SiLU(), nn.Linear(hidden, out_dim))


class CGBlock(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.dim = dim
        self.element_mlp = mlp(dim, hidden, dim)
        self.context_mlp = mlp(dim, hidden, dim)
        self.default_context = nn.Parameter(torch.randn(dim) * 0.1)

    def forward(self, elements: torch.Tensor, mask: torch.Tensor, context: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """elements ``(..., N, D)``, mask ``(..., N)``, context ``(..., D)``."""
        if elements.shape[-1] != self.dim or context.shape[-1] != self.dim:
            raise ValueError(
                f"CGBlock expects dimension {self.dim}, got elements {elements.shape[-1]} / context {context.shape[-1]}"
            )
        mask = mask.bool()
        gated = self.element_mlp(elements) * self.context_mlp(context).unsqueeze(-2)
        out = torch.where(mask.unsqueeze(-1), gated, elements)
        if elements.shape[-2] == 0:
            pooled = self.default_context.expand_as(context)
        else:
            masked = gated.masked_fill(~mask.unsqueeze(-1), float("-inf"))
            pooled = masked.max(dim=-2).values
            any_valid = mask.any(dim=-1, keepdim=True)
            pooled = torch.where(any_valid, pooled, self.default_context.expand_as(pooled))
        return out, pooled


class MCGStack(nn.Module):
    """CG blocks with running-average skip connections on both streams."""

    def __init__(self, dim: int, hidden: int, num_blocks: int = 3):
        super().__init__()
        self.blocks = nn.ModuleList(CGBlock(dim, hidden) for _ in range(num_blocks))

    def forward(self, elements, mask, context):
        s_sum, c_sum = elements, context
        s_avg, c_avg = elements, context
        for k, block in enumerate(self.blocks, start=1):
            s_new, c_new = block(s_avg, mask, c_avg)
            s_sum = s_sum + s_new
            c_sum = c_sum + c_new
            s_avg = s_sum / (k + 1)
            c_avg = c_sum / (k + 1)
        return s_avg, c_avg


class HistoryEncoder(nn.Module):
    """Flattened per-step features plus agent-type one-hot through an MLP."""

    def __init__(self, history_steps: int, dim: int, hidden: int):
        super().__init__()
        self.history_steps = history_steps
        self.net = mlp(history_steps * TRACK_FEATURES + NUM_AGENT_TYPES, hidden, dim)

    def forward(self, history: torch.Tensor, agent_type: torch.Tensor) -> torch.Tensor:
        """history ``(..., H, 7)``, agent_type ``(..., 3)`` -> ``(..., D)``."""
        if history.shape[-2:] != (self.history_steps, TRACK_FEATURES):
            raise ValueError(f"history must end in ({self.history_steps}, {TRACK_FEATURES}), got {tuple(history.shape)}")
        # invalid steps carry only their flag; their payload never reaches the net
        history = history * history[..., -1:]
        flat = history.flatten(-2)
        return self.net(torch.cat([flat, agent_type], dim=-1))


class PolylineEncoder(nn.Module):
    def __init__(self, max_nodes: int, dim: int, hidden: int):
        super().__init__()
        self.max_nodes = max_nodes
        self.net = mlp(max_nodes * NODE_FEATURES + NUM_LANE_TYPES, hidden, dim)

    def forward(self, nodes: torch.Tensor, lane_type: torch.Tensor) -> torch.Tensor:
        nodes = nodes * nodes[..., -1:]
        return self.net(torch.cat([nodes.flatten(-2), lane_type], dim=-1))


class SceneEncoder(nn.Module):
    def __init__(self, history_steps: int = 11, max_nodes: int = 20, dim: int = 128, hidden: int = 128, num_blocks: int = 3):
        super().__init__()
        self.dim = dim
        self.target_encoder = HistoryEncoder(history_steps, dim, hidden)
        self.neighbor_history = HistoryEncoder(history_steps, dim, hidden)
        self.neighbor_mcg = MCGStack(dim, hidden, num_blocks)
        self.polyline_encoder = PolylineEncoder(max_nodes, dim, hidden)
        self.road_mcg = MCGStack(dim, hidden, num_blocks)
        self.fusion = mlp(3 * dim, hidden, dim)

    def encode_history(self, history, agent_type):
        return self.target_encoder(history, agent_type)

    def encode_neighbors(self, neighbors, neighbor_type, mask, context):
        """Permutation-invariant summary of ``(..., N, H, 7)`` neighbor histories."""
        elements = self.neighbor_history(neighbors, neighbor_type)
        _, pooled = self.neighbor_mcg(elements, mask, context)
        return pooled

    def encode_roadgraph(self, polylines, lane_type, mask, context):
        elements = self.polyline_encoder(polylines, lane_type)
        _, pooled = self.road_mcg(elements, mask, context)
        return pooled

    def fuse(self, target_emb, neighbor_emb, road_emb):
        if not (target_emb.shape == neighbor_emb.shape == road_emb.shape):
            raise ValueError("fuse: embeddings must have equal shapes")
        return self.fusion(torch.cat([target_emb, neighbor_emb, road_emb], dim=-1))

    def forward(self, batch) -> torch.Tensor:
        target = self.encode_history(batch.target, batch.target_type)
        neighbors = self.encode_neighbors(batch.neighbors, batch.neighbor_type, batch.neighbor_mask, target)
        road = self.encode_roadgraph(batch.polylines, batch.lane_type, batch.polyline_mask, target)
        return self.fuse(target, neighbors, road)
