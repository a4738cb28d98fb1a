"""Gaussian-mixture negative log-likelihood over predicted trajectories."""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F

SIGMA_EPS = 1e-3
RHO_MAX = 0.99
LOG_2PI = math.log(2 * math.pi)


def covariance_params(cov_raw: torch.Tensor, eps: float = SIGMA_EPS, rho_max: float = RHO_MAX):
    """Split ``(..., 3)`` raw outputs into ``(sigma_x, sigma_y, rho)``."""
    sx = F.softplus(cov_raw[..., 0]) + eps
    sy = F.softplus(cov_raw[..., 1]) + eps
    rho = torch.tanh(cov_raw[..., 2]) * rho_max
    return sx, sy, rho


def covariance_matrix(cov_raw: torch.Tensor, **kwargs) -> torch.Tensor:
    """Build ``(..., 2, 2)`` covariance matrices from raw parameters."""
    sx, sy, rho = covariance_params(cov_raw, **kwargs)
    off = rho * sx * sy
    row0 = torch.stack([sx * sx, off], dim=-1)
    row1 = torch.stack([off, sy * sy], dim=-1)
    return torch.stack([row0, row1], dim=-2)


def log_gaussian_2d(residual: torch.Tensor, sx: torch.Tensor, sy: torch.Tensor, rho: torch.Tensor) -> torch.Tensor:
    """Log density of a zero-mean bivariate normal at ``residual`` (``(..., 2)``)."""
    if not (torch.isfinite(residual).all() and torch.isfinite(sx).all() and torch.isfinite(sy).all() and torch.isfinite(rho).all()):
        raise ValueError("log_gaussian_2d: non-finite input")
    zx = residual[..., 0] / sx
    zy = residual[..., 1] / sy
    one_m_rho2 = 1.0 - rho * rho
    quad = (zx * zx + zy * zy - 2.0 * rho * zx * zy) / one_m_rho2
    return -LOG_2PI - torch.log(sx) - torch.log(sy) - 0.5 * torch.log(one_m_rho2) - 0.5 * quad


def mixture_nll(
    trajectories: torch.Tensor,
    cov_raw: torch.Tensor,
    logits: torch.Tensor,
    gt: torch.Tensor,
    gt_valid: torch.Tensor,
    reduction: str = "mean",
) -> torch.Tensor:
    """Negative log-likelihood of ``gt`` under the predicted mixture.

    Shapes: trajectories ``(B, M, T, 2)``, cov_raw ``(B, M, T, 3)``, logits
    ``(B, M)``, gt ``(B, T, 2)``, gt_valid ``(B, T)``. Unbatched inputs (no
    leading B) are accepted too. Invalid ground-truth steps contribute nothing.
    """
    unbatched = logits.dim() == 1
    if unbatched:
        trajectories, cov_raw, logits = trajectories[None], cov_raw[None], logits[None]
        gt, gt_valid = gt[None], gt_valid[None]
    gt_valid = gt_valid.bool()
    if not gt_valid.any(dim=-1).all():
        raise ValueError("mixture_nll: every sample needs at least one valid ground-truth step")
    # zero residual on invalid steps keeps everything finite; the mask drops them
    residual = torch.where(gt_valid[:, None, :, None], gt[:, None] - trajectories, torch.zeros_like(trajectories))
    sx, sy, rho = covariance_params(cov_raw)
    step_ll = log_gaussian_2d(residual, sx, sy, rho)
    step_ll = torch.where(gt_valid[:, None, :], step_ll, torch.zeros_like(step_ll))
    mode_ll = F.log_softmax(logits, dim=-1) + step_ll.sum(dim=-1)
    nll = -torch.logsumexp(mode_ll, dim=-1)
    if unbatched:
        return nll[0]
    if reduction == "mean":
        return nll.mean()
    if reduction == "none":
        return nll
    raise ValueError(f"unknown reduction {reduction!r}")
