"""Reference implementations written independently of the library code.

They favour obviousness over speed: explicit loops, explicit matrix inverses,
arbitrary precision where cancellation could hide a bug.
"""
from __future__ import annotations

import math
from typing import Callable, List, Sequence, Tuple

import mpmath
import numpy as np
import torch


# ---- geometry -------------------------------------------------------------

def to_agent_frame(point, center, theta):
    """p' = R(-theta) (p - c), written out with scalar trig."""
    dx, dy = point[0] - center[0], point[1] - center[1]
    c, s = math.cos(theta), math.sin(theta)
    return (c * dx + s * dy, -s * dx + c * dy)


# ---- densities --------------------------------------------------------------

def softplus(x: float) -> float:
    return math.log1p(math.exp(-abs(x))) + max(x, 0.0)


def raw_to_cov(raw) -> np.ndarray:
    a, b, r = (float(v) for v in raw)
    sx, sy = softplus(a) + 1e-3, softplus(b) + 1e-3
    rho = math.tanh(r) * 0.99
    return np.array([[sx * sx, rho * sx * sy], [rho * sx * sy, sy * sy]])


def log_density_explicit(residual, cov) -> float:
    """log N(residual; 0, cov) via an explicit inverse and determinant."""
    cov = np.asarray(cov, dtype=np.float64)
    r = np.asarray(residual, dtype=np.float64)
    inv = np.linalg.inv(cov)
    return float(-math.log(2 * math.pi) - 0.5 * math.log(np.linalg.det(cov)) - 0.5 * r @ inv @ r)


def mixture_nll_direct(traj, cov_raw, logits, gt, valid, dps: int = 50) -> float:
    """-log sum_m c_m prod_t N(...) in arbitrary precision, without log-sum-exp."""
    with mpmath.workdps(dps):
        logits = [mpmath.mpf(float(v)) for v in logits]
        z = sum(mpmath.exp(v) for v in logits)
        total = mpmath.mpf(0)
        for m in range(len(logits)):
            prod = mpmath.exp(logits[m]) / z
            for t in range(len(gt)):
                if not valid[t]:
                    continue
                cov = raw_to_cov(cov_raw[m][t])
                sxx, sxy, syy = (mpmath.mpf(float(v)) for v in (cov[0, 0], cov[0, 1], cov[1, 1]))
                det = sxx * syy - sxy * sxy
                dx = mpmath.mpf(float(gt[t][0])) - mpmath.mpf(float(traj[m][t][0]))
                dy = mpmath.mpf(float(gt[t][1])) - mpmath.mpf(float(traj[m][t][1]))
                quad = (syy * dx * dx - 2 * sxy * dx * dy + sxx * dy * dy) / det
                prod *= mpmath.exp(-quad / 2) / (2 * mpmath.pi * mpmath.sqrt(det))
            total += prod
        return float(-mpmath.log(total))


# ---- suppression ------------------------------------------------------------

def max_step_distance(a, b) -> float:
    return max(math.hypot(a[t][0] - b[t][0], a[t][1] - b[t][1]) for t in range(len(a)))


def water_fill(probs: Sequence[float], mass: float, floor: float) -> List[float]:
    """Solve out_i = max(floor, lam * p_i), sum(out) = mass, by trying each clamp count."""
    order = sorted(range(len(probs)), key=lambda i: probs[i])
    for k in range(len(probs) + 1):
        clamped, free = order[:k], order[k:]
        lam = (mass - k * floor) / sum(probs[i] for i in free)
        if all(lam * probs[i] >= floor for i in free) and all(lam * probs[i] <= floor for i in clamped):
            out = [0.0] * len(probs)
            for i in clamped:
                out[i] = floor
            for i in free:
                out[i] = lam * probs[i]
            return out
    raise AssertionError("no water level found")


def greedy_nms(traj, probs, threshold: float, p_min: float) -> Tuple[List[float], List[bool]]:
    M = len(probs)
    visit = sorted(range(M), key=lambda i: (-probs[i], i))
    kept: List[int] = []
    for i in visit:
        if all(max_step_distance(traj[i], traj[j]) > threshold for j in kept):
            kept.append(i)
    flags = [i in kept for i in range(M)]
    n_sup = M - len(kept)
    shares = water_fill([probs[i] for i in kept], 1.0 - n_sup * p_min, p_min * (1 + 1e-6))
    out = [p_min] * M
    for i, share in zip(kept, shares):
        out[i] = share
    return out, flags


# ---- metrics ------------------------------------------------------------------

def match_radius(horizon: int, speed: float) -> float:
    base = {30: 2.0, 50: 3.6, 80: 6.0}[horizon]
    if speed <= 1.4:
        scale = 0.5
    elif speed >= 11.0:
        scale = 1.0
    else:
        scale = 0.5 + 0.5 * (speed - 1.4) / (11.0 - 1.4)
    return base * scale


def min_ade_loop(traj, gt, valid, horizon: int) -> float:
    best = math.inf
    for mode in traj:
        errs = [math.hypot(mode[t][0] - gt[t][0], mode[t][1] - gt[t][1]) for t in range(horizon) if valid[t]]
        best = min(best, sum(errs) / len(errs))
    return best


def min_fde_loop(traj, gt, horizon: int) -> float:
    t = horizon - 1
    return min(math.hypot(mode[t][0] - gt[t][0], mode[t][1] - gt[t][1]) for mode in traj)


def matches_loop(traj, gt, horizon: int, speed: float) -> List[bool]:
    t = horizon - 1
    radius = match_radius(horizon, speed)
    return [math.hypot(mode[t][0] - gt[t][0], mode[t][1] - gt[t][1]) <= radius for mode in traj]


def ap_sweep(probs: Sequence[Sequence[float]], matches: Sequence[Sequence[bool]], soft: bool) -> float:
    """Walk the sorted detections, build the PR curve, integrate the interpolated precision."""
    n = len(probs)
    dets = sorted(
        ((p, r, m, matches[r][m]) for r in range(n) for m, p in enumerate(probs[r])),
        key=lambda d: (-d[0], d[1], d[2]),
    )
    claimed = set()
    tp = fp = 0
    curve = []  # (recall, precision) after every counted detection
    for _, rec, _, hit in dets:
        if hit and rec not in claimed:
            claimed.add(rec)
            tp += 1
        elif hit and soft:
            continue
        else:
            fp += 1
        curve.append((tp / n, tp / (tp + fp)))
    area, prev = 0.0, 0.0
    for k in range(1, tp + 1):
        level = k / n
        best = max(p for r, p in curve if r >= level - 1e-15)
        area += (level - prev) * best
        prev = level
    return area


# ---- gradients ----------------------------------------------------------------

def finite_difference_errors(fn: Callable[..., torch.Tensor], inputs: Sequence[torch.Tensor], h: float = 1e-6) -> List[float]:
    """Normwise relative error between autograd and central differences, per input.

    ``fn`` maps float64 tensors to a tensor; the check covers every output
    coordinate against every input coordinate.
    """
    inputs = tuple(x.detach().clone().double() for x in inputs)
    analytic = torch.autograd.functional.jacobian(lambda *xs: fn(*xs).reshape(-1), inputs)
    errors = []
    for k, x in enumerate(inputs):
        flat = x.reshape(-1)
        numeric = torch.zeros_like(analytic[k].reshape(analytic[k].shape[0], -1))
        for i in range(flat.numel()):
            plus = [t.clone() for t in inputs]
            minus = [t.clone() for t in inputs]
            plus[k].view(-1)[i] += h
            minus[k].view(-1)[i] -= h
            with torch.no_grad():
                numeric[:, i] = (fn(*plus).reshape(-1) - fn(*minus).reshape(-1)) / (2 * h)
        a = analytic[k].reshape(numeric.shape)
        errors.append(float((a - numeric).norm() / max(float(numeric.norm()), 1e-6)))
    return errors
