"""Static top-down figures of predictions."""
from __future__ import annotations

import os
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .inference import Prediction  # noqa: E402
from .scene import Scene, from_canonical  # noqa: E402


def _world(points: np.ndarray, scene: Scene) -> np.ndarray:
    return from_canonical(points, scene.anchor_pose) if scene.frame else points


def plot_prediction(pred: Prediction, scene: Optional[Scene], path: str | os.PathLike) -> None:
    fig, ax = plt.subplots(figsize=(6, 6))
    if scene is not None:
        for poly in scene.roadgraph:
            xy = _world(poly.nodes[:, :2], scene)
            ax.plot(xy[:, 0], xy[:, 1], color="0.8", lw=1, zorder=0)
        for track in scene.neighbors:
            xy = _world(track.history[track.history_valid, :2], scene)
            if len(xy):
                ax.plot(xy[:, 0], xy[:, 1], color="tab:gray", lw=1.5)
        hist = _world(scene.target.history[scene.target.history_valid, :2], scene)
        ax.plot(hist[:, 0], hist[:, 1], color="black", lw=2.5, label="history")
        fut = scene.target.future
        if len(fut):
            gt = _world(fut[scene.target.future_valid, :2], scene)
            ax.plot(gt[:, 0], gt[:, 1], "k--", lw=1.5, label="ground truth")
    order = np.argsort(-pred.probabilities)
    colors = plt.cm.viridis(np.linspace(0, 0.9, len(order)))
    for rank, m in enumerate(order):
        traj = pred.trajectories[m]
        p = float(pred.probabilities[m])
        ax.plot(traj[:, 0], traj[:, 1], color=colors[rank], lw=1.5, alpha=0.4 + 0.6 * p)
        ax.annotate(f"{p:.2f}", traj[-1], fontsize=7, color=colors[rank])
    ax.set_title(f"{pred.scene_id} ({pred.agent_type.label})")
    ax.set_aspect("equal", adjustable="datalim")
    if scene is not None:
        ax.legend(loc="best", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_predictions(
    predictions: Sequence[Prediction],
    out_dir: str | os.PathLike,
    scenes: Optional[Sequence[Scene]] = None,
    limit: Optional[int] = None,
) -> List[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_id: Dict[str, Scene] = {s.scene_id: s for s in scenes or ()}
    written = []
    for pred in list(predictions)[:limit]:
        path = out_dir / f"{pred.scene_id}.png"
        plot_prediction(pred, by_id.get(pred.scene_id), path)
        written.append(path)
    return written
