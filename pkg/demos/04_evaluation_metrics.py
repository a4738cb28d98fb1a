"""Score hand-made predictions with minADE, minFDE, miss rate, mAP and Soft mAP.

Run:  python demos/04_evaluation_metrics.py
"""
import numpy as np

from mpa import EvalRecord, report
from mpa.scene import AgentType

rng = np.random.default_rng(0)
records = []
for i in range(30):
    agent = AgentType(i % 3)
    gt = np.cumsum(rng.normal([1.0, 0.0], 0.2, (80, 2)), axis=0)
    # mode 0 is close to the truth; a duplicate of it ranks third
    near = gt + rng.normal(0, 0.3, (80, 2)).cumsum(axis=0) * 0.05
    others = [gt + rng.normal(0, 8, 2) for _ in range(4)]
    traj = np.stack([near, others[0], near + 0.1, *others[1:]])
    probs = rng.dirichlet(np.ones(6))
    if i % 2:  # half the time the right answer is also the most confident
        probs = np.sort(probs)[::-1][[0, 2, 1, 3, 4, 5]]
    records.append(EvalRecord(f"demo{i}", agent, traj, probs, gt, np.ones(80, bool), initial_speed=8.0))

rep = report(records)
print(rep.to_text())
print("Soft mAP ignores the duplicate matches that plain mAP counts as false positives,")
print("so Soft mAP >= mAP in every row:",
      all(row["soft_map"] >= row["map"] for row in rep.rows.values()))
