"""Non-maximum suppression keeps every trajectory but demotes near-duplicates.

Run:  python demos/03_trajectory_nms.py
"""
import numpy as np

from mpa.postprocess import nms_probabilities, trajectory_distance

t = np.linspace(0.1, 8.0, 80)[:, None]
straight = np.hstack([10 * t, 0 * t])
modes = np.stack([
    straight,
    straight + [0.0, 0.8],        # almost the same path
    np.hstack([10 * t, 0.5 * t**2]),   # turning left
    np.hstack([10 * t, -0.5 * t**2]),  # turning right
    straight * 0.5,                # braking
    straight * 0.5 + [0.3, 0.0],   # braking, near-duplicate
])
probs = np.array([0.35, 0.25, 0.15, 0.1, 0.1, 0.05])

print("pairwise max-over-time distances (m):")
for i in range(len(modes)):
    print("  " + " ".join(f"{trajectory_distance(modes[i], modes[j]):6.1f}" for j in range(len(modes))))

new, kept = nms_probabilities(modes, probs, threshold=2.0, p_min=0.01)
print("\nmode  before   after  kept")
for i, (a, b, k) in enumerate(zip(probs, new, kept)):
    print(f"{i:>4}  {a:6.3f}  {b:6.3f}  {'yes' if k else 'no'}")
print(f"sum after: {new.sum():.12f}")

again, kept2 = nms_probabilities(modes, new, threshold=2.0, p_min=0.01)
print("second pass keeps the same modes:", bool((kept2 == kept).all()))
