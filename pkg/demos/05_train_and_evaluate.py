"""End to end: generate scenes, train a small model, evaluate, plot.

Run:  python demos/05_train_and_evaluate.py [output_dir]

Takes well under a minute on one CPU core. The same steps are available from the
command line as `mpa generate`, `mpa train`, `mpa eval` and `mpa plot`.
"""
import sys
from pathlib import Path

from mpa import ModelConfig, generate_scenes, to_canonical_frame
from mpa.inference import eval_records, predict_scenes
from mpa.metrics import report
from mpa.plotting import plot_predictions
from mpa.training import TrainConfig, train_loop

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out.mkdir(parents=True, exist_ok=True)

train = [to_canonical_frame(s) for s in generate_scenes(seed=1, count=200)]
held_out = [to_canonical_frame(s) for s in generate_scenes(seed=2, count=60)]

cfg = TrainConfig(output=str(out / "model.ckpt"), steps=600, eval_every=100, lr=1e-3)
result = train_loop(cfg, ModelConfig(d_model=64, hidden=64), train, held_out)
for h in result.history:
    print(f"step {h['step']:>4}  train NLL {h['train_nll']:10.2f}  held-out NLL {h['val_nll']:10.2f}  lr {h['lr']:.1e}")

preds = predict_scenes(result.model, held_out)
print()
print(report(eval_records(preds, held_out)).to_text())

figures = plot_predictions(preds, out / "figures", held_out, limit=4)
print(f"wrote {len(figures)} figures under {out / 'figures'}")
