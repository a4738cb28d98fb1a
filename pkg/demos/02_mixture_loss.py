"""How the Gaussian-mixture loss responds to mode quality and confidence.

Run:  python demos/02_mixture_loss.py
"""
import math

import torch

from mpa import mixture_nll

T = 80
gt = torch.cumsum(torch.full((T, 2), 0.5), dim=0)
valid = torch.ones(T, dtype=torch.bool)
unit = math.log(math.expm1(1.0 - 1e-3))  # raw value giving sigma = 1


def cov(sigma_raw=unit):
    raw = torch.zeros(2, T, 3)
    raw[..., :2] = sigma_raw
    return raw


good, bad = gt.clone(), gt + 4.0
modes = torch.stack([good, bad])

print("perfect single mode, unit covariance:",
      f"{mixture_nll(good[None], cov()[:1], torch.zeros(1), gt, valid).item():.3f}",
      f"(80 log 2pi = {80 * math.log(2 * math.pi):.3f})")

for conf in (0.0, 2.0, 6.0):
    logits = torch.tensor([conf, 0.0])
    p = torch.softmax(logits, 0)[0].item()
    print(f"right mode with probability {p:.3f}: NLL {mixture_nll(modes, cov(), logits, gt, valid).item():8.3f}")

# Tighter covariances reward accurate modes and punish confident mistakes.
for s in (-2.0, unit, 2.0):
    sigma = torch.nn.functional.softplus(torch.tensor(s)).item() + 1e-3
    nll = mixture_nll(modes, cov(s), torch.zeros(2), gt, valid).item()
    print(f"sigma {sigma:5.2f} m: NLL {nll:9.3f}")

# Missing ground-truth steps are simply left out of the product.
valid_half = valid.clone()
valid_half[40:] = False
print("only the first 4 s observed:", f"{mixture_nll(good[None], cov()[:1], torch.zeros(1), gt, valid_half).item():.3f}")
