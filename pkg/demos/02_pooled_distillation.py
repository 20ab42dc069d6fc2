"""The pooled distillation loss family and its invariance ladder.

Each pooling mode ignores a different kind of activation reorganization:
the more it ignores, the more freedom (plasticity) the student keeps.
"""

import numpy as np

from podlearn import PodMode, Tensor, pod_flat, pod_pooled

rng = np.random.default_rng(0)
a = rng.normal(size=(1, 4, 6, 6))

perturbations = {
    "identical": a.copy(),
    "channels permuted": a[:, rng.permutation(4), :, :],
    "columns permuted": a[:, :, rng.permutation(6), :],
    "pixels shuffled": a.reshape(1, 4, 36)[:, :, rng.permutation(36)].reshape(1, 4, 6, 6),
    "gaussian drift": a + 0.3 * rng.normal(size=a.shape),
}

modes = [PodMode.PIXEL, PodMode.CHANNEL, PodMode.WIDTH, PodMode.HEIGHT,
         PodMode.GAP, PodMode.SPATIAL]

header = f"{'perturbation':>20} |" + "".join(f"{m.value:>9}" for m in modes)
print(header)
print("-" * len(header))
ta = Tensor(a)
for name, b in perturbations.items():
    tb = Tensor(b)
    row = "".join(f"{pod_pooled(ta, tb, m).item():9.4f}" for m in modes)
    print(f"{name:>20} |{row}")

print()
print("reading the table: pixel mode penalizes everything except identity;")
print("channel mode forgives channel swaps; gap forgives any spatial move;")
print("width/height forgive moves along their own axis only. spatial is")
print("exactly width + height:")
b = Tensor(rng.normal(size=(1, 4, 6, 6)))
w = pod_pooled(ta, b, PodMode.WIDTH).item()
h = pod_pooled(ta, b, PodMode.HEIGHT).item()
s = pod_pooled(ta, b, PodMode.SPATIAL).item()
print(f"  width {w:.6f} + height {h:.6f} = {w + h:.6f} == spatial {s:.6f}")

print()
print("the flat-embedding constraint lives on the unit sphere: scale is free,")
print("direction is not.")
e = rng.normal(size=(2, 8))
print("  same direction, doubled:", pod_flat(Tensor(e), Tensor(2 * e)).item())
print("  antipodal             :", pod_flat(Tensor(e), Tensor(-e)).item(), "(max = 4)")
