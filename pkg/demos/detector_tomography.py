"""Reconstruct a simulated noisy detector from click data and score it.

Exact probabilities recover the effect to machine precision; finite shots
leave a statistical error that shrinks like 1/sqrt(shots).
"""
import numpy as np

from parityprobe.metrics import j_measures, specificity
from parityprobe.opcore import povm_from_instrument
from parityprobe.protocol import DeviceParams, SubsetParitySpec, build_schedule, simulate_instrument
from parityprobe.tomo import detector_tomography, synth_dataset

label = "IZI"
params = DeviceParams.reference()
spec = SubsetParitySpec.from_label(label)
print(f"simulating {label} with device noise ...")
qi = simulate_instrument(build_schedule(spec, params), params, noise=True)
truth = povm_from_instrument(qi)

for shots in (0, 500, 2000, 20000):
    data = synth_dataset(qi, shots=shots, seed=4)
    est = detector_tomography(data)
    err = np.abs(np.linalg.eigvalsh(est.effects[0] - truth.effects[0])).sum()
    sp = specificity(est.effects[0], label)
    name = "exact" if shots == 0 else f"{shots} shots"
    print(f"{name:>12}: ||E_est - E||_1 = {err:.2e}  theta_s = {sp.theta_s:.2f} deg  "
          f"F_J vs truth = {j_measures(est, truth)['F_J']:.5f}")
