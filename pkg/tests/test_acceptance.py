"""One test per acceptance criterion; each records a PASS/FAIL line.

The lines are printed in the terminal summary of a normal pytest run.
"""
import math
import statistics
import sys
import time

import numpy as np
import pytest

from parityprobe.metrics import (detector_s_distance, detector_s_fidelity, evaluate_s_objective,
                                 j_measures, specificity)
from parityprobe.opcore import (Channel, Povm, QuantumInstrument, chi_matrix, pauli_labels,
                                pauli_operator, povm_from_instrument)
from parityprobe.protocol import (OPERATOR_LABELS, DeviceParams, SubsetParitySpec, build_schedule,
                                  ideal_instrument, simulate_instrument)
from parityprobe.tomo import (detector_tomography, instrument_tomography, synth_dataset,
                              synth_instrument_dataset)

from conftest import ACCEPTANCE, random_effect

EYE = np.eye(8)
ZZZ = pauli_operator("ZZZ")


def verdict(n, ok, detail):
    ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def trace_norm(A):
    return float(np.abs(np.linalg.eigvalsh(A)).sum())


# ---------------------------------------------------------------------------


def test_criterion_1_noiseless_protocol_matches_projectors():
    params = DeviceParams.ideal()
    t0 = time.perf_counter()
    worst_f, worst_theta = 1.0, 0.0
    for label in OPERATOR_LABELS:
        spec = SubsetParitySpec.from_label(label)
        qi = simulate_instrument(build_schedule(spec, params), params, noise=False)
        worst_f = min(worst_f, j_measures(qi, ideal_instrument(spec))["F_J"])
        worst_theta = max(worst_theta, specificity(povm_from_instrument(qi).effects[0],
                                                   label).theta_s)
    elapsed = time.perf_counter() - t0
    ok = worst_f >= 0.999 and worst_theta <= 0.1 and elapsed <= 600
    assert verdict(1, ok, f"min F_J = {worst_f:.6f} (>= 0.999), max theta_s = "
                          f"{worst_theta:.4f} deg (<= 0.1), runtime {elapsed:.0f} s (<= 600)")


def test_criterion_2_binary_distance_needs_no_reference():
    rng = np.random.default_rng(20240202)
    worst_gap, worst_excess, checked = 0.0, -math.inf, 0
    for d in (2, 4, 8):
        for _ in range(200):
            a, b = Povm.binary(random_effect(rng, d)), Povm.binary(random_effect(rng, d))
            analytic = detector_s_distance(a, b, method="analytic").value
            opt = detector_s_distance(a, b, method="optimizer", restarts=64,
                                      seed=int(rng.integers(2**32)))
            worst_gap = max(worst_gap, abs(opt.value - analytic))
            # entangled inputs X (system x reference, unit Frobenius norm):
            # total variation = || X^H (E - E') X ||_1
            X = rng.standard_normal((100_000, d, d)) + 1j * rng.standard_normal((100_000, d, d))
            X /= np.linalg.norm(X, axis=(1, 2), keepdims=True)
            M = np.conj(np.swapaxes(X, 1, 2)) @ (a.effects[0] - b.effects[0]) @ X
            tv = np.abs(np.linalg.eigvalsh(M)).sum(axis=1)
            worst_excess = max(worst_excess, float(tv.max()) - analytic)
            if checked < 3:
                # the sampled formula and the library objective must agree
                k = int(np.argmax(tv))
                lib = evaluate_s_objective(a, b, X[k].reshape(-1), "distance", d)
                assert lib == pytest.approx(tv[k], abs=1e-12)
                checked += 1
    ok = worst_gap <= 1e-6 and worst_excess <= 1e-8
    assert verdict(2, ok, f"max |optimizer - max|eig|| = {worst_gap:.2e} (<= 1e-6), max "
                          f"entangled excess = {worst_excess:.2e} (<= 1e-8), 600 pairs")


def _perturbed_zzz(rng, eps=0.03):
    G = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    H = (G + G.conj().T) / 2
    E = (EYE + ZZZ) / 2 + eps * H / np.linalg.norm(H, 2)
    w, v = np.linalg.eigh(E)
    return (v * np.clip(w, 0, 1)) @ v.conj().T


def test_criterion_3_tomography_round_trips(noisy):
    rng = np.random.default_rng(7)
    E = _perturbed_zzz(rng)
    sim = noisy.instrument("ZZZ", False)
    exact_err = max(
        trace_norm(detector_tomography(synth_dataset(Povm.binary(E))).effects[0] - E),
        trace_norm(detector_tomography(synth_dataset(sim)).effects[0]
                   - povm_from_instrument(sim).effects[0]))
    inst_f = min(j_measures(instrument_tomography(synth_instrument_dataset(qi)), qi)["F_J"]
                 for qi in (sim, noisy.instrument("ZIZ", False)))
    errs = [trace_norm(detector_tomography(synth_dataset(Povm.binary(E), shots=2000,
                                                         seed=s)).effects[0] - E)
            for s in range(20)]
    med = statistics.median(errs)
    ok = exact_err < 1e-8 and inst_f >= 0.999 and med <= 0.03
    assert verdict(3, ok, f"exact detector error = {exact_err:.1e} (< 1e-8), instrument F_J = "
                          f"{inst_f:.6f} (>= 0.999), median 2000-shot ||dE||_1 = {med:.4f} "
                          f"(<= 0.03; per dimension {med / 8:.4f})")


def test_criterion_4_ordering_and_heralding(noisy):
    order_viol, herald_viol, info = [], [], []
    for label in OPERATOR_LABELS:
        reps = {h: noisy.report(label, h) for h in (False, True)}
        for h, r in reps.items():
            if r.F_S > r.F_J + 1e-9:
                order_viol.append(f"{label}/{h} detector")
            if r.instrument["F_S"] > r.instrument["F_J"] + 1e-9:
                order_viol.append(f"{label}/{h} instrument")
        u, h = reps[False], reps[True]
        for name, a, b in (("F_J", u.F_J, h.F_J), ("F_S", u.F_S, h.F_S),
                           ("F_a", u.assignment["F_a"], h.assignment["F_a"])):
            if b < a - 1e-9:
                herald_viol.append(f"{label} {name}")
        info.append(f"{label} {u.instrument['F_J']:.3f}->{h.instrument['F_J']:.3f}")
    print("instrument F_J unheralded->heralded:", ", ".join(info))
    ok = not order_viol and not herald_viol
    assert verdict(4, ok, f"F_S <= F_J violations: {order_viol or 'none'}; heralded < "
                          f"unheralded (detector F_J, F_S, F_a): {herald_viol or 'none'}")


def test_criterion_5_device_noise_bands(noisy):
    zzz = noisy.report("ZZZ", False)
    fa, fj = zzz.assignment["F_a"], zzz.instrument["F_J"]
    theta = max(noisy.report(lab, False).theta_s_deg for lab in OPERATOR_LABELS)
    ok = 0.84 <= fa <= 0.94 and 0.70 <= fj <= 0.90 and theta <= 6.0
    assert verdict(5, ok, f"ZZZ F_a = {fa:.4f} in [0.84, 0.94], ZZZ instrument F_J = {fj:.4f} "
                          f"in [0.70, 0.90], max theta_s = {theta:.2f} deg (<= 6)")


def test_criterion_6_closed_forms():
    r = specificity(0.5 * EYE + 0.4 * ZZZ + 0.1 * pauli_operator("XII"), "ZZZ")
    eps = 0.04
    P0 = (EYE + ZZZ) / 2
    ideal, noisy_det = Povm.binary(P0), Povm.binary((1 - 2 * eps) * P0 + eps * EYE)
    fs = detector_s_fidelity(ideal, noisy_det).value
    ds = detector_s_distance(ideal, noisy_det).value
    ok = (abs(r.theta_s - 14.04) <= 0.01 and abs(r.c_max - 0.4123) <= 1e-4
          and abs(fs - 0.96) <= 1e-6 and abs(ds - 0.04) <= 1e-6)
    assert verdict(6, ok, f"theta_s = {r.theta_s:.4f}, c_max = {r.c_max:.6f}, "
                          f"F_S = {fs:.8f}, D_S = {ds:.8f}")


def test_criterion_7_chi_pattern():
    labels = pauli_labels(3)
    worst_main, worst_rest = 0.0, 0.0
    for label in OPERATOR_LABELS:
        i, z = labels.index("III"), labels.index(label)
        for sign, branch in zip((1, -1), ideal_instrument(SubsetParitySpec.from_label(label))
                                .branches):
            chi = chi_matrix(branch)
            want = {(i, i): 0.25, (z, z): 0.25, (i, z): sign * 0.25, (z, i): sign * 0.25}
            for (a, b), v in want.items():
                worst_main = max(worst_main, abs(chi[a, b] - v))
            mask = np.ones(chi.shape, bool)
            mask[np.ix_([i, z], [i, z])] = False
            worst_rest = max(worst_rest, float(np.abs(chi[mask]).max()))
    ok = worst_main < 1e-12 and worst_rest < 1e-9
    assert verdict(7, ok, f"max deviation of the four +-1/4 entries = {worst_main:.1e}, "
                          f"max other magnitude = {worst_rest:.1e} (< 1e-9)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
