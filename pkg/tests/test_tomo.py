import json
import math
import warnings

import numpy as np
import pytest

from parityprobe.metrics import j_measures, specificity
from parityprobe.opcore import (Channel, Povm, QuantumInstrument, chi_matrix, pauli_labels,
                                pauli_operator, povm_from_instrument, trace_fidelity)
from parityprobe.protocol import SubsetParitySpec, ideal_instrument
from parityprobe.tomo import (ConvergenceError, RotationSet, TomographyDataset, TomographyError,
                              detector_tomography, fit_instrument, ideal_meter,
                              instrument_tomography, rotation_unitary, state_tomography,
                              synth_dataset, synth_detector_dataset, synth_instrument_dataset,
                              synth_state_dataset)

from conftest import random_density, random_effect

ZZZ = pauli_operator("ZZZ")
EYE = np.eye(8)


def zzz_povm():
    return Povm.binary((EYE + ZZZ) / 2)


def test_rotation_sets():
    assert len(RotationSet.complete()) == 64
    assert len(RotationSet.overcomplete()) == 216
    U = rotation_unitary("Rx+.I.Ry180")
    assert np.allclose(U.conj().T @ U, EYE)
    with pytest.raises(TomographyError):
        RotationSet.named("partial")
    with pytest.raises(TomographyError):
        rotation_unitary("Rz+.I.I")


def test_exact_frequencies_are_born_rule():
    rs = RotationSet.complete()
    data = synth_dataset(zzz_povm(), rs)
    E = (EYE + ZZZ) / 2
    want = [np.real(np.trace(E @ rho)) for rho in rs.prepared()]
    assert np.allclose(data.frequencies(), want, atol=1e-15)


def test_dataset_determinism():
    a = synth_dataset(zzz_povm(), shots=2000, seed=1).to_json()
    b = synth_dataset(zzz_povm(), shots=2000, seed=1).to_json()
    c = synth_dataset(zzz_povm(), shots=2000, seed=2).to_json()
    assert a == b and a != c


def test_dataset_validation():
    data = synth_dataset(zzz_povm(), RotationSet.complete())
    d = data.to_dict()
    d["rotations"] = d["rotations"][1:]
    with pytest.raises(TomographyError):
        TomographyDataset.from_dict(d)
    d = data.to_dict()
    d["rotations"][0] = {"label": d["rotations"][0]["label"], "clicks": 5, "shots": 3}
    with pytest.raises(TomographyError):
        TomographyDataset.from_dict(d)
    with pytest.raises(TomographyError):
        TomographyDataset("spectrum")


def test_dataset_json_roundtrip(tmp_path):
    data = synth_dataset(zzz_povm(), shots=100, seed=3)
    data.dump(tmp_path / "d.json")
    back = TomographyDataset.load(tmp_path / "d.json")
    assert back.to_json() == data.to_json()
    assert json.loads(back.to_json())["rotation_set"] == "overcomplete"


@pytest.mark.parametrize("mode", ["inversion", "constrained"])
def test_detector_roundtrip_projector(mode):
    E = (EYE + ZZZ) / 2
    est = detector_tomography(synth_dataset(Povm.binary(E)), mode=mode)
    assert np.abs(est.effects[0] - E).max() < 1e-8


def test_detector_constant_effect():
    est = detector_tomography(synth_dataset(Povm.binary(0.5 * EYE)))
    assert np.abs(est.effects[0] - 0.5 * EYE).max() < 1e-10


def test_detector_roundtrip_random_effect(rng):
    E = random_effect(rng, 8)
    est = detector_tomography(synth_dataset(Povm.binary(E), RotationSet.complete()))
    assert np.abs(est.effects[0] - E).max() < 1e-8


def _perturbed_zzz(rng, eps=0.03):
    G = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    H = (G + G.conj().T) / 2
    E = (EYE + ZZZ) / 2 + eps * H / np.linalg.norm(H, 2)
    w, v = np.linalg.eigh(E)
    return (v * np.clip(w, 0, 1)) @ v.conj().T


def test_detector_error_shrinks_with_shots(rng):
    E = _perturbed_zzz(rng)
    povm = Povm.binary(E)
    errs = []
    for shots in (200, 2000, 20000):
        e = [np.abs(np.linalg.eigvalsh(
            detector_tomography(synth_dataset(povm, shots=shots, seed=s)).effects[0] - E)).sum()
            for s in range(4)]
        errs.append(np.median(e))
    assert errs[0] > errs[1] > errs[2]
    exact = detector_tomography(synth_dataset(povm)).effects[0]
    assert np.abs(np.linalg.eigvalsh(exact - E)).sum() < 1e-8


def test_constrained_fit_is_physical_on_noisy_data():
    povm, info = detector_tomography(synth_dataset(zzz_povm(), shots=50, seed=8),
                                     return_info=True)
    w = np.linalg.eigvalsh(povm.effects[0])
    assert w.min() > -1e-9 and w.max() < 1 + 1e-9
    raw = detector_tomography(synth_dataset(zzz_povm(), shots=50, seed=8), mode="inversion")
    wr = np.linalg.eigvalsh(raw.effects[0])
    assert wr.min() < 0 or wr.max() > 1
    assert info["iterations"] > 0


def test_constrained_fit_reports_iteration_cap():
    data = synth_dataset(zzz_povm(), shots=50, seed=8)
    with pytest.raises(ConvergenceError) as exc:
        detector_tomography(data, max_iter=3)
    assert exc.value.residual > 0 and exc.value.result is not None


def test_rank_deficient_design_rejected():
    rs = RotationSet.complete()
    data = synth_dataset(zzz_povm(), rs)
    with pytest.raises(TomographyError):
        detector_tomography(data, rho0=EYE / 8)


def test_prep_channel_corrects_known_preparation_error():
    flip = Channel((math.sqrt(0.98) * EYE, math.sqrt(0.02) * pauli_operator("XII")))
    E = (EYE + ZZZ) / 2
    rs = RotationSet.overcomplete()

    def source(rho):
        p = np.real(np.trace(E @ flip(rho)))
        return {0: p, 1: 1 - p}

    data = synth_detector_dataset(source, rs)
    naive = detector_tomography(data).effects[0]
    fixed = detector_tomography(data, prep_channel=flip).effects[0]
    assert np.abs(fixed - E).max() < 1e-8
    assert np.abs(naive - E).max() > 1e-3


def test_state_tomography_ground():
    rho = np.zeros((8, 8))
    rho[0, 0] = 1
    est = state_tomography(synth_state_dataset(rho))
    assert trace_fidelity(est, rho) >= 1 - 1e-8


def test_state_tomography_ghz():
    psi = np.zeros(8)
    psi[[0, 7]] = 1 / math.sqrt(2)
    rho = np.outer(psi, psi)
    est = state_tomography(synth_state_dataset(rho))
    assert trace_fidelity(est, rho) >= 1 - 1e-8


def test_state_tomography_random(rng):
    rho = random_density(rng, 8)
    est = state_tomography(synth_state_dataset(rho))
    assert np.abs(est - rho).max() < 1e-8


def test_biased_meter_bias_stays_bounded():
    # data from a meter whose identity component is 0.02 too high, fitted with the ideal one
    biased = ideal_meter() + 0.02 * EYE
    data = synth_state_dataset(EYE / 8, e_tomo=biased)
    est = state_tomography(data)
    w = np.linalg.eigvalsh(est)
    assert w.min() > -1e-10 and np.trace(est).real == pytest.approx(1.0)
    truth = EYE / 8
    dev = [abs(np.real(np.trace(P @ (est - truth)))) for P in
           (pauli_operator(lab) for lab in pauli_labels(3))]
    assert max(dev) <= 0.05


def test_state_tomography_rejects_detector_data():
    with pytest.raises(TomographyError):
        state_tomography(synth_dataset(zzz_povm()))


def test_instrument_tomography_ideal_zzz_chi_pattern():
    qi = ideal_instrument(SubsetParitySpec.from_label("ZZZ"))
    est = instrument_tomography(synth_instrument_dataset(qi))
    labels = pauli_labels(3)
    i, z = labels.index("III"), labels.index("ZZZ")
    for b, sign in zip(est.branches, (1, -1)):
        chi = chi_matrix(b)
        expect = np.zeros((64, 64))
        expect[i, i] = expect[z, z] = 0.25
        expect[i, z] = expect[z, i] = sign * 0.25
        assert np.abs(chi - expect).max() < 1e-7


def _noisy_projective_instrument():
    """Branch b: 0.97 Pi_b rho Pi_b + 0.03 Tr[Pi_b rho] I/8."""
    branches = []
    for sign in (1, -1):
        P = (EYE + sign * ZZZ) / 2
        support = [k for k in range(8) if P[k, k] > 0.5]
        ks = [math.sqrt(0.97) * P]
        for k in range(8):
            for m in support:
                K = np.zeros((8, 8))
                K[k, m] = math.sqrt(0.03 / 8)
                ks.append(K)
        branches.append(Channel(tuple(ks), trace_preserving=False))
    return QuantumInstrument(tuple(branches), (0, 1))


def test_instrument_tomography_noisy_roundtrip():
    truth = _noisy_projective_instrument()
    est = instrument_tomography(synth_instrument_dataset(truth))
    assert j_measures(est, truth)["F_J"] >= 0.999
    E = povm_from_instrument(est).effects
    assert np.abs(E[0] + E[1] - EYE).max() < 1e-7


def test_instrument_tomography_shots_complete_povm():
    qi = ideal_instrument(SubsetParitySpec.from_label("ZIZ"))
    data = synth_instrument_dataset(qi, shots=300, seed=5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est, info = instrument_tomography(data, return_info=True)
    E = povm_from_instrument(est).effects
    assert np.abs(E[0] + E[1] - EYE).max() < 1e-7
    assert j_measures(est, qi)["F_J"] > 0.8


def test_instrument_inconsistent_data_flagged():
    qi = ideal_instrument(SubsetParitySpec.from_label("ZZZ"))
    d = synth_instrument_dataset(qi).to_dict()
    for p in d["preparations"]:
        for o in p["outcomes"]:
            for r in o["rotations"]:
                r["frequency"] = 1.0 - r["frequency"]
    data = TomographyDataset.from_dict(d)
    with pytest.warns(RuntimeWarning, match="residual"):
        _, info = instrument_tomography(data, return_info=True)
    assert not info["consistent"]


def test_fit_instrument_enforces_trace_preservation(rng):
    rs = RotationSet.complete()
    inputs = rs.prepared()
    outputs = [np.array([0.6 * r for r in inputs]), np.array([0.3 * r for r in inputs])]
    chois, info = fit_instrument(inputs, outputs)
    total = sum(chois)
    tr_out = np.einsum("oioj->ij", total.reshape(8, 8, 8, 8))
    assert np.allclose(tr_out, EYE, atol=1e-7)


def test_noisy_izi_detector_tomography_specificity(noisy):
    qi = noisy.variants("IZI")[False]
    data = synth_detector_dataset(qi)
    E = detector_tomography(data).effects[0]
    assert specificity(E, "IZI").theta_s <= 6.0
