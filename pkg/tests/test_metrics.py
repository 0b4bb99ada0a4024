import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import sqrtm

from parityprobe.metrics import (MetricError, MetricReport, assignment_fidelity, assignment_scan,
                                 click_probability, detector_s_distance, detector_s_fidelity,
                                 evaluate_s_objective, j_measures, metric_report, qi_s_distance,
                                 qi_s_fidelity, s_measure_bruteforce, sigma_max, specificity)
from parityprobe.opcore import (Channel, OperatorError, Povm, QuantumInstrument, pauli_operator,
                                pauli_reconstruct, pauli_expand)
from parityprobe.protocol import SubsetParitySpec, ideal_instrument, product_state

from conftest import random_effect, random_unitary

EYE = np.eye(8)
ZZZ = pauli_operator("ZZZ")
P0 = (EYE + ZZZ) / 2
EPS = 0.04
seeds = st.integers(0, 2**32 - 1)


def ideal_povm():
    return Povm.binary(P0)


def eps_povm(eps=EPS):
    return Povm.binary((1 - 2 * eps) * P0 + eps * EYE)


def depolarized_instrument(qi, lam):
    """Branch b: (1 - lam) Pi_b rho Pi_b + lam Tr[Pi_b rho] I/8."""
    branches = []
    for b in qi.branches:
        P = sum(K.conj().T @ K for K in b.kraus)
        w, v = np.linalg.eigh(P)
        ks = [math.sqrt(1 - lam) * P]
        for k in range(8):
            for m in np.flatnonzero(w > 0.5):
                ks.append(math.sqrt(lam / 8) * np.outer(EYE[k], v[:, m].conj()))
        branches.append(Channel(tuple(ks), trace_preserving=False))
    return QuantumInstrument(tuple(branches), qi.labels)


# ---------------------------------------------------------------------------
# Specificity


def test_specificity_on_target():
    r = specificity(0.5 * EYE + 0.45 * ZZZ, "ZZZ")
    assert (r.c_I, r.c_T, r.c_O) == pytest.approx((0.5, 0.45, 0.0), abs=1e-12)
    assert r.theta_s == pytest.approx(0.0, abs=1e-12)
    assert not r.residual_defined


def test_specificity_tilted_example():
    E = 0.5 * EYE + 0.4 * ZZZ + 0.1 * pauli_operator("XII")
    r = specificity(E, "ZZZ")
    assert r.theta_s == pytest.approx(math.degrees(math.atan(0.25)), abs=1e-12)
    assert r.theta_s == pytest.approx(14.04, abs=0.01)
    assert r.c_max == pytest.approx(0.4123, abs=1e-4)
    assert np.allclose(r.sigma_O, pauli_operator("XII"))
    rebuilt = r.c_I * EYE + r.c_T * ZZZ + r.c_O * r.sigma_O
    assert np.abs(rebuilt - E).max() < 1e-10
    S = sigma_max(r)
    assert np.allclose(S @ S, EYE)


@given(seeds)
def test_specificity_decomposition(seed):
    rng = np.random.default_rng(seed)
    E = random_effect(rng, 8)
    r = specificity(E, "ZIZ")
    assert r.c_O >= 0
    assert r.c_max == pytest.approx(math.hypot(r.c_T, r.c_O), abs=1e-12)
    if r.residual_defined:
        rebuilt = r.c_I * EYE + r.c_T * pauli_operator("ZIZ") + r.c_O * r.sigma_O
        assert np.abs(rebuilt - E).max() < 1e-10


def test_specificity_wrong_sign_and_bad_target():
    r = specificity(0.5 * EYE - 0.3 * ZZZ + 0.1 * pauli_operator("ZII"), "ZZZ")
    assert r.wrong_sign and r.theta_s >= 90
    with pytest.raises(MetricError):
        specificity(EYE, "ZZ")


# ---------------------------------------------------------------------------
# Assignment fidelity


def scan_records(qi, label):
    spec = SubsetParitySpec.from_label(label)
    return assignment_fidelity(assignment_scan(qi), spec)


def test_assignment_ideal():
    qi = ideal_instrument(SubsetParitySpec.from_label("ZZZ"))
    r = scan_records(qi, "ZZZ")
    assert r["contrast"] == pytest.approx(1.0)
    assert r["offset"] == pytest.approx(0.0, abs=1e-12)
    assert r["F_a"] == pytest.approx(1.0)


def test_assignment_symmetric_flip():
    eps = 0.07
    qi = QuantumInstrument.from_projectors([P0, EYE - P0])
    flipped = Povm.binary((1 - eps) * P0 + eps * (EYE - P0))
    recs = [(a, flipped.probabilities(product_state(a))[1])
            for a in [(t, t, t) for t in np.linspace(0, math.pi, 9)]]
    r = assignment_fidelity(recs, SubsetParitySpec.from_label("ZZZ"))
    assert r["contrast"] == pytest.approx(1 - 2 * eps)
    assert r["F_a"] == pytest.approx(1 - eps)
    assert click_probability(qi, product_state((math.pi, 0, 0))) == pytest.approx(1.0)


def test_assignment_needs_records():
    spec = SubsetParitySpec.from_label("ZII")
    with pytest.raises(MetricError):
        assignment_fidelity([((0, 0, 0), 0.0)], spec)
    with pytest.raises(MetricError):
        assignment_fidelity([((0, 0, 0), 0.0), ((0, 1, 0), 0.0)], spec)


def test_assignment_accepts_counts():
    spec = SubsetParitySpec.from_label("ZII")
    recs = [{"angles": [0, 0, 0], "clicks": 10, "shots": 1000},
            {"angles": [math.pi, 0, 0], "clicks": 980, "shots": 1000}]
    r = assignment_fidelity(recs, spec)
    assert r["offset"] == pytest.approx(0.01) and r["contrast"] == pytest.approx(0.97)


# ---------------------------------------------------------------------------
# J measures


def explicit_detector_choi(povm):
    """J = (1/d) sum_b |b><b| (x) E_b^T for the measure-and-report channel."""
    d = povm.dim
    J = np.zeros((povm.num_outcomes * d, povm.num_outcomes * d), complex)
    for b, E in enumerate(povm.effects):
        J[b * d:(b + 1) * d, b * d:(b + 1) * d] = E.T / d
    return J


def test_j_measures_identical():
    r = j_measures(ideal_povm(), ideal_povm())
    assert r["F_J"] == pytest.approx(1.0) and r["D_J"] == pytest.approx(0.0, abs=1e-12)


def test_j_measures_eps_example():
    a, b = explicit_detector_choi(ideal_povm()), explicit_detector_choi(eps_povm())
    s = sqrtm(a)
    F_ref = np.real(np.trace(sqrtm(s @ b @ s))) ** 2
    D_ref = 0.5 * np.abs(np.linalg.eigvalsh(a - b)).sum()
    r = j_measures(ideal_povm(), eps_povm())
    assert r["F_J"] == pytest.approx(F_ref, abs=1e-7)
    # each branch block contributes 4 sqrt(1 - eps) / 8
    assert r["F_J"] == pytest.approx(1 - EPS, abs=1e-12)
    assert r["D_J"] == pytest.approx(EPS, abs=1e-12)
    assert D_ref == pytest.approx(EPS, abs=1e-12)


def test_j_measures_dimension_mismatch():
    with pytest.raises(OperatorError):
        j_measures(Povm.binary(np.eye(2) / 2), ideal_povm())


# ---------------------------------------------------------------------------
# Detector S-measures


def test_detector_s_identical():
    assert detector_s_fidelity(ideal_povm(), ideal_povm(), restarts=8).value == pytest.approx(1.0)
    assert detector_s_distance(ideal_povm(), ideal_povm()).value == pytest.approx(0.0)


def test_detector_s_fidelity_eps_example():
    res = detector_s_fidelity(ideal_povm(), eps_povm())
    assert res.value == pytest.approx(1 - EPS, abs=1e-6)
    alone = detector_s_fidelity(ideal_povm(), eps_povm(), reference=False)
    assert alone.value == pytest.approx(1 - EPS, abs=1e-6)
    psi = alone.state
    # worst input is a parity eigenstate
    assert abs(np.vdot(psi, ZZZ @ psi).real) == pytest.approx(1.0, abs=1e-6)
    for r in (res, alone):
        again = evaluate_s_objective(ideal_povm(), eps_povm(), r.state, "fidelity",
                                     r.reference_dim)
        assert again == pytest.approx(r.value, abs=1e-8)


def test_detector_s_distance_eps_example():
    res = detector_s_distance(ideal_povm(), eps_povm())
    assert res.value == pytest.approx(EPS, abs=1e-12)
    opt = detector_s_distance(ideal_povm(), eps_povm(), method="optimizer")
    assert opt.value == pytest.approx(EPS, abs=1e-6)
    assert evaluate_s_objective(ideal_povm(), eps_povm(), opt.state, "distance",
                                opt.reference_dim) == pytest.approx(opt.value, abs=1e-8)


def test_bruteforce_is_one_sided_eps_example():
    fid = s_measure_bruteforce((ideal_povm(), eps_povm()), 20_000, seed=3, space="system")
    assert fid.value >= 1 - EPS - 1e-12
    dist = s_measure_bruteforce((ideal_povm(), eps_povm()), 20_000, seed=3, mode="distance")
    assert dist.value <= EPS + 1e-12
    with pytest.raises(MetricError):
        s_measure_bruteforce((ideal_povm(), eps_povm()), 10, space="ancilla")


def random_binary(rng, d):
    return Povm.binary(random_effect(rng, d))


@settings(max_examples=15)
@given(seeds, st.sampled_from([2, 4]))
def test_detector_invariants(seed, d):
    rng = np.random.default_rng(seed)
    a, b = random_binary(rng, d), random_binary(rng, d)
    fs = detector_s_fidelity(a, b, restarts=16, seed=seed)
    J = j_measures(a, b)
    assert 0.0 <= fs.value <= 1.0
    assert fs.value <= J["F_J"] + 1e-8
    assert fs.diagnostics["system_only"] >= fs.value - 1e-12
    ds = detector_s_distance(a, b)
    assert J["D_J"] <= ds.value + 1e-10
    assert detector_s_distance(b, a).value == pytest.approx(ds.value)
    opt = detector_s_distance(a, b, method="optimizer", restarts=16, seed=seed)
    assert opt.value == pytest.approx(ds.value, abs=1e-6)
    assert 1 - math.sqrt(fs.value) <= ds.value + 1e-6


@settings(max_examples=10)
@given(seeds)
def test_detector_fidelity_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = random_binary(rng, 4), random_binary(rng, 4)
    ab = detector_s_fidelity(a, b, restarts=16).value
    ba = detector_s_fidelity(b, a, restarts=16).value
    assert ab == pytest.approx(ba, abs=1e-6)


def test_three_outcome_distance_uses_optimizer(rng):
    U = random_unitary(rng, 4)
    w = rng.dirichlet(np.ones(3), size=4)
    effects = [(U * w[:, k]) @ U.conj().T for k in range(3)]
    p1 = Povm(tuple(effects))
    p2 = Povm((np.diag([1.0, 0, 0, 0]), np.diag([0, 1.0, 0, 0]), np.diag([0, 0, 1.0, 1.0])))
    res = detector_s_distance(p1, p2, restarts=16)
    assert res.diagnostics.get("method") != "analytic"
    brute = s_measure_bruteforce((p1, p2), 5000, mode="distance")
    assert brute.value <= res.value + 1e-10
    with pytest.raises(MetricError):
        detector_s_distance(p1, p2, method="analytic")


# ---------------------------------------------------------------------------
# Instrument S-measures


def test_qi_identical():
    qi = ideal_instrument(SubsetParitySpec.from_label("ZIZ"))
    assert qi_s_fidelity(qi, qi, restarts=8).value == pytest.approx(1.0, abs=1e-9)
    assert qi_s_distance(qi, qi, restarts=8).value == pytest.approx(0.0, abs=1e-9)


def test_qi_depolarized_example():
    lam = 0.1
    ideal = ideal_instrument(SubsetParitySpec.from_label("ZZZ"))
    dep = depolarized_instrument(ideal, lam)
    res = qi_s_fidelity(ideal, dep)
    # Schmidt rank <= 4 per branch bounds the reference purity below by p_b^2 / 4
    assert res.value == pytest.approx(1 - lam + lam / 32, abs=1e-9)
    assert res.converged
    brute = s_measure_bruteforce((ideal, dep), 100_000, seed=5)
    assert brute.value >= res.value - 1e-12
    assert brute.value - res.value < 1e-3
    assert res.value <= j_measures(ideal, dep)["F_J"] + 1e-9


def test_qi_unitary_branch_distance():
    p = 0.15
    ideal = ideal_instrument(SubsetParitySpec.from_label("ZZZ"))
    U = pauli_operator("XII")
    branches = []
    for b in ideal.branches:
        (K,) = b.kraus
        branches.append(Channel((math.sqrt(1 - p) * K, math.sqrt(p) * U @ K),
                                trace_preserving=False))
    other = QuantumInstrument(tuple(branches), ideal.labels)
    res = qi_s_distance(ideal, other)
    # an even eigenstate is mapped to an orthogonal state with weight p
    assert res.value >= p - 1e-6
    assert res.value <= p + 1e-6
    again = evaluate_s_objective(ideal, other, res.state, "distance", res.reference_dim)
    assert again == pytest.approx(res.value, abs=1e-8)


def test_qi_checks_shapes():
    a = ideal_instrument(SubsetParitySpec.from_label("ZZZ"))
    b = QuantumInstrument.from_projectors([np.diag([1.0, 0]), np.diag([0, 1.0])])
    with pytest.raises(OperatorError):
        qi_s_fidelity(a, b)


# ---------------------------------------------------------------------------
# Reports


def test_report_roundtrip():
    spec = SubsetParitySpec.from_label("ZZZ")
    ideal = ideal_instrument(spec)
    dep = depolarized_instrument(ideal, 0.1)
    rep = metric_report(spec, dep, ideal, False, instrument=dep, restarts=8, qi_restarts=8)
    assert rep.F_S <= rep.F_J + 1e-9
    assert rep.instrument["F_S"] <= rep.instrument["F_J"] + 1e-9
    assert rep.theta_s_deg == pytest.approx(0.0, abs=1e-9)
    d = rep.to_dict()
    assert MetricReport.from_dict(d).to_dict() == d
    assert rep.to_json() == MetricReport.from_dict(d).to_json()


def test_noisy_ziz_ordering(noisy):
    for herald in (False, True):
        rep = noisy.report("ZIZ", herald)
        assert rep.F_S <= rep.F_J + 1e-9
        assert rep.instrument["F_S"] <= rep.instrument["F_J"] + 1e-9
        assert rep.theta_s_deg <= 6.0
        assert rep.optimizer["detector_F_S"]["converged"]
