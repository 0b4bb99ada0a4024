"""Detector, state and instrument tomography from rotation-indexed click data.

Register states are prepared (or measured) after product rotations drawn from
``{I, Ry+, Rx+, Ry-}`` (complete, 64 settings) or additionally ``{Rx-, Ry180}``
(overcomplete, 216 settings).  ``Rx+`` is ``exp(-i pi/4 X)``.

All fits are least squares; the constrained fits use accelerated projected
gradient (detector and state) or ADMM (instrument) and stop on a fixed-point
residual.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path

import numpy as np

from .opcore import (Channel, Povm, QuantumInstrument, basis_projector, hermitian_part,
                     kraus_from_choi, pauli_basis, povm_from_instrument, psd_sqrt)

TOKENS = {
    "I": ("X", 0.0),
    "Rx+": ("X", math.pi / 2),
    "Rx-": ("X", -math.pi / 2),
    "Ry+": ("Y", math.pi / 2),
    "Ry-": ("Y", -math.pi / 2),
    "Ry180": ("Y", math.pi),
}
COMPLETE_TOKENS = ("I", "Ry+", "Rx+", "Ry-")
OVERCOMPLETE_TOKENS = COMPLETE_TOKENS + ("Rx-", "Ry180")
NQ = 3
D = 2 ** NQ


class TomographyError(ValueError):
    """Malformed dataset or a design that cannot determine the estimate."""


class ConvergenceError(RuntimeError):
    """An iterative fit hit its iteration cap; ``result`` holds the last iterate."""

    def __init__(self, msg, residual, result=None):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.residual = residual
        self.result = result


def _single(token: str) -> np.ndarray:
    try:
        axis, angle = TOKENS[token]
    except KeyError:
        raise TomographyError(f"unknown rotation token {token!r}") from None
    s = np.array([[0, 1], [1, 0]]) if axis == "X" else np.array([[0, -1j], [1j, 0]])
    return math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * s


def rotation_unitary(label: str) -> np.ndarray:
    tokens = label.split(".")
    if len(tokens) != NQ:
        raise TomographyError(f"rotation label {label!r} needs {NQ} tokens")
    return reduce(np.kron, [_single(t) for t in tokens])


@dataclass(frozen=True)
class RotationSet:
    kind: str
    labels: tuple

    @classmethod
    def complete(cls) -> "RotationSet":
        return cls._product("complete", COMPLETE_TOKENS)

    @classmethod
    def overcomplete(cls) -> "RotationSet":
        return cls._product("overcomplete", OVERCOMPLETE_TOKENS)

    @classmethod
    def named(cls, kind: str) -> "RotationSet":
        if kind not in ("complete", "overcomplete"):
            raise TomographyError(f"unknown rotation set {kind!r}")
        return cls.complete() if kind == "complete" else cls.overcomplete()

    @classmethod
    def _product(cls, kind, tokens):
        return cls(kind, tuple(".".join(t) for t in itertools.product(tokens, repeat=NQ)))

    def __len__(self):
        return len(self.labels)

    @property
    def unitaries(self) -> np.ndarray:
        return np.array([rotation_unitary(lab) for lab in self.labels])

    def prepared(self, rho0=None) -> np.ndarray:
        """States ``R rho0 R^dag`` (default ``rho0 = |000><000|``)."""
        rho0 = basis_projector(0, D) if rho0 is None else rho0
        U = self.unitaries
        return U @ rho0 @ U.conj().transpose(0, 2, 1)

    def measured(self, effect) -> np.ndarray:
        """Effects ``R^dag E R`` seen by a state measured after each rotation."""
        U = self.unitaries
        return U.conj().transpose(0, 2, 1) @ effect @ U


# ---------------------------------------------------------------------------
# Datasets


def _check_record(r, allow_empty=False):
    if not 0 <= r["clicks"] <= r["shots"]:
        raise TomographyError(f"rotation {r['label']}: clicks outside [0, shots]")
    if r["shots"] == 0 and "frequency" not in r and not allow_empty:
        raise TomographyError(f"rotation {r['label']}: no shots and no exact frequency")


def _frequency(r) -> float:
    return float(r["frequency"]) if r["shots"] == 0 else r["clicks"] / r["shots"]


@dataclass
class TomographyDataset:
    """Click statistics indexed by rotation label.

    ``kind="detector"``: ``rotations`` lists ``{"label", "clicks", "shots"}``
    where clicks count outcome 0 of the detector for each preparation.

    ``kind="state"``: the same records, clicks counting the tomography meter.

    ``kind="instrument"``: ``preparations`` lists, per input preparation,
    ``{"label", "outcomes": [{"outcome", "probability"?, "rotations": [...]}]}``;
    the per-outcome tomograms use the ``post_rotations`` set and the shot
    counts of each tomogram row are the shots that gave that outcome; rows
    with no shots and no ``"frequency"`` are left out of that tomogram.

    Records with ``shots == 0`` carry exact probabilities in ``"frequency"``.
    """

    kind: str
    operator: str = ""
    herald: bool = False
    rotation_kind: str = "overcomplete"
    rotations: list = field(default_factory=list)
    preparations: list = field(default_factory=list)
    post_rotations: str = "overcomplete"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("detector", "state", "instrument"):
            raise TomographyError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "instrument":
            want = set(RotationSet.named(self.rotation_kind).labels)
            post = set(RotationSet.named(self.post_rotations).labels)
            if {p["label"] for p in self.preparations} != want:
                raise TomographyError("instrument data must cover every preparation")
            for p in self.preparations:
                for o in p["outcomes"]:
                    if {r["label"] for r in o["rotations"]} != post:
                        raise TomographyError("every tomogram must cover every post-rotation")
                    # a rare outcome may get no shots for some post-rotations
                    for r in o["rotations"]:
                        _check_record(r, allow_empty=True)
        else:
            want = set(RotationSet.named(self.rotation_kind).labels)
            if {r["label"] for r in self.rotations} != want:
                raise TomographyError("dataset must contain every rotation of its set")
            for r in self.rotations:
                _check_record(r)

    @property
    def exact(self) -> bool:
        recs = self.rotations or [r for p in self.preparations for o in p["outcomes"]
                                  for r in o["rotations"]]
        return all(r["shots"] == 0 for r in recs)

    def frequencies(self, rotations: RotationSet | None = None) -> np.ndarray:
        """Click frequencies ordered like ``rotations`` (default: own set)."""
        rs = rotations or RotationSet.named(self.rotation_kind)
        by = {r["label"]: r for r in self.rotations}
        return np.array([_frequency(by[lab]) for lab in rs.labels])

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "operator": self.operator, "herald": self.herald,
             "rotation_set": self.rotation_kind}
        if self.kind == "instrument":
            d["post_rotation_set"] = self.post_rotations
            d["preparations"] = self.preparations
        else:
            d["rotations"] = self.rotations
        if self.meta:
            d["meta"] = self.meta
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TomographyDataset":
        return cls(kind=d.get("kind", "detector"), operator=d.get("operator", ""),
                   herald=bool(d.get("herald", False)),
                   rotation_kind=d.get("rotation_set", _guess_kind(d)),
                   rotations=d.get("rotations", []), preparations=d.get("preparations", []),
                   post_rotations=d.get("post_rotation_set", "overcomplete"),
                   meta=d.get("meta", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def dump(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "TomographyDataset":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _guess_kind(d):
    n = len(d.get("rotations", d.get("preparations", [])))
    return "complete" if n == 64 else "overcomplete"


# ---------------------------------------------------------------------------
# Linear algebra helpers


def design_matrix(operators: np.ndarray) -> np.ndarray:
    """``A[i, j] = Tr[sigma_j O_i]`` for Hermitian ``O_i`` (real)."""
    P = pauli_basis(NQ)
    return np.real(np.einsum("jab,iba->ij", P, operators))


def _project_unit_interval(E):
    w, v = np.linalg.eigh(hermitian_part(E))
    return (v * np.clip(w, 0, 1)) @ v.conj().T


def _project_simplex(w, total=1.0):
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - total
    k = np.arange(1, len(w) + 1)
    r = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(w - css[r] / (r + 1), 0)


def _project_density(rho):
    w, v = np.linalg.eigh(hermitian_part(rho))
    return (v * _project_simplex(w)) @ v.conj().T


def _fista(grad, project, x0, L, tol, max_iter):
    """Accelerated projected gradient with adaptive restart.

    Returns ``(x, residual, iterations)`` with the residual
    ``||x - P(x - grad(x)/L)||_F``.
    """
    x = project(x0)
    y, t = x, 1.0
    res = np.inf
    for it in range(1, int(max_iter) + 1):
        x_new = project(y - grad(y) / L)
        if np.real(np.vdot(y - x_new, x_new - x)) > 0:
            t = 1.0
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        y = x_new + ((t - 1) / t_new) * (x_new - x)
        x, t = x_new, t_new
        if it % 5 == 0 or it == 1:
            res = np.linalg.norm(x - project(x - grad(x) / L))
            if res <= tol:
                return x, res, it
    return x, res, int(max_iter)


def _lipschitz(ops: np.ndarray) -> float:
    V = ops.reshape(len(ops), -1)
    return 2 * float(np.linalg.eigvalsh(np.real(V.conj() @ V.T)).max())


# ---------------------------------------------------------------------------
# Detector tomography


def detector_tomography(data: TomographyDataset, mode: str = "constrained", rho0=None,
                        prep_channel: Channel | None = None, tol: float = 1e-8,
                        max_iter: int = 100_000, return_info: bool = False):
    """Binary POVM ``{E, I - E}`` with ``E`` the effect counted as a click.

    ``mode="inversion"`` returns the minimum-norm least-squares solution with
    no constraints (possibly unphysical, wrapped with ``Povm.unchecked``).
    ``mode="constrained"`` enforces ``0 <= E <= I``.  ``prep_channel`` models
    imperfect preparations applied after each ideal rotation.
    """
    if data.kind != "detector":
        raise TomographyError("detector tomography needs a detector dataset")
    rs = RotationSet.named(data.rotation_kind)
    states = rs.prepared(rho0)
    if prep_channel is not None:
        states = np.array([prep_channel(s) for s in states])
    m = data.frequencies(rs)
    A = design_matrix(states)
    if np.linalg.matrix_rank(A) < 4 ** NQ:
        raise TomographyError("rotation set does not span the operator space")
    coeffs = np.linalg.pinv(A) @ m
    E_lin = np.einsum("j,jab->ab", coeffs, pauli_basis(NQ))
    info = {"mode": mode, "iterations": 0, "residual": 0.0}
    if mode == "inversion":
        E = hermitian_part(E_lin)
        povm = Povm.unchecked((E, np.eye(D) - E))
    elif mode == "constrained":
        E = _project_unit_interval(E_lin)
        w = np.linalg.eigvalsh(hermitian_part(E_lin))
        if w.min() < -1e-12 or w.max() > 1 + 1e-12:
            def grad(X):
                r = np.real(np.einsum("iab,ba->i", states, X)) - m
                return 2 * np.einsum("i,iab->ab", r, states)

            E, res, it = _fista(grad, _project_unit_interval, E_lin, _lipschitz(states),
                                tol, max_iter)
            info.update(iterations=it, residual=float(res))
            if res > tol:
                raise ConvergenceError("constrained detector fit did not converge", res,
                                       Povm.binary(E))
        E = hermitian_part(E)
        povm = Povm((E, np.eye(D) - E))
    else:
        raise TomographyError(f"unknown mode {mode!r}")
    fit = np.real(np.einsum("iab,ba->i", states, povm.effects[0])) - m
    info["chi2"] = float(fit @ fit)
    return (povm, info) if return_info else povm


# ---------------------------------------------------------------------------
# State tomography


def ideal_meter() -> np.ndarray:
    """Tomography meter effect: click iff the register is in |000>."""
    return basis_projector(0, D)


def _state_fit(M, m, tol, max_iter):
    A = design_matrix(M) / D
    rho_lin = np.einsum("j,jab->ab", np.linalg.pinv(A) @ m, pauli_basis(NQ)) / D
    w = np.linalg.eigvalsh(hermitian_part(rho_lin))
    if w.min() >= -1e-12 and abs(np.real(np.trace(rho_lin)) - 1) < 1e-12:
        return _project_density(rho_lin), 0.0, 0

    def grad(X):
        r = np.real(np.einsum("iab,ba->i", M, X)) - m
        return 2 * np.einsum("i,iab->ab", r, M)

    rho, res, it = _fista(grad, _project_density, rho_lin, _lipschitz(M), tol, max_iter)
    if res > tol:
        raise ConvergenceError("state fit did not converge", res, rho)
    return hermitian_part(rho), res, it


def state_tomography(data: TomographyDataset, e_tomo=None, tol: float = 1e-10,
                     max_iter: int = 100_000) -> np.ndarray:
    """Least-squares density matrix (PSD, unit trace) from meter clicks.

    ``e_tomo`` is the calibrated meter effect (default :func:`ideal_meter`).
    """
    if data.kind != "state":
        raise TomographyError("state tomography needs a state dataset")
    rs = RotationSet.named(data.rotation_kind)
    E = ideal_meter() if e_tomo is None else np.asarray(e_tomo)
    M = rs.measured(E)
    A = design_matrix(M)
    if np.linalg.matrix_rank(A) < 4 ** NQ:
        raise TomographyError("post-rotations and meter do not determine the state")
    if np.linalg.cond(A) > 1e8:
        warnings.warn("ill-conditioned state-tomography design", RuntimeWarning, stacklevel=2)
    rho, _, _ = _state_fit(M, data.frequencies(rs), tol, max_iter)
    return rho


# ---------------------------------------------------------------------------
# Instrument tomography


def _realign(X):
    """Swap between Choi ``C[(o,i),(o',i')]`` and superoperator ``M[(o,o'),(i,i')]``."""
    d = int(round(X.shape[0] ** 0.5))
    return X.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)


def _psd(C):
    w, v = np.linalg.eigh(hermitian_part(C))
    return (v * np.clip(w, 0, None)) @ v.conj().T


def fit_instrument(inputs: np.ndarray, outputs: list, tol: float = 1e-10,
                   max_iter: int = 100_000):
    """Least-squares TP instrument from (input state, sub-normalised output) pairs.

    ``inputs``: (K, d, d); ``outputs[b]``: (K, d, d) with ``F_b(inputs[k])``
    estimates.  Minimises ``sum_b sum_k ||F_b(rho_k) - out_bk||_F^2`` subject
    to every branch Choi matrix being PSD and the branch sum being trace
    preserving, by ADMM with a closed-form affine least-squares step.

    Returns ``(choi_list, info)``.
    """
    K, d, _ = inputs.shape
    nb = len(outputs)
    R = inputs.reshape(K, d * d).T
    S = [o.reshape(K, d * d).T for o in outputs]
    G = R @ R.conj().T
    rho = max(2 * np.real(np.trace(G)) / (d * d), 1e-3)
    H = np.linalg.inv(2 * G + rho * np.eye(d * d))
    Hinv = 2 * G + rho * np.eye(d * d)
    w = np.eye(d).reshape(-1)
    v = np.eye(d).reshape(-1)
    SR = [2 * s @ R.conj().T for s in S]

    def x_step(V):
        B = [SR[b] + rho * V[b] for b in range(nb)]
        lam = (w @ sum(B) - v @ Hinv) / (nb * d)
        return [(B[b] - np.outer(w, lam)) @ H for b in range(nb)]

    Z = [np.zeros((d * d, d * d), complex) for _ in range(nb)]
    U = [np.zeros_like(z) for z in Z]
    X = x_step(Z)
    prim = dual = np.inf
    it = 0
    for it in range(1, int(max_iter) + 1):
        X = x_step([Z[b] - U[b] for b in range(nb)])
        Z_old = Z
        Z = [_realign(_psd(_realign(X[b] + U[b]))) for b in range(nb)]
        U = [U[b] + X[b] - Z[b] for b in range(nb)]
        prim = math.sqrt(sum(np.linalg.norm(X[b] - Z[b]) ** 2 for b in range(nb)))
        dual = rho * math.sqrt(sum(np.linalg.norm(Z[b] - Z_old[b]) ** 2 for b in range(nb)))
        if prim <= tol and dual <= tol:
            break
    chois = [hermitian_part(_realign(z)) for z in Z]
    resid = math.sqrt(sum(np.linalg.norm(_realign(chois[b]) @ R - S[b]) ** 2 for b in range(nb)))
    info = {"iterations": it, "primal": prim, "dual": dual, "residual": resid,
            "converged": prim <= tol and dual <= tol}
    return chois, info


def _instrument_from_chois(chois, labels) -> QuantumInstrument:
    d = int(round(chois[0].shape[0] ** 0.5))
    kraus = [kraus_from_choi(_psd(C), d, tol=1e-12) for C in chois]
    S = sum(K.conj().T @ K for ks in kraus for K in ks)
    W = np.linalg.inv(psd_sqrt(S))
    return QuantumInstrument(
        tuple(Channel(tuple(K @ W for K in ks), trace_preserving=False) for ks in kraus),
        tuple(labels))


def instrument_tomography(data: TomographyDataset, e_tomo=None, tol: float = 1e-10,
                          max_iter: int = 100_000, residual_threshold: float = 0.05,
                          return_info: bool = False):
    """Two-stage instrument reconstruction.

    Stage 1 fits each conditional output state by :func:`state_tomography`;
    stage 2 fits branch maps to the probability-weighted outputs with
    positivity and trace preservation of the branch sum.  ``e_tomo`` may be a
    dict mapping outcome label to the meter effect calibrated for that
    outcome.  A stage-2 residual above ``residual_threshold`` flags data that
    no instrument explains (warning, ``info["consistent"] = False``).
    """
    if data.kind != "instrument":
        raise TomographyError("instrument tomography needs an instrument dataset")
    preps = RotationSet.named(data.rotation_kind)
    post = RotationSet.named(data.post_rotations)
    by_label = {p["label"]: p for p in data.preparations}
    labels = [o["outcome"] for o in data.preparations[0]["outcomes"]]
    labels = [tuple(lab) if isinstance(lab, list) else lab for lab in labels]
    meters = {}
    for lab in labels:
        E = e_tomo.get(lab, ideal_meter()) if isinstance(e_tomo, dict) else e_tomo
        meters[lab] = post.measured(ideal_meter() if E is None else np.asarray(E))
    inputs = preps.prepared()
    outputs = [np.zeros((len(preps), D, D), complex) for _ in labels]
    for k, plab in enumerate(preps.labels):
        outs = by_label[plab]["outcomes"]
        weights = _outcome_weights(outs)
        for b, o in enumerate(outs):
            if weights[b] <= 0:
                continue
            recs = _ordered(o["rotations"], post)
            seen = np.array([r["shots"] > 0 or "frequency" in r for r in recs])
            m = np.array([_frequency(r) for r in recs if r["shots"] > 0 or "frequency" in r])
            rho, _, _ = _state_fit(meters[labels[b]][seen], m, tol, max_iter)
            outputs[b][k] = weights[b] * rho
    chois, info = fit_instrument(inputs, outputs, tol=tol, max_iter=max_iter)
    info["consistent"] = info["residual"] <= residual_threshold
    if not info["consistent"]:
        warnings.warn(f"instrument fit residual {info['residual']:.3g} above "
                      f"{residual_threshold}", RuntimeWarning, stacklevel=2)
    if not info["converged"]:
        raise ConvergenceError("instrument fit did not converge",
                               max(info["primal"], info["dual"]),
                               _instrument_from_chois(chois, labels))
    qi = _instrument_from_chois(chois, labels)
    return (qi, info) if return_info else qi


def _ordered(records, rs):
    by = {r["label"]: r for r in records}
    return [by[lab] for lab in rs.labels]


def _outcome_weights(outs):
    if all("probability" in o for o in outs):
        return np.array([float(o["probability"]) for o in outs])
    n = np.array([sum(r["shots"] for r in o["rotations"]) for o in outs], float)
    return n / n.sum() if n.sum() else n


# ---------------------------------------------------------------------------
# Synthetic data


def _rng(seed, stream):
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


def _branch_probs(source, rho, herald):
    """Outcome probabilities of ``source`` and whether each outcome is kept.

    Returns ``(labels, probs, kept)``; with ``herald`` the kept outcomes are
    the success-heralded branches relabelled by their primary bit.
    """
    if isinstance(source, Povm):
        if herald:
            raise TomographyError("a bare POVM has no herald outcome")
        return list(range(source.num_outcomes)), source.probabilities(rho), None
    if isinstance(source, QuantumInstrument):
        p = source.probabilities(rho)
        labels = list(source.labels)
    else:
        out = source(rho)
        labels, p = list(out.keys()), np.array(list(out.values()), float)
    p = np.clip(np.real(p), 0, None)
    if herald:
        kept = [isinstance(lab, tuple) and lab[1] == 1 for lab in labels]
        if not any(kept):
            raise TomographyError("heralded data need (bit, herald) outcome labels")
        return labels, p, kept
    if labels and isinstance(labels[0], tuple):
        # fold herald-resolved outcomes when the herald is ignored
        folded = {}
        for lab, q in zip(labels, p):
            folded[lab[0]] = folded.get(lab[0], 0) + q
        labels, p = list(folded), np.array(list(folded.values()))
    return labels, p, None


def synth_detector_dataset(source, rotations: RotationSet | None = None, shots: int = 0,
                           seed: int = 0, herald: bool = False, operator: str = "",
                           click=0, rho0=None) -> TomographyDataset:
    """Detector-tomography data: clicks count outcome ``click``.

    ``source`` is a Povm, a QuantumInstrument or a callable mapping a state to
    ``{outcome: probability}``.  With ``herald`` the non-success shots are
    dropped.
    """
    rs = rotations or RotationSet.overcomplete()
    if shots < 0:
        raise TomographyError("shots must be non-negative")
    rng = _rng(seed, 1)
    recs = []
    for lab, rho in zip(rs.labels, rs.prepared(rho0)):
        labels, p, kept = _branch_probs(source, rho, herald)
        if kept is not None:
            primary = [lab_[0] for lab_ in labels]
            hit = np.array([k and b == click for k, b in zip(kept, primary)])
            keep = np.array(kept)
        else:
            hit = np.array([b == click for b in labels])
            keep = np.ones(len(labels), bool)
        if shots == 0:
            tot = p[keep].sum()
            recs.append({"label": lab, "clicks": 0, "shots": 0,
                         "frequency": float(p[hit].sum() / tot) if tot > 0 else 0.0})
        else:
            n = rng.multinomial(shots, p / p.sum())
            recs.append({"label": lab, "clicks": int(n[hit].sum()), "shots": int(n[keep].sum())})
    return TomographyDataset("detector", operator, herald, rs.kind, rotations=recs,
                             meta={"seed": int(seed), "shots": int(shots)})


def synth_state_dataset(rho, rotations: RotationSet | None = None, shots: int = 0,
                        seed: int = 0, e_tomo=None) -> TomographyDataset:
    rs = rotations or RotationSet.overcomplete()
    M = rs.measured(ideal_meter() if e_tomo is None else np.asarray(e_tomo))
    p = np.clip(np.real(np.einsum("iab,ba->i", M, rho)), 0, 1)
    rng = _rng(seed, 2)
    recs = []
    for lab, q in zip(rs.labels, p):
        if shots == 0:
            recs.append({"label": lab, "clicks": 0, "shots": 0, "frequency": float(q)})
        else:
            recs.append({"label": lab, "clicks": int(rng.binomial(shots, q)), "shots": int(shots)})
    return TomographyDataset("state", rotation_kind=rs.kind, rotations=recs,
                             meta={"seed": int(seed), "shots": int(shots)})


def synth_instrument_dataset(qi: QuantumInstrument, shots: int = 0, seed: int = 0,
                             herald: bool = False, operator: str = "",
                             preparations: RotationSet | None = None,
                             post: RotationSet | None = None,
                             e_tomo=None) -> TomographyDataset:
    """Instrument-tomography data: outcome statistics plus conditional tomograms.

    Each (preparation, post-rotation) setting gets ``shots`` shots; a shot
    yields an outcome and a meter click on the conditional output state.
    With ``herald`` only success-heralded shots are kept and outcomes are
    labelled by their primary bit.
    """
    preps = preparations or RotationSet.complete()
    post = post or RotationSet.overcomplete()
    rng = _rng(seed, 3)
    labels = list(qi.labels)
    if herald:
        use = [k for k, lab in enumerate(labels) if isinstance(lab, tuple) and lab[1] == 1]
        if not use:
            raise TomographyError("heralded data need (bit, herald) outcome labels")
        out_labels = [labels[k][0] for k in use]
        groups = [[k] for k in use]
    elif labels and isinstance(labels[0], tuple):
        out_labels = sorted({lab[0] for lab in labels})
        groups = [[k for k, lab in enumerate(labels) if lab[0] == b] for b in out_labels]
    else:
        out_labels, groups = labels, [[k] for k in range(len(labels))]
    meters = []
    for lab in out_labels:
        E = e_tomo.get(lab) if isinstance(e_tomo, dict) else e_tomo
        meters.append(post.measured(ideal_meter() if E is None else np.asarray(E)))
    records = []
    for plab, rho in zip(preps.labels, preps.prepared()):
        outs = [sum(qi.branches[k](rho) for k in g) for g in groups]
        tr = np.array([max(np.real(np.trace(o)), 0.0) for o in outs])
        lost = max(1.0 - tr.sum(), 0.0)
        click = [np.clip(np.real(np.einsum("iab,ba->i", meters[b], outs[b])), 0, None)
                 for b in range(len(outs))]
        entry = {"label": plab, "outcomes": []}
        if shots == 0:
            for b, lab in enumerate(out_labels):
                f = click[b] / tr[b] if tr[b] > 0 else np.zeros(len(post))
                entry["outcomes"].append({
                    "outcome": lab, "probability": float(tr[b] / tr.sum()),
                    "rotations": [{"label": r, "clicks": 0, "shots": 0,
                                   "frequency": float(min(x, 1.0))}
                                  for r, x in zip(post.labels, f)]})
        else:
            rows = [[] for _ in out_labels]
            for i, r in enumerate(post.labels):
                p = []
                for b in range(len(outs)):
                    p += [min(click[b][i], tr[b]), max(tr[b] - click[b][i], 0.0)]
                p.append(lost)
                p = np.array(p) / sum(p)
                n = rng.multinomial(shots, p)
                for b in range(len(outs)):
                    rows[b].append({"label": r, "clicks": int(n[2 * b]),
                                    "shots": int(n[2 * b] + n[2 * b + 1])})
            for b, lab in enumerate(out_labels):
                entry["outcomes"].append({"outcome": lab, "rotations": rows[b]})
        records.append(entry)
    return TomographyDataset("instrument", operator, herald, preps.kind, preparations=records,
                             post_rotations=post.kind,
                             meta={"seed": int(seed), "shots": int(shots)})


def synth_dataset(source, rotations: RotationSet | None = None, shots: int = 0, seed: int = 0,
                  kind: str = "detector", **kw) -> TomographyDataset:
    """Dispatch to the detector, state or instrument generator."""
    if kind == "detector":
        return synth_detector_dataset(source, rotations, shots, seed, **kw)
    if kind == "state":
        return synth_state_dataset(source, rotations, shots, seed, **kw)
    if kind == "instrument":
        return synth_instrument_dataset(source, shots, seed, preparations=rotations, **kw)
    raise TomographyError(f"unknown dataset kind {kind!r}")


def detector_from_instrument(qi: QuantumInstrument) -> Povm:
    """Binary POVM of a two-outcome instrument (herald labels folded)."""
    return povm_from_instrument(qi)
