"""Figures of merit for parity detectors and parity instruments.

Worst-case (S) measures are found by multi-start Riemannian gradient descent
over pure input states ``psi`` on system (x) reference.  A pure input is
stored as a ``d x r`` matrix ``X`` with ``psi = vec(X)`` (system index major),
so ``r = 1`` means no reference and ``r = d`` is a full reference.

For branch Kraus sets ``{K_m}`` and ``{L_n}`` the root fidelity of the branch
outputs is ``||T||_1`` with ``T_mn = Tr[(K_m X)^H (L_n X)]``, and the output
difference is ``sum_m a_m a_m^H - sum_n b_n b_n^H`` with ``a_m = vec(K_m X)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .opcore import (Channel, OperatorError, Povm, QuantumInstrument, detector_channel,
                     instrument_as_detector, jamiolkowski, num_qubits, pauli_expand,
                     pauli_labels, pauli_operator, pauli_reconstruct, qi_channel,
                     trace_distance, trace_fidelity)
from .protocol.params import SubsetParitySpec
from .protocol.shots import product_state


class MetricError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Assignment fidelity


def _records(records):
    angles, freqs = [], []
    for r in records:
        if isinstance(r, dict):
            a, f = r.get("angles", r.get("preparation")), r.get("frequency")
            if f is None:
                f = r["clicks"] / r["shots"]
        else:
            a, f = r
        angles.append([float(x) for x in a])
        freqs.append(float(f))
    return np.array(angles), np.array(freqs)


def assignment_fidelity(records, spec: SubsetParitySpec) -> dict:
    """Fit ``p_click = offset + contrast/2 * (1 - prod_k cos theta_k)``.

    ``records`` holds ``(angles, click_frequency)`` pairs or dicts with
    ``angles`` and ``frequency`` (or ``clicks``/``shots``); a click means odd
    parity.  ``F_a`` is the probability of a correct assignment averaged over
    the two parity sectors.
    """
    angles, p = _records(records)
    if len(p) < 2:
        raise MetricError("need at least two preparations to fit contrast and offset")
    idx = [q - 1 for q in spec.subset]
    x = 0.5 * (1 - np.prod(np.cos(angles[:, idx]), axis=1))
    A = np.column_stack([np.ones_like(x), x])
    if np.linalg.matrix_rank(A) < 2:
        raise MetricError("preparations do not vary the subset parity")
    (offset, contrast), *_ = np.linalg.lstsq(A, p, rcond=None)
    fa = (1 + contrast) / 2 - abs(offset + contrast / 2 - 0.5)
    return {"contrast": float(contrast), "offset": float(offset), "F_a": float(fa)}


def click_probability(qi: QuantumInstrument, rho: np.ndarray) -> float:
    """Probability of the odd outcome, conditioned on herald success if present."""
    p = qi.probabilities(rho)
    labels = qi.labels
    if labels and isinstance(labels[0], tuple):
        ok = sum(q for q, lab in zip(p, labels) if lab[1] == 1)
        odd = sum(q for q, lab in zip(p, labels) if lab[1] == 1 and lab[0] == 1)
        return float(odd / ok) if ok > 0 else float("nan")
    return float(sum(q for q, lab in zip(p, labels) if lab == 1))


def default_scan_angles(steps: int = 9) -> list:
    """Preparation grid: a common X angle on every register qubit."""
    return [(t, t, t) for t in np.linspace(0.0, math.pi, steps)]


def assignment_scan(qi: QuantumInstrument, angles=None, residual=(0.0, 0.0, 0.0)) -> list:
    """Exact ``(angles, click probability)`` records for product preparations."""
    angles = default_scan_angles() if angles is None else angles
    return [(tuple(float(x) for x in a), click_probability(qi, product_state(a, residual)))
            for a in angles]


# ---------------------------------------------------------------------------
# Specificity


@dataclass
class SpecificityReport:
    c_I: float
    c_T: float
    c_O: float
    theta_s: float
    c_max: float
    sigma_O: np.ndarray | None
    target: str
    wrong_sign: bool = False

    @property
    def residual_defined(self) -> bool:
        return self.sigma_O is not None

    def to_dict(self) -> dict:
        return {"target": self.target, "c_I": self.c_I, "c_T": self.c_T, "c_O": self.c_O,
                "c_max": self.c_max, "theta_s_deg": self.theta_s, "wrong_sign": self.wrong_sign}


def specificity(E, target: str) -> SpecificityReport:
    """Split an effect into bias, target axis and the orthogonal remainder.

    ``theta_s`` is in degrees.  A non-positive target coefficient yields
    ``theta_s >= 90`` and sets ``wrong_sign``.
    """
    E = E.effect if isinstance(E, Povm) else np.asarray(E, dtype=complex)
    n = num_qubits(E.shape[0])
    labels = pauli_labels(n)
    if len(target) != n or target not in labels:
        raise MetricError(f"target {target!r} is not an {n}-qubit Pauli string")
    c = np.real(pauli_expand(E, n))
    iI, iT = labels.index("I" * n), labels.index(target)
    c_I, c_T = float(c[iI]), float(c[iT])
    rest = c.copy()
    rest[[iI, iT]] = 0.0
    c_O = float(np.linalg.norm(rest))
    sigma_O = pauli_reconstruct(rest / c_O, n) if c_O > 1e-12 else None
    return SpecificityReport(c_I, c_T, c_O, math.degrees(math.atan2(c_O, c_T)), math.hypot(c_T, c_O),
                             sigma_O, target, wrong_sign=c_T <= 0)


def sigma_max(report: SpecificityReport) -> np.ndarray:
    """Unit operator along the realized measurement axis."""
    sT = pauli_operator(report.target)
    if report.c_max == 0:
        raise MetricError("effect has no non-identity component")
    out = report.c_T * sT
    if report.sigma_O is not None:
        out = out + report.c_O * report.sigma_O
    return out / report.c_max


# ---------------------------------------------------------------------------
# J measures


def _as_channel(x) -> Channel:
    if isinstance(x, Channel):
        return x
    if isinstance(x, Povm):
        return detector_channel(x)
    if isinstance(x, QuantumInstrument):
        return qi_channel(x)
    raise MetricError(f"cannot interpret {type(x).__name__} as a channel")


def j_measures(ch1, ch2) -> dict:
    """Trace fidelity and trace distance of the Jamiolkowski states.

    Accepts channels, POVMs (via their detector channels) or instruments (via
    the channel into system (x) outcome register).
    """
    a, b = _as_channel(ch1), _as_channel(ch2)
    if a.dims != b.dims:
        raise OperatorError("channel dimensions differ")
    Ja, Jb = jamiolkowski(a), jamiolkowski(b)
    return {"F_J": min(trace_fidelity(Ja, Jb), 1.0), "D_J": trace_distance(Ja, Jb)}


# ---------------------------------------------------------------------------
# Worst-case objectives


def _branches(x):
    if isinstance(x, Povm):
        x = instrument_as_detector(x)
    if isinstance(x, Channel):
        return [np.array(x.kraus)]
    if isinstance(x, QuantumInstrument):
        return [np.array(b.kraus) for b in x.branches]
    raise MetricError(f"cannot interpret {type(x).__name__} as an instrument")


class _Pair:
    """Objective and gradient for a pair of instruments on batched inputs."""

    def __init__(self, first, second):
        b1, b2 = _branches(first), _branches(second)
        if len(b1) != len(b2):
            raise OperatorError("outcome counts differ")
        for K, L in zip(b1, b2):
            if K.shape[1:] != L.shape[1:]:
                raise OperatorError("branch dimensions differ")
        self.b1, self.b2 = b1, b2
        self.d = b1[0].shape[2]

    def fidelity(self, X, mu: float = 0.0):
        """Trace fidelity of the outputs and its gradient in X (shape (B, d, r)).

        ``mu > 0`` replaces each singular value s of T by
        ``sqrt(s**2 + mu**2) - mu``, a smooth lower bound within ``mu`` of s.
        """
        root = np.zeros(X.shape[0])
        G = np.zeros_like(X)
        nb, r = X.shape[0], X.shape[2]
        for K, L in zip(self.b1, self.b2):
            A = (K[None] @ X[:, None]).reshape(nb, len(K), -1)
            B = (L[None] @ X[:, None]).reshape(nb, len(L), -1)
            T = A.conj() @ B.transpose(0, 2, 1)
            U, s, Vh = np.linalg.svd(T, full_matrices=False)
            if mu > 0:
                h = np.sqrt(s**2 + mu**2)
                root += (h - mu).sum(axis=1)
                Q = (U * (s / h)[:, None, :]) @ Vh
            else:
                root += s.sum(axis=1)
                Q = U @ Vh
            C1 = (Q.conj() @ B).reshape(nb, len(K), -1, r)
            C2 = (Q.transpose(0, 2, 1) @ A).reshape(nb, len(L), -1, r)
            G += _adjoint_sum(K, C1) + _adjoint_sum(L, C2)
        return root**2, 2 * root[:, None, None] * G

    def distance(self, X):
        """Trace distance of the outputs and its gradient in X."""
        val = np.zeros(X.shape[0])
        G = np.zeros_like(X)
        nb, r = X.shape[0], X.shape[2]
        for K, L in zip(self.b1, self.b2):
            a = (K[None] @ X[:, None]).reshape(nb, len(K), -1)
            b = (L[None] @ X[:, None]).reshape(nb, len(L), -1)
            delta = a.transpose(0, 2, 1) @ a.conj() - b.transpose(0, 2, 1) @ b.conj()
            w, v = np.linalg.eigh(delta)
            val += 0.5 * np.abs(w).sum(axis=1)
            S = (v * np.sign(w)[:, None, :]) @ v.conj().transpose(0, 2, 1)
            Ya = (a @ S.transpose(0, 2, 1)).reshape(nb, len(K), -1, r)
            Yb = (b @ S.transpose(0, 2, 1)).reshape(nb, len(L), -1, r)
            G += _adjoint_sum(K, Ya) - _adjoint_sum(L, Yb)
        return val, G


def _adjoint_sum(K, Y):
    """``sum_m K_m^H Y_m`` for each batch entry; K is (M, o, d), Y is (B, M, o, r)."""
    M, o, d = K.shape
    Kh = K.conj().transpose(2, 0, 1).reshape(d, M * o)
    return Kh @ Y.reshape(Y.shape[0], M * o, -1)


def _objective(pair: _Pair, mode: str):
    if mode == "fidelity":
        return pair.fidelity, 1.0
    if mode == "distance":
        return pair.distance, -1.0
    raise MetricError(f"unknown mode {mode!r}")


@dataclass
class SMeasureResult:
    """Worst-case value with the input state that attains it.

    ``state`` is a unit vector on system (x) reference of length ``d * r``
    (system index major).
    """

    value: float
    state: np.ndarray
    reference_dim: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return bool(self.diagnostics.get("converged", True))

    def to_dict(self) -> dict:
        return {"value": self.value, "reference_dim": self.reference_dim,
                "state": [[float(z.real), float(z.imag)] for z in self.state],
                "diagnostics": self.diagnostics}


def evaluate_s_objective(first, second, state, mode: str, reference_dim: int | None = None) -> float:
    """Output fidelity or trace distance of the pair for one pure input."""
    pair = _Pair(first, second)
    state = np.asarray(state, dtype=complex)
    r = reference_dim or state.size // pair.d
    X = state.reshape(1, pair.d, r) / np.linalg.norm(state)
    f, _ = _objective(pair, mode)
    return float(f(X)[0][0])


def _random_inputs(rng, count, d, r):
    X = rng.standard_normal((count, d, r)) + 1j * rng.standard_normal((count, d, r))
    return X / np.linalg.norm(X, axis=(1, 2), keepdims=True)


def _dot(a, b):
    return np.real(np.sum(a.conj() * b, axis=(1, 2)))


def _lifted(fun, sign, X):
    """``f(X / |X|)`` and the gradient of the scale-invariant ``sign * f``."""
    n = np.linalg.norm(X, axis=(1, 2))
    U = X / n[:, None, None]
    val, G = fun(U)
    G = sign * G
    G = (G - _dot(U, G)[:, None, None] * U) / n[:, None, None]
    return val, G


def _lbfgs(fun, sign, X, iters, tol, memory=12):
    """Batched L-BFGS with per-restart Armijo backtracking.

    Each batch entry is minimized independently; entries stop when the
    objective has improved by less than ``tol`` over five accepted steps.
    Returns the unit-normalized inputs, their values and the iteration count.
    """
    nb = len(X)
    X = X / np.linalg.norm(X, axis=(1, 2), keepdims=True)
    val, G = _lifted(fun, sign, X)
    phi = sign * val
    S = np.zeros((memory,) + X.shape, X.dtype)
    Y = np.zeros_like(S)
    rho = np.zeros((memory, nb))
    gamma = np.full(nb, 1.0 / max(float(np.sqrt(_dot(G, G)).max()), 1e-300))
    slot = 0
    stall = np.zeros(nb, int)
    done = np.zeros(nb, bool)
    it = 0
    for it in range(1, iters + 1):
        # two-loop recursion; invalid memory slots carry rho = 0
        q = G.copy()
        alpha = np.zeros((memory, nb))
        order = [(slot - 1 - k) % memory for k in range(memory)]
        for j in order:
            alpha[j] = rho[j] * _dot(S[j], q)
            q -= alpha[j][:, None, None] * Y[j]
        P = gamma[:, None, None] * q
        for j in reversed(order):
            beta = rho[j] * _dot(Y[j], P)
            P += (alpha[j] - beta)[:, None, None] * S[j]
        P = -P
        slope = _dot(G, P)
        bad = slope >= 0
        if bad.any():
            P[bad] = -G[bad]
            slope[bad] = -_dot(G[bad], G[bad])
            rho[:, bad] = 0.0
        t = np.ones(nb)
        accepted = done.copy()
        Xn, Gn, phin = X.copy(), G.copy(), phi.copy()
        for _ in range(40):
            todo = ~accepted
            if not todo.any():
                break
            Xt = X[todo] + t[todo, None, None] * P[todo]
            vt, Gt = _lifted(fun, sign, Xt)
            pt = sign * vt
            ok = pt <= phi[todo] + 1e-4 * t[todo] * slope[todo]
            idx = np.flatnonzero(todo)
            good = idx[ok]
            Xn[good], Gn[good], phin[good] = Xt[ok], Gt[ok], pt[ok]
            accepted[good] = True
            t[idx[~ok]] *= 0.25
        failed = ~accepted
        step = accepted & ~done
        s_new = Xn - X
        y_new = Gn - G
        sy = _dot(s_new, y_new)
        use = step & (sy > 1e-300)
        S[slot] = np.where(use[:, None, None], s_new, 0)
        Y[slot] = np.where(use[:, None, None], y_new, 0)
        rho[slot] = np.where(use, 1.0 / np.where(use, sy, 1.0), 0.0)
        gamma = np.where(use, sy / np.maximum(_dot(y_new, y_new), 1e-300), gamma)
        slot = (slot + 1) % memory
        gain = phi - phin
        stall = np.where(step & (gain < tol), stall + 1, np.where(step, 0, stall))
        X, G, phi = Xn, Gn, phin
        done |= failed | (stall >= 5) | (_dot(G, G) < 1e-26)
        # the lifted objective is scale invariant; keep |X| near one
        norms = np.linalg.norm(X, axis=(1, 2))
        drift = np.abs(norms - 1) > 0.5
        if drift.any():
            X[drift] /= norms[drift, None, None]
            G[drift] *= norms[drift, None, None]
            rho[:, drift] = 0.0
        if done.all():
            break
    X = X / np.linalg.norm(X, axis=(1, 2), keepdims=True)
    return X, sign * phi, it


def _optimize(pair: _Pair, mode: str, r: int, restarts: int, seed: int, stage_iters: int = 30,
              keep: int = 8, max_iter: int = 2000, tol: float = 1e-12, spread_tol: float = 1e-6):
    """Multi-start search: short runs from every start, then refine the best few.

    The fidelity objective has cone-shaped kinks where a singular value of T
    vanishes, which is typical at the optimum (e.g. inputs confined to one
    parity sector).  It is minimized through a sequence of smoothed objectives
    with decreasing ``mu``; values are always reported for the exact one.
    """
    exact, sign = _objective(pair, mode)
    d = pair.d
    # one stream per restart, so results do not depend on how restarts are batched
    X0 = np.concatenate([_random_inputs(np.random.default_rng([seed, k]), 1, d, r)
                         for k in range(restarts)])
    if mode == "fidelity":
        stages = [lambda X, m=m: pair.fidelity(X, m) for m in _MU_STEPS]
    else:
        stages = [exact]
    X, _, it1 = _lbfgs(stages[0], sign, X0, stage_iters, tol)
    vals = exact(X)[0]
    order = np.argsort(sign * vals)[:keep]
    X, its = X[order], it1
    for fun in stages:
        X, _, it = _lbfgs(fun, sign, X, max_iter, tol)
        its += it
    vals = exact(X)[0]
    order = np.argsort(sign * vals)
    best = order[0]
    top = vals[order[:3]]
    spread = float(np.max(top) - np.min(top))
    diag = {"method": "optimizer", "mode": mode, "restarts": restarts, "refined": len(order),
            "iterations": int(its), "best3_spread": spread,
            "converged": bool(spread <= spread_tol), "seed": int(seed)}
    return float(vals[best]), X[best].reshape(-1), diag


_MU_STEPS = (1e-3, 1e-5, 1e-7, 1e-10)


def _clip01(v):
    return float(min(max(v, 0.0), 1.0))


def _s_measure(first, second, mode, r, restarts, seed, **kw) -> SMeasureResult:
    pair = _Pair(first, second)
    r = pair.d if r is None else r
    value, state, diag = _optimize(pair, mode, r, restarts, seed, **kw)
    return SMeasureResult(_clip01(value), state, r, diag)


def detector_s_fidelity(p1: Povm, p2: Povm, restarts: int = 64, seed: int = 0,
                        reference: bool = True, **kw) -> SMeasureResult:
    """Worst-case output fidelity of two detectors.

    With ``reference`` the input ranges over system (x) reference, so the
    maximally entangled input is feasible and ``F_S <= F_J``; the
    system-only minimum is reported in the diagnostics.
    """
    if p1.dim != p2.dim or p1.num_outcomes != p2.num_outcomes:
        raise OperatorError("POVMs differ in dimension or outcome count")
    if not reference:
        return _s_measure(p1, p2, "fidelity", 1, restarts, seed, **kw)
    res = _s_measure(p1, p2, "fidelity", None, restarts, seed, **kw)
    alone = _s_measure(p1, p2, "fidelity", 1, restarts, seed, **kw)
    res.diagnostics["system_only"] = alone.value
    if alone.value < res.value:
        # a system-only input is also a feasible input with a reference
        X = np.zeros((p1.dim, p1.dim), complex)
        X[:, 0] = alone.state
        res.value, res.state = alone.value, X.reshape(-1)
        res.diagnostics["from_system_only"] = True
    return res


def detector_s_distance(p1: Povm, p2: Povm, method: str = "auto", restarts: int = 64,
                        seed: int = 0, **kw) -> SMeasureResult:
    """Worst-case total-variation distance of two detectors.

    Binary POVMs use the closed form ``max |eig(E - E')|`` (no reference
    needed); ``method="optimizer"`` forces the search over system (x)
    reference inputs.
    """
    if p1.dim != p2.dim or p1.num_outcomes != p2.num_outcomes:
        raise OperatorError("POVMs differ in dimension or outcome count")
    if method not in ("auto", "analytic", "optimizer"):
        raise MetricError(f"unknown method {method!r}")
    if method == "analytic" and p1.num_outcomes != 2:
        raise MetricError("the closed form needs binary POVMs")
    if p1.num_outcomes == 2 and method != "optimizer":
        w, v = np.linalg.eigh(p1.effects[0] - p2.effects[0])
        k = int(np.argmax(np.abs(w)))
        return SMeasureResult(_clip01(abs(w[k])), v[:, k].astype(complex), 1,
                              {"method": "analytic", "converged": True})
    return _s_measure(p1, p2, "distance", None, restarts, seed, **kw)


def qi_s_fidelity(q1: QuantumInstrument, q2: QuantumInstrument, restarts: int = 128,
                  seed: int = 0, **kw) -> SMeasureResult:
    """Worst-case output fidelity of two instruments over system (x) reference inputs."""
    _check_instruments(q1, q2)
    return _s_measure(q1, q2, "fidelity", None, restarts, seed, **kw)


def qi_s_distance(q1: QuantumInstrument, q2: QuantumInstrument, restarts: int = 128,
                  seed: int = 0, **kw) -> SMeasureResult:
    """Worst-case output trace distance (diamond distance) of two instruments."""
    _check_instruments(q1, q2)
    return _s_measure(q1, q2, "distance", None, restarts, seed, **kw)


def _check_instruments(q1, q2):
    if q1.dim != q2.dim or q1.num_outcomes != q2.num_outcomes:
        raise OperatorError("instruments differ in dimension or outcome count")
    if q1.branches[0].dims != q2.branches[0].dims:
        raise OperatorError("instrument output dimensions differ")


SPACES = ("system", "system+reference")


def s_measure_bruteforce(pair, n_samples: int, seed: int = 0, mode: str = "fidelity",
                         space: str = "system+reference", chunk: int = 4096) -> SMeasureResult:
    """Extremum of the objective over Haar-random pure inputs.

    ``pair`` is a tuple of two POVMs, channels or instruments.  The result is
    a one-sided bound: an upper bound on the fidelity minimum and a lower
    bound on the distance maximum.
    """
    if n_samples < 1:
        raise MetricError("n_samples must be at least 1")
    if space not in SPACES:
        raise MetricError(f"space must be one of {SPACES}")
    p = _Pair(*pair)
    fun, sign = _objective(p, mode)
    r = 1 if space == "system" else p.d
    rng = np.random.default_rng(seed)
    best, state, done = math.inf, None, 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        X = _random_inputs(rng, m, p.d, r)
        v = sign * fun(X)[0]
        k = int(np.argmin(v))
        if v[k] < best:
            best, state = float(v[k]), X[k].reshape(-1)
        done += m
    return SMeasureResult(float(sign * best), state, r,
                          {"method": "sampling", "samples": int(n_samples), "seed": int(seed),
                           "space": space, "mode": mode})


# ---------------------------------------------------------------------------
# Reports


@dataclass
class MetricReport:
    operator: str
    herald: bool
    F_J: float
    D_J: float
    F_S: float
    D_S: float
    theta_s_deg: float
    c_I: float
    c_T: float
    c_O: float
    c_max: float
    assignment: dict
    instrument: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(**d)


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float):
        return round(x, 12)
    return x


def metric_report(spec: SubsetParitySpec, detector, ideal: QuantumInstrument, herald: bool,
                  instrument: QuantumInstrument | None = None, scan=None, restarts: int = 64,
                  qi_restarts: int = 128, seed: int = 0) -> MetricReport:
    """All figures of merit of one parity measurement against the ideal one.

    ``detector`` is a binary POVM or a two-outcome instrument (its POVM is
    used).  Instrument measures are computed when ``instrument`` is given and
    stored under ``instrument``.  ``scan`` supplies assignment records; by
    default an exact scan of ``instrument`` is used.
    """
    det, ref = _povm(detector), _povm(ideal)
    J = j_measures(det, ref)
    fs = detector_s_fidelity(det, ref, restarts=restarts, seed=seed)
    ds = detector_s_distance(det, ref)
    sp = specificity(det.effects[0], spec.label)
    if scan is None:
        source = instrument if instrument is not None else detector
        if not isinstance(source, QuantumInstrument):
            source = instrument_as_detector(det)
        scan = assignment_scan(source)
    inst, opt = {}, {"detector_F_S": fs.diagnostics}
    if instrument is not None:
        qJ = j_measures(instrument, ideal)
        qf = qi_s_fidelity(instrument, ideal, restarts=qi_restarts, seed=seed)
        qd = qi_s_distance(instrument, ideal, restarts=qi_restarts, seed=seed)
        inst = {"F_J": qJ["F_J"], "D_J": qJ["D_J"], "F_S": qf.value, "D_S": qd.value}
        opt.update(instrument_F_S=qf.diagnostics, instrument_D_S=qd.diagnostics)
    return MetricReport(spec.label, bool(herald), J["F_J"], J["D_J"], fs.value, ds.value,
                        sp.theta_s, sp.c_I, sp.c_T, sp.c_O, sp.c_max,
                        assignment_fidelity(scan, spec), inst, opt)


def _povm(x) -> Povm:
    if isinstance(x, Povm):
        return x
    return Povm(tuple(sum(K.conj().T @ K for K in b.kraus) for b in x.branches))
