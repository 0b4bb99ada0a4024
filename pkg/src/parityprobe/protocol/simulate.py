"""Simulation of parity-measurement schedules on an ancilla + register + cavity.

Two engines share the same segment semantics:

* a ket engine (no dissipation) that propagates the eight register basis
  states through the schedule and reads Kraus operators off the final kets;
* a density-matrix engine with Lindblad damping.  Because the Hamiltonian is
  diagonal in the qubit basis and register gates are pi flips, the evolved
  image of ``|i><j|`` always has the form
  ``sum_m |a, i^f^m><b, j^f^m| (x) C[m, a, b]`` with ``f`` the accumulated
  register flip mask and ``m`` the mask of register decays so far.  Only those
  blocks are stored.

Time is in ns, frequencies in MHz.  Free evolution uses an integrating-factor
(Lawson) RK4 scheme: the diagonal coherent part and all no-jump damping are
exponentiated exactly and RK4 handles only the slow jump terms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm

from ..opcore import (Channel, OperatorError, QuantumInstrument, choi_from_kraus,
                      kraus_from_choi, pauli_operator, psd_sqrt)
from .params import DeviceParams, SubsetParitySpec
from . import _kernels
from .schedule import (AncillaMeasure, CavityReset, Displace, FreeEvolve, Herald,
                       PulseSchedule, QubitGate, required_cutoff)

NREG = 3
DREG = 2 ** NREG
_2PI_NS = 2 * math.pi * 1e-3  # MHz * ns -> rad


class SimulationError(RuntimeError):
    pass


class TruncationError(SimulationError):
    """The Fock cutoff is too small for the pointer states reached."""


class IntegratorError(SimulationError):
    """A simulated branch came out non-physical."""


@dataclass(frozen=True)
class SimOptions:
    """Which decoherence channels act and how the integrator is run.

    ``readout_error`` applies the device confusion matrix to every ancilla
    readout.  ``auto_cutoff`` shrinks the Fock space to the smallest cutoff
    with tail mass below 1e-8 for this measurement (never above the device
    cutoff).  ``engine`` forces the ket or density-matrix engine; ``"auto"``
    uses kets whenever no damping channel is active.
    """

    cavity_loss: bool = True
    qubit_relaxation: bool = True
    qubit_dephasing: bool = True
    readout_error: bool = True
    step_ns: float = 20.0
    selective_leakage: float = 0.0
    auto_cutoff: bool = True
    leakage_tol: float = 1e-6
    engine: str = "auto"

    @classmethod
    def noiseless(cls, **kw) -> "SimOptions":
        return cls(cavity_loss=False, qubit_relaxation=False, qubit_dephasing=False,
                   readout_error=False, **kw)

    @property
    def dissipative(self) -> bool:
        return self.cavity_loss or self.qubit_relaxation or self.qubit_dephasing


def bit(r, q):
    """Value of register qubit ``q`` (1..3, qubit 1 most significant) in ``r``."""
    return (np.asarray(r) >> (NREG - q)) & 1


def energies(params: DeviceParams, N: int) -> np.ndarray:
    """Diagonal energies ``E[a, r, n]`` in rad/ns (rotating frame)."""
    a = np.arange(2)[:, None, None]
    r = np.arange(DREG)[None, :, None]
    n = np.arange(N)[None, None, :]
    s = [a] + [bit(r, q) for q in (1, 2, 3)]
    chi_sum = sum(params.chi[k] * s[k] for k in range(4))
    chip = sum(params.chi_prime[k] * s[k] for k in range(4))
    pair = sum(params.chi_qq[k][l] * s[k] * s[l] for k in range(4) for l in range(k + 1, 4))
    nn = n * (n - 1) / 2
    return -_2PI_NS * (chi_sum * n + params.kerr * nn + chip * nn + pair)


def rates(params: DeviceParams, opts: SimOptions) -> dict:
    """Relaxation, pure-dephasing and cavity-loss rates in 1/ns."""
    t1 = np.array(params.qubit_t1) * 1e3
    t2 = np.array(params.qubit_t2) * 1e3
    gamma1 = 1 / t1 if opts.qubit_relaxation else np.zeros(4)
    gphi = np.clip(1 / t2 - 1 / (2 * t1), 0, None) if opts.qubit_dephasing else np.zeros(4)
    kappa = 1 / (params.cavity_t1 * 1e3) if opts.cavity_loss else 0.0
    return {"gamma1": gamma1, "gphi": gphi, "kappa": kappa}


def displacement(alpha: complex, N: int, pad: int = 40) -> np.ndarray:
    """Displacement operator truncated from a larger Fock space."""
    M = N + pad
    a = np.diag(np.sqrt(np.arange(1, M)), 1)
    return expm(alpha * a.conj().T - np.conj(alpha) * a)[:N, :N]


def rotation(axis: str, angle: float) -> np.ndarray:
    sigma = pauli_operator(axis)
    return math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * sigma


def _gate_unitaries(g: QubitGate, N: int, leakage: float) -> np.ndarray:
    """Per-photon-number 2x2 unitaries, shape (N, 2, 2)."""
    if g.axis not in ("X", "Y"):
        raise OperatorError(f"gate axis must be X or Y, got {g.axis!r}")
    U = np.broadcast_to(rotation(g.axis, g.angle), (N, 2, 2)).copy()
    if g.selectivity == "fock0":
        U[1:] = rotation(g.axis, leakage * g.angle)
    elif g.selectivity != "unconditional":
        raise OperatorError(f"unknown gate selectivity {g.selectivity!r}")
    return U


# ---------------------------------------------------------------------------
# Ket engine


class _KetEngine:
    """State ``psi[e, i, a, r, n]``: environment index e, input basis state i."""

    def __init__(self, params, N, opts, ancilla0=0):
        self.N, self.opts = N, opts
        self.E = energies(params, N)
        psi = np.zeros((1, DREG, 2, DREG, N), complex)
        psi[0, np.arange(DREG), ancilla0, np.arange(DREG), 0] = 1
        self.branches = {(): psi}

    def copy(self):
        new = object.__new__(_KetEngine)
        new.__dict__.update(self.__dict__)
        new.branches = {k: v.copy() for k, v in self.branches.items()}
        return new

    def _map(self, fn):
        self.branches = {k: fn(v) for k, v in self.branches.items()}

    def free(self, t):
        phase = np.exp(-1j * self.E * t)
        self._map(lambda psi: psi * phase)

    def displace(self, alpha):
        D = displacement(alpha, self.N)
        self._map(lambda psi: psi @ D.T)

    def gate(self, g: QubitGate):
        U = _gate_unitaries(g, self.N, self.opts.selective_leakage)
        if g.target == 0:
            self._map(lambda psi: np.einsum("nab,eibrn->eiarn", U, psi))
            return
        if g.selectivity != "unconditional":
            raise OperatorError("photon-selective gates are only modelled on the ancilla")
        u = U[0]
        q = g.target

        def apply(psi):
            s = psi.shape
            v = psi.reshape(s[:3] + (2,) * NREG + (s[4],))
            v = np.moveaxis(np.tensordot(u, v, axes=([1], [2 + q])), 0, 2 + q)
            return v.reshape(s)

        self._map(apply)

    def measure(self):
        out = {}
        for key, psi in self.branches.items():
            for a in (0, 1):
                p = np.zeros_like(psi)
                p[:, :, a] = psi[:, :, a]
                out[key + (a,)] = p
        self.branches = out

    def reset(self):
        def apply(psi):
            e, i, a, r, n = psi.shape
            out = np.zeros((e * n, i, a, r, n), complex)
            out[..., 0] = np.moveaxis(psi, 4, 1).reshape(e * n, i, a, r)
            return out

        self._map(apply)

    def chois(self) -> dict:
        out = {}
        for key, psi in self.branches.items():
            # Kraus K[(e, a, n)][o, i] = psi[e, i, a, o, n]
            K = np.moveaxis(psi, (1, 3), (4, 3)).reshape(-1, DREG, DREG)
            K = K[np.linalg.norm(K, axis=(1, 2)) > 1e-14]
            out[key] = choi_from_kraus(K) if len(K) else np.zeros((DREG**2, DREG**2), complex)
        return out


# ---------------------------------------------------------------------------
# Density-matrix engine


class _DensityEngine:
    """Blocks ``S[p, m, a, b, n, n']`` for input pairs p = (i <= j).

    The cavity dimension of the stored blocks shrinks whenever the upper Fock
    levels are empty (population < ``EMPTY``) and grows back to the full
    cutoff before every displacement; free evolution and gates never move
    population up the ladder.
    """

    EMPTY = 1e-13

    def __init__(self, params, N, opts, ancilla0=0):
        self.N, self.opts = N, opts
        self.E = energies(params, N)
        self.rates = rates(params, opts)
        ii, jj = np.triu_indices(DREG)
        self.pi, self.pj = ii, jj
        self.P = len(ii)
        n = np.arange(N)
        self.Gamma = (self.rates["kappa"] * n[None, None, :]
                      + self.rates["gamma1"][0] * np.arange(2)[:, None, None]
                      + sum(self.rates["gamma1"][q] * bit(np.arange(DREG), q)[None, :, None]
                            for q in (1, 2, 3)))
        gphi = self.rates["gphi"]
        diff = ii ^ jj
        self.deph = (sum(gphi[q] * bit(diff, q) for q in (1, 2, 3))[:, None, None]
                     + gphi[0] * (1 - np.eye(2))[None])  # (P, 2, 2)
        self.cav_w = self.rates["kappa"] * np.sqrt(np.outer(n[1:], n[1:]))
        self.f = 0
        S = np.zeros((self.P, DREG, 2, 2, 2, 2), complex)
        S[:, 0, ancilla0, ancilla0, 0, 0] = 1
        self.n = 2
        self.branches = {(): S}
        self._G = None

    def copy(self):
        new = object.__new__(_DensityEngine)
        new.__dict__.update(self.__dict__)
        new.branches = {k: v.copy() for k, v in self.branches.items()}
        return new

    def _map(self, fn):
        self.branches = {k: fn(v) for k, v in self.branches.items()}

    def _resize(self, n):
        if n == self.n:
            return
        k = min(n, self.n)

        def apply(S):
            out = np.zeros(S.shape[:4] + (n, n), complex)
            out[..., :k, :k] = S[..., :k, :k]
            return out

        self._map(apply)
        self.n = n

    def _shrink(self):
        diag = self.pi == self.pj
        pop = np.zeros(self.n)
        for S in self.branches.values():
            d = np.abs(np.diagonal(S[diag], axis1=-2, axis2=-1))  # (8, 8, 2, 2, n)
            pop = np.maximum(pop, d.max(axis=(0, 1, 2, 3)))
        used = np.flatnonzero(pop > self.EMPTY)
        self._resize(min(self.N, max(2, int(used[-1]) + 1 if used.size else 2)))

    def _regs(self):
        m = np.arange(DREG)
        L = self.pi[:, None] ^ self.f ^ m[None, :]
        R = self.pj[:, None] ^ self.f ^ m[None, :]
        return L, R

    def generator(self):
        key = (self.f, self.n)
        if self._G is not None and self._G[0] == key:
            return self._G[1]
        L, R = self._regs()
        n = self.n
        EL = np.moveaxis(self.E[:, L, :n], 0, 2)  # (P, 8, 2, n)
        ER = np.moveaxis(self.E[:, R, :n], 0, 2)
        GL = np.moveaxis(self.Gamma[:, L, :n], 0, 2)
        GR = np.moveaxis(self.Gamma[:, R, :n], 0, 2)
        G = (-1j * (EL[:, :, :, None, :, None] - ER[:, :, None, :, None, :])
             - 0.5 * (GL[:, :, :, None, :, None] + GR[:, :, None, :, None, :])
             - self.deph[:, None, :, :, None, None])
        self._G = (key, G)
        return G

    def _jump_data(self):
        L, R = self._regs()
        cond = np.stack([bit(L, q) & bit(R, q) for q in (1, 2, 3)], axis=-1).astype(np.uint8)
        w = np.ascontiguousarray(self.cav_w[:self.n - 1, :self.n - 1])
        return w, cond, np.ascontiguousarray(self.rates["gamma1"][1:]), float(self.rates["gamma1"][0])

    def _active(self, S):
        """Ancilla blocks that are nonzero now or can be fed by ancilla decay."""
        act = np.abs(S).max(axis=(0, 1, 4, 5)) > 0
        if self.rates["gamma1"][0] and act[1, 1]:
            act[0, 0] = True
        return act

    def jumps(self, S):
        """Jump part of the Lindbladian (compiled)."""
        out = np.zeros_like(S)
        _kernels.jumps(S, out, *self._jump_data(), np.ones((2, 2), np.bool_))
        return out

    def jumps_reference(self, S):
        """Plain numpy version of :meth:`jumps`, kept as a test oracle."""
        out = np.zeros_like(S)
        if self.rates["kappa"]:
            out[..., :-1, :-1] += self.cav_w[:self.n - 1, :self.n - 1] * S[..., 1:, 1:]
        L, R = self._regs()
        m = np.arange(DREG)
        for q in (1, 2, 3):
            g = self.rates["gamma1"][q]
            if g:
                c = (bit(L, q) & bit(R, q)).astype(float)[:, :, None, None, None, None]
                out += g * (c * S)[:, m ^ (1 << (NREG - q))]
        g = self.rates["gamma1"][0]
        if g:
            out[:, :, 0, 0] += g * S[:, :, 1, 1]
        return out

    def free(self, t):
        if t <= 0:
            return
        G = self.generator()
        has_jumps = self.rates["kappa"] > 0 or np.any(self.rates["gamma1"] > 0)
        if not has_jumps:
            E = np.exp(G * t)
            self._map(lambda S: S * E)
            return
        steps = max(1, math.ceil(t / self.opts.step_ns - 1e-9))
        h = t / steps
        E1 = np.exp(G * h)
        E2 = np.exp(G * (h / 2))
        data = self._jump_data()

        def run(S):
            S = np.ascontiguousarray(S)
            _kernels.lawson_rk4(S, E1, E2, h, steps, *data, self._active(S))
            return S

        self._map(run)

    def displace(self, alpha):
        self._resize(self.N)
        D = displacement(alpha, self.N)
        Dh = D.conj().T
        self._map(lambda S: D @ S @ Dh)
        self._shrink()

    def gate(self, g: QubitGate):
        U = _gate_unitaries(g, self.n, self.opts.selective_leakage)
        if g.target == 0:
            Uc = U.conj()

            def apply(S):
                out = np.zeros_like(S)
                for al in (0, 1):
                    for be in (0, 1):
                        for a in (0, 1):
                            for b in (0, 1):
                                w = U[:, al, a][:, None] * Uc[:, be, b][None, :]
                                out[:, :, al, be] += w * S[:, :, a, b]
                return out

            self._map(apply)
            return
        if g.selectivity != "unconditional":
            raise OperatorError("photon-selective gates are only modelled on the ancilla")
        ang = math.remainder(g.angle, 2 * math.pi)
        if not math.isclose(abs(ang), math.pi, abs_tol=1e-12):
            raise OperatorError("the density-matrix engine only supports pi rotations "
                                "on register qubits")
        q = g.target
        if g.axis == "Y":
            s = (-1.0) ** bit(self.pi ^ self.pj, q)
            self._map(lambda S: S * s[:, None, None, None, None, None])
        self.f ^= 1 << (NREG - q)

    def measure(self):
        out = {}
        for key, S in self.branches.items():
            for a in (0, 1):
                p = np.zeros_like(S)
                p[:, :, a, a] = S[:, :, a, a]
                out[key + (a,)] = p
        self.branches = out

    def reset(self):
        def apply(S):
            out = np.zeros_like(S)
            out[..., 0, 0] = np.trace(S, axis1=-2, axis2=-1)
            return out

        self._map(apply)
        self._shrink()

    def chois(self) -> dict:
        L, R = self._regs()
        out = {}
        for key, S in self.branches.items():
            blocks = np.trace(S, axis1=-2, axis2=-1)  # (P, 8, 2, 2)
            blocks = blocks[:, :, 0, 0] + blocks[:, :, 1, 1]  # (P, 8)
            C = np.zeros((DREG, DREG, DREG, DREG), complex)  # [o, i, o', j]
            for p in range(self.P):
                i, j = self.pi[p], self.pj[p]
                X = np.zeros((DREG, DREG), complex)
                X[L[p], R[p]] = blocks[p]
                C[:, i, :, j] = X
                if i != j:
                    C[:, j, :, i] = X.conj().T
            out[key] = C.reshape(DREG**2, DREG**2)
        return out


# ---------------------------------------------------------------------------


def _run(engine, segments):
    for s in segments:
        if isinstance(s, FreeEvolve):
            engine.free(s.duration)
        elif isinstance(s, Displace):
            engine.displace(s.alpha)
        elif isinstance(s, QubitGate):
            engine.gate(s)
        elif isinstance(s, (AncillaMeasure, Herald)):
            engine.measure()
        elif isinstance(s, CavityReset):
            engine.reset()
        else:  # pragma: no cover - schedule validation rejects this
            raise OperatorError(f"unknown segment {s!r}")
    return engine


def _confuse(chois: dict, conf: np.ndarray) -> dict:
    """Classical readout confusion on every recorded ancilla bit."""
    out = {}
    for key, C in chois.items():
        for rep in np.ndindex(*(2,) * len(key)):
            w = np.prod([conf[t, r] for t, r in zip(key, rep)])
            if w:
                out[rep] = out.get(rep, 0) + w * C
    return out


def _instrument(chois: dict, herald: bool, leakage_tol: float) -> QuantumInstrument:
    """Turn per-record Choi matrices into a trace-preserving instrument."""
    if herald:
        grouped = {}
        for (m, h), C in chois.items():
            key = (m, int(h != m))
            grouped[key] = grouped.get(key, 0) + C
        labels = [(0, 0), (0, 1), (1, 0), (1, 1)]
    else:
        grouped = {(k[0],): C for k, C in chois.items()}
        labels = [(0,), (1,)]
    total = sum(grouped.get(lab, 0) for lab in labels)
    T = np.einsum("oioj->ij", total.reshape(DREG, DREG, DREG, DREG))
    lost = 1 - np.min(np.real(np.diag(T)))
    if lost > leakage_tol:
        raise TruncationError(f"{lost:.2e} of the trace left the simulated space")
    kraus = []
    for lab in labels:
        C = grouped.get(lab)
        if C is None:
            kraus.append([np.zeros((DREG, DREG), complex)])
            continue
        C = 0.5 * (C + C.conj().T)
        scale = max(np.real(np.trace(C)), 1e-300)
        if np.linalg.eigvalsh(C)[0] < -1e-7 * max(scale, 1.0):
            raise IntegratorError("branch Choi matrix has a negative eigenvalue; "
                                  "reduce the integrator step")
        ks = kraus_from_choi(C, DREG, tol=1e-10) if scale > 1e-14 else []
        kraus.append(ks or [np.zeros((DREG, DREG), complex)])
    # Fold the residual non-trace-preservation (truncation, integrator) back in.
    Ssum = sum(K.conj().T @ K for ks in kraus for K in ks)
    W = np.linalg.inv(psd_sqrt(Ssum))
    branches = tuple(Channel(tuple(K @ W for K in ks), trace_preserving=False) for ks in kraus)
    out_labels = tuple(lab if herald else lab[0] for lab in labels)
    return QuantumInstrument(branches, out_labels)


def _effective(params: DeviceParams, schedule: PulseSchedule, opts: SimOptions):
    N = params.fock_cutoff
    if opts.auto_cutoff:
        N = min(N, required_cutoff(schedule.spec, decay=opts.dissipative))
    return N


def simulate_variants(schedule: PulseSchedule, params: DeviceParams, noise: bool = True,
                      herald=(False, True), options: SimOptions | None = None) -> dict:
    """Simulate several herald settings, sharing the common schedule prefix.

    Returns ``{herald_flag: QuantumInstrument}``.
    """
    opts = options or SimOptions()
    if not noise:
        opts = replace(opts, cavity_loss=False, qubit_relaxation=False,
                       qubit_dephasing=False, readout_error=False)
    N = _effective(params, schedule, opts)
    if opts.engine not in ("auto", "ket", "density"):
        raise ValueError(f"unknown engine {opts.engine!r}")
    if opts.engine == "ket" and opts.dissipative:
        raise ValueError("the ket engine cannot model dissipation")
    dm = opts.engine == "density" or (opts.engine == "auto" and opts.dissipative)
    Engine = _DensityEngine if dm else _KetEngine
    segs = schedule.segments
    split = next((k for k, s in enumerate(segs) if s.mode != "both"), len(segs))
    conf = (np.asarray(params.readout_assignment) if opts.readout_error else np.eye(2))
    p_exc = params.residual_excitation[0]
    starts = [(0, 1 - p_exc)] + ([(1, p_exc)] if p_exc > 0 else [])
    results = {}
    prefixes = [(_run(Engine(params, N, opts, a0), segs[:split]), w) for a0, w in starts]
    for flag in herald:
        skip = "unheralded" if flag else "heralded"
        tail = [s for s in segs[split:] if s.mode != skip]
        mixed = {}
        for eng, w in prefixes:
            for key, C in _run(eng.copy(), tail).chois().items():
                mixed[key] = mixed.get(key, 0) + w * C
        results[flag] = _instrument(_confuse(mixed, conf), flag, opts.leakage_tol)
    return results


def simulate_instrument(schedule: PulseSchedule, params: DeviceParams, noise: bool = True,
                        herald: bool = False, options: SimOptions | None = None) -> QuantumInstrument:
    """Register-space instrument realised by ``schedule``.

    Without the herald the branches are labelled by the reported ancilla bit
    (1 = odd parity).  With the herald there are four branches labelled
    ``(bit, ok)`` where ``ok = 1`` when the herald readout differs from the
    first readout, i.e. the cavity was found empty.
    """
    return simulate_variants(schedule, params, noise, (herald,), options)[herald]


def ideal_instrument(spec: SubsetParitySpec) -> QuantumInstrument:
    """Projective parity instrument: branch 0 = even, branch 1 = odd."""
    sigma = pauli_operator(spec.label)
    eye = np.eye(DREG)
    return QuantumInstrument.from_projectors([(eye + sigma) / 2, (eye - sigma) / 2])


def postselect(qi: QuantumInstrument, ok: int = 1) -> QuantumInstrument:
    """Keep the herald-``ok`` branches and renormalise to a TP instrument.

    The map is ``F'_b(rho) = F_b(W rho W)`` with ``W = S^{-1/2}`` and ``S`` the
    total success effect.  Exact for inputs the herald treats uniformly.
    """
    keep = [(b, qi.labels[k]) for k, b in enumerate(qi.branches) if qi.labels[k][1] == ok]
    S = sum(K.conj().T @ K for b, _ in keep for K in b.kraus)
    W = np.linalg.inv(psd_sqrt(S))
    return QuantumInstrument(
        tuple(Channel(tuple(K @ W for K in b.kraus), trace_preserving=False) for b, _ in keep),
        tuple(lab[0] for _, lab in keep))
