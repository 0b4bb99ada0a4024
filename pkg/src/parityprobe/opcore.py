"""Operator algebra and channel representations.

Conventions used throughout the package:

* Qubit 1 is the leftmost tensor factor (most significant bit of a
  computational-basis index).
* A channel is stored as a list of Kraus operators of shape ``(d_out, d_in)``.
* Choi matrices are ordered output-first: ``C = sum_ij F(|i><j|) (x) |i><j|``.
  The Jamiolkowski matrix is ``C / d_in`` so that it has unit trace for
  trace-preserving maps.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

PSD_TOL = 1e-9
STATE_TOL = 1e-8

_PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class OperatorError(ValueError):
    """Raised when an operator, POVM, channel or instrument is malformed."""


# ---------------------------------------------------------------------------
# Pauli algebra
# ---------------------------------------------------------------------------

def pauli_operator(label: str) -> np.ndarray:
    """Tensor product of single-qubit Paulis, qubit 1 = leftmost letter.

    >>> pauli_operator("XZ").shape
    (4, 4)
    """
    if not label:
        raise OperatorError("Pauli label must contain at least one letter")
    bad = set(label) - set(_PAULI_1Q)
    if bad:
        raise OperatorError(f"invalid Pauli letters {sorted(bad)} in {label!r}")
    return _pauli_cached(label).copy()


@lru_cache(maxsize=512)
def _pauli_cached(label: str) -> np.ndarray:
    op = np.ones((1, 1), dtype=complex)
    for ch in label:
        op = np.kron(op, _PAULI_1Q[ch])
    op.setflags(write=False)
    return op


def pauli_labels(n: int) -> list[str]:
    """All 4**n labels in lexicographic order over I, X, Y, Z (all-I first)."""
    return ["".join(p) for p in itertools.product("IXYZ", repeat=n)]


@lru_cache(maxsize=8)
def _pauli_stack(n: int) -> np.ndarray:
    stack = np.array([_pauli_cached(lab) for lab in pauli_labels(n)])
    stack.setflags(write=False)
    return stack


def pauli_basis(n: int) -> np.ndarray:
    """Array of shape ``(4**n, 2**n, 2**n)`` ordered like :func:`pauli_labels`."""
    return _pauli_stack(n).copy()


def num_qubits(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise OperatorError(f"dimension {dim} is not a power of two")
    return n


def pauli_expand(H: np.ndarray, n: int | None = None) -> np.ndarray:
    """Coefficients ``c_i = Tr[sigma_i H] / 2**n`` in :func:`pauli_labels` order.

    Coefficients are real for Hermitian input; a complex array is returned
    otherwise.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise OperatorError("expected a square matrix")
    if n is None:
        n = num_qubits(H.shape[0])
    if H.shape[0] != 2**n:
        raise OperatorError(f"matrix of dim {H.shape[0]} is not a {n}-qubit operator")
    # Tr[s H] = sum_ab s_ab H_ba ; Paulis are Hermitian so s_ab = conj(s_ba)
    coeffs = np.einsum("kab,ba->k", _pauli_stack(n), H) / 2**n
    if np.allclose(H, H.conj().T, atol=1e-12):
        return coeffs.real.copy()
    return coeffs


def pauli_reconstruct(coeffs: Sequence[complex], n: int | None = None) -> np.ndarray:
    coeffs = np.asarray(coeffs)
    if n is None:
        n = int(round(np.log(len(coeffs)) / np.log(4)))
    if len(coeffs) != 4**n:
        raise OperatorError("coefficient vector length must be 4**n")
    return np.einsum("k,kab->ab", coeffs, _pauli_stack(n))


def pauli_coefficients(H: np.ndarray) -> dict[str, float]:
    """Pauli expansion as a ``{label: coefficient}`` mapping."""
    n = num_qubits(np.asarray(H).shape[0])
    return dict(zip(pauli_labels(n), pauli_expand(H, n)))


# ---------------------------------------------------------------------------
# Small linear-algebra helpers
# ---------------------------------------------------------------------------

def hermitian_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().T)


def is_hermitian(A: np.ndarray, tol: float = 1e-12) -> bool:
    A = np.asarray(A)
    return A.ndim == 2 and A.shape[0] == A.shape[1] and np.max(np.abs(A - A.conj().T), initial=0.0) <= tol


def psd_sqrt(A: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """Square root of a Hermitian PSD matrix via eigendecomposition.

    Eigenvalues in ``[-tol, 0)`` are clipped to zero; anything more negative
    raises :class:`OperatorError`.
    """
    w, v = np.linalg.eigh(hermitian_part(A))
    if w.size and w.min() < -tol * max(1.0, abs(w).max()):
        raise OperatorError(f"matrix is not positive semidefinite (min eig {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def project_psd(A: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(hermitian_part(A))
    return (v * np.clip(w, 0.0, None)) @ v.conj().T


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def basis_projector(index: int, dim: int) -> np.ndarray:
    P = np.zeros((dim, dim), dtype=complex)
    P[index, index] = 1.0
    return P


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Partial trace keeping the subsystems listed in ``keep`` (in order)."""
    dims = list(dims)
    n = len(dims)
    rho = np.asarray(rho).reshape(dims + dims)
    trace_out = [i for i in range(n) if i not in keep]
    # contract traced subsystems pairwise, highest index first so axes stay valid
    for count, i in enumerate(sorted(trace_out, reverse=True)):
        m = n - count
        rho = np.trace(rho, axis1=i, axis2=i + m)
    d = int(np.prod([dims[i] for i in keep])) if keep else 1
    return rho.reshape(d, d)


# ---------------------------------------------------------------------------
# State measures
# ---------------------------------------------------------------------------

def _check_state(rho: np.ndarray, name: str) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise OperatorError(f"{name} must be a square matrix")
    w = np.linalg.eigvalsh(hermitian_part(rho))
    if w.min() < -STATE_TOL:
        raise OperatorError(f"{name} has negative eigenvalue {w.min():.3e}")
    return hermitian_part(rho)


def trace_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``; sub-normalized inputs allowed."""
    rho = _check_state(rho, "rho")
    sigma = _check_state(sigma, "sigma")
    if rho.shape != sigma.shape:
        raise OperatorError("dimension mismatch")
    # ||sqrt(rho) sqrt(sigma)||_1 is symmetric and avoids a nested sqrt
    s = np.linalg.svd(psd_sqrt(rho, STATE_TOL) @ psd_sqrt(sigma, STATE_TOL), compute_uv=False)
    return float(np.clip(s.sum() ** 2, 0.0, None))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    rho = _check_state(rho, "rho")
    sigma = _check_state(sigma, "sigma")
    if rho.shape != sigma.shape:
        raise OperatorError("dimension mismatch")
    return float(0.5 * np.abs(np.linalg.eigvalsh(rho - sigma)).sum())


# ---------------------------------------------------------------------------
# POVMs, channels, instruments
# ---------------------------------------------------------------------------

def _as_matrix(A, name="operator") -> np.ndarray:
    A = np.array(A, dtype=complex)
    if A.ndim != 2:
        raise OperatorError(f"{name} must be two-dimensional")
    return A


@dataclass(frozen=True)
class Povm:
    """Positive effects summing to the identity."""

    effects: tuple

    def __post_init__(self):
        effects = tuple(hermitian_part(_as_matrix(E, "effect")) for E in self.effects)
        if not effects:
            raise OperatorError("a POVM needs at least one effect")
        d = effects[0].shape[0]
        for E in effects:
            if E.shape != (d, d):
                raise OperatorError("effects must share one square shape")
            if np.linalg.eigvalsh(E).min() < -PSD_TOL:
                raise OperatorError("effect is not positive semidefinite")
        if np.max(np.abs(sum(effects) - np.eye(d))) > PSD_TOL:
            raise OperatorError("effects do not sum to the identity")
        for E in effects:
            E.setflags(write=False)
        object.__setattr__(self, "effects", effects)

    @classmethod
    def unchecked(cls, effects) -> "Povm":
        """Wrap effects without the positivity and completeness checks.

        Used for raw linear-inversion estimates, which may be unphysical.
        """
        obj = object.__new__(cls)
        object.__setattr__(obj, "effects", tuple(hermitian_part(_as_matrix(E)) for E in effects))
        return obj

    def is_physical(self, tol: float = PSD_TOL) -> bool:
        d = self.dim
        return (all(np.linalg.eigvalsh(E).min() >= -tol for E in self.effects)
                and np.max(np.abs(sum(self.effects) - np.eye(d))) <= tol)

    @classmethod
    def binary(cls, E) -> "Povm":
        E = hermitian_part(_as_matrix(E, "effect"))
        return cls((E, np.eye(E.shape[0]) - E))

    @property
    def dim(self) -> int:
        return self.effects[0].shape[0]

    @property
    def num_outcomes(self) -> int:
        return len(self.effects)

    @property
    def effect(self) -> np.ndarray:
        """First effect E of a binary POVM {E, I - E}."""
        return self.effects[0]

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return np.array([np.real(np.trace(E @ rho)) for E in self.effects])


@dataclass(frozen=True)
class Channel:
    """Completely positive map given by Kraus operators of shape (d_out, d_in)."""

    kraus: tuple
    trace_preserving: bool = True

    def __post_init__(self):
        ks = tuple(_as_matrix(K, "Kraus operator") for K in self.kraus)
        if not ks:
            raise OperatorError("a channel needs at least one Kraus operator")
        shape = ks[0].shape
        if any(K.shape != shape for K in ks):
            raise OperatorError("Kraus operators must share one shape")
        S = sum(K.conj().T @ K for K in ks)
        eye = np.eye(shape[1])
        if self.trace_preserving:
            if np.max(np.abs(S - eye)) > PSD_TOL:
                raise OperatorError("Kraus operators are not trace preserving")
        elif np.linalg.eigvalsh(hermitian_part(eye - S)).min() < -PSD_TOL:
            raise OperatorError("Kraus operators increase the trace")
        for K in ks:
            K.setflags(write=False)
        object.__setattr__(self, "kraus", ks)

    @property
    def dims(self) -> tuple[int, int]:
        d_out, d_in = self.kraus[0].shape
        return d_in, d_out

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return sum(K @ rho @ K.conj().T for K in self.kraus)

    def adjoint(self, X: np.ndarray) -> np.ndarray:
        return sum(K.conj().T @ X @ K for K in self.kraus)

    def stacked(self) -> np.ndarray:
        return np.array(self.kraus)

    @classmethod
    def from_choi(cls, C: np.ndarray, d_in: int, trace_preserving: bool = True,
                  tol: float = 1e-12) -> "Channel":
        return cls(tuple(kraus_from_choi(C, d_in, tol=tol)), trace_preserving)

    @classmethod
    def identity(cls, d: int) -> "Channel":
        return cls((np.eye(d, dtype=complex),))

    @classmethod
    def unitary(cls, U: np.ndarray) -> "Channel":
        return cls((np.asarray(U, dtype=complex),))


@dataclass(frozen=True)
class QuantumInstrument:
    """Trace-non-increasing branch maps whose sum is trace preserving."""

    branches: tuple
    labels: tuple = field(default=())

    def __post_init__(self):
        branches = tuple(
            b if isinstance(b, Channel) else Channel(tuple(b), trace_preserving=False)
            for b in self.branches
        )
        if not branches:
            raise OperatorError("an instrument needs at least one branch")
        dims = branches[0].dims
        if any(b.dims != dims for b in branches):
            raise OperatorError("branches must share input/output dimensions")
        total = sum(b.adjoint(np.eye(dims[1])) for b in branches)
        if np.max(np.abs(total - np.eye(dims[0]))) > PSD_TOL:
            raise OperatorError("branch maps do not sum to a trace-preserving map")
        labels = tuple(self.labels) if self.labels else tuple(range(len(branches)))
        if len(labels) != len(branches):
            raise OperatorError("one label per branch required")
        object.__setattr__(self, "branches", branches)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.branches[0].dims[0]

    @property
    def num_outcomes(self) -> int:
        return len(self.branches)

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return np.array([np.real(np.trace(b(rho))) for b in self.branches])

    def post_measurement(self, rho: np.ndarray) -> list[np.ndarray]:
        """Un-normalized conditional output states, one per outcome."""
        return [b(rho) for b in self.branches]

    @classmethod
    def from_projectors(cls, projectors, labels=()) -> "QuantumInstrument":
        return cls(tuple(Channel((np.asarray(P, dtype=complex),), trace_preserving=False)
                         for P in projectors), labels)


# ---------------------------------------------------------------------------
# Representations
# ---------------------------------------------------------------------------

def choi_from_kraus(kraus: Sequence[np.ndarray]) -> np.ndarray:
    """Unnormalized Choi matrix ``sum_ij F(|i><j|) (x) |i><j|`` (output first)."""
    ks = np.asarray(kraus)
    m, d_out, d_in = ks.shape
    # vec of K with output index major: K[o, i] -> row (o, i)
    vecs = ks.reshape(m, d_out * d_in)
    return vecs.T @ vecs.conj()


def kraus_from_choi(C: np.ndarray, d_in: int, tol: float = 1e-12) -> list[np.ndarray]:
    """Kraus operators from a PSD Choi matrix (output-first ordering)."""
    C = hermitian_part(np.asarray(C, dtype=complex))
    d_out = C.shape[0] // d_in
    w, v = np.linalg.eigh(C)
    scale = max(float(w.max(initial=0.0)), 1.0)
    if w.min() < -1e-7 * scale:
        raise OperatorError(f"Choi matrix is not PSD (min eig {w.min():.3e})")
    keep = w > tol * scale
    if not keep.any():
        return [np.zeros((d_out, d_in), dtype=complex)]
    return [np.sqrt(wk) * v[:, k].reshape(d_out, d_in) for k, wk in zip(np.flatnonzero(keep), w[keep])]


def choi_matrix(ch: Channel) -> np.ndarray:
    return choi_from_kraus(ch.kraus)


def jamiolkowski(ch: Channel) -> np.ndarray:
    """``(ch (x) id)(|Phi+><Phi+|)`` with a normalized maximally entangled input."""
    return choi_from_kraus(ch.kraus) / ch.dims[0]


def channel_from_superop_columns(apply, d_in: int) -> np.ndarray:
    """Choi matrix assembled column-by-column from the action on ``|i><j|``.

    Independent of any Kraus representation; used as a cross-check.
    """
    blocks = {}
    for i in range(d_in):
        for j in range(d_in):
            E = np.zeros((d_in, d_in), dtype=complex)
            E[i, j] = 1.0
            blocks[i, j] = np.asarray(apply(E))
    d_out = blocks[0, 0].shape[0]
    C = np.zeros((d_out * d_in, d_out * d_in), dtype=complex)
    for (i, j), out in blocks.items():
        C += np.kron(out, np.outer(ket(i, d_in), ket(j, d_in)))
    return C


def partial_trace_output(C: np.ndarray, d_in: int) -> np.ndarray:
    d_out = C.shape[0] // d_in
    return np.einsum("oioj->ij", C.reshape(d_out, d_in, d_out, d_in))


def chi_matrix(branch: Channel, n: int | None = None) -> np.ndarray:
    """Process matrix in the n-qubit Pauli basis: ``F(rho) = sum chi_ij s_i rho s_j``."""
    d_in, d_out = branch.dims
    if d_in != d_out:
        raise OperatorError("chi matrix requires a square branch map")
    if n is None:
        n = num_qubits(d_in)
    paulis = _pauli_stack(n)
    # K = sum_i k_i s_i with k_i = Tr[s_i K]/d
    coeffs = np.einsum("kab,mba->mk", paulis, branch.stacked()) / d_in
    return coeffs.T @ coeffs.conj()


def apply_chi(chi: np.ndarray, rho: np.ndarray) -> np.ndarray:
    n = num_qubits(rho.shape[0])
    P = _pauli_stack(n)
    return np.einsum("ij,iab,bc,jcd->ad", chi, P, rho, P)


def detector_channel(povm: Povm) -> Channel:
    """Quantum-to-classical channel ``rho -> sum_i Tr[E_i rho] |i><i|``."""
    m, d = povm.num_outcomes, povm.dim
    kraus = []
    for i, E in enumerate(povm.effects):
        root = psd_sqrt(E)
        for k in range(d):
            kraus.append(np.outer(ket(i, m), root[k]))
    return Channel(tuple(kraus))


def qi_channel(qi: QuantumInstrument) -> Channel:
    """Channel ``rho -> sum_i F_i(rho) (x) |i><i|`` into system (x) detector."""
    m = qi.num_outcomes
    kraus = []
    for i, branch in enumerate(qi.branches):
        tag = ket(i, m)[:, None]
        for K in branch.kraus:
            kraus.append(np.kron(K, tag))
    return Channel(tuple(kraus))


def povm_from_instrument(qi: QuantumInstrument) -> Povm:
    return Povm(tuple(b.adjoint(np.eye(b.dims[1])) for b in qi.branches))


def instrument_as_detector(povm: Povm) -> QuantumInstrument:
    """Express a POVM as an instrument with one-dimensional branch outputs."""
    branches = []
    for E in povm.effects:
        w, v = np.linalg.eigh(E)
        ks = [np.sqrt(max(wk, 0.0)) * v[:, k].conj()[None, :] for k, wk in enumerate(w) if wk > 1e-14]
        if not ks:
            ks = [np.zeros((1, povm.dim), dtype=complex)]
        branches.append(Channel(tuple(ks), trace_preserving=False))
    return QuantumInstrument(tuple(branches))


def depolarizing_channel(d: int, p: float = 1.0) -> Channel:
    """``rho -> (1-p) rho + p Tr[rho] I/d`` via the Weyl (clock/shift) basis."""
    X = np.roll(np.eye(d), 1, axis=0)
    Z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    kraus = [np.sqrt(1 - p + p / d**2) * np.eye(d, dtype=complex)]
    for a in range(d):
        for b in range(d):
            if a == 0 and b == 0:
                continue
            kraus.append(np.sqrt(p) / d * np.linalg.matrix_power(X, a) @ np.linalg.matrix_power(Z, b))
    return Channel(tuple(kraus))
