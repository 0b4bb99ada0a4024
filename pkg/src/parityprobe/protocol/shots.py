"""Sampling single-shot outcome records from a simulated instrument.

Shot ``k`` of a run with seed ``s`` always consumes the ``k``-th 64-bit word of
the Philox stream keyed by ``s``, so any split of the shots across workers
reproduces the same record.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..opcore import QuantumInstrument
from .params import DeviceParams
from .schedule import PulseSchedule
from .simulate import SimOptions, rotation, simulate_instrument


@dataclass
class OutcomeRecord:
    """Counts per outcome label; labels are ints or (bit, herald_ok) tuples."""

    counts: dict
    shots: int
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts must sum to the number of shots")

    def frequency(self, label) -> float:
        return self.counts.get(label, 0) / self.shots if self.shots else 0.0

    def to_dict(self) -> dict:
        key = lambda lab: ",".join(map(str, lab)) if isinstance(lab, tuple) else str(lab)  # noqa: E731
        return {"counts": {key(k): int(v) for k, v in sorted(self.counts.items())},
                "shots": self.shots, "seed": self.seed, **({"meta": self.meta} if self.meta else {})}

    @classmethod
    def from_dict(cls, d: dict) -> "OutcomeRecord":
        parse = lambda s: tuple(int(x) for x in s.split(",")) if "," in s else int(s)  # noqa: E731
        return cls({parse(k): v for k, v in d["counts"].items()}, d["shots"], d["seed"],
                   d.get("meta", {}))


def shot_uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Uniform variates in [0, 1) for shots ``start .. start+count-1``."""
    bg = np.random.Philox(key=int(seed) % 2**128)
    bg.advance(start // 4)
    words = bg.random_raw(start % 4 + count)[start % 4:]
    return (words >> np.uint64(11)).astype(np.float64) * 2.0**-53


def product_state(angles, residual=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Register state after ``Rx(angle_k)`` on each qubit from the ground state.

    ``residual[k]`` is the probability that qubit k started excited.
    """
    rho = np.ones((1, 1), complex)
    for theta, p in zip(angles, residual):
        g = np.diag([1 - p, p]).astype(complex)
        U = rotation("X", theta)
        rho = np.kron(rho, U @ g @ U.conj().T)
    return rho


def sample_outcomes(qi: QuantumInstrument, rho: np.ndarray, shots: int, seed: int,
                    start: int = 0) -> OutcomeRecord:
    if shots < 1:
        raise ValueError("shots must be at least 1")
    p = np.clip(qi.probabilities(rho), 0, None)
    cdf = np.cumsum(p / p.sum())
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, shot_uniforms(seed, start, shots), side="right")
    counts = np.bincount(idx, minlength=len(p))
    return OutcomeRecord({lab: int(c) for lab, c in zip(qi.labels, counts)}, shots, int(seed))


def simulate_shots(schedule: PulseSchedule | None, params: DeviceParams, preparation, shots: int,
                   seed: int, herald: bool = False, noise: bool = True,
                   options: SimOptions | None = None,
                   instrument: QuantumInstrument | None = None) -> OutcomeRecord:
    """Sample outcomes for the product state prepared by X rotations.

    ``preparation`` holds one rotation angle per register qubit.  Pass
    ``instrument`` to reuse an already simulated instrument (``schedule`` is
    then ignored).
    """
    if len(preparation) != 3:
        raise ValueError("preparation needs one angle per register qubit")
    qi = instrument or simulate_instrument(schedule, params, noise, herald, options)
    rho = product_state(preparation, params.residual_excitation[1:] if noise else (0, 0, 0))
    rec = sample_outcomes(qi, rho, shots, seed)
    rec.meta = {"preparation": [float(a) for a in preparation]}
    return rec


def binomial_sigma(p: float, shots: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / shots)
