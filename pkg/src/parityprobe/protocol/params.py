"""Device and measurement parameters.

Units: dispersive shifts and Kerr terms in MHz (cyclic), coherence times in
microseconds, durations in nanoseconds.  Qubit index 0 is the ancilla and
indices 1..3 are register qubits ordered by increasing dispersive shift.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

REGISTER_QUBITS = 3
OPERATOR_LABELS = ("ZII", "IZI", "IIZ", "ZZI", "ZIZ", "IZZ", "ZZZ")


class ConfigError(ValueError):
    """Raised for invalid device, measurement or experiment configuration."""


def _default_chi_qq():
    m = np.full((4, 4), 1e-3)
    np.fill_diagonal(m, 0.0)
    return m.tolist()


@dataclass(frozen=True)
class DeviceParams:
    chi: tuple = (1.651, 0.613, 0.811, 1.194)
    chi_qq: tuple = field(default_factory=lambda: tuple(map(tuple, _default_chi_qq())))
    kerr: float = 0.0
    chi_prime: tuple = (0.0, 0.0, 0.0, 0.0)
    cavity_t1: float = 72.0
    qubit_t1: tuple = (23.0, 58.0, 87.0, 86.0)
    qubit_t2: tuple = (19.0, 52.0, 62.0, 57.0)
    readout_assignment: tuple = ((0.989, 0.011), (0.029, 0.971))
    fock_cutoff: int = 60
    residual_excitation: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        to_tuple = lambda x: tuple(float(v) for v in x)  # noqa: E731
        object.__setattr__(self, "chi", to_tuple(self.chi))
        object.__setattr__(self, "chi_prime", to_tuple(self.chi_prime))
        object.__setattr__(self, "qubit_t1", to_tuple(self.qubit_t1))
        object.__setattr__(self, "qubit_t2", to_tuple(self.qubit_t2))
        object.__setattr__(self, "residual_excitation", to_tuple(self.residual_excitation))
        object.__setattr__(self, "chi_qq", tuple(to_tuple(r) for r in self.chi_qq))
        object.__setattr__(self, "readout_assignment",
                           tuple(to_tuple(r) for r in self.readout_assignment))
        self.validate()

    def validate(self):
        for name in ("chi", "chi_prime", "qubit_t1", "qubit_t2", "residual_excitation"):
            if len(getattr(self, name)) != 4:
                raise ConfigError(f"{name} needs 4 entries (ancilla + 3 register qubits)")
        qq = np.asarray(self.chi_qq)
        if qq.shape != (4, 4) or not np.allclose(qq, qq.T):
            raise ConfigError("chi_qq must be a symmetric 4x4 matrix")
        if min(self.chi) < 0 or self.kerr < 0 or self.cavity_t1 <= 0:
            raise ConfigError("rates and lifetimes must be non-negative")
        for t1, t2 in zip(self.qubit_t1, self.qubit_t2):
            if t1 <= 0 or t2 <= 0:
                raise ConfigError("coherence times must be positive")
            if t2 > 2 * t1 * (1 + 1e-12):
                raise ConfigError(f"T2={t2} exceeds 2*T1={2 * t1}")
        conf = np.asarray(self.readout_assignment)
        if conf.shape != (2, 2) or np.any(conf < 0) or not np.allclose(conf.sum(axis=1), 1.0):
            raise ConfigError("readout_assignment rows must be probability vectors")
        if int(self.fock_cutoff) < 2:
            raise ConfigError("fock_cutoff must be at least 2")
        if any(not 0 <= p <= 1 for p in self.residual_excitation):
            raise ConfigError("residual excitation probabilities must lie in [0, 1]")

    @classmethod
    def reference(cls, **overrides) -> "DeviceParams":
        """Dispersive shifts, lifetimes and readout fidelities of the reference device."""
        return replace(cls(), **overrides)

    @classmethod
    def ideal(cls, **overrides) -> "DeviceParams":
        """Reference-device shifts with Kerr and chi' set to zero and a perfect readout."""
        base = cls(readout_assignment=((1.0, 0.0), (0.0, 1.0)))
        return replace(base, **overrides)

    def with_(self, **changes) -> "DeviceParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (list(map(list, v)) if k in ("chi_qq", "readout_assignment") else
                    list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown device fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class SubsetParitySpec:
    """Which register qubits enter the parity, the mapping angle and n0."""

    subset: tuple
    theta: float | None = None
    n0: float = 5.0

    def __post_init__(self):
        subset = tuple(sorted({int(q) for q in self.subset}))
        if not subset or any(q not in (1, 2, 3) for q in subset):
            raise ConfigError("subset must be a non-empty selection of register qubits 1..3")
        object.__setattr__(self, "subset", subset)
        theta = default_theta(subset) if self.theta is None else float(self.theta)
        if not 0 < theta <= math.pi + 1e-12:
            raise ConfigError("theta must lie in (0, pi]")
        if len(subset) == 3 and abs(theta - math.pi) > 1e-9:
            raise ConfigError("three-qubit parity requires theta = pi")
        if self.n0 <= 0:
            raise ConfigError("n0 must be positive")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "n0", float(self.n0))

    @property
    def label(self) -> str:
        return "".join("Z" if q in self.subset else "I" for q in (1, 2, 3))

    @classmethod
    def from_label(cls, label: str, theta: float | None = None, n0: float = 5.0) -> "SubsetParitySpec":
        label = label.upper()
        if len(label) != 3 or set(label) - {"I", "Z"} or label == "III":
            raise ConfigError(f"not a subset-parity label: {label!r}")
        return cls(tuple(i + 1 for i, c in enumerate(label) if c == "Z"), theta, n0)

    def to_dict(self) -> dict:
        return {"subset": list(self.subset), "theta": self.theta, "n0": self.n0}


def default_theta(subset) -> float:
    return math.pi if len(subset) == 3 else 2 * math.pi / 5


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
