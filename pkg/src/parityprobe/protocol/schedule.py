"""Pulse schedules for subset-parity measurements.

A schedule is a flat list of segments.  Gates and displacements are
instantaneous; only :class:`FreeEvolve` advances the clock.  Segments carry a
``mode`` tag so that one schedule describes both the heralded and the
unheralded tail: ``"both"`` segments always run, ``"heralded"`` and
``"unheralded"`` segments run only in that variant.

Cavity phases: while qubit k is excited the cavity pointer rotates as
``alpha -> alpha * exp(+2j*pi*chi_k*t)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .params import ConfigError, DeviceParams, SubsetParitySpec

MODES = ("both", "heralded", "unheralded")


@dataclass(frozen=True)
class Displace:
    alpha: complex
    mode: str = "both"


@dataclass(frozen=True)
class FreeEvolve:
    duration: float
    mode: str = "both"


@dataclass(frozen=True)
class QubitGate:
    """Rotation about X or Y by ``angle``; target 0 is the ancilla.

    ``selectivity="fock0"`` acts only when the cavity holds zero photons.
    """

    target: int
    axis: str
    angle: float
    selectivity: str = "unconditional"
    mode: str = "both"


@dataclass(frozen=True)
class AncillaMeasure:
    label: str
    mode: str = "both"


@dataclass(frozen=True)
class CavityReset:
    mode: str = "both"


@dataclass(frozen=True)
class Herald:
    """Projective ancilla readout whose result flags an empty cavity."""

    label: str
    mode: str = "heralded"


SEGMENT_TYPES = (Displace, FreeEvolve, QubitGate, AncillaMeasure, CavityReset, Herald)


@dataclass(frozen=True)
class ScheduleOptions:
    """Control timings in ns.

    Gates sitting inside an evolution window are placed at their pulse centre
    and cost no extra time.  ``unselective_ns`` is only spent on the closing
    register flip, which has no window to hide in.
    """

    unselective_ns: float = 14.0
    selective_ns: float = 300.0
    herald_selective_ns: float = 1200.0
    readout_ns: float = 300.0
    reset_delay_ns: float = 300.0
    pointer_phase: float = 0.0


@dataclass
class PulseSchedule:
    segments: list
    spec: SubsetParitySpec
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = [s.label for s in self.segments if isinstance(s, (AncillaMeasure, Herald))]
        if len(labels) != len(set(labels)):
            raise ConfigError("measurement labels must be unique")
        for s in self.segments:
            if not isinstance(s, SEGMENT_TYPES):
                raise ConfigError(f"unknown segment {s!r}")
            if s.mode not in MODES:
                raise ConfigError(f"unknown segment mode {s.mode!r}")
            if isinstance(s, FreeEvolve) and s.duration < 0:
                raise ConfigError("negative free-evolution time")

    def variant(self, herald: bool) -> list:
        """Segments executed when the herald is on (or off)."""
        skip = "unheralded" if herald else "heralded"
        return [s for s in self.segments if s.mode != skip]

    def duration(self, herald: bool | None = None) -> float:
        segs = self.segments if herald is None else self.variant(herald)
        return float(sum(s.duration for s in segs if isinstance(s, FreeEvolve)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def to_dict(self) -> dict:
        segs, t = [], {"heralded": 0.0, "unheralded": 0.0}
        for s in self.segments:
            rec = {"type": type(s).__name__, "t_start": _start_time(t, s.mode)}
            for k, v in asdict(s).items():
                rec[k] = [v.real, v.imag] if isinstance(v, complex) else v
            segs.append(rec)
            if isinstance(s, FreeEvolve):
                for m in t:
                    if s.mode in ("both", m):
                        t[m] += s.duration
        return {"operator": self.spec.label, "spec": self.spec.to_dict(),
                "timings": self.timings, "segments": segs,
                "total_ns": {"heralded": t["heralded"], "unheralded": t["unheralded"]}}


def _start_time(t, mode):
    return t["unheralded"] if mode == "unheralded" else t["heralded"]


def mapping_time(spec: SubsetParitySpec, params: DeviceParams) -> float:
    """Length T of one conditional-phase window in ns."""
    chis = [params.chi[q] for q in spec.subset]
    if min(chis) <= 0:
        raise ConfigError("every measured qubit needs a positive dispersive shift")
    return 1e3 * spec.theta / (2 * math.pi * min(chis))


def echo_separations(spec: SubsetParitySpec, params: DeviceParams) -> dict:
    """Gap between the two X gates for each register qubit, in ns.

    The slowest measured qubit gets no gates.  Faster measured qubits keep an
    excited-state dwell of exactly ``theta / (2 pi chi_k)``; unmeasured ones
    spend exactly half the window excited.
    """
    T = mapping_time(spec, params)
    chi_min = min(params.chi[q] for q in spec.subset)
    slowest = min(spec.subset, key=lambda q: (params.chi[q], q))
    out = {}
    for q in (1, 2, 3):
        if q == slowest:
            continue
        if q in spec.subset:
            out[q] = 1e3 * spec.theta * (1 / chi_min - 1 / params.chi[q]) / (2 * 2 * math.pi)
        else:
            out[q] = T / 2
    return out


def pointer_separation(n0: float, theta: float) -> dict:
    """Distinguishability of the two parity pointers after one window."""
    if n0 <= 0 or not 0 <= theta <= math.pi + 1e-12:
        raise ConfigError("need n0 > 0 and theta in [0, pi]")
    delta = 2 * n0 * (1 - math.cos(theta))
    return {"delta": delta, "overlap": math.exp(-delta)}


def fock_tail(mean: float, cutoff: int) -> float:
    """Photon-number mass of a coherent state beyond ``cutoff - 1``."""
    return float(stats.poisson.sf(cutoff - 1, mean))


def max_pointer_photons(spec: SubsetParitySpec, decay: bool = False) -> float:
    """Largest mean photon number reached by any pointer during the schedule.

    With ``decay`` a register or ancilla flip mid-window can leave a pointer
    anywhere on the circle of radius ``sqrt(n0)``, so recentring may push it
    as far as ``2 sqrt(n0)``.
    """
    if decay:
        return 4 * spec.n0
    counts = np.arange(len(spec.subset) + 1)
    beta = np.exp(1j * counts * spec.theta)
    return float(spec.n0 * max(1.0, np.max(np.abs(beta - beta[1]) ** 2)))


def required_cutoff(spec: SubsetParitySpec, tol: float = 1e-8, decay: bool = False) -> int:
    mean = max_pointer_photons(spec, decay)
    return int(stats.poisson.isf(tol, mean)) + 2


def _window(T, gate_gaps: dict, extra=()):
    """Gates of one mapping window as (time, target) pairs, centred pairs."""
    events = []
    for q, gap in gate_gaps.items():
        if gap > 0:
            events += [(T / 2 - gap / 2, q), (T / 2 + gap / 2, q)]
    events += list(extra)
    return sorted(events, key=lambda e: (e[0], e[1]))


def _timed(events, total, mode="both"):
    """Interleave instantaneous X gates with free evolution over ``total`` ns."""
    segs, t = [], 0.0
    for when, q in events:
        if when > t:
            segs.append(FreeEvolve(when - t, mode))
            t = when
        segs.append(QubitGate(q, "X", math.pi, mode=mode))
    segs.append(FreeEvolve(total - t, mode))
    return [s for s in segs if not (isinstance(s, FreeEvolve) and s.duration == 0)]


def build_schedule(spec: SubsetParitySpec, params: DeviceParams,
                   options: ScheduleOptions | None = None, check_cutoff: bool = True) -> PulseSchedule:
    """Schedule measuring the parity of ``spec.subset``.

    Steps: displace to ``sqrt(n0)``; map parity onto the pointer phase; move
    the odd pointer to vacuum; flip the ancilla only if the cavity is empty
    (register echoed); move the pointer back; repeat the mapping with the
    register flipped and the ancilla echoed, which returns every pointer to a
    common point; displace to vacuum; undo the register flip; read the ancilla.
    The heralded tail checks that the cavity is empty with a second selective
    flip and readout; the unheralded tail waits and resets the cavity.
    """
    opts = options or ScheduleOptions()
    if check_cutoff:
        tail = fock_tail(max_pointer_photons(spec), params.fock_cutoff)
        if tail > 1e-8:
            raise ConfigError(
                f"fock_cutoff={params.fock_cutoff} leaves tail mass {tail:.2e} > 1e-8; "
                f"need at least {required_cutoff(spec)}")
    T = mapping_time(spec, params)
    gaps = echo_separations(spec, params)
    chi = params.chi
    w = lambda f_mhz, t_ns: 2 * math.pi * f_mhz * t_ns * 1e-3  # noqa: E731

    # Phase shared by all pointers after one window, relative to all-ground.
    phi0 = 0.0
    for q, gap in gaps.items():
        phi0 += w(chi[q], gap if q in spec.subset else T / 2)
    tsel = opts.selective_ns
    phi_b = sum(w(chi[q], tsel / 2) for q in (1, 2, 3))
    phi_anc = w(chi[0], T / 2)
    alpha0 = math.sqrt(spec.n0)
    beta_odd = alpha0 * np.exp(1j * (phi0 + spec.theta + opts.pointer_phase))
    final = alpha0 * np.exp(1j * (phi_b + 2 * phi0 + len(spec.subset) * spec.theta + phi_anc
                                  + 2 * opts.pointer_phase))

    segs = [Displace(complex(alpha0))]
    segs += _timed(_window(T, gaps), T)
    segs.append(Displace(complex(-beta_odd)))
    segs.append(FreeEvolve(tsel / 2))
    segs.append(QubitGate(0, "X", math.pi, "fock0"))
    segs += [QubitGate(q, "X", math.pi) for q in (1, 2, 3)]
    segs.append(FreeEvolve(tsel / 2))
    segs.append(Displace(complex(np.exp(1j * phi_b) * beta_odd)))
    segs += _timed(_window(T, gaps, extra=[(T / 4, 0), (3 * T / 4, 0)]), T)
    segs.append(Displace(complex(-final)))
    half = opts.unselective_ns / 2
    if half > 0:
        segs.append(FreeEvolve(half))
    segs += [QubitGate(q, "X", math.pi) for q in (1, 2, 3)]
    if half > 0:
        segs.append(FreeEvolve(half))
    segs.append(AncillaMeasure("m"))
    segs.append(FreeEvolve(opts.readout_ns))
    # Unheralded tail.
    segs.append(FreeEvolve(opts.reset_delay_ns, "unheralded"))
    segs.append(CavityReset("unheralded"))
    # Heralded tail: register echoed around a long vacuum-selective flip.
    th = opts.herald_selective_ns
    segs += _timed([(th / 4, q) for q in (1, 2, 3)], th / 2, "heralded")
    segs.append(QubitGate(0, "X", math.pi, "fock0", "heralded"))
    segs += _timed([(th / 4, q) for q in (1, 2, 3)], th / 2, "heralded")
    segs.append(Herald("h"))
    segs.append(FreeEvolve(opts.readout_ns, "heralded"))

    timings = {
        "T_ns": T,
        "echo_separation_ns": {str(q): g for q, g in sorted(gaps.items())},
        "selective_ns": tsel,
        "gate_ns": 2 * T + tsel,
        "max_pointer_photons": max_pointer_photons(spec),
        "fock_tail": fock_tail(max_pointer_photons(spec), params.fock_cutoff),
        **pointer_separation(spec.n0, spec.theta),
    }
    return PulseSchedule(segs, spec, timings)
