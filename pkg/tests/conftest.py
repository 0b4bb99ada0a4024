import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from parityprobe.metrics import metric_report
from parityprobe.protocol import (DeviceParams, SubsetParitySpec, build_schedule, ideal_instrument,
                                  postselect, simulate_variants)

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> one-line verdict, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


class NoisyRuns:
    """Reference-device noisy simulations and metric reports, computed once per session."""

    def __init__(self):
        self.params = DeviceParams.reference()
        self._variants = {}
        self._reports = {}

    def variants(self, label):
        if label not in self._variants:
            spec = SubsetParitySpec.from_label(label)
            self._variants[label] = simulate_variants(build_schedule(spec, self.params),
                                                      self.params)
        return self._variants[label]

    def instrument(self, label, herald):
        qi = self.variants(label)[herald]
        return postselect(qi) if herald else qi

    def report(self, label, herald):
        key = (label, herald)
        if key not in self._reports:
            spec = SubsetParitySpec.from_label(label)
            raw = self.variants(label)[herald]
            from parityprobe.metrics import assignment_scan
            self._reports[key] = metric_report(spec, self.instrument(label, herald),
                                               ideal_instrument(spec), herald,
                                               instrument=self.instrument(label, herald),
                                               scan=assignment_scan(raw))
        return self._reports[key]


@pytest.fixture(scope="session")
def noisy():
    return NoisyRuns()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_density(rng, d, rank=None):
    rank = rank or d
    A = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = A @ A.conj().T
    return rho / np.trace(rho).real


def random_unitary(rng, d):
    Q, R = np.linalg.qr(rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_effect(rng, d):
    U = random_unitary(rng, d)
    return (U * rng.uniform(0, 1, d)) @ U.conj().T


def random_kraus(rng, d_in, d_out, m):
    G = rng.standard_normal((m * d_out, d_in)) + 1j * rng.standard_normal((m * d_out, d_in))
    Q, _ = np.linalg.qr(G)
    return [Q[k * d_out:(k + 1) * d_out] for k in range(m)]
