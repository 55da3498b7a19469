import numpy as np
import pytest

from rarescreen.cohort import DEFAULT_SIGNALS, SynthSpec, generate_synthetic_cohort
from rarescreen.pipeline import PipelineConfig, vectorize

ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    ACCEPTANCE_LINES.append((number, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda t: t[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def small_spec():
    """A fast cohort: strong signal, little noise."""
    return SynthSpec(
        n_positive=24,
        n_negative=36,
        signal_features=DEFAULT_SIGNALS[:6],
        n_noise_features_per_kind={"diagnosis": 40, "medication": 30, "problem": 20, "surgical": 10},
        noise_presence_rate=0.05,
        seed=7,
    )


@pytest.fixture(scope="session")
def small_cohort(small_spec):
    return generate_synthetic_cohort(small_spec)


@pytest.fixture(scope="session")
def small_matrix(small_cohort):
    return vectorize(small_cohort, PipelineConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_binary(rng, n, d, p=0.4):
    return (rng.random((n, d)) < p).astype(np.uint8)


def labels_with_both(rng, n, p=0.4):
    y = (rng.random(n) < p).astype(np.int8)
    y[0], y[1] = 1, 0
    return y
