import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def charpoly_faddeev(a):
    """Characteristic polynomial coefficients (highest first) by Faddeev-LeVerrier.

    Only matrix products and traces are used, so this is independent of any
    eigen-solver.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    coeffs = [1.0]
    m = np.zeros_like(a)
    for k in range(1, n + 1):
        m = a @ m + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(a @ m) / k)
    return np.array(coeffs)


def match_spectra(a, b):
    """Largest distance after greedily pairing two multisets of complex numbers."""
    a = list(np.asarray(a, dtype=complex))
    b = list(np.asarray(b, dtype=complex))
    assert len(a) == len(b)
    worst = 0.0
    for x in a:
        j = int(np.argmin([abs(x - y) for y in b]))
        worst = max(worst, abs(x - b[j]))
        b.pop(j)
    return worst


def random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


# -- acceptance lines ------------------------------------------------------------------

_ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    """``criterion(num, ok, detail)`` records one pass/fail line for the summary."""

    def record(num, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {num}: {detail}"
        _ACCEPTANCE[num] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[num])
