import numpy as np
import pytest

from rqwloc.coins import CoinPermutation


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=[1, 2, 3])
def dim(request):
    return request.param


@pytest.fixture
def swap():
    return CoinPermutation.standard_cycle(1)


def sparse_unitarity_bound(M):
    """Upper bound on ||M^* M - I||_2 via sqrt(||A||_1 ||A||_inf)."""
    import scipy.sparse as sp

    A = (M.conj().T @ M - sp.identity(M.shape[0], format="csc")).tocsc()
    if A.nnz == 0:
        return 0.0
    absA = abs(A)
    n1 = absA.sum(axis=0).max()
    ninf = absA.sum(axis=1).max()
    return float(np.sqrt(n1 * ninf))


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
