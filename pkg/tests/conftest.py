import numpy as np
import pytest

from qotsim import kernels, qsim
from qotsim.qsim import RegisterLayout, SparseState


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # JIT-compile before anything is timed.
    kernels.warm_up()


def make_random_state(rng, n=6, support=8, perm_registers=1, has_ancilla=False,
                      complex_amps=True) -> SparseState:
    """Random normalized sparse state with the requested support size."""
    layout = RegisterLayout(n, perm_registers, has_ancilla)
    count = qsim.math.factorial(n)
    rows = set()
    while len(rows) < support:
        row = []
        if has_ancilla:
            row.append(int(rng.integers(2)))
        row.extend(int(rng.integers(count)) for _ in range(perm_registers))
        rows.add(tuple(row))
    amps = rng.normal(size=support)
    if complex_amps:
        amps = amps + 1j * rng.normal(size=support)
    amps = amps / np.linalg.norm(amps)
    return SparseState.from_terms(layout, dict(zip(sorted(rows), amps)))
