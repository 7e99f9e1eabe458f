import numpy as np
import pytest

from sparse_spacetime.modal import eigendecompose
from sparse_spacetime.model import ChainSpec, assemble_chain
from sparse_spacetime.spacetime import ConstraintSet, NodeConstraint

SEL1 = np.array([[0.0, 1.0]])
DENSE_NODES = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
DENSE_TARGETS = [0.0, 1.0, 0.2, -0.5, 0.3, 0.5, 0.0]


def chain2_system(alpha=0.1, beta=0.05, gravity=0.5):
    spec = ChainSpec([1.0, 1.0], [(-1, 0, 1.0), (0, 1, 1.0)], gravity=gravity)
    return assemble_chain(spec, alpha, beta)


def dense_constraints(velocity_at=None, b=2.0, c=1e3):
    entries = [NodeConstraint(k, A=SEL1, a=[a]) for k, a in enumerate(DENSE_TARGETS)]
    if velocity_at is not None:
        k = velocity_at
        entries[k] = NodeConstraint(k, A=SEL1, a=[DENSE_TARGETS[k]], B=SEL1, b=[b])
    return ConstraintSet(DENSE_NODES, entries, c, c)


@pytest.fixture
def chain2():
    sys = chain2_system()
    return sys, eigendecompose(sys)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def free_motion_dofs(basis, nodes, amp, phase):
    """Hermite DOF of a damped free motion: exact zero-energy trajectory."""
    nodes = np.asarray(nodes, dtype=float)
    q = []
    for i in range(basis.r):
        lam, d, gm = basis.lam[i], basis.delta[i], basis.gm[i]
        wb = np.sqrt(lam - d * d)  # underdamped modes only
        e = amp[i] * np.exp(-d * nodes)
        c, s = np.cos(wb * nodes + phase[i]), np.sin(wb * nodes + phase[i])
        w = -gm / lam + e * c
        wd = e * (-d * c - wb * s)
        q.append(np.column_stack([w, wd]).reshape(-1))
    return np.concatenate(q)


ACCEPTANCE = {}


def record(criterion, ok, detail):
    """Log one acceptance line; the terminal summary repeats them in order."""
    line = f"{criterion} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
