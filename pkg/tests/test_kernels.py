import numpy as np
import pytest

from mdiqn import kernels
from mdiqn.model import BASIS_OF, TAGS, LinkModel, default_protocol
from mdiqn.photonic import simulate_tally

needs_compiled = pytest.mark.skipif(kernels.BACKEND != "cython", reason="extension not built")


def _inputs(n, seed):
    rng = np.random.default_rng(seed)
    p = default_protocol()
    probs = np.array([p.p(t) for t in TAGS])
    return (
        rng.choice(4, size=n, p=probs / probs.sum()).astype(np.int8),
        rng.choice(4, size=n, p=probs / probs.sum()).astype(np.int8),
        rng.integers(0, 2, n, dtype=np.int8),
        rng.integers(0, 2, n, dtype=np.int8),
        rng.random(n) * 2 * np.pi,
        rng.random((n, 4)),
        np.array([p.mu(t) for t in TAGS]),
        np.array([BASIS_OF[t] == "X" for t in TAGS], dtype=np.int8),
    )


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_python_backend_counts_consistent():
    sent, success, error = kernels.tally_rounds(*_inputs(50_000, 1), 0.3, 0.3, 0.95, 1e-3,
                                                backend="python")
    assert sent.sum() == 50_000
    assert (error <= success).all() and (success <= sent).all()


@needs_compiled
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_backends_identical_tally(seed):
    args = _inputs(200_000, seed)
    a = kernels.tally_rounds(*args, 0.2, 0.05, 0.9, 1e-3, backend="python")
    b = kernels.tally_rounds(*args, 0.2, 0.05, 0.9, 1e-3, backend="cython")
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


@needs_compiled
def test_backends_identical_hom_and_joint():
    rng = np.random.default_rng(3)
    phase, u = rng.random(100_000) * 2 * np.pi, rng.random((100_000, 2))
    assert kernels.hom_rounds(phase, u, 0.3, 0.3, 0.97, 1e-4, backend="python") == \
        kernels.hom_rounds(phase, u, 0.3, 0.3, 0.97, 1e-4, backend="cython")
    s1, s2 = rng.random(10**5) < 0.1, rng.random(10**5) < 0.1
    assert kernels.count_joint(s1, s2, backend="python") == kernels.count_joint(s1, s2, backend="cython")


@needs_compiled
def test_simulation_backend_independent():
    link = LinkModel.symmetric(5.0, mode_overlap=0.95)
    p = default_protocol()
    assert simulate_tally(link, p, 400_000, 9, shards=2, backend="python") == \
        simulate_tally(link, p, 400_000, 9, shards=2, backend="cython")
