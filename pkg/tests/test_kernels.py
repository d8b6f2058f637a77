"""The compiled kernels and the pure-Python twin must agree exactly."""

import numpy as np
import pytest

from mcnlearn import _kernels
from mcnlearn._kernels import _pykern
from mcnlearn.graph import generate_graph

try:
    from mcnlearn._kernels import _ckern
except ImportError:
    _ckern = None

needs_ext = pytest.mark.skipif(_ckern is None, reason="compiled kernels unavailable")


def _csr(g):
    indptr, indices = g.successors_csr()
    return indptr, indices, g.n


@needs_ext
def test_backends_agree_on_reachability_and_weights():
    rng = np.random.default_rng(0)
    for i in range(200):
        g = generate_graph(int(rng.integers(1, 15)), (0.0, 0.5), directed=bool(i % 2),
                           weight_range=(1, 7), rng=rng)
        indptr, indices, n = _csr(g)
        k = int(rng.integers(0, n + 1))
        seeds = rng.choice(n, size=k, replace=False).astype(np.int32)
        w = g.weight_array()
        assert np.array_equal(
            _ckern.reachable_mask(indptr, indices, n, seeds),
            _pykern.reachable_mask(indptr, indices, n, seeds),
        )
        if k:
            assert _ckern.saved_weight(indptr, indices, n, w, seeds) == _pykern.saved_weight(
                indptr, indices, n, w, seeds
            )


@needs_ext
def test_backends_agree_on_ldp():
    rng = np.random.default_rng(1)
    for i in range(100):
        g = generate_graph(int(rng.integers(1, 15)), (0.0, 0.7), directed=bool(i % 2), rng=rng)
        indptr, indices = g.symmetric_csr()
        a = _ckern.ldp(indptr, indices, g.n)
        b = _pykern.ldp(indptr, indices, g.n)
        assert np.allclose(a, b, atol=1e-12)


def test_backend_name_reports_something():
    assert _kernels.backend_name() in ("cython", "python")
