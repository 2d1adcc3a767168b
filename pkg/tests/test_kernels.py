"""The numba and numpy kernel paths must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest

from vsekit import kernels
from vsekit.kernels import _numba, _numpy


@pytest.mark.parametrize("kind", [kernels.SH, kernels.MH, kernels.WEIGHTED])
@pytest.mark.parametrize("with_excl", [True, False])
def test_hinge_terms_agree(kind, with_excl, rng):
    for n, p in [(2, 2), (7, 3), (16, 16), (5, 11)]:
        pos = rng.uniform(-1, 1, n)
        s_cap = rng.uniform(-1, 1, (n, p))
        s_img = rng.uniform(-1, 1, (n, p))
        excl = rng.integers(-1, p, n) if with_excl else np.full(n, -1)
        a = _numpy.hinge_terms(pos, s_cap, s_img, excl.astype(np.int64), 0.2, kind, 0.05)
        b = _numba.hinge_terms(pos, s_cap, s_img, excl.astype(np.int64), 0.2, kind, 0.05)
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, rtol=0, atol=1e-12)


def test_order_similarity_agree(rng):
    f = rng.normal(size=(13, 6))
    g = rng.normal(size=(9, 6))
    gs = rng.normal(size=(13, 9))
    np.testing.assert_allclose(_numpy.order_similarity(f, g), _numba.order_similarity(f, g), atol=1e-12)
    for x, y in zip(_numpy.order_similarity_backward(f, g, gs), _numba.order_similarity_backward(f, g, gs)):
        np.testing.assert_allclose(x, y, atol=1e-12)


def test_order_similarity_chunking(rng, monkeypatch):
    monkeypatch.setattr(_numpy, "_BLOCK", 16)
    f = rng.normal(size=(11, 3))
    g = rng.normal(size=(4, 3))
    np.testing.assert_allclose(_numpy.order_similarity(f, g), _numba.order_similarity(f, g), atol=1e-12)


@pytest.mark.parametrize("cpi", [1, 3, 5])
def test_ranks_agree(cpi, rng):
    n_i = 12
    S = rng.integers(0, 4, size=(n_i, n_i * cpi)).astype(float)  # many ties
    for x, y in zip(_numpy.retrieval_ranks(S, cpi), _numba.retrieval_ranks(S, cpi)):
        np.testing.assert_array_equal(x, y)


@pytest.mark.parametrize("name", ["numpy", "numba"])
def test_backend_env_flag(name):
    env = dict(os.environ, VSEKIT_BACKEND=name)
    out = subprocess.run(
        [sys.executable, "-c", "import vsekit.kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == name


def test_bad_backend_name():
    env = dict(os.environ, VSEKIT_BACKEND="fortran")
    out = subprocess.run([sys.executable, "-c", "import vsekit.kernels"], env=env, capture_output=True, text=True)
    assert out.returncode != 0 and "VSEKIT_BACKEND" in out.stderr
