"""Equivalence of the jit kernels and their pure-python fallbacks."""

import numpy as np
import pytest

from kcbs_selftest import _kernels
from kcbs_selftest.words import encode_words, enumerate_words

needs_numba = pytest.mark.skipif(
    not _kernels.HAVE_NUMBA, reason="numba not installed"
)


@pytest.fixture(scope="module")
def encoded():
    words = enumerate_words(5, 3)
    return encode_words(words)


@needs_numba
def test_canon_batch_paths_agree(encoded):
    codes, lengths = encoded
    rng = np.random.default_rng(5)
    raw = rng.integers(1, 6, size=(300, 9)).astype(np.int64)
    raw_len = rng.integers(0, 10, size=300).astype(np.int64)
    for k in (102, 205):  # sprinkle unitary letters
        raw[raw_len > 3, k % 9] = _kernels.PHAT if k % 2 else _kernels.PHAT_ADJ

    out_a = np.full_like(raw, -1)
    len_a = np.empty(300, dtype=np.int64)
    out_b = np.full_like(raw, -1)
    len_b = np.empty(300, dtype=np.int64)
    _kernels._canon_batch(raw, raw_len, 5, out_a, len_a)
    _kernels._canon_batch_jit(raw, raw_len, 5, out_b, len_b)
    assert np.array_equal(len_a, len_b)
    for i in range(300):
        if len_a[i] >= 0:
            assert np.array_equal(out_a[i, : len_a[i]], out_b[i, : len_b[i]])


@needs_numba
def test_pair_products_paths_agree(encoded):
    codes, lengths = encoded
    m = len(lengths)
    width = 2 * codes.shape[1]
    prod_a = np.full((m * m, width), -1, dtype=np.int64)
    len_a = np.empty(m * m, dtype=np.int64)
    prod_b = np.full((m * m, width), -1, dtype=np.int64)
    len_b = np.empty(m * m, dtype=np.int64)
    _kernels._pair_products(codes, lengths, 5, prod_a, len_a)
    _kernels._pair_products_jit(codes, lengths, 5, prod_b, len_b)
    assert np.array_equal(len_a, len_b)
    live = len_a >= 0
    assert np.array_equal(prod_a[live], prod_b[live])


def test_env_flag_selects_python_path(monkeypatch):
    monkeypatch.setenv("KCBS_SELFTEST_NO_NUMBA", "1")
    assert _kernels._env_disables_numba()
    monkeypatch.setenv("KCBS_SELFTEST_NO_NUMBA", "")
    assert not _kernels._env_disables_numba()


def test_public_dispatch_runs(encoded):
    codes, lengths = encoded
    out = np.full_like(codes, -1)
    out_len = np.empty(len(lengths), dtype=np.int64)
    _kernels.canon_batch(codes, lengths, 5, out, out_len)
    assert np.array_equal(out_len, lengths)  # already canonical
    assert np.array_equal(out, codes)
