from pathlib import Path

import numpy as np
import pytest

from scedlab.services.code import CodeModel, parse_alist, random_regular_pcm

CODES_DIR = Path(__file__).resolve().parent.parent / "data" / "codes"


def load_bundled(name: str) -> CodeModel:
    path = CODES_DIR / name
    return parse_alist(path.read_text(), name=path.stem)


def codebook(model: CodeModel) -> np.ndarray:
    """All 2^k codewords as a (2^k, n) uint8 array."""
    k = model.k
    idx = np.arange(1 << k, dtype=np.int64)
    messages = ((idx[:, None] >> np.arange(k)) & 1).astype(np.int32)
    if k == 0:
        return np.zeros((1, model.n), dtype=np.uint8)
    return ((messages @ model.generator.dense.astype(np.int32)) & 1).astype(np.uint8)


def dense_rank(matrix: np.ndarray) -> int:
    """Plain Gaussian elimination over GF(2), independent of the packed implementation."""
    a = np.array(matrix, dtype=np.uint8) % 2
    rows, cols = a.shape
    r = 0
    for c in range(cols):
        pivot = next((i for i in range(r, rows) if a[i, c]), None)
        if pivot is None:
            continue
        a[[r, pivot]] = a[[pivot, r]]
        for i in range(rows):
            if i != r and a[i, c]:
                a[i] ^= a[r]
        r += 1
        if r == rows:
            break
    return r


@pytest.fixture(scope="session")
def hamming() -> CodeModel:
    return load_bundled("hamming_7_4.alist")


@pytest.fixture(scope="session")
def tree_code() -> CodeModel:
    return load_bundled("tree_7.alist")


@pytest.fixture(scope="session")
def array_code() -> CodeModel:
    return load_bundled("array_102_z17.alist")


@pytest.fixture(scope="session")
def regular_96() -> CodeModel:
    pcm = random_regular_pcm(96, 3, 6, np.random.default_rng(2024))
    return CodeModel.from_pcm(pcm, name="reg96")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
