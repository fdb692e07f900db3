"""Code model: PCM ingestion, Tanner graphs and subcode induction."""

import hashlib
from dataclasses import dataclass, replace
from functools import cached_property
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from scedlab.core.exceptions import AlistParseError, DimensionError, InputError, InvalidMaskError
from scedlab.services.gf2core import (
    BitMatrix,
    BitVector,
    nullspace_basis,
    rank,
    rref,
    syndrome_batch,
)

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class TannerGraph:
    """Edge tables of a PCM, edges enumerated check-major.

    ``check_edges`` / ``var_edges`` are padded neighbourhood tables holding
    edge indices; padding entries point at the dummy edge ``num_edges``.
    """

    num_checks: int
    num_vars: int
    edge_check: np.ndarray
    edge_var: np.ndarray
    check_edges: np.ndarray
    check_pad: np.ndarray
    var_edges: np.ndarray
    var_pad: np.ndarray

    @property
    def num_edges(self) -> int:
        return int(self.edge_var.shape[0])

    @classmethod
    def from_pcm(cls, pcm: BitMatrix) -> "TannerGraph":
        dense = pcm.dense
        edge_check, edge_var = np.nonzero(dense)
        num_edges = edge_var.shape[0]

        check_deg = dense.sum(axis=1).astype(np.int64)
        var_deg = dense.sum(axis=0).astype(np.int64)
        dc_max = max(1, int(check_deg.max(initial=0)))
        dv_max = max(1, int(var_deg.max(initial=0)))

        check_edges = np.full((pcm.rows, dc_max), num_edges, dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(check_deg)])
        for i in range(pcm.rows):
            check_edges[i, : check_deg[i]] = np.arange(offsets[i], offsets[i + 1])

        var_edges = np.full((pcm.cols, dv_max), num_edges, dtype=np.int64)
        order = np.argsort(edge_var, kind="stable")
        var_offsets = np.concatenate([[0], np.cumsum(var_deg)])
        for j in range(pcm.cols):
            var_edges[j, : var_deg[j]] = order[var_offsets[j] : var_offsets[j + 1]]

        tables = (edge_check, edge_var, check_edges, var_edges)
        for table in tables:
            table.setflags(write=False)
        return cls(
            num_checks=pcm.rows,
            num_vars=pcm.cols,
            edge_check=edge_check,
            edge_var=edge_var,
            check_edges=check_edges,
            check_pad=check_edges == num_edges,
            var_edges=var_edges,
            var_pad=var_edges == num_edges,
        )

    def check_neighbors(self, i: int) -> np.ndarray:
        return self.edge_var[self.check_edges[i][~self.check_pad[i]]]

    def var_neighbors(self, j: int) -> np.ndarray:
        return self.edge_check[self.var_edges[j][~self.var_pad[j]]]


@dataclass(frozen=True, eq=False)
class CodeModel:
    pcm: BitMatrix
    rank: int
    generator: BitMatrix
    puncture_mask: BitVector
    name: str = ""

    @classmethod
    def from_pcm(
        cls,
        pcm: BitMatrix,
        puncture_mask: Optional[BitVector] = None,
        name: str = "",
    ) -> "CodeModel":
        model = cls(
            pcm=pcm,
            rank=rank(pcm),
            generator=nullspace_basis(pcm),
            puncture_mask=BitVector.zeros(pcm.cols),
            name=name,
        )
        if puncture_mask is not None:
            model = set_puncture_mask(model, puncture_mask)
        return model

    @property
    def n(self) -> int:
        return self.pcm.cols

    @property
    def m(self) -> int:
        return self.pcm.rows

    @property
    def k(self) -> int:
        return self.n - self.rank

    @property
    def n_tx(self) -> int:
        return self.n - self.puncture_mask.weight

    @property
    def rate(self) -> float:
        return self.k / self.n_tx

    @cached_property
    def transmitted(self) -> np.ndarray:
        tx = self.puncture_mask.to_bits() == 0
        tx.setflags(write=False)
        return tx

    @cached_property
    def tanner(self) -> TannerGraph:
        return TannerGraph.from_pcm(self.pcm)

    @cached_property
    def row_echelon(self) -> Tuple[BitMatrix, List[int]]:
        R, pivots, _ = rref(self.pcm)
        return R, pivots

    def __repr__(self) -> str:
        return f"CodeModel(name={self.name!r}, n={self.n}, m={self.m}, k={self.k}, n_tx={self.n_tx})"


@dataclass(frozen=True, eq=False)
class SubcodeSpec:
    base: CodeModel
    appended_rows: Tuple[BitVector, ...] = ()
    label: str = ""

    is_subcode = True

    @cached_property
    def effective_pcm(self) -> BitMatrix:
        return self.base.pcm.stack(list(self.appended_rows))

    @cached_property
    def tanner(self) -> TannerGraph:
        return TannerGraph.from_pcm(self.effective_pcm)

    def key(self) -> Tuple:
        return ("append",) + tuple(r.to_hex() for r in self.appended_rows)


@dataclass(frozen=True, eq=False)
class AmbientSpec:
    """Path decoding an ambient code: the base PCM with some rows removed."""

    base: CodeModel
    removed_rows: Tuple[int, ...] = ()
    label: str = ""

    is_subcode = False

    @cached_property
    def effective_pcm(self) -> BitMatrix:
        return self.base.pcm.delete_rows(self.removed_rows)

    @cached_property
    def tanner(self) -> TannerGraph:
        return TannerGraph.from_pcm(self.effective_pcm)

    def key(self) -> Tuple:
        return ("remove",) + tuple(sorted(self.removed_rows))


PathSpec = Union[SubcodeSpec, AmbientSpec]


def base_path(model: CodeModel) -> SubcodeSpec:
    return SubcodeSpec(base=model, appended_rows=(), label="H")


def _effective(spec: Union[PathSpec, CodeModel]) -> BitMatrix:
    return spec.pcm if isinstance(spec, CodeModel) else spec.effective_pcm


def dimension(spec: Union[PathSpec, CodeModel]) -> int:
    pcm = _effective(spec)
    if pcm.rows == 0:
        return pcm.cols
    return pcm.cols - rref(pcm)[2]


# ---------- alist interchange


def _tokens(line: str, lineno: int) -> List[int]:
    try:
        return [int(tok) for tok in line.split()]
    except ValueError as exc:
        raise AlistParseError(f"non-integer entry ({exc})", lineno) from exc


def parse_alist(
    text: Union[bytes, str],
    declared_k: Optional[int] = None,
    name: str = "",
) -> CodeModel:
    """Parse a MacKay alist file into a CodeModel.

    Index lists are 1-based and may be zero padded up to the maximum degree.
    When the row lists are present they must describe the same matrix as the
    column lists.
    """
    if isinstance(text, bytes):
        text = text.decode("ascii", errors="replace")
    lines = [(no, _tokens(raw, no)) for no, raw in enumerate(text.splitlines(), start=1)]
    lines = [(no, toks) for no, toks in lines if toks]
    if len(lines) < 4:
        raise AlistParseError("truncated header", lines[-1][0] if lines else 1)

    (no, header), (no_max, maxima) = lines[0], lines[1]
    if len(header) != 2 or min(header) < 1:
        raise AlistParseError("first line must hold 'n m' with n, m >= 1", no)
    n, m = header
    if len(maxima) != 2:
        raise AlistParseError("second line must hold the maximum column and row degrees", no_max)

    no_cd, col_deg = lines[2]
    no_rd, row_deg = lines[3]
    if len(col_deg) != n:
        raise AlistParseError(f"expected {n} column degrees, found {len(col_deg)}", no_cd)
    if len(row_deg) != m:
        raise AlistParseError(f"expected {m} row degrees, found {len(row_deg)}", no_rd)
    if max(col_deg) != maxima[0] or max(row_deg) != maxima[1]:
        raise AlistParseError("maximum degrees do not match the degree lists", no_max)
    if sum(col_deg) != sum(row_deg):
        raise AlistParseError("column and row degree sums differ", no_rd)

    body = lines[4:]
    if len(body) == n:
        vn_only = True
    elif len(body) == n + m:
        vn_only = False
    else:
        raise AlistParseError(
            f"expected {n} column lists and {m} row lists, found {len(body)} lines",
            body[-1][0] if body else no_rd,
        )

    dense = np.zeros((m, n), dtype=np.uint8)
    for j in range(n):
        lineno, entries = body[j]
        idx = [e for e in entries if e != 0]
        if len(idx) != col_deg[j]:
            raise AlistParseError(f"column {j + 1} lists {len(idx)} entries, degree is {col_deg[j]}", lineno)
        if min(idx, default=1) < 1 or max(idx, default=1) > m:
            raise AlistParseError(f"row index out of range 1..{m}", lineno)
        if len(set(idx)) != len(idx):
            raise AlistParseError("repeated row index", lineno)
        dense[np.asarray(idx, dtype=np.int64) - 1, j] = 1

    if vn_only:
        logger.warning("alist has no row lists; matrix recovered from column lists only", name=name)
    else:
        for i in range(m):
            lineno, entries = body[n + i]
            idx = [e for e in entries if e != 0]
            if len(idx) != row_deg[i]:
                raise AlistParseError(f"row {i + 1} lists {len(idx)} entries, degree is {row_deg[i]}", lineno)
            if min(idx, default=1) < 1 or max(idx, default=1) > n:
                raise AlistParseError(f"column index out of range 1..{n}", lineno)
            expected = set(np.flatnonzero(dense[i]) + 1)
            if set(idx) != expected:
                raise AlistParseError(f"row {i + 1} contradicts the column lists", lineno)

    model = CodeModel.from_pcm(BitMatrix.from_dense(dense), name=name)
    if declared_k is not None and declared_k != model.k:
        logger.warning("Declared dimension differs from n - rank", declared_k=declared_k, k=model.k, name=name)
    logger.debug("Parsed alist", name=name, n=model.n, m=model.m, rank=model.rank, k=model.k)
    return model


def write_alist(pcm: Union[BitMatrix, CodeModel]) -> str:
    if isinstance(pcm, CodeModel):
        pcm = pcm.pcm
    dense = pcm.dense
    m, n = dense.shape
    col_deg = dense.sum(axis=0).astype(int)
    row_deg = dense.sum(axis=1).astype(int)
    dv = int(col_deg.max(initial=0))
    dc = int(row_deg.max(initial=0))

    def padded(indices: np.ndarray, width: int) -> str:
        entries = list(indices + 1) + [0] * (width - len(indices))
        return " ".join(str(int(e)) for e in entries)

    out = [
        f"{n} {m}",
        f"{dv} {dc}",
        " ".join(map(str, col_deg)),
        " ".join(map(str, row_deg)),
    ]
    out += [padded(np.flatnonzero(dense[:, j]), dv) for j in range(n)]
    out += [padded(np.flatnonzero(dense[i]), dc) for i in range(m)]
    return "\n".join(out) + "\n"


def parse_puncture_mask(text: Union[bytes, str], n: int) -> BitVector:
    if isinstance(text, bytes):
        text = text.decode("ascii", errors="replace")
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if len(lines) != 1:
        raise InvalidMaskError("puncture mask file must hold exactly one line")
    bits = lines[0]
    if len(bits) != n or set(bits) - {"0", "1"}:
        raise InvalidMaskError(f"puncture mask must be {n} characters from {{0,1}}")
    return BitVector.from_string(bits)


def write_puncture_mask(mask: BitVector) -> str:
    return "".join(map(str, mask.to_bits())) + "\n"


def set_puncture_mask(model: CodeModel, mask: BitVector) -> CodeModel:
    if mask.length != model.n:
        raise DimensionError(f"mask length {mask.length} != n = {model.n}")
    n_tx = model.n - mask.weight
    if n_tx < model.k or n_tx == 0:
        raise InvalidMaskError(f"mask leaves {n_tx} transmitted bits for k = {model.k} (rate > 1)")
    return replace(model, puncture_mask=mask)


def code_hash(model: CodeModel) -> str:
    digest = hashlib.sha256()
    digest.update(f"{model.m}x{model.n}".encode())
    digest.update(model.pcm.data.tobytes())
    digest.update(model.puncture_mask.data.tobytes())
    return digest.hexdigest()[:16]


# ---------- structure


def count_4cycles(H: BitMatrix) -> int:
    """Number of 4-cycles: sum over row pairs of C(|overlap|, 2)."""
    if H.rows < 2:
        return 0
    dense = H.dense.astype(np.int64)
    overlap = dense @ dense.T
    iu = np.triu_indices(H.rows, k=1)
    shared = overlap[iu]
    return int((shared * (shared - 1) // 2).sum())


def induce_subcode(model: CodeModel, rows: Sequence[BitVector], label: str = "") -> SubcodeSpec:
    for row in rows:
        if row.length != model.n:
            raise DimensionError(f"appended row has length {row.length}, n = {model.n}")
        if row.is_zero():
            raise InputError("an all-zero appended row has no effect and is rejected")
    return SubcodeSpec(base=model, appended_rows=tuple(rows), label=label)


def remove_rows(model: CodeModel, indices: Sequence[int], label: str = "") -> AmbientSpec:
    for i in indices:
        if not 0 <= i < model.m:
            raise DimensionError(f"row index {i} out of range 0..{model.m - 1}")
    return AmbientSpec(base=model, removed_rows=tuple(int(i) for i in indices), label=label)


def encode(model: CodeModel, messages: np.ndarray) -> np.ndarray:
    messages = np.atleast_2d(np.asarray(messages, dtype=np.int32))
    if model.k == 0:
        return np.zeros((messages.shape[0], model.n), dtype=np.uint8)
    return ((messages @ model.generator.dense.astype(np.int32)) & 1).astype(np.uint8)


def random_codeword(model: CodeModel, rng: np.random.Generator) -> BitVector:
    if model.k == 0:
        return BitVector.zeros(model.n)
    message = rng.integers(0, 2, size=model.k, dtype=np.uint8)
    return BitVector.from_bits(encode(model, message)[0])


def contains(spec: Union[PathSpec, CodeModel], x: BitVector) -> bool:
    pcm = _effective(spec)
    if x.length != pcm.cols:
        raise DimensionError(f"length mismatch: expected {pcm.cols}, got {x.length}")
    if pcm.rows == 0:
        return True
    return not syndrome_batch(pcm, x.to_bits()[None]).any()


def random_regular_pcm(
    n: int,
    d_v: int,
    d_c: int,
    rng: np.random.Generator,
    max_shuffles: int = 200,
) -> BitMatrix:
    """Random (d_v, d_c)-regular PCM by socket permutation without parallel edges."""
    if (n * d_v) % d_c:
        raise InputError(f"n * d_v = {n * d_v} is not divisible by d_c = {d_c}")
    m = n * d_v // d_c
    v_socks = np.tile(np.arange(n), d_v)
    c_socks = np.tile(np.arange(m), d_c)
    rng.shuffle(v_socks)
    rng.shuffle(c_socks)

    dense = np.zeros((m, n), dtype=np.uint8)
    idx = 0
    shuffles = 0
    while idx < v_socks.shape[0]:
        if dense[c_socks[idx], v_socks[idx]] == 0:
            dense[c_socks[idx], v_socks[idx]] = 1
            idx += 1
            shuffles = 0
            continue
        shuffles += 1
        if shuffles > max_shuffles:
            raise InputError("socket permutation kept producing parallel edges")
        rng.shuffle(v_socks[idx:])
        rng.shuffle(c_socks[idx:])
    return BitMatrix.from_dense(dense)
