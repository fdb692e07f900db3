"""Auxiliary subcode construction and coverage-driven selection.

Candidates are decoding paths derived from a base code: subcodes induced by
appended rows (Bernoulli rows, 4-cycle-free rows, linear-covering triples)
or ambient codes with one PCM row removed. A pool of candidates is scored
against a fixed set of base-decoder failures and a small ensemble is picked
greedily by maximum coverage.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import TYPE_CHECKING, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from scedlab.core.exceptions import ConstructionError, InputError, ResourceGuardError
from scedlab.core.metrics import CANDIDATES_EVALUATED
from scedlab.models import (
    CoverageRecord,
    DecoderConfig,
    EnsembleSelection,
    PoolKind,
    PoolSection,
    Provenance,
    RowSampling,
)
from scedlab.services.bpdec import decode_batch
from scedlab.services.code import (
    CodeModel,
    PathSpec,
    encode,
    induce_subcode,
    remove_rows,
)
from scedlab.services.gf2core import BitVector, reduce_against

if TYPE_CHECKING:
    from scedlab.services.simlab import ErrorFrameSet

logger = structlog.get_logger(__name__)

ENUMERATION_CHUNK = 1 << 14


@dataclass
class CandidatePool:
    base: CodeModel
    candidates: List[PathSpec] = field(default_factory=list)
    provenance: Provenance = field(default_factory=lambda: Provenance(kind=PoolKind.BERNOULLI))

    def __post_init__(self):
        keys = [c.key() for c in self.candidates]
        if len(set(keys)) != len(keys):
            raise InputError("candidate pool contains duplicate paths")
        for c in self.candidates:
            if c.base is not self.base and c.base.pcm != self.base.pcm:
                raise InputError("every candidate must derive from the pool's base code")

    def __len__(self) -> int:
        return len(self.candidates)

    def __getitem__(self, i: int) -> PathSpec:
        return self.candidates[i]

    def subset(self, indices: Sequence[int]) -> "CandidatePool":
        chosen = [self.candidates[i] for i in indices]
        return CandidatePool(
            base=self.base,
            candidates=chosen,
            provenance=Provenance(kind=PoolKind.SELECTION, group_size=1, seed=self.provenance.seed),
        )


class _Deduplicator:
    def __init__(self):
        self.seen = set()

    def admit(self, specs: Sequence[PathSpec]) -> bool:
        keys = [s.key() for s in specs]
        if len(set(keys)) != len(keys) or any(k in self.seen for k in keys):
            return False
        self.seen.update(keys)
        return True


# ---------- row samplers


def sample_bernoulli_row(n: int, p: float, rng: np.random.Generator) -> BitVector:
    """iid Bernoulli(p) row conditioned on being non-zero."""
    if not 0.0 < p < 1.0:
        raise InputError(f"p must lie in (0, 1), got {p}")
    if n < 1:
        raise InputError("row length must be positive")
    while True:
        bits = rng.random(n) < p
        if bits.any():
            return BitVector.from_bits(bits.astype(np.uint8))


@lru_cache(maxsize=16)
def _column_reach(model: CodeModel) -> np.ndarray:
    """reach[j, l] is True when columns j and l share at least one check."""
    dense = model.pcm.dense.astype(np.int32)
    reach = (dense.T @ dense) > 0
    reach.setflags(write=False)
    return reach


def gen_cycle_free_row(
    model: CodeModel,
    d_c: int,
    rng: np.random.Generator,
    feasible_init: Optional[np.ndarray] = None,
) -> Optional[Tuple[BitVector, np.ndarray]]:
    """Draw a weight-``d_c`` row that adds no 4-cycle to the base PCM.

    ``feasible_init`` is a boolean column mask (all columns when omitted).
    Returns the row and the remaining feasible mask, or None when the
    feasible set runs out first.
    """
    n = model.n
    if not 1 <= d_c <= n:
        raise InputError(f"d_c must lie in 1..{n}, got {d_c}")
    feasible = np.ones(n, dtype=bool) if feasible_init is None else np.array(feasible_init, dtype=bool)
    if feasible.shape != (n,):
        raise InputError("feasible mask must have one entry per column")

    reach = _column_reach(model)
    bits = np.zeros(n, dtype=np.uint8)
    for _ in range(d_c):
        options = np.flatnonzero(feasible)
        if options.size == 0:
            return None
        j = int(options[rng.integers(options.size)])
        bits[j] = 1
        feasible &= ~reach[j]
        # an all-zero column reaches nothing, not even itself
        feasible[j] = False
    return BitVector.from_bits(bits), feasible


def _outside_rowspace(model: CodeModel, row: BitVector) -> bool:
    R, pivots = model.row_echelon
    return not reduce_against(R, pivots, row).is_zero()


def make_lc_triple(
    model: CodeModel,
    sampling: RowSampling,
    rng: np.random.Generator,
    max_attempts: int = 1000,
) -> Tuple[BitVector, BitVector, BitVector]:
    """Rows h1, h2 outside the row space of H and h3 = h1 + h2.

    The three induced subcodes cover the base code. In cycle-free mode h2 is
    drawn from the feasible set left over by h1, so h3 has weight 2 * d_c and
    adds no 4-cycle either.
    """
    n = model.n
    for _ in range(max_attempts):
        if sampling.mode == "bernoulli":
            h1 = sample_bernoulli_row(n, sampling.p, rng)
            if not _outside_rowspace(model, h1):
                continue
            h2 = sample_bernoulli_row(n, sampling.p, rng)
        else:
            first = gen_cycle_free_row(model, sampling.d_c, rng)
            if first is None:
                continue
            h1, f_old = first
            if not _outside_rowspace(model, h1):
                continue
            second = gen_cycle_free_row(model, sampling.d_c, rng, feasible_init=f_old)
            if second is None:
                continue
            h2 = second[0]
        if h1 == h2 or not _outside_rowspace(model, h2):
            continue
        return h1, h2, h1 ^ h2
    raise ConstructionError(f"no linear-covering triple found in {max_attempts} attempts")


# ---------- linear-covering verification


@dataclass(frozen=True)
class LCReport:
    method: str
    checked: int
    uncovered: int

    @property
    def uncovered_fraction(self) -> float:
        return self.uncovered / self.checked if self.checked else 0.0

    @property
    def is_cover(self) -> bool:
        return self.uncovered == 0

    def confidence_interval(self, z: float = 1.96) -> Tuple[float, float]:
        """Normal-approximation interval; degenerate for exact enumeration."""
        q = self.uncovered_fraction
        if self.method == "enumerate" or not self.checked:
            return q, q
        half = z * np.sqrt(q * (1.0 - q) / self.checked)
        return max(0.0, q - half), min(1.0, q + half)


def _covered_mask(specs: Sequence[PathSpec], codewords: np.ndarray) -> np.ndarray:
    covered = np.zeros(codewords.shape[0], dtype=bool)
    cw = codewords.astype(np.int32)
    for spec in specs:
        if not spec.is_subcode or not spec.appended_rows:
            # ambient codes and the base code itself contain every codeword
            covered[:] = True
            break
        extra = np.stack([r.to_bits() for r in spec.appended_rows]).astype(np.int32)
        covered |= ~((cw @ extra.T) & 1).any(axis=1)
    return covered


def verify_lc(
    model: CodeModel,
    specs: Sequence[PathSpec],
    method: str = "enumerate",
    rng: Optional[np.random.Generator] = None,
    samples: int = 10_000,
    max_k: int = 24,
) -> LCReport:
    if not specs:
        raise InputError("verify_lc needs at least one path")
    k = model.k
    if method == "enumerate":
        if k > max_k:
            raise ResourceGuardError(f"enumerating 2^{k} codewords exceeds the limit 2^{max_k}")
        total = 1 << k
        uncovered = 0
        shifts = np.arange(k, dtype=np.int64)
        for start in range(0, total, ENUMERATION_CHUNK):
            idx = np.arange(start, min(total, start + ENUMERATION_CHUNK), dtype=np.int64)
            messages = ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
            codewords = encode(model, messages)
            uncovered += int((~_covered_mask(specs, codewords)).sum())
        return LCReport(method="enumerate", checked=total, uncovered=uncovered)
    if method == "sample":
        if samples < 1:
            raise InputError("sample count must be positive")
        rng = rng if rng is not None else np.random.default_rng()
        messages = rng.integers(0, 2, size=(samples, k), dtype=np.uint8)
        codewords = encode(model, messages)
        uncovered = int((~_covered_mask(specs, codewords)).sum())
        return LCReport(method="sample", checked=samples, uncovered=uncovered)
    raise InputError(f"unknown verification method {method!r}")


# ---------- pool builders


def _draw_limit(size: int, max_attempts: int) -> int:
    return max(size * 10, max_attempts)


def build_bernoulli_pool(
    model: CodeModel,
    p: float,
    size: int,
    rng: np.random.Generator,
    max_attempts: int = 1000,
    seed: Optional[int] = None,
) -> CandidatePool:
    dedup = _Deduplicator()
    candidates: List[PathSpec] = []
    draws = 0
    limit = _draw_limit(size, max_attempts)
    while len(candidates) < size:
        if draws >= limit:
            raise ConstructionError(f"only {len(candidates)} distinct Bernoulli rows after {draws} draws")
        draws += 1
        spec = induce_subcode(model, [sample_bernoulli_row(model.n, p, rng)], label=f"B{len(candidates)}")
        if dedup.admit([spec]):
            candidates.append(spec)
    return CandidatePool(model, candidates, Provenance(kind=PoolKind.BERNOULLI, p=p, seed=seed))


def build_cycle_free_pool(
    model: CodeModel,
    d_c: int,
    size: int,
    rng: np.random.Generator,
    max_attempts: int = 1000,
    seed: Optional[int] = None,
) -> CandidatePool:
    dedup = _Deduplicator()
    candidates: List[PathSpec] = []
    failures = 0
    limit = _draw_limit(size, max_attempts)
    while len(candidates) < size:
        if failures >= limit:
            raise ConstructionError(
                f"cycle-free sampling failed {failures} times with {len(candidates)} rows drawn"
            )
        drawn = gen_cycle_free_row(model, d_c, rng)
        if drawn is None:
            failures += 1
            continue
        spec = induce_subcode(model, [drawn[0]], label=f"F{len(candidates)}")
        if dedup.admit([spec]):
            candidates.append(spec)
        else:
            failures += 1
    return CandidatePool(model, candidates, Provenance(kind=PoolKind.CYCLE_FREE, d_c=d_c, seed=seed))


def _grouped_pool(
    model: CodeModel,
    groups: int,
    draw,
    kind: PoolKind,
    provenance: Dict,
    max_attempts: int,
) -> CandidatePool:
    dedup = _Deduplicator()
    candidates: List[PathSpec] = []
    rejected = 0
    g = 0
    while g < groups:
        rows = draw()
        specs = [induce_subcode(model, [h], label=f"T{g}.{i + 1}") for i, h in enumerate(rows)]
        if not dedup.admit(specs):
            rejected += 1
            if rejected >= _draw_limit(groups, max_attempts):
                raise ConstructionError(f"could not build {groups} distinct row groups")
            continue
        candidates.extend(specs)
        g += 1
    return CandidatePool(model, candidates, Provenance(kind=kind, group_size=3, **provenance))


def build_lc_triple_pool(
    model: CodeModel,
    sampling: RowSampling,
    triples: int,
    rng: np.random.Generator,
    max_attempts: int = 1000,
    seed: Optional[int] = None,
) -> CandidatePool:
    """Pool of consecutive (h1, h2, h1 + h2) groups, each a linear covering."""
    return _grouped_pool(
        model,
        triples,
        lambda: make_lc_triple(model, sampling, rng, max_attempts),
        PoolKind.LC_TRIPLE,
        {"p": sampling.p, "d_c": sampling.d_c, "seed": seed},
        max_attempts,
    )


def build_independent_triple_pool(
    model: CodeModel,
    d_c: int,
    triples: int,
    rng: np.random.Generator,
    max_attempts: int = 1000,
    seed: Optional[int] = None,
) -> CandidatePool:
    """Three unrelated cycle-free rows per group, each drawn from all columns."""

    def draw() -> List[BitVector]:
        rows: List[BitVector] = []
        for _ in range(max_attempts):
            drawn = gen_cycle_free_row(model, d_c, rng)
            if drawn is not None:
                rows.append(drawn[0])
                if len(rows) == 3:
                    return rows
        raise ConstructionError(f"cycle-free sampling with d_c={d_c} keeps failing")

    return _grouped_pool(
        model,
        triples,
        draw,
        PoolKind.INDEPENDENT_TRIPLE,
        {"d_c": d_c, "seed": seed},
        max_attempts,
    )


def build_rae_pool(model: CodeModel) -> CandidatePool:
    """One ambient path per PCM row, that row removed."""
    if model.m < 2:
        raise ResourceGuardError("removing rows needs a PCM with at least two rows")
    candidates: List[PathSpec] = [remove_rows(model, [i], label=f"R{i}") for i in range(model.m)]
    return CandidatePool(model, candidates, Provenance(kind=PoolKind.ROW_REMOVED))


# ---------- coverage evaluation


@dataclass(frozen=True)
class _FrameContext:
    codewords: np.ndarray
    llrs: np.ndarray
    cfg: DecoderConfig
    batch_size: int


# set once per worker process by the pool initializer
_worker_context: Optional[_FrameContext] = None


def _init_worker(context: _FrameContext) -> None:
    global _worker_context
    _worker_context = context


def _decoded_frames(spec: PathSpec, context: _FrameContext) -> List[int]:
    decoded: List[int] = []
    for start in range(0, context.llrs.shape[0], context.batch_size):
        stop = start + context.batch_size
        out = decode_batch(spec, context.llrs[start:stop].astype(np.float64), context.cfg)
        hit = (out.hard == context.codewords[start:stop]).all(axis=1)
        decoded.extend(int(start + j) for j in np.flatnonzero(hit))
    return decoded


def _decode_candidate(job: Tuple[int, PathSpec]) -> Tuple[int, List[int]]:
    index, spec = job
    if _worker_context is None:
        raise RuntimeError("worker started without its frame set")
    return index, _decoded_frames(spec, _worker_context)


def evaluate_candidates(
    pool: CandidatePool,
    frames: "ErrorFrameSet",
    cfg: DecoderConfig,
    workers: int = 1,
    batch_size: int = 256,
) -> List[CoverageRecord]:
    """Frame j is credited to a candidate iff its decoder returns x_j exactly."""
    if len(frames) == 0:
        raise InputError("coverage evaluation needs at least one frame")
    if frames.llrs.shape[1] != pool.base.n:
        raise InputError(f"frames have length {frames.llrs.shape[1]}, code length is {pool.base.n}")

    context = _FrameContext(frames.codewords, frames.llrs, cfg, batch_size)
    jobs = list(enumerate(pool.candidates))
    results: Dict[int, List[int]] = {}
    logger.info("Evaluating candidates", candidates=len(jobs), frames=len(frames), workers=workers)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(context,)) as executor:
            for index, decoded in executor.map(_decode_candidate, jobs, chunksize=max(1, len(jobs) // (4 * workers))):
                results[index] = decoded
                CANDIDATES_EVALUATED.inc()
    else:
        for index, spec in jobs:
            decoded = _decoded_frames(spec, context)
            results[index] = decoded
            CANDIDATES_EVALUATED.inc()
            if (index + 1) % 500 == 0:
                logger.info("Candidate evaluation progress", done=index + 1, total=len(jobs))

    return [CoverageRecord(candidate_index=i, decoded_frames=frozenset(results[i])) for i in range(len(jobs))]


def _coverage_matrix(records: Sequence[CoverageRecord], num_frames: int) -> np.ndarray:
    cover = np.zeros((len(records), num_frames), dtype=bool)
    for row, record in enumerate(records):
        if record.decoded_frames:
            idx = np.fromiter(record.decoded_frames, dtype=np.int64)
            if idx.max() >= num_frames:
                raise InputError(f"record {record.candidate_index} names frame {idx.max()} >= N = {num_frames}")
            cover[row, idx] = True
    return cover


def _check_frames(num_frames: int) -> None:
    if num_frames < 1:
        raise InputError("N must be at least 1")


def relative_coverage(records: Iterable[CoverageRecord], num_frames: int) -> float:
    _check_frames(num_frames)
    union = set()
    for record in records:
        union |= record.decoded_frames
    return len(union) / num_frames


def greedy_max_coverage(records: Sequence[CoverageRecord], k_aux: int, num_frames: int) -> EnsembleSelection:
    """Greedy maximum coverage; ties go to the lowest candidate index.

    Stops before ``k_aux`` picks once no candidate adds a new frame.
    """
    if not records:
        raise InputError("greedy selection needs at least one coverage record")
    if k_aux < 1:
        raise InputError(f"ensemble size must be at least 1, got {k_aux}")
    _check_frames(num_frames)

    cover = _coverage_matrix(records, num_frames)
    covered = np.zeros(num_frames, dtype=bool)
    taken = np.zeros(len(records), dtype=bool)
    chosen: List[int] = []
    curve: List[float] = []
    for _ in range(min(k_aux, len(records))):
        gains = (cover & ~covered).sum(axis=1)
        gains[taken] = -1
        best = int(np.argmax(gains))
        if gains[best] <= 0:
            break
        taken[best] = True
        covered |= cover[best]
        chosen.append(records[best].candidate_index)
        curve.append(float(covered.sum()) / num_frames)

    return EnsembleSelection(
        chosen=chosen,
        covered=frozenset(int(j) for j in np.flatnonzero(covered)),
        num_frames=num_frames,
        curve=curve,
    )


def coverage_curve(records: Sequence[CoverageRecord], num_frames: int, k_max: int) -> List[float]:
    """Relative coverage after each greedy pick, padded flat once gains stop."""
    selection = greedy_max_coverage(records, k_max, num_frames)
    curve = list(selection.curve)
    last = curve[-1] if curve else 0.0
    return curve + [last] * (k_max - len(curve))


def best_group(records: Sequence[CoverageRecord], group_size: int, num_frames: int) -> EnsembleSelection:
    """The consecutive candidate group whose union decodes the most frames."""
    if group_size < 1 or not records or len(records) % group_size:
        raise InputError(f"{len(records)} records cannot be split into groups of {group_size}")
    _check_frames(num_frames)
    cover = _coverage_matrix(records, num_frames)
    unions = cover.reshape(-1, group_size, num_frames).any(axis=1)
    best = int(np.argmax(unions.sum(axis=1)))
    members = [records[best * group_size + i].candidate_index for i in range(group_size)]
    covered = frozenset(int(j) for j in np.flatnonzero(unions[best]))
    return EnsembleSelection(
        chosen=members,
        covered=covered,
        num_frames=num_frames,
        curve=[len(covered) / num_frames],
    )


def build_pool(
    model: CodeModel,
    section: PoolSection,
    max_attempts: int = 1000,
) -> CandidatePool:
    """Pool described by a campaign config section; triples count as three candidates."""
    rng = np.random.default_rng(section.seed)
    triples = max(1, section.size // 3)
    logger.info("Building candidate pool", kind=section.kind.value, size=section.size, seed=section.seed)
    if section.kind == PoolKind.BERNOULLI:
        return build_bernoulli_pool(model, section.p, section.size, rng, max_attempts, seed=section.seed)
    if section.kind == PoolKind.CYCLE_FREE:
        return build_cycle_free_pool(model, section.d_c, section.size, rng, max_attempts, seed=section.seed)
    if section.kind == PoolKind.LC_TRIPLE:
        sampling = RowSampling(mode=section.triple_rows, p=section.p, d_c=section.d_c)
        return build_lc_triple_pool(model, sampling, triples, rng, max_attempts, seed=section.seed)
    if section.kind == PoolKind.INDEPENDENT_TRIPLE:
        return build_independent_triple_pool(model, section.d_c, triples, rng, max_attempts, seed=section.seed)
    if section.kind == PoolKind.ROW_REMOVED:
        return build_rae_pool(model)
    raise InputError(f"pool kind {section.kind.value!r} cannot be built from parameters")
