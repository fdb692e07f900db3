"""AWGN/BPSK Monte-Carlo campaigns and base-decoder failure collection.

Every frame draws its randomness from its own Philox stream keyed by
``(seed, stream_id)`` with ``stream_id = (snr_index << 40) | frame_index``.
Frames are processed in chunks but stopping rules are applied frame by frame
in frame order, so results depend neither on the worker count nor on the
chunk size.
"""

from concurrent.futures import Executor, ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from scedlab.core.config import Settings, get_settings
from scedlab.core.exceptions import BracketNotFoundError, DimensionError, InputError
from scedlab.core.logging import LoggerMixin
from scedlab.core.metrics import FRAME_ERRORS, FRAMES_SIMULATED, PATH_ITERATIONS
from scedlab.models import ChannelParams, DecoderConfig, SimPoint, SimResult
from scedlab.services.bpdec import decode_batch
from scedlab.services.code import CodeModel, base_path, code_hash, encode
from scedlab.services.gf2core import BitVector
from scedlab.services.sceddec import SCEDEnsemble, sced_decode_batch

logger = structlog.get_logger(__name__)

STREAM_SHIFT = 40


@dataclass
class ErrorFrameSet:
    code_hash: str
    decoder_hash: str
    ebn0_db: float
    sigma2: float
    codewords: np.ndarray
    llrs: np.ndarray
    frames_simulated: int = 0

    def __post_init__(self):
        self.llrs = np.atleast_2d(np.asarray(self.llrs, dtype=np.float32))
        self.codewords = np.asarray(self.codewords, dtype=np.uint8).reshape(self.llrs.shape)
        if self.codewords.shape != self.llrs.shape:
            raise DimensionError("codewords and LLRs must have the same shape")

    def __len__(self) -> int:
        return int(self.llrs.shape[0])

    @property
    def n(self) -> int:
        return int(self.llrs.shape[1])

    def frame(self, j: int) -> Tuple[BitVector, np.ndarray]:
        return BitVector.from_bits(self.codewords[j]), self.llrs[j].astype(np.float64)


# ---------- channel


def channel_params(model: CodeModel, ebn0_db: float) -> ChannelParams:
    return ChannelParams(ebn0_db=ebn0_db, rate=model.rate)


def frame_rng(seed: int, stream_id: int) -> np.random.Generator:
    key = np.array([seed, stream_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def gaussian(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normals by Box-Muller from two uniforms per sample."""
    u1 = rng.random(size)
    u2 = rng.random(size)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def _modulate(bits: np.ndarray, sigma2: float, transmitted: np.ndarray, noise: np.ndarray) -> np.ndarray:
    y = (1.0 - 2.0 * bits) + np.sqrt(sigma2) * noise
    return np.where(transmitted, 2.0 * y / sigma2, 0.0)


def transmit(
    x: BitVector,
    params: ChannelParams,
    mask: BitVector,
    rng: np.random.Generator,
) -> np.ndarray:
    """BPSK over AWGN; returns channel LLRs with zeros at punctured positions."""
    if mask.length != x.length:
        raise DimensionError(f"mask length {mask.length} differs from codeword length {x.length}")
    transmitted = mask.to_bits() == 0
    noise = gaussian(rng, x.length)
    return _modulate(x.to_bits().astype(np.float64), params.sigma2, transmitted, noise)


def draw_frames(
    model: CodeModel,
    params: ChannelParams,
    seed: int,
    snr_index: int,
    start: int,
    count: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Random codewords and their LLRs for frames ``start .. start + count - 1``."""
    n = model.n
    codewords = np.empty((count, n), dtype=np.uint8)
    llrs = np.empty((count, n), dtype=np.float64)
    transmitted = model.transmitted
    for i in range(count):
        rng = frame_rng(seed, (snr_index << STREAM_SHIFT) | (start + i))
        message = rng.integers(0, 2, size=model.k, dtype=np.uint8)
        codewords[i] = encode(model, message)[0]
        noise = gaussian(rng, n)
        llrs[i] = _modulate(codewords[i].astype(np.float64), params.sigma2, transmitted, noise)
    return codewords, llrs


# ---------- chunked execution


@dataclass
class _ChunkTally:
    """Per-frame outcome of one chunk; ``iterations`` is (paths, frames)."""

    failed: np.ndarray
    iterations: np.ndarray

    def cut(self, needed: int) -> "_ChunkTally":
        """Prefix of the chunk ending at its ``needed``-th failure, or all of it."""
        positions = np.flatnonzero(self.failed)
        if positions.size < needed:
            return self
        stop = int(positions[needed - 1]) + 1
        return _ChunkTally(failed=self.failed[:stop], iterations=self.iterations[:, :stop])


def _simulate_chunk(job: Tuple[SCEDEnsemble, ChannelParams, int, int, int, int]) -> _ChunkTally:
    ens, params, seed, snr_index, start, count = job
    codewords, llrs = draw_frames(ens.base, params, seed, snr_index, start, count)
    result = sced_decode_batch(ens, llrs)
    return _ChunkTally(failed=(result.estimates != codewords).any(axis=1), iterations=result.iterations)


def _collect_chunk(job: Tuple[CodeModel, DecoderConfig, ChannelParams, int, int, int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    model, cfg, params, seed, start, count = job
    codewords, llrs = draw_frames(model, params, seed, 0, start, count)
    llrs = llrs.astype(np.float32)
    out = decode_batch(base_path(model), llrs.astype(np.float64), cfg)
    failed = (out.hard != codewords).any(axis=1)
    return np.flatnonzero(failed), codewords[failed], llrs[failed]


@contextmanager
def _executor(workers: int) -> Iterator[Optional[Executor]]:
    if workers <= 1:
        yield None
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield pool


def _chunks(total: int, batch_size: int) -> Iterator[Tuple[int, int]]:
    for start in range(0, total, batch_size):
        yield start, min(batch_size, total - start)


def _ordered(
    fn: Callable,
    jobs: Iterator,
    executor: Optional[Executor],
    window: int,
) -> Iterator:
    """Results of ``fn`` over ``jobs`` in job order, ``window`` jobs in flight."""
    if executor is None:
        for job in jobs:
            yield fn(job)
        return
    pending = []
    try:
        for job in jobs:
            pending.append(executor.submit(fn, job))
            if len(pending) >= window:
                yield pending.pop(0).result()
        while pending:
            yield pending.pop(0).result()
    finally:
        for future in pending:
            future.cancel()


# ---------- campaigns


def run_fer(
    ens: SCEDEnsemble,
    snr_points: Sequence[float],
    min_frame_errors: int,
    max_frames: int,
    seed: int,
    workers: int = 1,
    batch_size: int = 256,
    campaign: str = "simulate",
) -> SimResult:
    if not snr_points:
        raise InputError("at least one SNR point is required")
    if min_frame_errors < 1 or max_frames < 1:
        raise InputError("stop rule needs positive frame-error and frame limits")

    model = ens.base
    points: List[SimPoint] = []
    with _executor(workers) as executor:
        for snr_index, ebn0_db in enumerate(snr_points):
            params = channel_params(model, ebn0_db)
            frames = errors = latency = complexity = 0
            iter_sums = np.zeros(len(ens), dtype=np.int64)
            jobs = (
                (ens, params, seed, snr_index, start, count)
                for start, count in _chunks(max_frames, batch_size)
            )
            results = _ordered(_simulate_chunk, jobs, executor, max(1, 2 * workers))
            for tally in results:
                tally = tally.cut(min_frame_errors - errors)
                count = int(tally.failed.size)
                failed = int(tally.failed.sum())
                frames += count
                errors += failed
                latency += int(tally.iterations.max(axis=0).sum())
                complexity += int(tally.iterations.sum())
                iter_sums += tally.iterations.sum(axis=1)
                FRAMES_SIMULATED.labels(campaign).inc(count)
                FRAME_ERRORS.labels(campaign).inc(failed)
                for value in tally.iterations.ravel():
                    PATH_ITERATIONS.observe(int(value))
                if errors >= min_frame_errors:
                    break
            results.close()

            point = SimPoint(
                ebn0_db=ebn0_db,
                frames_sent=frames,
                frame_errors=errors,
                mean_iterations=(iter_sums / frames).tolist(),
                mean_latency=latency / frames,
                mean_complexity=complexity / frames,
                capped=errors < min_frame_errors,
            )
            logger.info(
                "SNR point finished",
                ebn0_db=ebn0_db,
                frames=frames,
                errors=errors,
                fer=point.fer,
                capped=point.capped,
            )
            points.append(point)
    return SimResult(seed=seed, config_digest="", points=points)


def collect_error_frames(
    model: CodeModel,
    cfg: DecoderConfig,
    ebn0_db: float,
    num_frames: int,
    seed: int,
    frame_cap: int = 100_000_000,
    workers: int = 1,
    batch_size: int = 256,
) -> ErrorFrameSet:
    """First ``num_frames`` base-decoder failures in frame-counter order.

    LLRs are rounded to float32 before decoding so the stored frames
    reproduce the failure exactly when decoded again.
    """
    if num_frames < 1:
        raise InputError("N must be at least 1")
    params = channel_params(model, ebn0_db)
    kept_cw: List[np.ndarray] = []
    kept_llr: List[np.ndarray] = []
    found = 0
    simulated = 0
    with _executor(workers) as executor:
        jobs = ((model, cfg, params, seed, start, count) for start, count in _chunks(frame_cap, batch_size))
        results = _ordered(_collect_chunk, jobs, executor, max(1, 2 * workers))
        for chunk_index, (positions, codewords, llrs) in enumerate(results):
            start = chunk_index * batch_size
            take = min(num_frames - found, positions.size)
            kept_cw.append(codewords[:take])
            kept_llr.append(llrs[:take])
            found += take
            if found >= num_frames:
                simulated = start + int(positions[take - 1]) + 1
            else:
                simulated = start + min(batch_size, frame_cap - start)
            FRAMES_SIMULATED.labels("collect").inc(simulated - start)
            FRAME_ERRORS.labels("collect").inc(take)
            if found >= num_frames:
                break
            if (chunk_index + 1) % 1000 == 0:
                logger.info("Collecting error frames", simulated=simulated, found=found, target=num_frames)
        results.close()

    if found < num_frames:
        logger.warning("Frame cap reached before enough failures", found=found, target=num_frames, cap=frame_cap)
    else:
        logger.info("Error frames collected", found=found, simulated=simulated, ebn0_db=ebn0_db)
    n = model.n
    return ErrorFrameSet(
        code_hash=code_hash(model),
        decoder_hash=cfg.digest(),
        ebn0_db=ebn0_db,
        sigma2=params.sigma2,
        codewords=np.concatenate(kept_cw) if kept_cw else np.zeros((0, n), dtype=np.uint8),
        llrs=np.concatenate(kept_llr) if kept_llr else np.zeros((0, n), dtype=np.float32),
        frames_simulated=simulated,
    )


def pilot_fer(
    model: CodeModel,
    cfg: DecoderConfig,
    ebn0_db: float,
    seed: int,
    snr_index: int,
    pilot_frames: int,
    pilot_min_errors: int,
    workers: int = 1,
    batch_size: int = 256,
) -> float:
    ens = SCEDEnsemble.build(model, [], cfg)
    result = run_fer(
        ens,
        [ebn0_db],
        min_frame_errors=pilot_min_errors,
        max_frames=pilot_frames,
        seed=seed + snr_index,
        workers=workers,
        batch_size=batch_size,
        campaign="pilot",
    )
    return result.points[0].fer


def find_operating_snr(
    model: CodeModel,
    cfg: DecoderConfig,
    target_fer: float,
    seed: int,
    low_db: float = -2.0,
    high_db: float = 10.0,
    pilot_frames: int = 20_000,
    pilot_min_errors: int = 50,
    max_steps: int = 24,
    workers: int = 1,
    batch_size: int = 256,
) -> float:
    """Bisect Eb/N0 until a pilot FER lies within a factor of 2 of the target."""
    if not 0.0 < target_fer < 1.0:
        raise InputError(f"target FER must lie in (0, 1), got {target_fer}")
    if low_db >= high_db:
        raise InputError("search range must have low < high")

    def fer_at(ebn0_db: float, step: int) -> float:
        return pilot_fer(model, cfg, ebn0_db, seed, step, pilot_frames, pilot_min_errors, workers, batch_size)

    fer_low = fer_at(low_db, 0)
    fer_high = fer_at(high_db, 1)
    if fer_low < target_fer or fer_high > target_fer:
        raise BracketNotFoundError(
            f"FER {target_fer} not bracketed in [{low_db}, {high_db}] dB "
            f"(pilot FER {fer_low:.3g} .. {fer_high:.3g})"
        )

    mid = 0.5 * (low_db + high_db)
    for step in range(max_steps):
        mid = 0.5 * (low_db + high_db)
        fer = fer_at(mid, step + 2)
        logger.info("Operating point search", step=step, ebn0_db=mid, fer=fer, target=target_fer)
        if target_fer / 2.0 <= fer <= 2.0 * target_fer:
            return mid
        if fer > target_fer:
            low_db = mid
        else:
            high_db = mid
    logger.warning("Operating point search hit the step limit", ebn0_db=mid, steps=max_steps)
    return mid


class SimulationService(LoggerMixin):
    """Campaign runner bound to runtime settings (workers, chunking, caps)."""

    def __init__(self, settings: Optional[Settings] = None, workers: Optional[int] = None):
        self.settings = settings or get_settings()
        self.workers = workers or self.settings.workers

    def simulate(
        self,
        ens: SCEDEnsemble,
        snr_points: Sequence[float],
        min_frame_errors: int,
        max_frames: int,
        seed: int,
        config_digest: str = "",
    ) -> SimResult:
        cap = min(max_frames, self.settings.frame_cap)
        self.logger.info("Starting FER campaign", paths=len(ens), points=list(snr_points), workers=self.workers)
        result = run_fer(
            ens,
            snr_points,
            min_frame_errors=min_frame_errors,
            max_frames=cap,
            seed=seed,
            workers=self.workers,
            batch_size=self.settings.batch_size,
        )
        return result.model_copy(update={"config_digest": config_digest})

    def collect(
        self,
        model: CodeModel,
        cfg: DecoderConfig,
        ebn0_db: float,
        num_frames: int,
        seed: int,
        frame_cap: Optional[int] = None,
    ) -> ErrorFrameSet:
        self.logger.info("Collecting error frames", ebn0_db=ebn0_db, target=num_frames)
        return collect_error_frames(
            model,
            cfg,
            ebn0_db,
            num_frames,
            seed,
            frame_cap=min(frame_cap or self.settings.frame_cap, self.settings.frame_cap),
            workers=self.workers,
            batch_size=self.settings.batch_size,
        )

    def operating_point(self, model: CodeModel, cfg: DecoderConfig, target_fer: float, seed: int) -> float:
        s = self.settings
        ebn0_db = find_operating_snr(
            model,
            cfg,
            target_fer,
            seed,
            low_db=s.snr_search_low_db,
            high_db=s.snr_search_high_db,
            pilot_frames=s.pilot_frames,
            pilot_min_errors=s.pilot_min_errors,
            max_steps=s.bisection_max_steps,
            workers=self.workers,
            batch_size=s.batch_size,
        )
        self.logger.info("Operating point found", ebn0_db=ebn0_db, target=target_fer)
        return ebn0_db
