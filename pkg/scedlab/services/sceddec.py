"""Subcode ensemble decoding: K BP paths on one input, ML-in-the-list combining."""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from scedlab.core.exceptions import DimensionError, InputError
from scedlab.models import DecoderConfig
from scedlab.services.bpdec import BatchOutcome, DecodeOutcome, decode_batch
from scedlab.services.code import CodeModel, PathSpec, base_path
from scedlab.services.gf2core import BitVector


@dataclass(frozen=True)
class SCEDEnsemble:
    paths: Tuple[Tuple[PathSpec, DecoderConfig], ...]

    def __post_init__(self):
        if not self.paths:
            raise InputError("an ensemble needs at least one path")
        first = self.paths[0][0]
        if not first.is_subcode or first.appended_rows or first.effective_pcm != first.base.pcm:
            raise InputError("path 0 must decode the base code with its original PCM")
        for spec, _ in self.paths[1:]:
            if spec.base.pcm != self.base.pcm:
                raise InputError("all paths must derive from the same base code")

    @classmethod
    def build(cls, model: CodeModel, auxiliary: Sequence[PathSpec], cfg: DecoderConfig) -> "SCEDEnsemble":
        """Base path followed by the auxiliary paths, all with one decoder config."""
        return cls(tuple((spec, cfg) for spec in [base_path(model), *auxiliary]))

    @property
    def base(self) -> CodeModel:
        return self.paths[0][0].base

    def __len__(self) -> int:
        return len(self.paths)


@dataclass(frozen=True)
class SCEDResult:
    estimate: BitVector
    list_members: List[DecodeOutcome]
    winner_path: int
    latency: int
    complexity: int
    winner_valid: bool
    metric: float


@dataclass(frozen=True)
class SCEDBatchResult:
    estimates: np.ndarray
    winner_path: np.ndarray
    winner_valid: np.ndarray
    metric: np.ndarray
    iterations: np.ndarray
    outcomes: Tuple[BatchOutcome, ...]

    @property
    def latency(self) -> np.ndarray:
        return self.iterations.max(axis=0)

    @property
    def complexity(self) -> np.ndarray:
        return self.iterations.sum(axis=0)

    def __len__(self) -> int:
        return int(self.estimates.shape[0])

    def result(self, b: int) -> SCEDResult:
        return SCEDResult(
            estimate=BitVector.from_bits(self.estimates[b]),
            list_members=[o.outcome(b) for o in self.outcomes],
            winner_path=int(self.winner_path[b]),
            latency=int(self.latency[b]),
            complexity=int(self.complexity[b]),
            winner_valid=bool(self.winner_valid[b]),
            metric=float(self.metric[b]),
        )


def _correlation(bits: np.ndarray, llrs: np.ndarray, transmitted: Optional[np.ndarray]) -> np.ndarray:
    """Sum of llr * (1 - 2x) over transmitted positions, along the last axis."""
    signed = llrs * (1.0 - 2.0 * bits)
    if transmitted is not None:
        signed = np.where(transmitted, signed, 0.0)
    return signed.sum(axis=-1)


def ml_in_list(
    candidates: Sequence[BitVector],
    channel_llrs: Sequence[float],
    transmitted: Optional[np.ndarray] = None,
) -> Tuple[BitVector, float]:
    """Maximum-correlation member of the list; the earliest member wins ties."""
    if not candidates:
        raise InputError("the candidate list is empty")
    llrs = np.asarray(channel_llrs, dtype=np.float64)
    bits = np.stack([c.to_bits() for c in candidates]).astype(np.float64)
    if bits.shape[1] != llrs.shape[0]:
        raise DimensionError(f"candidates have length {bits.shape[1]}, LLRs {llrs.shape[0]}")
    metrics = _correlation(bits, llrs[None, :], transmitted)
    best = int(np.argmax(metrics))
    return candidates[best], float(metrics[best])


def sced_decode_batch(ens: SCEDEnsemble, channel_llrs: np.ndarray) -> SCEDBatchResult:
    llrs = np.atleast_2d(np.asarray(channel_llrs, dtype=np.float64))
    if llrs.shape[1] != ens.base.n:
        raise DimensionError(f"LLR vector has length {llrs.shape[1]}, n = {ens.base.n}")

    # paths may run in any order; the merge below is in path order
    outcomes = tuple(decode_batch(spec, llrs, cfg) for spec, cfg in ens.paths)
    hard = np.stack([o.hard for o in outcomes])
    valid = np.stack([o.valid_in_base for o in outcomes])
    iterations = np.stack([o.iterations for o in outcomes])

    metric = _correlation(hard.astype(np.float64), llrs[None, :, :], ens.base.transmitted)
    any_valid = valid.any(axis=0)
    # restrict the list to base-code members whenever one exists
    metric = np.where(valid | ~any_valid[None, :], metric, -np.inf)
    winner = np.argmax(metric, axis=0)

    frames = np.arange(llrs.shape[0])
    return SCEDBatchResult(
        estimates=hard[winner, frames],
        winner_path=winner,
        winner_valid=valid[winner, frames],
        metric=metric[winner, frames],
        iterations=iterations,
        outcomes=outcomes,
    )


def sced_decode(ens: SCEDEnsemble, channel_llrs: Sequence[float]) -> SCEDResult:
    llrs = np.asarray(channel_llrs, dtype=np.float64)
    if llrs.ndim != 1:
        raise DimensionError("sced_decode expects a single LLR vector")
    return sced_decode_batch(ens, llrs[None, :]).result(0)
