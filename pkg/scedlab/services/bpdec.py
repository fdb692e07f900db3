"""Flooding belief-propagation decoding (sum-product and normalized min-sum).

LLR convention: positive means bit 0 is more likely. Punctured positions
enter with LLR 0. One iteration is: all check-node updates, all
variable-node updates, hard decision, syndrome check against the path's
effective PCM. The syndrome is also checked once before the first
iteration, so a channel hard decision that is already a codeword finishes
with zero iterations.
"""

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from scedlab.core.exceptions import DimensionError, InputError
from scedlab.models import DecoderConfig, DecoderKind
from scedlab.services.code import PathSpec, TannerGraph
from scedlab.services.gf2core import BitVector, syndrome_batch


@dataclass(frozen=True)
class DecodeOutcome:
    hard_decision: BitVector
    iterations: int
    converged: bool
    valid_in_base: bool
    posterior: np.ndarray


@dataclass(frozen=True)
class BatchOutcome:
    """Outcomes of B frames decoded together; row b matches decode() on frame b."""

    hard: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    valid_in_base: np.ndarray
    posterior: np.ndarray

    def __len__(self) -> int:
        return int(self.hard.shape[0])

    def outcome(self, b: int) -> DecodeOutcome:
        return DecodeOutcome(
            hard_decision=BitVector.from_bits(self.hard[b]),
            iterations=int(self.iterations[b]),
            converged=bool(self.converged[b]),
            valid_in_base=bool(self.valid_in_base[b]),
            posterior=self.posterior[b].copy(),
        )


def hard_decide(llrs: Union[Sequence[float], np.ndarray]) -> BitVector:
    return BitVector.from_bits(_hard(np.asarray(llrs, dtype=np.float64)))


def _hard(llrs: np.ndarray) -> np.ndarray:
    # exact zeros resolve to bit 0
    return (llrs < 0).astype(np.uint8)


def _exclusive_scan(values: np.ndarray, op: np.ufunc, identity: float) -> np.ndarray:
    """For every position along the last axis, ``op`` over all other positions."""
    ident = np.full(values.shape[:-1] + (1,), identity, dtype=values.dtype)
    prefix = np.concatenate([ident, op.accumulate(values, axis=-1)[..., :-1]], axis=-1)
    suffix = op.accumulate(values[..., ::-1], axis=-1)[..., ::-1]
    suffix = np.concatenate([suffix[..., 1:], ident], axis=-1)
    return op(prefix, suffix)


def _check_update(
    incoming: np.ndarray,
    pad: np.ndarray,
    kind: DecoderKind,
    normalization: float,
    clip: float,
) -> np.ndarray:
    """Extrinsic check-node messages for an (..., checks, d_max) message table."""
    if kind == DecoderKind.SPA:
        t = np.tanh(np.clip(incoming, -clip, clip) / 2.0)
        t[..., pad] = 1.0
        loo = _exclusive_scan(t, np.multiply, 1.0)
        with np.errstate(divide="ignore"):
            out = 2.0 * np.arctanh(loo)
    else:
        magnitude = np.abs(incoming)
        sign = np.sign(incoming)
        magnitude[..., pad] = np.inf
        sign[..., pad] = 1.0
        loo_min = _exclusive_scan(magnitude, np.minimum, np.inf)
        loo_sign = _exclusive_scan(sign, np.multiply, 1.0)
        out = normalization * loo_sign * loo_min
    return np.clip(out, -clip, clip)


def cn_update(
    incoming: Sequence[float],
    kind: Union[DecoderKind, str] = DecoderKind.SPA,
    normalization: float = 1.0,
    llr_clip: float = 30.0,
) -> np.ndarray:
    values = np.asarray(incoming, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise InputError("a check node needs at least one incoming message")
    if not np.all(np.isfinite(values)):
        raise InputError("incoming messages must be finite")
    pad = np.zeros((1, values.size), dtype=bool)
    return _check_update(values[None, :], pad, DecoderKind(kind), normalization, llr_clip)[0]


def _validate(spec: PathSpec, llrs: np.ndarray) -> None:
    n = spec.base.n
    if llrs.shape[-1] != n:
        raise DimensionError(f"LLR vector has length {llrs.shape[-1]}, n = {n}")
    if not np.all(np.isfinite(llrs)):
        raise InputError("channel LLRs must be finite")


def decode_batch(spec: PathSpec, channel_llrs: np.ndarray, cfg: DecoderConfig) -> BatchOutcome:
    llrs = np.atleast_2d(np.asarray(channel_llrs, dtype=np.float64))
    _validate(spec, llrs)
    batch, n = llrs.shape
    graph: TannerGraph = spec.tanner
    pcm = spec.effective_pcm
    kind = cfg.kind
    clip = cfg.llr_clip
    E = graph.num_edges
    valid_slots = ~graph.check_pad

    hard = _hard(llrs)
    posterior = llrs.copy()
    iterations = np.zeros(batch, dtype=np.int64)
    converged = np.zeros(batch, dtype=bool)

    ok = ~syndrome_batch(pcm, hard).any(axis=1) if pcm.rows else np.ones(batch, dtype=bool)
    if cfg.early_stop:
        converged |= ok
        active = np.flatnonzero(~ok)
    else:
        active = np.arange(batch)

    # one extra trailing column is the dummy edge behind every padding slot
    v2c = np.zeros((active.size, E + 1))
    v2c[:, :E] = llrs[active][:, graph.edge_var]
    c2v = np.zeros((active.size, E + 1))
    ch = llrs[active]

    for it in range(1, cfg.max_iterations + 1):
        if active.size == 0:
            break
        table = v2c[:, graph.check_edges]
        out = _check_update(table, graph.check_pad, kind, cfg.normalization, clip)
        c2v[:, :E] = out[:, valid_slots]

        total = ch + c2v[:, graph.var_edges].sum(axis=2)
        v2c[:, :E] = total[:, graph.edge_var] - c2v[:, :E]

        step_hard = _hard(total)
        hard[active] = step_hard
        posterior[active] = total
        iterations[active] = it
        ok = ~syndrome_batch(pcm, step_hard).any(axis=1) if pcm.rows else np.ones(active.size, dtype=bool)
        if cfg.early_stop:
            converged[active[ok]] = True
            keep = ~ok
            active = active[keep]
            v2c, c2v, ch = v2c[keep], c2v[keep], ch[keep]
        elif it == cfg.max_iterations:
            converged[active] = ok

    base = spec.base.pcm
    valid = ~syndrome_batch(base, hard).any(axis=1) if base.rows else np.ones(batch, dtype=bool)
    return BatchOutcome(
        hard=hard,
        iterations=iterations,
        converged=converged,
        valid_in_base=valid,
        posterior=posterior,
    )


def decode(spec: PathSpec, channel_llrs: Sequence[float], cfg: DecoderConfig) -> DecodeOutcome:
    llrs = np.asarray(channel_llrs, dtype=np.float64)
    if llrs.ndim != 1:
        raise DimensionError("decode expects a single LLR vector")
    return decode_batch(spec, llrs[None, :], cfg).outcome(0)
