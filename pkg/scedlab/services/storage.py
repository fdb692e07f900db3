"""Readers and writers for campaign artifacts.

Pool and coverage files are text with a ``# {json}`` header line; the frame
set is a little-endian binary file. Every artifact names the code hash it
was built for and readers refuse artifacts built for another code.
"""

import hashlib
import json
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog
from pydantic import ValidationError

from scedlab.core.exceptions import ArtifactFormatError
from scedlab.models import CoverageRecord, EnsembleSelection, Provenance, SimResult
from scedlab.services.code import AmbientSpec, CodeModel, PathSpec, code_hash, induce_subcode, remove_rows
from scedlab.services.ensemble import CandidatePool
from scedlab.services.gf2core import BitVector
from scedlab.services.simlab import ErrorFrameSet

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]

POOL_FORMAT = "sced-pool"
COVERAGE_FORMAT = "sced-coverage"
FORMAT_VERSION = 1

FRAMES_MAGIC = b"SCEF"
FRAMES_HEADER = struct.Struct("<4sHII16s16sddQ")


def _header_line(payload: Dict[str, Any]) -> str:
    return "# " + json.dumps(payload, sort_keys=True) + "\n"


def _split_header(text: str, expected_format: str) -> Tuple[Dict[str, Any], List[str]]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ArtifactFormatError(f"missing {expected_format} header line")
    try:
        header = json.loads(lines[0][2:])
    except json.JSONDecodeError as e:
        raise ArtifactFormatError(f"unreadable {expected_format} header: {e}") from e
    if header.get("format") != expected_format:
        raise ArtifactFormatError(f"expected a {expected_format} file, got {header.get('format')!r}")
    if header.get("version") != FORMAT_VERSION:
        raise ArtifactFormatError(f"unsupported {expected_format} version {header.get('version')}")
    return header, [line for line in lines[1:] if line.strip()]


def _check_code(header: Dict[str, Any], model: CodeModel, what: str) -> None:
    expected = code_hash(model)
    if header.get("code_hash") != expected:
        raise ArtifactFormatError(
            f"{what} was built for code {header.get('code_hash')}, loaded code is {expected}"
        )


# ---------- candidate pools


def _spec_token(spec: PathSpec) -> str:
    if isinstance(spec, AmbientSpec):
        return ",".join(f"~{i}" for i in spec.removed_rows)
    return ",".join(r.to_hex() for r in spec.appended_rows)


def dump_pool(pool: CandidatePool) -> str:
    header = {
        "format": POOL_FORMAT,
        "version": FORMAT_VERSION,
        "code_hash": code_hash(pool.base),
        "n": pool.base.n,
        "candidates": len(pool),
        "provenance": pool.provenance.model_dump(mode="json"),
    }
    lines = [_header_line(header)]
    for spec in pool.candidates:
        label = f" {spec.label}" if spec.label else ""
        lines.append(f"{_spec_token(spec)}{label}\n")
    return "".join(lines)


def load_pool(text: str, model: CodeModel) -> CandidatePool:
    header, lines = _split_header(text, POOL_FORMAT)
    _check_code(header, model, "pool")
    candidates: List[PathSpec] = []
    for lineno, line in enumerate(lines, start=2):
        token, _, label = line.strip().partition(" ")
        parts = token.split(",")
        try:
            if parts[0].startswith("~"):
                candidates.append(remove_rows(model, [int(p[1:]) for p in parts], label=label))
            else:
                rows = [BitVector.from_hex(p, model.n) for p in parts]
                candidates.append(induce_subcode(model, rows, label=label))
        except ValueError as e:
            raise ArtifactFormatError(f"pool line {lineno}: {e}") from e
    if len(candidates) != header.get("candidates", len(candidates)):
        raise ArtifactFormatError(f"pool header announces {header['candidates']} candidates, found {len(candidates)}")
    if not isinstance(header.get("provenance"), dict):
        raise ArtifactFormatError("pool header has no provenance record")
    try:
        provenance = Provenance.model_validate(header["provenance"])
    except ValidationError as e:
        raise ArtifactFormatError(f"pool header has an invalid provenance record: {e}") from e
    return CandidatePool(model, candidates, provenance)


def write_pool(path: PathLike, pool: CandidatePool) -> None:
    Path(path).write_text(dump_pool(pool))
    logger.info("Pool written", path=str(path), candidates=len(pool))


def read_pool(path: PathLike, model: CodeModel) -> CandidatePool:
    return load_pool(Path(path).read_text(), model)


# ---------- coverage records


def dump_coverage(records: Sequence[CoverageRecord], num_frames: int, frames_hash: str, model: CodeModel) -> str:
    header = {
        "format": COVERAGE_FORMAT,
        "version": FORMAT_VERSION,
        "code_hash": code_hash(model),
        "frames_hash": frames_hash,
        "num_frames": num_frames,
        "candidates": len(records),
    }
    lines = [_header_line(header)]
    for record in records:
        bitmap = np.zeros(num_frames, dtype=np.uint8)
        bitmap[list(record.decoded_frames)] = 1
        lines.append(f"{record.candidate_index} {np.packbits(bitmap, bitorder='little').tobytes().hex()}\n")
    return "".join(lines)


def load_coverage(text: str, model: CodeModel, frames_hash: Optional[str] = None) -> Tuple[List[CoverageRecord], int]:
    header, lines = _split_header(text, COVERAGE_FORMAT)
    _check_code(header, model, "coverage file")
    if frames_hash is not None and header.get("frames_hash") != frames_hash:
        raise ArtifactFormatError("coverage records were computed on a different frame set")
    if not isinstance(header.get("num_frames"), int) or header["num_frames"] < 1:
        raise ArtifactFormatError("coverage header has no valid frame count")
    num_frames = header["num_frames"]
    records = []
    for lineno, line in enumerate(lines, start=2):
        try:
            index, hexmap = line.split()
            bits = np.unpackbits(np.frombuffer(bytes.fromhex(hexmap), dtype=np.uint8), bitorder="little")
        except ValueError as e:
            raise ArtifactFormatError(f"coverage line {lineno}: {e}") from e
        if bits[num_frames:].any() or bits.size < num_frames:
            raise ArtifactFormatError(f"coverage line {lineno}: bitmap does not hold {num_frames} frames")
        decoded = frozenset(int(j) for j in np.flatnonzero(bits[:num_frames]))
        records.append(CoverageRecord(candidate_index=int(index), decoded_frames=decoded))
    return records, num_frames


def write_coverage(path: PathLike, records: Sequence[CoverageRecord], frames: ErrorFrameSet, model: CodeModel) -> None:
    Path(path).write_text(dump_coverage(records, len(frames), frames_hash(frames), model))


def read_coverage(path: PathLike, model: CodeModel, frames_hash: Optional[str] = None) -> Tuple[List[CoverageRecord], int]:
    return load_coverage(Path(path).read_text(), model, frames_hash)


# ---------- error frames


def _frame_dtype(n: int) -> np.dtype:
    return np.dtype([("codeword", np.uint8, ((n + 7) // 8,)), ("llrs", "<f4", (n,))])


def _frame_body(frames: ErrorFrameSet) -> bytes:
    body = np.zeros(len(frames), dtype=_frame_dtype(frames.n))
    if len(frames):
        body["codeword"] = np.packbits(frames.codewords, axis=1, bitorder="little")
        body["llrs"] = frames.llrs
    return body.tobytes()


def frames_hash(frames: ErrorFrameSet) -> str:
    return hashlib.sha256(_frame_body(frames)).hexdigest()[:16]


def dump_frames(frames: ErrorFrameSet) -> bytes:
    header = FRAMES_HEADER.pack(
        FRAMES_MAGIC,
        FORMAT_VERSION,
        frames.n,
        len(frames),
        frames.code_hash.encode("ascii"),
        frames.decoder_hash.encode("ascii"),
        frames.ebn0_db,
        frames.sigma2,
        frames.frames_simulated,
    )
    return header + _frame_body(frames)


def load_frames(raw: bytes) -> ErrorFrameSet:
    if len(raw) < FRAMES_HEADER.size:
        raise ArtifactFormatError("frame file is shorter than its header")
    magic, version, n, count, chash, dhash, ebn0_db, sigma2, simulated = FRAMES_HEADER.unpack_from(raw)
    if magic != FRAMES_MAGIC:
        raise ArtifactFormatError("not an error-frame file")
    if version != FORMAT_VERSION:
        raise ArtifactFormatError(f"unsupported frame file version {version}")
    dtype = _frame_dtype(n)
    if len(raw) != FRAMES_HEADER.size + count * dtype.itemsize:
        raise ArtifactFormatError(f"frame file size does not match {count} frames of length {n}")
    body = np.frombuffer(raw, dtype=dtype, offset=FRAMES_HEADER.size, count=count)
    codewords = np.unpackbits(body["codeword"], axis=1, bitorder="little")[:, :n] if count else np.zeros((0, n))
    return ErrorFrameSet(
        code_hash=chash.decode("ascii"),
        decoder_hash=dhash.decode("ascii"),
        ebn0_db=ebn0_db,
        sigma2=sigma2,
        codewords=codewords,
        llrs=body["llrs"].reshape(count, n),
        frames_simulated=simulated,
    )


def write_frames(path: PathLike, frames: ErrorFrameSet) -> None:
    Path(path).write_bytes(dump_frames(frames))
    logger.info("Error frames written", path=str(path), frames=len(frames))


def read_frames(path: PathLike, model: Optional[CodeModel] = None) -> ErrorFrameSet:
    frames = load_frames(Path(path).read_bytes())
    if model is not None and frames.code_hash != code_hash(model):
        raise ArtifactFormatError(f"frames were collected on code {frames.code_hash}, loaded code is {code_hash(model)}")
    return frames


# ---------- results


def sim_result_frame(result: SimResult) -> pd.DataFrame:
    rows = []
    for point in result.points:
        row = {
            "ebn0_db": point.ebn0_db,
            "frames_sent": point.frames_sent,
            "frame_errors": point.frame_errors,
            "fer": point.fer,
            "mean_latency": point.mean_latency,
            "mean_complexity": point.mean_complexity,
            "capped": point.capped,
        }
        for i, value in enumerate(point.mean_iterations):
            row[f"mean_iterations_path{i}"] = value
        rows.append(row)
    return pd.DataFrame(rows)


def write_sim_csv(path: PathLike, result: SimResult) -> None:
    sim_result_frame(result).to_csv(path, index=False, float_format="%.10g", lineterminator="\n")


def write_json(path: PathLike, payload: Dict[str, Any]) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


def write_sim_json(path: PathLike, result: SimResult, config: Dict[str, Any]) -> None:
    write_json(path, {"config": config, **result.model_dump(mode="json")})


def write_selection_json(path: PathLike, selection: EnsembleSelection, extra: Optional[Dict[str, Any]] = None) -> None:
    payload = selection.model_dump(mode="json")
    payload["covered"] = sorted(payload["covered"])
    write_json(path, {**payload, **(extra or {})})


def write_curve_csv(path: PathLike, curve: Sequence[float]) -> None:
    frame = pd.DataFrame({"k_aux": np.arange(1, len(curve) + 1), "relative_coverage": list(curve)})
    frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
