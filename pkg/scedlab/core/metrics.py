from typing import Optional

import structlog
from prometheus_client import CollectorRegistry, Counter, Histogram, write_to_textfile

logger = structlog.get_logger(__name__)

REGISTRY = CollectorRegistry()

FRAMES_SIMULATED = Counter(
    "sced_frames_simulated_total",
    "Frames drawn, transmitted and decoded",
    ["campaign"],
    registry=REGISTRY,
)
FRAME_ERRORS = Counter(
    "sced_frame_errors_total",
    "Frames whose final estimate differs from the transmitted codeword",
    ["campaign"],
    registry=REGISTRY,
)
CANDIDATES_EVALUATED = Counter(
    "sced_candidates_evaluated_total",
    "Candidate paths decoded against an error-frame set",
    registry=REGISTRY,
)
PATH_ITERATIONS = Histogram(
    "sced_path_iterations",
    "Completed BP iterations per decoding path",
    buckets=(0, 1, 2, 4, 8, 16, 32, 64, 128, float("inf")),
    registry=REGISTRY,
)


def export_metrics(path: Optional[str]) -> None:
    if not path:
        return
    write_to_textfile(path, REGISTRY)
    logger.info("Metrics written", path=path)
