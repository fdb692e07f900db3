import argparse

import structlog

from scedlab.cli.common import (
    add_common_arguments,
    config_echo,
    emit,
    load_code,
    output_path,
    parse_snr_list,
    resolve_config,
    worker_count,
)
from scedlab.core.config import Settings
from scedlab.core.exceptions import EXIT_OK
from scedlab.services.sceddec import SCEDEnsemble
from scedlab.services.simlab import SimulationService
from scedlab.services.storage import read_pool, write_sim_csv, write_sim_json

logger = structlog.get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="Monte-Carlo FER of stand-alone or ensemble decoding")
    add_common_arguments(parser)
    parser.add_argument("-e", "--ensemble", metavar="FILE", help="auxiliary paths (pool format); omit for K = 1")
    parser.add_argument("--snr", type=parse_snr_list, metavar="DB[,DB...]", help="Eb/N0 points in dB")
    parser.add_argument("--min-errors", type=int, dest="min_errors")
    parser.add_argument("--max-frames", type=int, dest="max_frames")
    parser.add_argument("--seed", type=int)
    parser.set_defaults(handler=cmd_simulate)


def cmd_simulate(args: argparse.Namespace, settings: Settings) -> int:
    config = resolve_config(args, settings)
    model = load_code(config)

    auxiliary = []
    if config.ensemble_path:
        auxiliary = read_pool(config.ensemble_path, model).candidates
    ens = SCEDEnsemble.build(model, auxiliary, config.decoder)

    service = SimulationService(settings, workers=worker_count(config, settings))
    sim = config.simulation
    result = service.simulate(
        ens,
        sim.snr_points,
        min_frame_errors=sim.min_frame_errors,
        max_frames=sim.max_frames,
        seed=sim.seed,
        config_digest=config.digest(),
    )

    csv_path = output_path(config, "fer.csv")
    json_path = output_path(config, "fer.json")
    write_sim_csv(csv_path, result)
    write_sim_json(json_path, result, config_echo(config))
    logger.info("Simulation written", csv=str(csv_path), json=str(json_path))

    lines = [f"config digest: {result.config_digest}", f"paths: {len(ens)}"]
    for point in result.points:
        flag = " (frame cap)" if point.capped else ""
        lines.append(
            f"{point.ebn0_db:6.2f} dB  FER {point.fer:.4e}  "
            f"errors {point.frame_errors}/{point.frames_sent}  "
            f"latency {point.mean_latency:.2f}  complexity {point.mean_complexity:.2f}{flag}"
        )
    lines.append(f"csv: {csv_path}")
    emit(lines)
    return EXIT_OK
