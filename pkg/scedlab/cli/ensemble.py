"""collect-frames, build-ensemble and coverage-curve commands."""

import argparse
from pathlib import Path
from typing import List, Tuple

import structlog

from scedlab.cli.common import (
    add_common_arguments,
    emit,
    load_code,
    output_path,
    resolve_config,
    worker_count,
)
from scedlab.core.config import Settings
from scedlab.core.exceptions import EXIT_OK, InputError
from scedlab.models import CampaignConfig, CoverageRecord, PoolKind
from scedlab.services.code import CodeModel
from scedlab.services.ensemble import (
    best_group,
    build_pool,
    coverage_curve,
    evaluate_candidates,
    greedy_max_coverage,
)
from scedlab.services.simlab import ErrorFrameSet, SimulationService
from scedlab.services.storage import (
    frames_hash,
    read_coverage,
    read_frames,
    read_pool,
    write_coverage,
    write_curve_csv,
    write_frames,
    write_pool,
    write_selection_json,
)

logger = structlog.get_logger(__name__)


def _frame_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--frames", metavar="FILE", help="error-frame file to reuse")
    parser.add_argument("-N", "--num-frames", type=int, dest="num_frames")
    parser.add_argument("--ebn0", type=float, help="collection Eb/N0 in dB (searched for when omitted)")
    parser.add_argument("--target-fer", type=float, dest="target_fer")
    parser.add_argument("--collect-seed", type=int, dest="collect_seed")
    parser.add_argument("--frame-cap", type=int, dest="frame_cap", help="most frames simulated while collecting")


def register(subparsers) -> None:
    collect = subparsers.add_parser("collect-frames", help="collect base-decoder failures")
    add_common_arguments(collect)
    _frame_arguments(collect)
    collect.set_defaults(handler=cmd_collect_frames)

    build = subparsers.add_parser("build-ensemble", help="collect, pool, evaluate and select auxiliary paths")
    add_common_arguments(build)
    _frame_arguments(build)
    build.add_argument("--pool-kind", choices=[k.value for k in PoolKind if k != PoolKind.SELECTION], dest="pool_kind")
    build.add_argument("--pool-size", type=int, dest="pool_size")
    build.add_argument("--p", type=float, help="Bernoulli row density")
    build.add_argument("--d-c", type=int, dest="d_c", help="weight of cycle-free rows")
    build.add_argument("--pool-seed", type=int, dest="pool_seed")
    build.add_argument("-k", "--k-aux", type=int, dest="k_aux", help="number of auxiliary paths")
    build.add_argument("--k-max", type=int, dest="k_max", help="longest coverage curve to report")
    build.set_defaults(handler=cmd_build_ensemble)

    curve = subparsers.add_parser("coverage-curve", help="relative coverage per ensemble size")
    add_common_arguments(curve)
    _frame_arguments(curve)
    curve.add_argument("--pool", metavar="FILE", required=True)
    curve.add_argument("--coverage", metavar="FILE", help="precomputed coverage records")
    curve.add_argument("--k-max", type=int, dest="k_max")
    curve.set_defaults(handler=cmd_coverage_curve)


def obtain_frames(
    config: CampaignConfig,
    model: CodeModel,
    service: SimulationService,
) -> Tuple[ErrorFrameSet, bool]:
    """Frames from the configured file, or freshly collected. Second item: collected now."""
    sel = config.selection
    if sel.frames_path and Path(sel.frames_path).exists():
        frames = read_frames(sel.frames_path, model)
        if frames.decoder_hash != config.decoder.digest():
            logger.warning("Frames were collected with another decoder config", path=sel.frames_path)
        return frames, False

    return collect_frames(config, model, service), True


def collect_frames(config: CampaignConfig, model: CodeModel, service: SimulationService) -> ErrorFrameSet:
    sel = config.selection
    ebn0_db = sel.ebn0_db
    if ebn0_db is None:
        ebn0_db = service.operating_point(model, config.decoder, sel.target_fer, sel.seed)
    frames = service.collect(model, config.decoder, ebn0_db, sel.num_frames, sel.seed, frame_cap=sel.frame_cap)
    if len(frames) == 0:
        raise InputError(f"no base-decoder failures within the frame cap at {ebn0_db:.3f} dB")
    return frames


def frames_destination(config: CampaignConfig) -> Path:
    """The configured frame file, so the next run finds it; else ``<prefix>_frames.bin``."""
    if config.selection.frames_path:
        path = Path(config.selection.frames_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path
    return output_path(config, "frames.bin")


def cmd_collect_frames(args: argparse.Namespace, settings: Settings) -> int:
    config = resolve_config(args, settings)
    model = load_code(config)
    service = SimulationService(settings, workers=worker_count(config, settings))
    frames = collect_frames(config, model, service)
    path = frames_destination(config)
    write_frames(path, frames)
    emit(
        [
            f"frames: {len(frames)} of {config.selection.num_frames}",
            f"simulated: {frames.frames_simulated}",
            f"ebn0_db: {frames.ebn0_db:.4f}",
            f"file: {path}",
        ]
    )
    return EXIT_OK


def _curve_lines(curve: List[float]) -> List[str]:
    return [f"K_aux={k}  coverage {value:.4f}" for k, value in enumerate(curve, start=1)]


def cmd_build_ensemble(args: argparse.Namespace, settings: Settings) -> int:
    config = resolve_config(args, settings)
    model = load_code(config)
    workers = worker_count(config, settings)
    service = SimulationService(settings, workers=workers)

    frames, collected = obtain_frames(config, model, service)
    if collected:
        write_frames(frames_destination(config), frames)

    pool = build_pool(model, config.pool, max_attempts=settings.max_attempts)
    write_pool(output_path(config, "pool.txt"), pool)

    records = evaluate_candidates(pool, frames, config.decoder, workers=workers, batch_size=settings.batch_size)
    write_coverage(output_path(config, "coverage.txt"), records, frames, model)

    sel = config.selection
    k_max = max(sel.k_max or sel.k_aux, sel.k_aux)
    curve = coverage_curve(records, len(frames), k_max)
    write_curve_csv(output_path(config, "curve.csv"), curve)

    selection = greedy_max_coverage(records, sel.k_aux, len(frames))
    write_selection_json(
        output_path(config, "selection.json"),
        selection,
        {"config_digest": config.digest(), "frames_hash": frames_hash(frames)},
    )
    ensemble_file = output_path(config, "ensemble.txt")
    write_pool(ensemble_file, pool.subset(selection.chosen))

    lines = [
        f"config digest: {config.digest()}",
        f"frames: {len(frames)}  pool: {len(pool)} ({pool.provenance.kind.value})",
        f"chosen: {selection.chosen}",
        f"relative coverage: {selection.relative_coverage:.4f}",
    ]
    if len(selection.chosen) < sel.k_aux:
        lines.append(f"coverage saturated after {len(selection.chosen)} paths")
    if pool.provenance.group_size > 1:
        group = best_group(records, pool.provenance.group_size, len(frames))
        lines.append(f"best group: {group.chosen}  coverage {group.relative_coverage:.4f}")
    lines += _curve_lines(curve)
    lines.append(f"ensemble: {ensemble_file}")
    emit(lines)
    return EXIT_OK


def cmd_coverage_curve(args: argparse.Namespace, settings: Settings) -> int:
    config = resolve_config(args, settings)
    model = load_code(config)
    pool = read_pool(args.pool, model)

    records: List[CoverageRecord]
    if args.coverage:
        records, num_frames = read_coverage(args.coverage, model)
    else:
        if not config.selection.frames_path:
            raise InputError("coverage-curve needs --coverage or --frames")
        frames = read_frames(config.selection.frames_path, model)
        records = evaluate_candidates(
            pool,
            frames,
            config.decoder,
            workers=worker_count(config, settings),
            batch_size=settings.batch_size,
        )
        num_frames = len(frames)
    if len(records) != len(pool):
        raise InputError(f"{len(records)} coverage records for a pool of {len(pool)} candidates")

    k_max = config.selection.k_max or len(pool)
    curve = coverage_curve(records, num_frames, k_max)
    path = output_path(config, "curve.csv")
    write_curve_csv(path, curve)
    emit(_curve_lines(curve) + [f"csv: {path}"])
    return EXIT_OK
