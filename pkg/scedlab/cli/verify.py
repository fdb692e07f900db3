import argparse
from typing import Any, Dict, List

import numpy as np
import structlog

from scedlab.cli.common import add_common_arguments, emit, load_code, output_path, resolve_config
from scedlab.core.config import Settings
from scedlab.core.exceptions import EXIT_OK, InputError
from scedlab.services.code import CodeModel, PathSpec, count_4cycles, dimension
from scedlab.services.ensemble import LCReport, verify_lc
from scedlab.services.gf2core import rank
from scedlab.services.storage import read_pool, write_json

logger = structlog.get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("verify", help="linear-covering and structure report for an ensemble file")
    add_common_arguments(parser)
    parser.add_argument("-e", "--ensemble", metavar="FILE", help="auxiliary paths (pool format)")
    parser.add_argument("--method", choices=["auto", "enumerate", "sample"], default="auto")
    parser.add_argument("--samples", type=int, help="codewords drawn when sampling")
    parser.add_argument("--sample-seed", type=int, default=0, dest="sample_seed", help="seed of the codeword sampler")
    parser.set_defaults(handler=cmd_verify)


def candidate_report(model: CodeModel, spec: PathSpec, base_cycles: int) -> Dict[str, Any]:
    pcm = spec.effective_pcm
    cycles = count_4cycles(pcm)
    if spec.is_subcode:
        weights = [r.weight for r in spec.appended_rows]
    else:
        weights = [int(model.pcm.row(i).weight) for i in spec.removed_rows]
    return {
        "label": spec.label,
        "subcode": spec.is_subcode,
        "row_weights": weights,
        "four_cycle_delta": cycles - base_cycles,
        "rank": rank(pcm),
        "dimension": dimension(spec),
    }


def lc_summary(report: LCReport) -> str:
    if report.method == "enumerate":
        verdict = "yes" if report.is_cover else "no"
        line = f"cover: {verdict} (exact)"
        if not report.is_cover:
            line += f", uncovered fraction {report.uncovered_fraction:.6f}"
        return line
    low, high = report.confidence_interval()
    verdict = "not refuted" if report.is_cover else "no"
    return (
        f"cover: {verdict} (sampled {report.checked} codewords), uncovered fraction "
        f"{report.uncovered_fraction:.4f} (95% CI {low:.4f}..{high:.4f})"
    )


def cmd_verify(args: argparse.Namespace, settings: Settings) -> int:
    config = resolve_config(args, settings)
    if not config.ensemble_path:
        raise InputError("verify needs an ensemble file (--ensemble or ensemble_path)")
    model = load_code(config)
    pool = read_pool(config.ensemble_path, model)
    if len(pool) == 0:
        raise InputError(f"{config.ensemble_path} lists no paths")

    method = args.method
    if method == "auto":
        method = "enumerate" if model.k <= settings.enumerate_max_k else "sample"
    lc = verify_lc(
        model,
        pool.candidates,
        method=method,
        rng=np.random.default_rng(args.sample_seed),
        samples=args.samples or settings.lc_sample_count,
        max_k=settings.enumerate_max_k,
    )

    base_cycles = count_4cycles(model.pcm)
    candidates = [candidate_report(model, spec, base_cycles) for spec in pool.candidates]

    lines: List[str] = [
        f"code: {model.name}  n={model.n} m={model.m} rank={model.rank} k={model.k} 4-cycles={base_cycles}",
        lc_summary(lc),
    ]
    for i, c in enumerate(candidates):
        flag = "  ADDS 4-CYCLES" if c["four_cycle_delta"] > 0 else ""
        lines.append(
            f"[{i}] {c['label'] or '-'}  weights {c['row_weights']}  "
            f"4-cycle delta {c['four_cycle_delta']:+d}  rank {c['rank']}  dim {c['dimension']}{flag}"
        )

    path = output_path(config, "verify.json")
    low, high = lc.confidence_interval()
    write_json(
        path,
        {
            "config_digest": config.digest(),
            "lc": {
                "method": lc.method,
                "is_cover": lc.is_cover,
                "checked": lc.checked,
                "uncovered": lc.uncovered,
                "uncovered_fraction": lc.uncovered_fraction,
                "ci95": [low, high],
            },
            "base": {"n": model.n, "m": model.m, "rank": model.rank, "k": model.k, "four_cycles": base_cycles},
            "candidates": candidates,
        },
    )
    lines.append(f"report: {path}")
    emit(lines)
    return EXIT_OK
