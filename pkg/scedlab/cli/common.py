"""Shared plumbing for the command modules: config resolution and code loading."""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Sequence

import structlog
from pydantic import ValidationError

from scedlab.core.config import Settings
from scedlab.core.exceptions import EXIT_USAGE, ConfigError
from scedlab.models import CampaignConfig
from scedlab.services.code import CodeModel, parse_alist, parse_puncture_mask, set_puncture_mask

logger = structlog.get_logger(__name__)


class CLIArgumentParser(argparse.ArgumentParser):
    """ArgumentParser reporting usage errors with exit status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# flag dest -> path inside the campaign config
OVERRIDES: Dict[str, Sequence[str]] = {
    "code": ("code", "path"),
    "mask": ("code", "puncture_mask_path"),
    "declared_k": ("code", "declared_k"),
    "decoder": ("decoder", "kind"),
    "normalization": ("decoder", "normalization"),
    "max_iterations": ("decoder", "max_iterations"),
    "llr_clip": ("decoder", "llr_clip"),
    "pool_kind": ("pool", "kind"),
    "pool_size": ("pool", "size"),
    "p": ("pool", "p"),
    "d_c": ("pool", "d_c"),
    "pool_seed": ("pool", "seed"),
    "k_aux": ("selection", "k_aux"),
    "k_max": ("selection", "k_max"),
    "frames": ("selection", "frames_path"),
    "num_frames": ("selection", "num_frames"),
    "ebn0": ("selection", "ebn0_db"),
    "target_fer": ("selection", "target_fer"),
    "collect_seed": ("selection", "seed"),
    "frame_cap": ("selection", "frame_cap"),
    "snr": ("simulation", "snr_points"),
    "min_errors": ("simulation", "min_frame_errors"),
    "max_frames": ("simulation", "max_frames"),
    "seed": ("simulation", "seed"),
    "output_dir": ("output", "directory"),
    "prefix": ("output", "prefix"),
    "ensemble": ("ensemble_path",),
    "workers": ("workers",),
}


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-c", "--config", metavar="FILE", help="campaign config (JSON)")
    parser.add_argument("--code", metavar="ALIST", help="parity-check matrix in alist format")
    parser.add_argument("--mask", metavar="FILE", help="puncture mask (one 0/1 per position)")
    parser.add_argument("--declared-k", type=int, dest="declared_k")
    parser.add_argument("--decoder", choices=["spa", "nms"])
    parser.add_argument("--normalization", type=float, help="NMS normalization factor in (0, 1]")
    parser.add_argument("--max-iterations", type=int, dest="max_iterations")
    parser.add_argument("--llr-clip", type=float, dest="llr_clip")
    parser.add_argument("-o", "--output-dir", dest="output_dir")
    parser.add_argument("--prefix")
    parser.add_argument("-w", "--workers", type=int)


def _set(tree: Dict[str, Any], path: Sequence[str], value: Any) -> None:
    node = tree
    for key in path[:-1]:
        node = node.setdefault(key, {})
    node[path[-1]] = value


def resolve_config(args: argparse.Namespace, settings: Settings) -> CampaignConfig:
    """Config file, then flag overrides, then validation."""
    raw: Dict[str, Any] = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: the top level must be an object")

    for dest, target in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            _set(raw, target, value)
    raw.setdefault("decoder", {}).setdefault("llr_clip", settings.llr_clip)
    if "code" not in raw or "path" not in raw["code"]:
        raise ConfigError("no code given; use --code or set code.path in the config")

    try:
        config = CampaignConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid campaign config: {e}") from e
    config = apply_frame_cap(config, settings.frame_cap)
    logger.info("Campaign config resolved", digest=config.digest())
    return config


def apply_frame_cap(config: CampaignConfig, cap: int) -> CampaignConfig:
    """Lower the config's frame limits to the runtime cap so the digest records the limits in force."""
    sim, sel = config.simulation, config.selection
    if sim.max_frames <= cap and sel.frame_cap <= cap:
        return config
    return config.model_copy(
        update={
            "simulation": sim.model_copy(update={"max_frames": min(sim.max_frames, cap)}),
            "selection": sel.model_copy(update={"frame_cap": min(sel.frame_cap, cap)}),
        }
    )


def load_code(config: CampaignConfig) -> CodeModel:
    path = Path(config.code.path)
    model = parse_alist(path.read_text(), declared_k=config.code.declared_k, name=path.stem)
    if config.code.puncture_mask_path:
        mask = parse_puncture_mask(Path(config.code.puncture_mask_path).read_text(), model.n)
        model = set_puncture_mask(model, mask)
    logger.info("Code loaded", name=model.name, n=model.n, m=model.m, k=model.k, n_tx=model.n_tx)
    return model


def output_path(config: CampaignConfig, suffix: str) -> Path:
    directory = Path(config.output.directory)
    directory.mkdir(parents=True, exist_ok=True)
    return directory / f"{config.output.prefix}_{suffix}"


def worker_count(config: CampaignConfig, settings: Settings) -> int:
    return config.workers or settings.workers


def emit(lines: List[str]) -> None:
    sys.stdout.write("".join(f"{line}\n" for line in lines))
    sys.stdout.flush()


def parse_snr_list(text: str) -> List[float]:
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from e


def config_echo(config: CampaignConfig) -> Dict[str, Any]:
    return {**config.model_dump(mode="json"), "digest": config.digest()}
