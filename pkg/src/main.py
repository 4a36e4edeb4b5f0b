"""maskcons command-line entry point.

    python -m src.main <command> [--config FILE] [--set KEY=VALUE ...] [--out DIR]
                                 [--jobs N] [--precision f64|f32] [--from-manifest PATH]
                                 [command flags]

Commands: toy2d, density, benchmark, gradcheck, maskviz. Parameters come
from model defaults, then the key=value config file, then --set pairs and
command flags. Every run writes manifest.json into its output directory
before computing anything.
"""

import argparse
import os
import sys
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.artifacts.manifest import RunManifest, build_id, load_manifest, write_manifest
from src.artifacts.netpbm import write_pgm, write_ppm
from src.artifacts.tables import write_csv
from src.config.keyvalue import build_model, read_keyvalue
from src.config.settings import get_settings
from src.density.corpus import load_corpus
from src.density.patches import neighbor_distance_map, render_distance_map as render_patch_distances
from src.density.triplets import DEFAULT_TRIPLETS, triplet_ratio_analysis
from src.errors import ConfigError, MaskConsError
from src.logging.runlog import generate_run_id, get_run_logger, run_id_var, setup_logging
from src.nn.gradcheck import GRADCHECK_TOLERANCE, run_check_suite
from src.perturb.masks import gen_cutmix_mask, gen_cutout_mask
from src.rng import stream
from src.synthseg.benchmark import BenchmarkConfig, run_benchmark
from src.synthseg.scenes import SceneSpec, dump_scenes
from src.toy2d.boundary import BoundarySpec, load_boundary
from src.toy2d.dataset import DataMode
from src.toy2d.experiment import ToyConfig, ToyReport, ToyVariantName, render_distance_map, run_toy_seeds

VERSION = "0.1.0"

logger = get_run_logger("cli")


# --- Per-command parameter models ---

class ToyCommandConfig(ToyConfig):
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    variants: list[ToyVariantName] = Field(default_factory=list)  # empty = [variant]
    modes: list[DataMode] = Field(default_factory=list)  # empty = [mode]
    boundary: BoundarySpec = Field(default_factory=BoundarySpec)


class DensityConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    corpus: str = ""  # directory of .ppm/.pgm pairs; empty = generate scenes
    n_scenes: int = Field(default=20, ge=2)
    scene: SceneSpec = Field(default_factory=SceneSpec)
    patch_sizes: list[int] = Field(default_factory=lambda: [15])
    neighbors: int = 4
    triplets: int = Field(default=DEFAULT_TRIPLETS, ge=1)
    stride: int | None = Field(default=None, ge=1)
    bins: int = Field(default=40, ge=1)
    render: int = Field(default=4, ge=0)  # distance-map renders for the first N images
    seed: int = 0

    @field_validator("neighbors")
    @classmethod
    def _neighbourhood(cls, value: int) -> int:
        if value not in (4, 8):
            raise ValueError("neighbors must be 4 or 8")
        return value


class GradcheckConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    h: float = Field(default=1e-5, gt=0)
    n_params: int = Field(default=64, ge=1)
    tolerance: float = Field(default=GRADCHECK_TOLERANCE, gt=0)


class MaskvizConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["cutout", "cutmix"] = "cutmix"
    n: int = Field(default=16, ge=1)
    seed: int = 0
    size: int = Field(default=64, ge=4)


# --- Command runners: (config, output dir, jobs) -> exit code ---

def run_toy2d(cfg: ToyCommandConfig, out: Path, jobs: int) -> int:
    dmap = load_boundary(cfg.boundary)
    write_ppm(out / "boundary.ppm", render_distance_map(dmap))
    reports: list[ToyReport] = []
    for mode in cfg.modes or [cfg.mode]:
        for variant in cfg.variants or [cfg.variant]:
            cell = cfg.model_copy(update={"variant": variant, "mode": mode})
            batch = run_toy_seeds(cell, cfg.boundary, cfg.seeds, jobs, out)
            reports.extend(batch)
            logger.info("toy variant done", extra={"run_data": {
                "variant": variant, "mode": mode,
                "mean_grid_accuracy": float(np.mean([r.grid_accuracy for r in batch]))}})
    write_csv(out / "toy2d.csv", ToyReport.CSV_HEADER, (r.row() for r in reports))
    return 0


def run_density(cfg: DensityConfig, out: Path, jobs: int) -> int:
    if cfg.corpus:
        corpus_dir = Path(cfg.corpus)
    else:
        corpus_dir = out / "scenes"
        dump_scenes(cfg.scene, list(range(cfg.n_scenes)), corpus_dir)
    corpus = load_corpus(corpus_dir)

    summary = []
    for patch in cfg.patch_sizes:
        for i, item in enumerate(corpus[:cfg.render]):
            dmap = neighbor_distance_map(item.image, patch, patch, cfg.neighbors)
            write_pgm(out / f"image{i:03d}_p{patch}_dist.pgm", render_patch_distances(dmap, patch, patch, item.labels))

        report = triplet_ratio_analysis(corpus, patch, cfg.triplets, stream(cfg.seed, "density", patch),
                                        stride=cfg.stride, bins=cfg.bins)
        write_csv(out / f"triplets_p{patch}.csv", ("image", "d_inter", "d_intra", "ratio"),
                  ((t.image, t.d_inter, t.d_intra, t.d_inter / t.d_intra) for t in report.triplets))
        write_csv(out / f"histogram_p{patch}.csv", ("bin_lo", "bin_hi", "count"),
                  zip(report.bin_edges[:-1], report.bin_edges[1:], report.histogram))
        summary.append((patch, len(report.ratios), report.median, float((report.ratios < 1.0).mean()),
                        report.excluded_zero, report.stride))
    write_csv(out / "density.csv",
              ("patch", "triplets", "median_ratio", "fraction_below_1", "excluded_zero", "stride"), summary)
    return 0


def run_benchmark_command(cfg: BenchmarkConfig, out: Path, jobs: int) -> int:
    report = run_benchmark(cfg, jobs, out)
    for method, (mean, std, count) in report.summary.items():
        logger.info("benchmark method", extra={"run_data": {
            "method": method, "miou_mean": mean, "miou_std": std, "seeds": count}})
    return 0


def run_gradcheck(cfg: GradcheckConfig, out: Path, jobs: int) -> int:
    if get_settings().dtype != np.float64:
        raise ConfigError("gradcheck needs 64-bit precision", key="precision")
    errors = run_check_suite(cfg.seed, cfg.h, cfg.n_params)
    write_csv(out / "gradcheck.csv", ("check", "max_rel_error", "passed"),
              ((name, err, err < cfg.tolerance) for name, err in errors.items()))
    failed = [name for name, err in errors.items() if not err < cfg.tolerance]
    if failed:
        logger.error("gradient check failed", extra={"run_data": {"failed": failed}})
        return 2
    logger.info("gradient check passed", extra={"run_data": {"worst": max(errors.values())}})
    return 0


def run_maskviz(cfg: MaskvizConfig, out: Path, jobs: int) -> int:
    rng = stream(cfg.seed, "mask")
    gen = gen_cutmix_mask if cfg.kind == "cutmix" else gen_cutout_mask
    rows = []
    for i in range(cfg.n):
        mask = gen(cfg.size, cfg.size, rng)
        mask.to_pgm(out / f"{cfg.kind}_{i:03d}.pgm")
        rows.append((i, mask.y0, mask.x0, mask.rh, mask.rw, mask.area))
    write_csv(out / "masks.csv", ("index", "y0", "x0", "rh", "rw", "area"), rows)
    return 0


@dataclass(frozen=True)
class Command:
    model: type[BaseModel]
    run: Callable[[BaseModel, Path, int], int]
    flags: tuple[str, ...]  # config keys also accepted as --flag VALUE


COMMANDS: dict[str, Command] = {
    "toy2d": Command(ToyCommandConfig, run_toy2d,
                     ("variant", "variants", "mode", "modes", "seeds", "steps", "sigma", "tol", "cons_weight")),
    "density": Command(DensityConfig, run_density,
                       ("corpus", "n_scenes", "patch_sizes", "neighbors", "triplets", "seed")),
    "benchmark": Command(BenchmarkConfig, run_benchmark_command,
                         ("methods", "seeds", "n_labeled", "n_unlabeled", "n_val", "full")),
    "gradcheck": Command(GradcheckConfig, run_gradcheck, ("seed", "h", "n_params")),
    "maskviz": Command(MaskvizConfig, run_maskviz, ("kind", "n", "seed", "size")),
}


# --- Argument parsing ---

class _Parser(argparse.ArgumentParser):
    """Usage errors become ConfigError so dispatch owns the exit code."""

    def error(self, message: str):
        raise ConfigError(message, key="argv")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="maskcons", description="Mask-based consistency regularization lab")
    parser.add_argument("--version", action="version", version=f"maskcons {VERSION}")

    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    common.add_argument("--out", help="run directory (default: $MASKCONS_OUT/<command>-<run id>)")
    common.add_argument("--jobs", type=int, help="parallel cells (default: MASKCONS_JOBS)")
    common.add_argument("--precision", choices=("f64", "f32"))
    common.add_argument("--from-manifest", dest="from_manifest", help="replay a previous run's manifest")

    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, command in COMMANDS.items():
        p = sub.add_parser(name, parents=[common])
        for key in command.flags:
            p.add_argument(f"--{key.replace('_', '-')}", dest=f"flag_{key}", metavar=key.upper())
    return parser


def _expand_seed_count(layer: dict[str, str]) -> dict[str, str]:
    """A bare integer for `seeds` is a count: seeds=5 means 0,1,2,3,4."""
    value = layer.get("seeds")
    if isinstance(value, str) and value.strip().isdigit():
        return {**layer, "seeds": ",".join(str(s) for s in range(int(value)))}
    return layer


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    layer = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects KEY=VALUE, got {pair!r}", key=key)
        layer[key.strip()] = value.strip()
    return layer


PRECISION_ENV = "MASKCONS_PRECISION"


# The switch travels through the environment so pool workers see it too;
# dispatch puts the caller's value back when the run ends
def _apply_precision(precision: str | None) -> None:
    if precision is None:
        return
    if precision not in ("f64", "f32"):
        raise ConfigError(f"precision must be f64 or f32, got {precision!r}", key="precision")
    os.environ[PRECISION_ENV] = precision
    get_settings.cache_clear()


def _restore_precision(saved: str | None) -> None:
    if os.environ.get(PRECISION_ENV) == saved:
        return
    if saved is None:
        os.environ.pop(PRECISION_ENV, None)
    else:
        os.environ[PRECISION_ENV] = saved
    get_settings.cache_clear()


def _manifest_seed(cfg: BaseModel) -> int:
    seed = getattr(cfg, "seed", None)
    if seed is None:
        seeds = getattr(cfg, "seeds", None) or [0]
        seed = seeds[0]
    return int(seed)


def _execute(args: argparse.Namespace) -> int:
    command = COMMANDS[args.command]
    run_id = run_id_var.get()

    # 1. Parameter layers: manifest < config file < --set < flags
    layers: list[dict] = []
    config_path = args.config or ""
    if args.from_manifest:
        manifest = load_manifest(args.from_manifest)
        if manifest.command != args.command:
            raise ConfigError(f"manifest is for {manifest.command!r}, not {args.command!r}", key="from_manifest")
        layers.append(manifest.params)
        config_path = config_path or manifest.config_path
        _apply_precision(manifest.precision)
    if args.config:
        layers.append(_expand_seed_count(read_keyvalue(args.config)))
    layers.append(_expand_seed_count(_parse_overrides(args.overrides)))
    flags = {key: getattr(args, f"flag_{key}") for key in command.flags if getattr(args, f"flag_{key}") is not None}
    layers.append(_expand_seed_count(flags))
    _apply_precision(args.precision)
    cfg = build_model(command.model, *layers)

    # 2. Run directory and manifest, before any computation
    settings = get_settings()
    out = Path(args.out) if args.out else Path(settings.out) / f"{args.command}-{run_id}"
    jobs = args.jobs if args.jobs is not None else settings.jobs
    if jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs}", key="jobs")
    manifest_path = write_manifest(RunManifest(
        command=args.command,
        config_path=config_path,
        params=cfg.model_dump(mode="json"),
        seed=_manifest_seed(cfg),
        build_id=build_id(),
        out_dir=str(out),
        run_id=run_id,
        precision=settings.precision,
    ))
    logger.info("run started", extra={"run_data": {
        "command": args.command, "out_dir": str(out), "manifest": str(manifest_path), "jobs": jobs}})

    # 3. Run
    code = command.run(cfg, out, jobs)
    logger.info("run finished", extra={"run_data": {"command": args.command, "exit_code": code}})
    return code


def dispatch(argv: list[str] | None = None) -> int:
    """Parse argv, run the command and map failures onto exit codes.

    0 success; 1 configuration errors; 2 divergence and other runtime failures.
    """
    setup_logging()
    saved_precision = os.environ.get(PRECISION_ENV)
    token = run_id_var.set(generate_run_id())
    try:
        args = build_parser().parse_args(argv)
        return _execute(args)
    except (ConfigError, ValidationError) as e:
        key = getattr(e, "key", "")
        logger.error("configuration error", extra={"run_data": {"error": str(e), "key": key}})
        print(f"maskcons: config error: {e}", file=sys.stderr)
        return 1
    except (MaskConsError, OSError) as e:
        logger.error("run failed", exc_info=True, extra={"run_data": {"error": str(e), "type": type(e).__name__}})
        print(f"maskcons: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    finally:
        _restore_precision(saved_precision)
        run_id_var.reset(token)


if __name__ == "__main__":
    sys.exit(dispatch())
