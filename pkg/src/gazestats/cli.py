"""Command-line front end.

    gazestats validate      --samples S --meta M [--out DIR]
    gazestats subject-error --samples S --meta M --out DIR
    gazestats depth-curve   --samples S --meta M --out DIR
    gazestats directional   --samples S --meta M --out DIR [--format csv|svg|both]
    gazestats synth         --config C --out S.jsonl [--meta M.jsonl]
    gazestats selftest      [--only 1,4,...] [--out DIR]

Exit status: 0 success, 1 data/config errors, 2 usage errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .dataio import file_digest, load_dataset, write_dataset
from .directional import GridConfig, run_grid
from .errors import GazeStatsError
from .metrics import (
    SPLITS,
    binned_summary,
    default_edges,
    depth_curve_to_csv,
    depth_error_curve,
    groups_to_csv,
    split_summary,
    subject_errors,
    subject_errors_to_csv,
)
from .outputs import FORMATS, write_outputs
from .synth import SynthConfig, generate

logger = logging.getLogger("gazestats")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2

ANALYSIS_DEFAULTS = {
    "strictness": "strict",
    "grid": GridConfig().to_dict(),
    "depth_curve": {"n_bins": 10, "range_cm": [30.0, 350.0]},
    "splits": {"age_edges": None, "ipd_edges": None},
}


@dataclass
class RunManifest:
    command: str
    tool_version: str
    config: dict
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    wall_time_s: float = 0.0

    @property
    def config_digest(self) -> str:
        return hashlib.sha256(json.dumps(self.config, sort_keys=True).encode()).hexdigest()

    def to_json(self) -> str:
        doc = {
            "command": self.command,
            "tool_version": self.tool_version,
            "config_digest": self.config_digest,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_time_s": round(self.wall_time_s, 3),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors print help and exit 2
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"\n{self.prog}: error: {message}\n")


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _analysis_config(args) -> dict:
    cfg = json.loads(json.dumps(ANALYSIS_DEFAULTS))
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise GazeStatsError(f"cannot read config {args.config}: {exc}") from None
        cfg = _merge(cfg, user)
    grid = cfg["grid"]
    if args.grid_step is not None:
        grid["step_deg"] = args.grid_step
    if args.radius is not None:
        grid["neighborhood_radius_deg"] = args.radius
    if args.min_cell_samples is not None:
        grid["min_cell_samples"] = args.min_cell_samples
    return cfg


def _load(args, cfg):
    if not args.samples or not args.meta:
        raise _Usage("--samples and --meta are required")
    return load_dataset(args.samples, args.meta, cfg.get("strictness", "strict"))


class _Usage(Exception):
    pass


def _need_out(args) -> Path:
    if not args.out:
        raise _Usage("--out is required")
    return Path(args.out)


def _finish(manifest: RunManifest, out_dir: Path, t0: float) -> RunManifest:
    manifest.wall_time_s = time.perf_counter() - t0
    (out_dir / "manifest.json").write_text(manifest.to_json())
    return manifest


def cmd_validate(args) -> tuple[int, RunManifest]:
    t0 = time.perf_counter()
    ds = load_dataset(args.samples, args.meta, "report") if args.samples and args.meta else None
    if ds is None:
        raise _Usage("--samples and --meta are required")
    manifest = RunManifest("validate", __version__, {"strictness": "report"}, _inputs(args))
    lines = [str(v) for v in ds.violations]
    for line in lines:
        print(line)
    print(f"{len(ds)} records loaded, {len(lines)} violations")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        text = "source,line,field,message\n" + "".join(
            f'{v.source},{v.line},{v.field or ""},"{v.message}"\n' for v in ds.violations
        )
        (out / "violations.csv").write_text(text)
        manifest.outputs = {"violations.csv": file_digest(out / "violations.csv")}
        _finish(manifest, out, t0)
    return (EXIT_DATA if lines else EXIT_OK), manifest


def _inputs(args) -> dict[str, str]:
    return {str(p): file_digest(p) for p in (args.samples, args.meta) if p}


def cmd_subject_error(args) -> tuple[int, RunManifest]:
    t0 = time.perf_counter()
    cfg = _analysis_config(args)
    out = _need_out(args)
    ds = _load(args, cfg)
    pooled = subject_errors(ds)
    per_env = subject_errors(ds, by_environment=True)
    tables = {
        "subject_errors.csv": subject_errors_to_csv(pooled),
        "subject_errors_by_environment.csv": subject_errors_to_csv(per_env),
    }
    for split in SPLITS:
        rows = split_summary(per_env if split == "environment" else pooled, ds.meta, split)
        tables[f"split_{split}.csv"] = groups_to_csv(rows)
    metas = [ds.meta[e.subject_id] for e in pooled]
    for attr, key, name in (("age", "age_edges", "age_curve.csv"), ("ipd_mm", "ipd_edges", "ipd_curve.csv")):
        edges = cfg["splits"][key] or default_edges(attr, [getattr(m, attr) for m in metas])
        cfg["splits"][key] = [float(e) for e in edges]
        tables[name] = groups_to_csv(binned_summary(pooled, ds.meta, attr, edges))
    outputs = write_outputs(None, tables, out, "csv")
    manifest = RunManifest("subject-error", __version__, cfg, _inputs(args), outputs)
    _finish(manifest, out, t0)
    return EXIT_OK, manifest


def cmd_depth_curve(args) -> tuple[int, RunManifest]:
    t0 = time.perf_counter()
    cfg = _analysis_config(args)
    out = _need_out(args)
    ds = _load(args, cfg)
    dc = cfg["depth_curve"]
    rows = depth_error_curve(ds, int(dc["n_bins"]), tuple(dc["range_cm"]))
    outputs = write_outputs(None, {"depth_curve.csv": depth_curve_to_csv(rows)}, out, "csv")
    manifest = RunManifest("depth-curve", __version__, cfg, _inputs(args), outputs)
    _finish(manifest, out, t0)
    return EXIT_OK, manifest


def cmd_directional(args) -> tuple[int, RunManifest]:
    t0 = time.perf_counter()
    cfg = _analysis_config(args)
    out = _need_out(args)
    ds = _load(args, cfg)
    grid_cfg = GridConfig.from_dict(cfg["grid"])
    cells = run_grid(ds, grid_cfg, threads=args.threads)
    cfg["format"] = args.format
    outputs = write_outputs(cells, None, out, args.format)
    manifest = RunManifest("directional", __version__, cfg, _inputs(args), outputs)
    _finish(manifest, out, t0)
    n_valid = sum(c.valid for c in cells)
    print(f"{len(cells)} cells, {n_valid} valid")
    return EXIT_OK, manifest


def cmd_synth(args) -> tuple[int, RunManifest]:
    t0 = time.perf_counter()
    if not args.config:
        raise _Usage("--config is required")
    out = _need_out(args)
    cfg = SynthConfig.from_json(args.config)
    if args.seed is not None:
        cfg = SynthConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    meta_path = Path(args.meta) if args.meta else out.with_name(out.stem + ".meta.jsonl")
    ds = generate(cfg, threads=args.threads)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out, meta_path)
    manifest = RunManifest(
        "synth",
        __version__,
        cfg.to_dict(),
        {str(args.config): file_digest(args.config)},
        {out.name: file_digest(out), meta_path.name: file_digest(meta_path)},
    )
    manifest.wall_time_s = time.perf_counter() - t0
    out.with_name(out.stem + ".manifest.json").write_text(manifest.to_json())
    print(f"wrote {len(ds)} samples for {len(ds.meta)} subjects")
    return EXIT_OK, manifest


def cmd_selftest(args) -> tuple[int, RunManifest]:
    from .selftest import run_all

    t0 = time.perf_counter()
    only = None
    if args.only:
        try:
            only = sorted({int(x) for x in args.only.split(",")})
        except ValueError:
            raise _Usage("--only takes a comma-separated list of criterion numbers") from None
    try:
        results = run_all(only=only, threads=args.threads)
    except ValueError as exc:
        raise _Usage(str(exc)) from None
    for r in results:
        print(r.line())
    manifest = RunManifest("selftest", __version__, {"only": only})
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report = json.dumps([r.to_dict() for r in results], indent=2) + "\n"
        (out / "selftest.json").write_text(report)
        manifest.outputs = {"selftest.json": file_digest(out / "selftest.json")}
        _finish(manifest, out, t0)
    return (EXIT_OK if all(r.passed for r in results) else EXIT_DATA), manifest


COMMANDS = {
    "validate": cmd_validate,
    "subject-error": cmd_subject_error,
    "depth-curve": cmd_depth_curve,
    "directional": cmd_directional,
    "synth": cmd_synth,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gazestats", description="Gaze-estimation accuracy analysis.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--samples")
        p.add_argument("--meta")
        p.add_argument("--out")
        p.add_argument("--config")
        p.add_argument("--grid-step", type=float)
        p.add_argument("--radius", type=float)
        p.add_argument("--min-cell-samples", type=int)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int)
        p.add_argument("--format", choices=FORMATS, default="both")
        if name == "selftest":
            p.add_argument("--only", help="comma-separated criterion numbers")
    return parser


def run(argv=None) -> tuple[int, RunManifest | None]:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return COMMANDS[args.command](args)
    except _Usage as exc:
        parser.error(str(exc))
    except (GazeStatsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA, None
    return EXIT_DATA, None  # unreachable: parser.error exits


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    status, _ = run(argv)
    return status


if __name__ == "__main__":
    sys.exit(main())
