"""Command-line entry point exposing every pipeline stage.

Data goes to stdout (JSON where applicable), progress and diagnostics go
to stderr. Exit codes: 0 success, 1 per-file failures under ``batch
--strict`` (and failed ``roundtrip`` checks), 2 usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import (
    ENV_EMBED_API_KEY,
    Config,
    load_config,
)
from .errors import CheckerUnavailableError, StepKitError
from .geometry import geometric_reward, load_stl, scaled_chamfer
from .graph import build_graph, detect_cycles, entity_count, find_roots
from .harness import (
    BatchConfig,
    ExternalCheckerSpec,
    batch_evaluate,
    check_renderability,
    entity_stats,
)
from .model import StepFile
from .parser import check_completion, parse_step, serialize_step
from .reserialize import reserialize_dfs_with_map, verify_equivalence
from .retrieval import (
    LocalHashEmbedder,
    RemoteEmbedder,
    RetrievalIndex,
    assemble_prompt,
    build_index,
    query_nearest,
)

STEP_SUFFIXES = (".step", ".stp")


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _fail(message: str) -> int:
    _log(f"error: {message}")
    return 2


def _read_step(path: Path, max_entities: int | None = None) -> StepFile:
    text = path.read_text()
    if max_entities is None:
        return parse_step(text)
    return parse_step(text, max_entities=max_entities)


# --- subcommands ---

def cmd_parse(args, config: Config) -> int:
    path = Path(args.file)
    text = path.read_text()
    result: dict = {"file": str(path), "completed": check_completion(text)}
    try:
        step = parse_step(text) if args.max_entities is None else \
            parse_step(text, max_entities=args.max_entities)
        graph = build_graph(step)  # unresolved references invalidate the file
    except StepKitError as exc:
        result["valid"] = False
        result["error"] = str(exc)
        print(json.dumps(result, indent=None if args.json else 2))
        return 1
    result.update({
        "valid": True,
        "entities": entity_count(step),
        "header_records": len(step.header),
        "roots": find_roots(graph),
        "cycles": detect_cycles(graph),
    })
    print(json.dumps(result, indent=None if args.json else 2))
    return 0


def cmd_reserialize(args, config: Config) -> int:
    opts = config.reserialize
    if args.sig_digits is not None:
        opts = replace(opts, sig_digits=args.sig_digits)
    if args.no_annotate:
        opts = replace(opts, annotate=False)
    if args.root_order is not None:
        opts = replace(opts, root_order=args.root_order)
    step = _read_step(Path(args.file))
    out_file, id_map = reserialize_dfs_with_map(step, opts)
    out_path = Path(args.output)
    out_path.write_text(serialize_step(out_file))
    map_path = Path(args.id_map) if args.id_map else out_path.with_suffix(
        out_path.suffix + ".idmap.json")
    map_path.write_text(json.dumps({str(k): v for k, v in sorted(id_map.items())},
                                   indent=2) + "\n")
    _log(f"wrote {out_path} ({len(out_file.entities)} entities), id map {map_path}")
    return 0


def cmd_roundtrip(args, config: Config) -> int:
    a = _read_step(Path(args.file_a))
    b = _read_step(Path(args.file_b))
    equivalent = verify_equivalence(a, b)
    print(json.dumps({"equivalent": equivalent}))
    return 0 if equivalent else 1


def _checker_from_args(args, config: Config) -> ExternalCheckerSpec | None:
    command = getattr(args, "checker_cmd", None)
    timeout = getattr(args, "timeout_s", None)
    if command:
        return ExternalCheckerSpec(command, timeout if timeout else 60.0)
    if config.checker is not None and timeout:
        return ExternalCheckerSpec(config.checker.command, timeout)
    return config.checker


def _mesh_for(path: Path, checker: ExternalCheckerSpec | None, workdir: Path,
              tag: str):
    """Returns (mesh, failure_reason, detail)."""
    if path.suffix.lower() == ".stl":
        return load_stl(path.read_bytes()), None, None
    text = path.read_text()
    try:
        parse_step(text)
    except StepKitError as exc:
        return None, "parse", str(exc)
    if checker is None:
        raise CheckerUnavailableError(
            "a STEP input needs an external checker; pass --checker-cmd or "
            "configure one (STL inputs skip the checker)")
    outcome = check_renderability(path, checker, workdir / f"{tag}.stl")
    if not outcome.renderable:
        return None, "render", outcome.diagnostics
    return load_stl(outcome.stl_path.read_bytes()), None, None


def cmd_metrics(args, config: Config) -> int:
    import tempfile

    geometry = config.geometry
    if args.n_points is not None:
        geometry = replace(geometry, n_points=args.n_points)
    if args.seed is not None:
        geometry = replace(geometry, seed=args.seed)
    thresholds = geometry.thresholds
    if args.delta_low is not None or args.delta_high is not None:
        low = args.delta_low if args.delta_low is not None else thresholds.delta_low
        high = args.delta_high if args.delta_high is not None else thresholds.delta_high
        thresholds = type(thresholds)(low, high)
        geometry = replace(geometry, thresholds=thresholds)

    checker = _checker_from_args(args, config)
    verdict: dict = {"pred": args.pred, "gt": args.gt}
    with tempfile.TemporaryDirectory(prefix="stepkit-metrics-") as tmp:
        workdir = Path(tmp)
        try:
            pred_mesh, reason, detail = _mesh_for(Path(args.pred), checker, workdir, "pred")
            if pred_mesh is None:
                verdict.update({"scd": None, "reward": 0.0,
                                "failure_reason": reason, "detail": detail})
                print(json.dumps(verdict))
                return 0
            gt_mesh, reason, detail = _mesh_for(Path(args.gt), checker, workdir, "gt")
            if gt_mesh is None:
                verdict.update({"scd": None, "reward": 0.0,
                                "failure_reason": f"{reason}_gt", "detail": detail})
                print(json.dumps(verdict))
                return 0
            scd, alignment = scaled_chamfer(pred_mesh, gt_mesh, geometry)
        except CheckerUnavailableError as exc:
            # tooling problem, not a verdict about the sample
            return _fail(str(exc))
        except StepKitError as exc:
            verdict.update({"scd": None, "reward": 0.0,
                            "failure_reason": "registration", "detail": str(exc)})
            print(json.dumps(verdict))
            return 0
    verdict.update({
        "scd": scd,
        "reward": geometric_reward(scd, thresholds),
        "stage_residuals": alignment.stage_residuals,
        "icp_iterations": alignment.icp_iterations,
    })
    print(json.dumps(verdict))
    return 0


def cmd_batch(args, config: Config) -> int:
    checker = _checker_from_args(args, config)
    geometry = config.geometry
    if args.seed is not None:
        geometry = replace(geometry, seed=args.seed)
    batch_config = BatchConfig(checker=checker, geometry=geometry,
                               jobs=args.jobs if args.jobs else config.jobs)
    report = batch_evaluate(args.pred_dir, args.gt_dir, batch_config)
    payload = report.to_json()
    if args.out:
        Path(args.out).write_text(payload + "\n")
        _log(f"wrote {args.out}")
    else:
        print(payload)
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
        _log(f"wrote {args.csv}")
    failures = [r for r in report.records if r.failure_reason]
    _log(f"evaluated {len(report.records)} pairs, {len(failures)} with failures")
    if args.strict and failures:
        return 1
    return 0


def _embedder_for(config: Config, dimension: int | None = None):
    settings = config.index
    if settings.endpoint:
        return RemoteEmbedder(endpoint=settings.endpoint, model=settings.model,
                              api_key=os.environ.get(ENV_EMBED_API_KEY),
                              dimension=dimension or settings.dimension)
    return LocalHashEmbedder(dimension=dimension or settings.dimension)


def cmd_index_build(args, config: Config) -> int:
    pairs = []
    with open(args.pairs) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "caption" not in obj or "step_ref" not in obj:
                return _fail(f"{args.pairs}:{line_no}: need caption and step_ref keys")
            pairs.append((obj["caption"], obj["step_ref"]))
    index = build_index(pairs, _embedder_for(config, args.dimension))
    index.save(args.out)
    _log(f"indexed {len(pairs)} captions into {args.out}")
    return 0


def cmd_index_query(args, config: Config) -> int:
    index = RetrievalIndex.load(args.index)
    if isinstance(index.embedder, RemoteEmbedder) and not index.embedder.api_key:
        key = os.environ.get(ENV_EMBED_API_KEY)
        if key:
            index.embedder = replace(index.embedder, api_key=key)
    exclude = args.caption if args.leave_one_out else None
    hits = query_nearest(index, args.caption, args.k, exclude_caption=exclude)
    payload = [{"caption": h.entry.caption, "step_ref": h.entry.step_ref,
                "score": h.score} for h in hits]
    print(json.dumps(payload, indent=None if args.json else 2))
    return 0


def cmd_prompt(args, config: Config) -> int:
    template = None
    if args.template:
        template = Path(args.template).read_text()
    hit = None
    if not args.no_rag:
        index = RetrievalIndex.load(args.index)
        exclude = args.caption if args.leave_one_out else None
        hits = query_nearest(index, args.caption, 1, exclude_caption=exclude)
        hit = hits[0] if hits else None
    kwargs = {"reserialize_opts": config.reserialize}
    if template is not None:
        kwargs["template"] = template
    print(assemble_prompt(args.caption, hit, **kwargs), end="")
    return 0


def _iter_step_paths(paths: list[str]):
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            for child in sorted(p.iterdir()):
                if child.suffix.lower() in STEP_SUFFIXES:
                    yield child
        else:
            yield p


def cmd_filter(args, config: Config) -> int:
    kept = []
    for path in _iter_step_paths(args.paths):
        try:
            step = _read_step(path)
        except (OSError, StepKitError) as exc:
            _log(f"skipping {path}: {exc}")
            continue
        if entity_count(step) < args.max_entities:
            kept.append(str(path))
    if args.json:
        print(json.dumps(kept))
    else:
        for path in kept:
            print(path)
    return 0


def cmd_stats(args, config: Config) -> int:
    files = []
    for path in _iter_step_paths(args.paths):
        try:
            files.append(_read_step(path))
        except (OSError, StepKitError) as exc:
            _log(f"skipping {path}: {exc}")
    if not files:
        return _fail("no parseable STEP files given")
    stats = entity_stats(files)
    print(json.dumps(stats.to_dict(), indent=None if args.json else 2))
    return 0


# --- argument wiring ---

def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stepkit",
        description="STEP file parsing, DFS reserialization, caption retrieval "
                    "and geometric evaluation.")
    parser.add_argument("--version", action="version", version=f"stepkit {__version__}")
    parser.add_argument("--config", help="YAML config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="validate a STEP file and print stats")
    p.add_argument("file")
    p.add_argument("--max-entities", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("reserialize", help="DFS reserialization with id-map sidecar")
    p.add_argument("file")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--sig-digits", type=int, default=None)
    p.add_argument("--no-annotate", action="store_true")
    p.add_argument("--root-order", choices=["original-id", "canonical"], default=None)
    p.add_argument("--id-map", default=None)
    p.set_defaults(func=cmd_reserialize)

    p = sub.add_parser("roundtrip", help="check two files for semantic equivalence")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("metrics", help="scaled chamfer distance and reward for one pair")
    p.add_argument("--pred", required=True, help="prediction (.step/.stp or .stl)")
    p.add_argument("--gt", required=True, help="ground truth (.step/.stp or .stl)")
    p.add_argument("--checker-cmd", default=None,
                   help="STEP-to-STL command template with {input} and {output}")
    p.add_argument("--timeout-s", type=float, default=None)
    p.add_argument("--n-points", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--delta-low", type=float, default=None)
    p.add_argument("--delta-high", type=float, default=None)
    p.add_argument("--json", action="store_true", help="output is always JSON")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("batch", help="evaluate a prediction dir against a ground-truth dir")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--checker-cmd", default=None)
    p.add_argument("--timeout-s", type=float, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.add_argument("--csv", default=None, help="write the per-file CSV here")
    p.add_argument("--strict", action="store_true",
                   help="exit 1 when any pair records a failure")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("index", help="caption retrieval index")
    index_sub = p.add_subparsers(dest="index_command", required=True)

    pb = index_sub.add_parser("build", help="embed caption/step pairs into an index")
    pb.add_argument("--pairs", required=True,
                    help="JSONL with {caption, step_ref} per line")
    pb.add_argument("--out", required=True)
    pb.add_argument("--dimension", type=int, default=None)
    pb.set_defaults(func=cmd_index_build)

    pq = index_sub.add_parser("query", help="nearest captions for a query")
    pq.add_argument("--index", required=True)
    pq.add_argument("--caption", required=True)
    pq.add_argument("-k", type=int, default=1)
    pq.add_argument("--leave-one-out", action="store_true")
    pq.add_argument("--json", action="store_true")
    pq.set_defaults(func=cmd_index_query)

    p = sub.add_parser("prompt", help="assemble a retrieval-augmented prompt")
    p.add_argument("--index", default=None)
    p.add_argument("--caption", required=True)
    p.add_argument("--template", default=None)
    p.add_argument("--no-rag", action="store_true")
    p.add_argument("--leave-one-out", action="store_true")
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("filter", help="list files under an entity-count cutoff")
    p.add_argument("paths", nargs="+")
    p.add_argument("--max-entities", type=int, default=500)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("stats", help="entity-count statistics and histogram")
    p.add_argument("paths", nargs="+")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    if args.command == "prompt" and not args.no_rag and not args.index:
        parser.error("prompt needs --index unless --no-rag is set")
    try:
        config = load_config(args.config)
    except StepKitError as exc:
        return _fail(str(exc))
    try:
        return args.func(args, config)
    except FileNotFoundError as exc:
        return _fail(str(exc))
    except StepKitError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
