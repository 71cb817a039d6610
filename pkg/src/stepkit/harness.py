"""Batch evaluation over prediction/ground-truth corpora.

Produces completion rate, renderability rate (through a pluggable external
STEP-to-STL checker subprocess), the median scaled Chamfer distance, entity
count statistics and per-file records. Per-file failures are recorded, never
fatal to the batch.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    CheckerUnavailableError,
    EmptyBatchError,
    NoPairsFoundError,
    StepKitError,
)
from .geometry import GeometryConfig, geometric_reward, load_stl, scaled_chamfer
from .graph import entity_count
from .model import StepFile
from .parser import check_completion, parse_step

REPORT_SCHEMA_VERSION = 1

STEP_SUFFIXES = (".step", ".stp")

HISTOGRAM_BIN_WIDTH = 50
HISTOGRAM_RANGE_MAX = 1000


@dataclass(frozen=True)
class ExternalCheckerSpec:
    """Subprocess contract for the renderability check.

    ``command`` is a template whose ``{input}`` / ``{output}`` placeholders
    receive the STEP path and the STL path to produce. Exit code 0 plus an
    STL with at least one positive-area triangle counts as renderable.
    """

    command: str
    timeout_s: float = 60.0

    def __post_init__(self):
        if "{input}" not in self.command or "{output}" not in self.command:
            raise ValueError("checker command must contain {input} and {output}")


@dataclass
class CheckOutcome:
    renderable: bool
    stl_path: Path | None = None
    diagnostics: str = ""


def completion_rate(texts: list[str]) -> float:
    """Fraction of raw model outputs ending with the standard terminator."""
    if not texts:
        raise EmptyBatchError("completion rate of an empty batch is undefined")
    return sum(1 for t in texts if check_completion(t)) / len(texts)


def check_renderability(step_path: Path | str, spec: ExternalCheckerSpec,
                        output_path: Path | str | None = None) -> CheckOutcome:
    """Run the external checker on one STEP file.

    Timeouts and non-zero exits are reported as non-renderable with the
    reason recorded; a missing checker executable raises
    :class:`CheckerUnavailableError`.
    """
    step_path = Path(step_path)
    if output_path is None:
        output_path = Path(tempfile.mkstemp(suffix=".stl")[1])
    output_path = Path(output_path)
    argv = [part.format(input=str(step_path), output=str(output_path))
            for part in shlex.split(spec.command)]
    try:
        proc = subprocess.run(argv, capture_output=True, timeout=spec.timeout_s)
    except FileNotFoundError as exc:
        raise CheckerUnavailableError(f"checker executable not found: {exc}")
    except subprocess.TimeoutExpired:
        return CheckOutcome(False, None, "timeout")
    if proc.returncode != 0:
        return CheckOutcome(False, None, f"exit_code={proc.returncode}")
    try:
        mesh = load_stl(output_path.read_bytes())
    except FileNotFoundError:
        return CheckOutcome(False, None, "no output produced")
    except StepKitError as exc:
        return CheckOutcome(False, None, f"bad stl: {exc}")
    if not (mesh.triangle_areas() > 0).any():
        return CheckOutcome(False, None, "null shape (no positive-area triangle)")
    return CheckOutcome(True, output_path, "")


@dataclass
class EntityStats:
    avg: float
    min: int
    max: int
    bin_edges: list[int]
    counts: list[int]
    overflow: int

    def to_dict(self) -> dict:
        return {"avg": self.avg, "min": self.min, "max": self.max,
                "bin_edges": self.bin_edges, "counts": self.counts,
                "overflow": self.overflow}


def count_histogram(counts: list[int],
                    bin_width: int = HISTOGRAM_BIN_WIDTH,
                    range_max: int = HISTOGRAM_RANGE_MAX) -> dict:
    """Fixed-width histogram with one overflow bucket above ``range_max``."""
    edges = list(range(0, range_max + bin_width, bin_width))
    bins = [0] * (len(edges) - 1)
    overflow = 0
    for c in counts:
        if c >= range_max:
            overflow += 1
        else:
            bins[c // bin_width] += 1
    return {"bin_edges": edges, "counts": bins, "overflow": overflow}


def entity_stats(files: list[StepFile],
                 bin_width: int = HISTOGRAM_BIN_WIDTH,
                 range_max: int = HISTOGRAM_RANGE_MAX) -> EntityStats:
    """Mean/min/max entity counts plus a fixed-width histogram with a
    single overflow bucket above ``range_max``."""
    if not files:
        raise EmptyBatchError("entity statistics of an empty batch are undefined")
    counts = [entity_count(f) for f in files]
    hist = count_histogram(counts, bin_width, range_max)
    return EntityStats(avg=sum(counts) / len(counts), min=min(counts),
                       max=max(counts), bin_edges=hist["bin_edges"],
                       counts=hist["counts"], overflow=hist["overflow"])


def median(values: list[float]) -> float:
    """Median with the mean-of-two-middles convention for even sizes."""
    if not values:
        raise EmptyBatchError("median of an empty set is undefined")
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    if n % 2 == 1:
        return float(ordered[mid])
    return (ordered[mid - 1] + ordered[mid]) / 2.0


@dataclass
class FileRecord:
    file_id: str
    completed: bool = False
    renderable: bool | None = None  # None means the check was skipped
    scd: float | None = None
    reward: float | None = None
    entity_count: int | None = None
    entity_count_gt: int | None = None
    failure_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "file_id": self.file_id,
            "completed": self.completed,
            "renderable": self.renderable,
            "scd": self.scd,
            "reward": self.reward,
            "entity_count": self.entity_count,
            "entity_count_gt": self.entity_count_gt,
            "failure_reason": self.failure_reason,
        }


@dataclass
class EvalReport:
    records: list[FileRecord]
    aggregates: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "schema_version": REPORT_SCHEMA_VERSION,
            "aggregates": self.aggregates,
            "records": [r.to_dict() for r in self.records],
        }, indent=2)

    def to_csv(self) -> str:
        cols = ["file_id", "completed", "renderable", "scd", "reward",
                "entity_count", "entity_count_gt", "failure_reason"]
        lines = [",".join(cols)]
        for r in self.records:
            row = r.to_dict()
            cells = []
            for c in cols:
                v = row[c]
                if v is None:
                    cells.append("skipped" if c == "renderable" else "")
                else:
                    cells.append(str(v))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def aggregate_records(records: list[FileRecord], *, checker_ran: bool) -> dict:
    """Compute batch aggregates from per-file records.

    CR and RR use all files as the denominator (a prediction that fails to
    parse counts as non-renderable); MSCD covers only pairs with a defined
    scd, with the exclusion count reported alongside.
    """
    if not records:
        raise EmptyBatchError("cannot aggregate an empty batch")
    total = len(records)
    completed = sum(1 for r in records if r.completed)
    scds = [r.scd for r in records if r.scd is not None]
    pred_counts = [r.entity_count for r in records if r.entity_count is not None]
    gt_counts = [r.entity_count_gt for r in records if r.entity_count_gt is not None]
    agg: dict = {
        "total": total,
        "cr": completed / total,
        "rr": (sum(1 for r in records if r.renderable) / total) if checker_ran else None,
        "mscd": median(scds) if scds else None,
        "mscd_excluded": total - len(scds),
        "aec_pred": sum(pred_counts) / len(pred_counts) if pred_counts else None,
        "aec_gt": sum(gt_counts) / len(gt_counts) if gt_counts else None,
        "entity_min_pred": min(pred_counts) if pred_counts else None,
        "entity_max_pred": max(pred_counts) if pred_counts else None,
        "entity_min_gt": min(gt_counts) if gt_counts else None,
        "entity_max_gt": max(gt_counts) if gt_counts else None,
        "entity_histogram_pred": count_histogram(pred_counts) if pred_counts else None,
        "entity_histogram_gt": count_histogram(gt_counts) if gt_counts else None,
    }
    return agg


@dataclass(frozen=True)
class BatchConfig:
    checker: ExternalCheckerSpec | None = None
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    jobs: int = 1


def find_pairs(pred_dir: Path | str, gt_dir: Path | str) -> list[tuple[str, Path, Path]]:
    """Match prediction and ground-truth files by shared stem."""
    pred_dir = Path(pred_dir)
    gt_dir = Path(gt_dir)
    gt_by_stem = {p.stem: p for p in sorted(gt_dir.iterdir())
                  if p.suffix.lower() in STEP_SUFFIXES}
    pairs = []
    for pred in sorted(pred_dir.iterdir()):
        if pred.suffix.lower() not in STEP_SUFFIXES:
            continue
        gt = gt_by_stem.get(pred.stem)
        if gt is not None:
            pairs.append((pred.stem, pred, gt))
    if not pairs:
        raise NoPairsFoundError(f"no shared stems between {pred_dir} and {gt_dir}")
    return pairs


def evaluate_pair(file_id: str, pred_path: Path, gt_path: Path,
                  config: BatchConfig, workdir: Path) -> FileRecord:
    record = FileRecord(file_id=file_id)
    try:
        text = Path(pred_path).read_text()
    except OSError as exc:
        record.failure_reason = f"read: {exc}"
        record.renderable = False if config.checker else None
        return record
    record.completed = check_completion(text)

    try:
        pred_file = parse_step(text)
        record.entity_count = entity_count(pred_file)
    except StepKitError:
        record.failure_reason = "parse"
        record.renderable = False if config.checker else None
        _fill_gt_count(record, gt_path)
        return record
    _fill_gt_count(record, gt_path)

    if config.checker is None:
        return record

    pred_stl = workdir / f"{file_id}.pred.stl"
    gt_stl = workdir / f"{file_id}.gt.stl"
    pred_check = check_renderability(pred_path, config.checker, pred_stl)
    record.renderable = pred_check.renderable
    if not pred_check.renderable:
        record.failure_reason = f"render: {pred_check.diagnostics}"
        return record
    gt_check = check_renderability(gt_path, config.checker, gt_stl)
    if not gt_check.renderable:
        record.failure_reason = f"render_gt: {gt_check.diagnostics}"
        return record

    try:
        scd, _ = scaled_chamfer(load_stl(pred_stl.read_bytes()),
                                load_stl(gt_stl.read_bytes()),
                                config.geometry)
    except StepKitError as exc:
        record.failure_reason = f"registration: {exc}"
        return record
    record.scd = scd
    record.reward = geometric_reward(scd, config.geometry.thresholds)
    return record


def _fill_gt_count(record: FileRecord, gt_path: Path) -> None:
    try:
        gt_file = parse_step(Path(gt_path).read_text())
        record.entity_count_gt = entity_count(gt_file)
    except (OSError, StepKitError):
        pass


def batch_evaluate(pred_dir: Path | str, gt_dir: Path | str,
                   config: BatchConfig = BatchConfig()) -> EvalReport:
    """Evaluate every shared-stem pair and aggregate; see module docs."""
    pairs = find_pairs(pred_dir, gt_dir)
    with tempfile.TemporaryDirectory(prefix="stepkit-batch-") as tmp:
        workdir = Path(tmp)
        if config.jobs > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                records = list(pool.map(
                    lambda p: evaluate_pair(p[0], p[1], p[2], config, workdir),
                    pairs))
        else:
            records = [evaluate_pair(fid, pred, gt, config, workdir)
                       for fid, pred, gt in pairs]
    records.sort(key=lambda r: r.file_id)
    aggregates = aggregate_records(records, checker_ran=config.checker is not None)
    return EvalReport(records, aggregates)
