"""Campaign driver: generate, optimize, emit, simulate, test, persist.

A campaign runs numbered cases, each in its own directory under
``cases/``.  Per case: grow a model (guided), pick the best pipelining
strategy, emit every requested dialect, record the golden trace and
self-checking testbenches, then run the configured tool adapters and
classify the outcome.  Case directories are self-contained and resumable:
a finished case leaves a ``case.json`` record and is skipped on re-run, so
an interrupted campaign picks up where it stopped and ends with the same
stats.

``stats.json`` holds only deterministic content (metrics, verdicts,
signatures); wall-clock timings live in the per-case records and in the
human-readable report, so repeated runs with one seed byte-match their
stats.
"""

from __future__ import annotations

import json
import re
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .catalog import BlockCatalog, default_catalog
from .generator import (
    GenerationConfig,
    ProbabilityMatrix,
    default_matrix,
    generate_model,
)
from .graph import metrics, serialize
from .guidance import syntax_guidance
from .harness import (
    CONSISTENT,
    CRASH,
    DefectReport,
    DiffVerdict,
    MISCOMPILATION,
    ToolAdapter,
    compare,
    run_case,
    write_result_files,
)
from .hdl_ast import Dialect
from .emitter import emit
from .interpreter import make_stimulus, simulate
from .rng import Rng
from .testbench import make_testbench
from .timing import optimize


class ConfigError(Exception):
    pass


@dataclass
class CampaignConfig:
    generation: GenerationConfig
    out_dir: str
    cases: int = 10
    adapters: list = field(default_factory=list)
    dialects: tuple[str, ...] = ("verilog", "vhdl", "systemverilog")
    parallelism: int = 1
    generate_only: bool = False
    stop_on_first_defect: bool = False
    wall_time_limit: Optional[float] = None
    cycles: int = 24
    opt_levels: int = 3
    matrix_overrides: dict = field(default_factory=dict)
    delay_weights: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        if self.cases < 0:
            raise ConfigError("cases must be nonnegative")
        if self.cycles < 1:
            raise ConfigError("cycles must be at least 1")
        if not self.generate_only and not self.adapters:
            self.generate_only = True  # nothing to run against
        for d in self.dialects:
            Dialect(d)


def load_config(path, out_dir: Optional[str] = None) -> CampaignConfig:
    """Campaign configuration from a JSON file with keys
    generation / matrix / adapters / limits / delay_weights."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    gen_doc = doc.get("generation", {})
    try:
        generation = GenerationConfig(
            seed=int(gen_doc.get("seed", 0)),
            block_count_target=int(gen_doc.get("block_count_target", 35)),
            b_max=gen_doc.get("b_max"),
            hdl_max=int(gen_doc.get("hdl_max", 1)),
            blocks_per_round=int(gen_doc.get("blocks_per_round", 4)),
            max_depth=int(gen_doc.get("max_depth", 4)),
            max_ref_fanout=int(gen_doc.get("max_ref_fanout", 8)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad generation section: {exc}") from exc
    matrix_overrides = {}
    matrix_ref = doc.get("matrix")
    if isinstance(matrix_ref, str):
        mdoc = json.loads((Path(path).parent / matrix_ref).read_text())
        matrix_overrides = mdoc.get("matrix", {})
    elif isinstance(matrix_ref, dict):
        matrix_overrides = matrix_ref.get("matrix", matrix_ref)
    limits = doc.get("limits", {})
    try:
        adapters = [ToolAdapter.from_dict(a) for a in doc.get("adapters", [])]
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad adapter definition: {exc}") from exc
    return CampaignConfig(
        generation=generation,
        out_dir=out_dir or doc.get("out_dir", "campaign-out"),
        cases=int(limits.get("cases", doc.get("cases", 10))),
        adapters=adapters,
        dialects=tuple(doc.get("dialects", ["verilog", "vhdl", "systemverilog"])),
        parallelism=int(limits.get("jobs", 1)),
        generate_only=bool(limits.get("generate_only", False)),
        stop_on_first_defect=bool(limits.get("stop_on_first_defect", False)),
        wall_time_limit=limits.get("wall_time_s"),
        cycles=int(limits.get("cycles", 24)),
        opt_levels=int(limits.get("opt_levels", 3)),
        matrix_overrides=matrix_overrides,
        delay_weights=doc.get("delay_weights", {}),
    )


@dataclass
class CampaignStats:
    cases_completed: int
    verdict_tally: dict
    unique_defects: int
    per_case: list
    median_nodes: Optional[float] = None
    median_connections: Optional[float] = None
    median_references: Optional[float] = None
    median_gen_emit_s: Optional[float] = None

    def deterministic_json(self) -> dict:
        return {
            "cases_completed": self.cases_completed,
            "verdict_tally": dict(sorted(self.verdict_tally.items())),
            "unique_defects": self.unique_defects,
            "median_nodes": self.median_nodes,
            "median_connections": self.median_connections,
            "median_references": self.median_references,
            "cases": [
                {k: rec[k] for k in
                 ("case", "metrics", "verdict", "signature", "dialects")}
                for rec in self.per_case
            ],
        }


def _case_id(index: int) -> str:
    return f"{index:05d}"


def _campaign_tools(config: CampaignConfig, catalog: BlockCatalog,
                    matrix: ProbabilityMatrix):
    if config.delay_weights:
        catalog = catalog.with_delay_overrides(config.delay_weights)
    if config.matrix_overrides:
        matrix = matrix.override(config.matrix_overrides)
    return catalog, matrix


def execute_case(config: CampaignConfig, index: int) -> dict:
    """Run one case end to end inside its own directory; returns the
    persisted record (also written to case.json)."""
    catalog, matrix = _campaign_tools(config, default_catalog(),
                                      default_matrix())
    case_dir = Path(config.out_dir) / "cases" / _case_id(index)
    case_dir.mkdir(parents=True, exist_ok=True)

    stream = Rng(config.generation.seed).fork(index)
    gen_seed = stream.next_u64()
    stim_seed = stream.next_u64()
    guide_seed = stream.next_u64()
    gen_cfg = replace(config.generation, seed=gen_seed)

    t0 = time.monotonic()
    model = generate_model(gen_cfg, catalog, matrix,
                           syntax_guidance(gen_cfg, catalog, guide_seed))
    generated_metrics = metrics(model)
    choice = None
    if config.opt_levels > 0:
        model, choice = optimize(model, config.opt_levels, catalog)
    designs = {}
    testbenches = {}
    for name in config.dialects:
        dialect = Dialect(name)
        designs[dialect] = emit(model, dialect, catalog)
    gen_emit_s = time.monotonic() - t0

    stimulus = make_stimulus(model, stim_seed, config.cycles)
    golden = simulate(model, stimulus, catalog)
    for dialect, design in designs.items():
        (case_dir / f"design.{dialect.extension}").write_text(design.text)
        testbenches[dialect] = make_testbench(design, stimulus, golden)
        (case_dir / f"tb.{dialect.extension}").write_text(testbenches[dialect])
    (case_dir / "model.json").write_text(serialize(model))
    (case_dir / "golden.trace").write_text(golden.text())

    results = []
    tool_s = 0.0
    if not config.generate_only and config.adapters:
        for dialect, design in designs.items():
            dialect_results = run_case(
                design, golden, config.adapters,
                case_dir / "sandbox" / dialect.value,
                testbench=testbenches[dialect],
            )
            for r in dialect_results:
                r.adapter = f"{r.adapter}.{dialect.value}"
            results.extend(dialect_results)
        write_result_files(results, case_dir / "results")
        tool_s = sum(r.wall_time for r in results)
    verdict = compare(results, golden) if results else DiffVerdict(CONSISTENT)

    final_metrics = metrics(model)
    record = {
        "case": _case_id(index),
        "seeds": {"generation": gen_seed, "stimulus": stim_seed,
                  "guidance": guide_seed},
        "metrics": {
            "node_count": generated_metrics.node_count,
            "connection_count": generated_metrics.connection_count,
            "reference_count": generated_metrics.reference_count,
        },
        "metrics_final": {
            "node_count": final_metrics.node_count,
            "connection_count": final_metrics.connection_count,
            "reference_count": final_metrics.reference_count,
        },
        "optimization": None if choice is None else {
            "chosen": choice.chosen, "depth": choice.depth,
            "metrics": {k: v for k, v in sorted(choice.metrics.items())},
        },
        "dialects": sorted(d.value for d in designs),
        "verdict": verdict.to_json(),
        "signature": verdict.signature,
        "gen_emit_s": round(gen_emit_s, 4),
        "tool_s": round(tool_s, 4),
        "reproduction": [line for r in results for line in r.command_lines],
    }
    (case_dir / "case.json").write_text(
        json.dumps(record, indent=2, sort_keys=True) + "\n")
    return record


def _safe_signature(sig: str) -> str:
    import hashlib
    slug = re.sub(r"[^A-Za-z0-9._-]+", "_", sig)[:80].strip("_")
    digest = hashlib.sha256(sig.encode()).hexdigest()[:10]
    return f"{slug}-{digest}" if slug else digest


def run_campaign(config: CampaignConfig) -> CampaignStats:
    out = Path(config.out_dir)
    (out / "cases").mkdir(parents=True, exist_ok=True)
    started = time.monotonic()

    records: dict[int, dict] = {}
    pending = []
    for index in range(config.cases):
        marker = out / "cases" / _case_id(index) / "case.json"
        if marker.exists():
            records[index] = json.loads(marker.read_text())
        else:
            pending.append(index)

    def out_of_time() -> bool:
        return (config.wall_time_limit is not None
                and time.monotonic() - started > config.wall_time_limit)

    def hit_defect() -> bool:
        return config.stop_on_first_defect and any(
            rec["verdict"]["classification"] in (CRASH, MISCOMPILATION)
            for rec in records.values())

    if config.parallelism == 1:
        for index in pending:
            if out_of_time() or hit_defect():
                break
            records[index] = execute_case(config, index)
    else:
        with ProcessPoolExecutor(max_workers=config.parallelism) as pool:
            for wave_start in range(0, len(pending), config.parallelism):
                if out_of_time() or hit_defect():
                    break
                wave = pending[wave_start:wave_start + config.parallelism]
                futures = {i: pool.submit(execute_case, config, i) for i in wave}
                for i, fut in futures.items():
                    records[i] = fut.result()

    stats = _build_stats([records[i] for i in sorted(records)])
    _write_defects(config, records)
    (out / "stats.json").write_text(
        json.dumps(stats.deterministic_json(), indent=2, sort_keys=True) + "\n")
    return stats


def _build_stats(recs: list[dict]) -> CampaignStats:
    tally: dict[str, int] = {}
    for rec in recs:
        cls = rec["verdict"]["classification"]
        tally[cls] = tally.get(cls, 0) + 1
    defect_sigs = {rec["signature"] for rec in recs
                   if rec["verdict"]["classification"] in (CRASH, MISCOMPILATION)}

    def med(key):
        vals = [rec["metrics"][key] for rec in recs]
        return statistics.median(vals) if vals else None

    times = [rec["gen_emit_s"] for rec in recs if "gen_emit_s" in rec]
    return CampaignStats(
        cases_completed=len(recs),
        verdict_tally=tally,
        unique_defects=len(defect_sigs),
        per_case=recs,
        median_nodes=med("node_count"),
        median_connections=med("connection_count"),
        median_references=med("reference_count"),
        median_gen_emit_s=statistics.median(times) if times else None,
    )


def _write_defects(config: CampaignConfig, records: dict[int, dict]) -> None:
    out = Path(config.out_dir)
    seen: dict[str, DefectReport] = {}
    for index in sorted(records):
        rec = records[index]
        v = rec["verdict"]
        if v["classification"] not in (CRASH, MISCOMPILATION):
            continue
        sig = rec["signature"]
        if sig in seen:
            continue
        seen[sig] = DefectReport(
            case_id=rec["case"],
            verdict=DiffVerdict(
                classification=v["classification"], tool=v["tool"],
                counterpart=v["counterpart"],
                first_divergence=tuple(v["first_divergence"])
                if v["first_divergence"] else None,
                signature=sig),
            signature=sig,
            sandbox=str(out / "cases" / rec["case"] / "sandbox"),
            reproduction=rec.get("reproduction", []),
            summary=_defect_summary(v),
        )
    for sig, report in seen.items():
        d = out / "defects" / _safe_signature(sig)
        d.mkdir(parents=True, exist_ok=True)
        (d / "report.json").write_text(
            json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")


def _defect_summary(v: dict) -> str:
    if v["classification"] == CRASH:
        return f"tool crash in {v['tool']}"
    where = ""
    if v["first_divergence"]:
        where = f" at ({v['first_divergence'][0]}, cycle {v['first_divergence'][1]})"
    return f"output divergence blamed on {v['tool']}{where}"


DEFECT_TYPE = {CRASH: "C", MISCOMPILATION: "M"}


def report(campaign_dir) -> str:
    """Human-readable summary regenerated purely from on-disk state, so a
    second invocation produces identical bytes."""
    out = Path(campaign_dir)
    stats_doc = json.loads((out / "stats.json").read_text()) \
        if (out / "stats.json").exists() else {
            "cases_completed": 0, "verdict_tally": {}, "unique_defects": 0,
            "cases": [], "median_nodes": None, "median_connections": None,
            "median_references": None}
    case_records = []
    for marker in sorted(out.glob("cases/*/case.json")):
        case_records.append(json.loads(marker.read_text()))

    lines = []
    lines.append("campaign report")
    lines.append("===============")
    lines.append(f"cases completed: {stats_doc['cases_completed']}")
    tally = stats_doc["verdict_tally"]
    lines.append("verdicts: " + (", ".join(f"{k}={v}" for k, v in sorted(tally.items()))
                                 or "none"))
    lines.append(f"unique defects: {stats_doc['unique_defects']}")
    lines.append(f"median nodes: {stats_doc['median_nodes']}")
    lines.append(f"median connections: {stats_doc['median_connections']}")
    lines.append(f"median references: {stats_doc['median_references']}")
    gtimes = sorted(rec.get("gen_emit_s", 0.0) for rec in case_records)
    if gtimes:
        lines.append(f"median generation+emission: {statistics.median(gtimes):.3f} s")
        ttimes = [rec.get("tool_s", 0.0) for rec in case_records]
        lines.append(f"median tool time: {statistics.median(ttimes):.3f} s")
    lines.append("")
    lines.append("defects")
    lines.append("-------")
    header = f"{'ID':<8} {'Summary':<58} {'Status':<8} {'Type':<4} Tool"
    lines.append(header)
    reports = []
    for rep in sorted(out.glob("defects/*/report.json")):
        reports.append(json.loads(rep.read_text()))
    if not reports:
        lines.append("(none)")
    for rep in sorted(reports, key=lambda r: r["case_id"]):
        v = rep["verdict"]
        lines.append(
            f"{rep['case_id']:<8} {rep['summary'][:58]:<58} "
            f"{'pending':<8} {DEFECT_TYPE.get(v['classification'], '?'):<4} "
            f"{v['tool']}")
    text = "\n".join(lines) + "\n"
    (out / "report.txt").write_text(text)
    return text
