"""Command-line surface.

Subcommands: ``generate`` (models and designs only), ``emit`` and
``simulate`` (single-model utilities), ``fuzz`` (full differential
campaign), ``reduce`` (shrink one recorded defect case) and ``report``
(regenerate the human-readable summary).  Exit code 0 means a clean run,
1 means defects were found, 2 means an infrastructure or configuration
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .campaign import (
    CampaignConfig,
    ConfigError,
    execute_case,
    load_config,
    report,
    run_campaign,
)
from .catalog import default_catalog
from .generator import GenerationConfig, default_matrix, generate_model
from .graph import deserialize, serialize, validate
from .guidance import syntax_guidance
from .harness import compare, run_case
from .hdl_ast import Dialect
from .emitter import emit
from .interpreter import make_stimulus, simulate
from .reducer import BudgetExhausted, TriggerPredicate, reduce as reduce_model
from .testbench import make_testbench

EXIT_CLEAN = 0
EXIT_DEFECTS = 1
EXIT_INFRA = 2


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="campaign config file (JSON)")
    p.add_argument("--seed", type=int, help="campaign seed (64-bit)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, help="parallel case workers")
    p.add_argument("--dialects", help="comma-separated subset of "
                                      "verilog,vhdl,systemverilog")
    p.add_argument("--cases", type=int, help="number of cases")
    p.add_argument("--blocks", type=int, help="block count target per model")
    p.add_argument("--generate-only", action="store_true",
                   help="skip external tool runs")


def _campaign_config(args) -> CampaignConfig:
    if args.config:
        config = load_config(args.config, out_dir=args.out)
    else:
        config = CampaignConfig(
            generation=GenerationConfig(seed=0),
            out_dir=args.out or "campaign-out",
        )
    gen = config.generation
    if args.seed is not None:
        gen = replace(gen, seed=args.seed)
    if args.blocks is not None:
        gen = replace(gen, block_count_target=args.blocks)
    config.generation = gen
    if args.out:
        config.out_dir = args.out
    if args.jobs is not None:
        config.parallelism = args.jobs
    if args.cases is not None:
        config.cases = args.cases
    if args.dialects:
        config.dialects = tuple(args.dialects.split(","))
        for d in config.dialects:
            Dialect(d)
    if args.generate_only:
        config.generate_only = True
    return config


def _cmd_generate(args) -> int:
    config = _campaign_config(args)
    config.generate_only = True
    stats = run_campaign(config)
    print(f"generated {stats.cases_completed} cases under {config.out_dir}/cases")
    return EXIT_CLEAN


def _cmd_fuzz(args) -> int:
    config = _campaign_config(args)
    stats = run_campaign(config)
    print(report(config.out_dir), end="")
    return EXIT_DEFECTS if stats.unique_defects else EXIT_CLEAN


def _cmd_emit(args) -> int:
    model = deserialize(Path(args.model).read_text())
    problems = validate(model)
    if problems:
        print(f"model does not validate: {problems[0]}", file=sys.stderr)
        return EXIT_INFRA
    dialects = args.dialects.split(",") if args.dialects else \
        ["verilog", "vhdl", "systemverilog"]
    out = Path(args.out or Path(args.model).parent)
    out.mkdir(parents=True, exist_ok=True)
    for name in dialects:
        design = emit(model, Dialect(name))
        target = out / f"design.{design.dialect.extension}"
        target.write_text(design.text)
        print(target)
    return EXIT_CLEAN


def _cmd_simulate(args) -> int:
    model = deserialize(Path(args.model).read_text())
    problems = validate(model)
    if problems:
        print(f"model does not validate: {problems[0]}", file=sys.stderr)
        return EXIT_INFRA
    stimulus = make_stimulus(model, args.seed or 0, args.cycles)
    trace = simulate(model, stimulus)
    if args.out:
        Path(args.out).write_text(trace.text())
        print(args.out)
    else:
        print(trace.text(), end="")
    return EXIT_CLEAN


def _cmd_reduce(args) -> int:
    config = _campaign_config(args)
    case_dir = Path(config.out_dir) / "cases" / args.case
    record_path = case_dir / "case.json"
    if not record_path.exists():
        print(f"no such case record: {record_path}", file=sys.stderr)
        return EXIT_INFRA
    record = json.loads(record_path.read_text())
    signature_key = args.signature or record["signature"]
    classification = record["verdict"]["classification"]
    flagging = record["verdict"]["tool"] or ""
    base_name, _, dialect_name = flagging.partition(".")
    dialect = Dialect(dialect_name) if dialect_name else Dialect.VERILOG
    adapters = [a for a in config.adapters if a.name == base_name]
    if not adapters:
        print(f"flagging adapter {base_name!r} not in config", file=sys.stderr)
        return EXIT_INFRA
    catalog = default_catalog()
    model = deserialize((case_dir / "model.json").read_text())
    stim_seed = record["seeds"]["stimulus"]
    cycles = config.cycles
    workdirs = {"n": 0}

    def rerun(candidate):
        design = emit(candidate, dialect, catalog)
        stimulus = make_stimulus(candidate, stim_seed, cycles)
        golden = simulate(candidate, stimulus, catalog)
        tb = make_testbench(design, stimulus, golden)
        workdirs["n"] += 1
        sandbox = case_dir / "reduce" / f"try{workdirs['n']:04d}"
        results = run_case(design, golden, adapters, sandbox, testbench=tb)
        for r in results:
            r.adapter = f"{r.adapter}.{dialect.value}"
        verdict = compare(results, golden)
        return verdict.classification, verdict.signature

    predicate = TriggerPredicate(
        classification=classification,
        signature=signature_key,
        adapters=(base_name,),
        budget=args.budget,
        rerun=rerun,
    )
    try:
        result = reduce_model(model, predicate, catalog, verify_original=True)
    except BudgetExhausted as exc:
        result = exc.result
        print("budget exhausted; keeping best-so-far", file=sys.stderr)
    (case_dir / "model.reduced.json").write_text(serialize(result.reduced))
    for name in record["dialects"]:
        design = emit(result.reduced, Dialect(name), catalog)
        (case_dir / f"design.reduced.{design.dialect.extension}").write_text(design.text)
    print(f"reduced {result.before.node_count} -> {result.after.node_count} blocks "
          f"({result.evaluations} predicate evaluations)")
    return EXIT_CLEAN


def _cmd_report(args) -> int:
    config = _campaign_config(args)
    print(report(config.out_dir), end="")
    return EXIT_CLEAN


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="blockfuzz",
        description="block-diagram model fuzzer for HDL synthesis and "
                    "simulation tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate models and designs only")
    _add_common(p)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("fuzz", help="run a differential-testing campaign")
    _add_common(p)
    p.set_defaults(func=_cmd_fuzz)

    p = sub.add_parser("emit", help="translate one model file to HDL")
    p.add_argument("--model", required=True)
    p.add_argument("--dialects")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_emit)

    p = sub.add_parser("simulate", help="golden trace for one model file")
    p.add_argument("--model", required=True)
    p.add_argument("--cycles", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("reduce", help="minimize a recorded defect case")
    _add_common(p)
    p.add_argument("--case", required=True)
    p.add_argument("--signature")
    p.add_argument("--budget", type=int, default=500)
    p.set_defaults(func=_cmd_reduce)

    p = sub.add_parser("report", help="regenerate the campaign report")
    _add_common(p)
    p.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_INFRA
    except Exception as exc:  # infrastructure failures must not masquerade
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFRA


if __name__ == "__main__":
    sys.exit(main())
