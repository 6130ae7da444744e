"""Differential execution of emitted designs through external tools.

Each adapter describes one tool as a list of command templates (with
``{input}``, ``{output}``, ``{top}`` and ``{testbench}`` placeholders) and
runs inside its own sandbox subdirectory with a wall-clock timeout.  A
simulation adapter's final stdout is parsed with the shared trace grammar
and compared bit-exactly against the golden trace; an ``x``/``u`` digit or
a missing sample is a divergence, a nonzero exit or signal is a crash.
Equivalence-check adapters report through their exit code (0 pass, 1
fail); synthesis adapters only prove acceptance.

Verdicts never depend on the order adapters finished: everything is sorted
by adapter name before classification.
"""

from __future__ import annotations

import json
import os
import re
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .hdl_ast import HdlDesign
from .interpreter import Trace, parse_trace_text

ALLOWED_PLACEHOLDERS = {"input", "output", "top", "testbench"}
ADAPTER_KINDS = ("simulation", "synthesis", "equivalence")

CONSISTENT = "Consistent"
CRASH = "Crash"
MISCOMPILATION = "Miscompilation"
TIMEOUT = "Timeout"
INCONCLUSIVE = "Inconclusive"


class SandboxError(Exception):
    pass


@dataclass(frozen=True)
class ToolAdapter:
    name: str
    commands: tuple[str, ...]
    kind: str = "simulation"
    dialects: tuple[str, ...] = ("verilog",)
    timeout: float = 300.0
    expected_artifacts: tuple[str, ...] = ()

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("adapter timeout must be positive")
        if self.kind not in ADAPTER_KINDS:
            raise ValueError(f"adapter kind {self.kind!r} not one of {ADAPTER_KINDS}")
        for cmd in self.commands:
            for ph in re.findall(r"\{(\w+)\}", cmd):
                if ph not in ALLOWED_PLACEHOLDERS:
                    raise ValueError(f"unknown placeholder {{{ph}}} in {self.name}")

    @staticmethod
    def from_dict(doc: dict) -> "ToolAdapter":
        return ToolAdapter(
            name=doc["name"],
            commands=tuple(doc["commands"]),
            kind=doc.get("kind", "simulation"),
            dialects=tuple(doc.get("dialects", ["verilog"])),
            timeout=float(doc.get("timeout", 300.0)),
            expected_artifacts=tuple(doc.get("artifacts", [])),
        )


@dataclass
class RunResult:
    adapter: str
    kind: str
    status: str  # completed | timed_out | crashed
    exit_code: Optional[int]
    wall_time: float
    stdout: str
    stderr: str
    trace: Optional[dict] = None
    equivalence_pass: Optional[bool] = None
    artifacts: tuple[str, ...] = ()
    command_lines: tuple[str, ...] = ()
    sandbox: str = ""

    def to_json(self) -> dict:
        return {
            "adapter": self.adapter,
            "kind": self.kind,
            "status": self.status,
            "exit_code": self.exit_code,
            "wall_time": round(self.wall_time, 3),
            "stdout": self.stdout[-20000:],
            "stderr": self.stderr[-20000:],
            "equivalence_pass": self.equivalence_pass,
            "artifacts": list(self.artifacts),
            "command_lines": list(self.command_lines),
            "sandbox": self.sandbox,
        }


@dataclass(frozen=True)
class DiffVerdict:
    classification: str
    tool: Optional[str] = None
    counterpart: Optional[str] = None
    first_divergence: Optional[tuple] = None  # (output name, cycle)
    signature: str = ""

    @property
    def is_defect(self) -> bool:
        return self.classification in (CRASH, MISCOMPILATION)

    def to_json(self) -> dict:
        return {
            "classification": self.classification,
            "tool": self.tool,
            "counterpart": self.counterpart,
            "first_divergence": list(self.first_divergence)
            if self.first_divergence else None,
            "signature": self.signature,
        }


@dataclass
class DefectReport:
    case_id: str
    verdict: DiffVerdict
    signature: str
    sandbox: str
    reproduction: list[str]
    tool_versions: dict = field(default_factory=dict)
    reduced_paths: list[str] = field(default_factory=list)
    summary: str = ""

    def to_json(self) -> dict:
        return {
            "case_id": self.case_id,
            "verdict": self.verdict.to_json(),
            "signature": self.signature,
            "sandbox": self.sandbox,
            "reproduction": self.reproduction,
            "tool_versions": self.tool_versions,
            "reduced_paths": self.reduced_paths,
            "summary": self.summary,
        }


def run_case(design: HdlDesign, golden: Trace, adapters: list[ToolAdapter],
             sandbox, testbench: Optional[str] = None) -> list[RunResult]:
    """Run every compatible adapter in its own sandbox subdirectory."""
    sandbox = Path(sandbox)
    try:
        sandbox.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SandboxError(f"cannot create sandbox {sandbox}: {exc}") from exc
    results = []
    for adapter in sorted(adapters, key=lambda a: a.name):
        if design.dialect.value not in adapter.dialects:
            continue
        results.append(_run_adapter(design, adapter, sandbox / adapter.name, testbench))
    return results


def _run_adapter(design: HdlDesign, adapter: ToolAdapter, workdir: Path,
                 testbench: Optional[str]) -> RunResult:
    try:
        workdir.mkdir(parents=True, exist_ok=True)
        input_path = workdir / f"design.{design.dialect.extension}"
        input_path.write_text(design.text)
        tb_path = workdir / f"tb.{design.dialect.extension}"
        if testbench is not None:
            tb_path.write_text(testbench)
    except OSError as exc:
        raise SandboxError(f"cannot populate sandbox {workdir}: {exc}") from exc

    subst = {
        "input": input_path.name,
        "output": "tool.out",
        "top": design.top,
        "testbench": tb_path.name,
    }
    command_lines = [cmd.format(**subst) for cmd in adapter.commands]
    stdout_all, stderr_all = [], []
    status, exit_code = "completed", 0
    started = time.monotonic()
    deadline = started + adapter.timeout
    for line in command_lines:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            status = "timed_out"
            break
        try:
            proc = subprocess.run(
                shlex.split(line), cwd=workdir, capture_output=True,
                timeout=remaining,
            )
        except subprocess.TimeoutExpired as exc:
            stdout_all.append((exc.stdout or b"").decode("utf-8", "replace"))
            stderr_all.append((exc.stderr or b"").decode("utf-8", "replace"))
            status = "timed_out"
            break
        except OSError as exc:
            stderr_all.append(str(exc))
            status = "crashed"
            exit_code = None
            break
        stdout_all.append(proc.stdout.decode("utf-8", "replace"))
        stderr_all.append(proc.stderr.decode("utf-8", "replace"))
        exit_code = proc.returncode
        if proc.returncode != 0:
            if adapter.kind == "equivalence" and proc.returncode == 1:
                status = "completed"
            else:
                status = "crashed"
            break
    wall = time.monotonic() - started

    result = RunResult(
        adapter=adapter.name,
        kind=adapter.kind,
        status=status,
        exit_code=exit_code,
        wall_time=wall,
        stdout="".join(stdout_all),
        stderr="".join(stderr_all),
        command_lines=tuple(command_lines),
        sandbox=str(workdir),
        artifacts=tuple(str(workdir / a) for a in adapter.expected_artifacts
                        if (workdir / a).exists()),
    )
    if status == "completed":
        if adapter.kind == "simulation":
            result.trace = parse_trace_text(result.stdout)
        elif adapter.kind == "equivalence":
            result.equivalence_pass = exit_code == 0
    return result


def _first_divergence(trace: dict, golden: Trace) -> Optional[tuple]:
    """Earliest (cycle, output) where the tool trace leaves the golden one."""
    worst = None
    for name in sorted(golden.outputs):
        samples = trace.get(name, {})
        for t in range(golden.cycles):
            got = samples.get(t, None)
            if got is None or got != golden.outputs[name][t]:
                if worst is None or (t, name) < worst:
                    worst = (t, name)
                break
    return (worst[1], worst[0]) if worst else None


def compare(results: list[RunResult], golden: Trace) -> DiffVerdict:
    """Classify one case from its adapter results plus the golden trace.

    Crashes dominate; then miscompilations (trace divergence from golden,
    failed equivalence check, or a testbench MISMATCH); then timeouts.  If
    several tools agree with each other but all diverge from the golden
    trace identically, the reference side is blamed instead of the tools.
    """
    if not results:
        return DiffVerdict(INCONCLUSIVE, signature="inconclusive:no-results")
    ordered = sorted(results, key=lambda r: r.adapter)

    crashed = [r for r in ordered if r.status == "crashed"]
    if crashed:
        verdict = DiffVerdict(CRASH, tool=crashed[0].adapter)
        return DiffVerdict(CRASH, tool=crashed[0].adapter,
                           signature=signature(crashed[0], verdict))

    divergent: list[tuple[RunResult, tuple]] = []
    for r in ordered:
        if r.status != "completed":
            continue
        if r.kind == "simulation" and r.trace is not None:
            div = _first_divergence(r.trace, golden)
            if div is not None:
                divergent.append((r, div))
        elif r.kind == "equivalence" and r.equivalence_pass is False:
            divergent.append((r, ("equivalence", 0)))
    if divergent:
        traced = [r for r in ordered if r.status == "completed" and r.trace is not None]
        all_equal = len(divergent) == len(traced) and len(traced) >= 2 and all(
            traced[0].trace == r.trace for r in traced[1:])
        first, div = divergent[0]
        if all_equal and all(d[0].kind == "simulation" for d in divergent):
            verdict = DiffVerdict(MISCOMPILATION, tool="golden",
                                  counterpart=first.adapter, first_divergence=div)
        else:
            verdict = DiffVerdict(MISCOMPILATION, tool=first.adapter,
                                  counterpart="golden", first_divergence=div)
        return DiffVerdict(verdict.classification, verdict.tool, verdict.counterpart,
                           verdict.first_divergence, signature(first, verdict))

    timed = [r for r in ordered if r.status == "timed_out"]
    if timed:
        return DiffVerdict(TIMEOUT, tool=timed[0].adapter,
                           signature=f"timeout:{timed[0].adapter}")
    if any(r.status == "completed" for r in ordered):
        return DiffVerdict(CONSISTENT)
    return DiffVerdict(INCONCLUSIVE, signature="inconclusive:no-completion")


_PATH_RE = re.compile(r"(?:[A-Za-z]:)?(?:/[^\s:,;()\[\]]+)+/?")
_ADDR_RE = re.compile(r"0x[0-9a-fA-F]+")
_LONG_NUM_RE = re.compile(r"\d{4,}")
_INTERESTING_RE = re.compile(
    r"assert|abort|fatal|internal error|signal|segfault|exception|error", re.IGNORECASE)


def normalize_line(line: str) -> str:
    """Strip run-specific noise: paths become basenames, addresses and long
    digit runs collapse, so reruns of one defect key identically."""
    def basename(m):
        return m.group().rstrip("/").rsplit("/", 1)[-1]

    line = _PATH_RE.sub(basename, line.strip())
    line = _ADDR_RE.sub("0x#", line)
    line = _LONG_NUM_RE.sub("#", line)
    return line


def _crash_line(result: RunResult) -> str:
    for text in (result.stderr, result.stdout):
        matches = [ln for ln in text.splitlines() if ln.strip()
                   and _INTERESTING_RE.search(ln)]
        if matches:
            return matches[-1]
    tail = [ln for ln in result.stderr.splitlines() if ln.strip()]
    if tail:
        return tail[-1]
    if result.exit_code is not None and result.exit_code < 0:
        return f"signal:{-result.exit_code}"
    return f"exit:{result.exit_code}"


def signature(result: RunResult, verdict: DiffVerdict) -> str:
    """Dedup key: identical defects map to identical keys across reruns."""
    if verdict.classification == CRASH:
        return f"crash:{result.adapter}:{normalize_line(_crash_line(result))}"
    if verdict.classification == MISCOMPILATION:
        tools = sorted({t for t in (verdict.tool, verdict.counterpart) if t})
        output = verdict.first_divergence[0] if verdict.first_divergence else "?"
        return f"miscompile:{'+'.join(tools)}:{output}"
    raise ValueError(f"no dedup key for {verdict.classification}")


def write_result_files(results: list[RunResult], directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for r in results:
        (directory / f"{r.adapter}.json").write_text(
            json.dumps(r.to_json(), indent=2, sort_keys=True) + "\n")
