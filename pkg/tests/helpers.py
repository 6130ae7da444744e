"""Shared builders for the test suite."""

from __future__ import annotations

import sys
from pathlib import Path

from blockfuzz.catalog import BASE_PERIOD, SignalType, Signedness, ufix
from blockfuzz.graph import BlockInstance, ModelGraph
from blockfuzz.harness import ToolAdapter


def const_to_out(value=5, width=4) -> ModelGraph:
    m = ModelGraph()
    m.add_block(BlockInstance(0, "Constant", ufix(width), BASE_PERIOD, {"value": value}))
    m.add_block(BlockInstance(1, "Outport", ufix(width), BASE_PERIOD, {}))
    m.connect((0, 0), (1, 0))
    return m


def unary_chain(kinds, width=8, in_kind="Inport") -> ModelGraph:
    """Inport -> kinds... -> Outport with type-preserving parameters."""
    m = ModelGraph()
    t = ufix(width)
    m.add_block(BlockInstance(0, in_kind, t, BASE_PERIOD,
                              {"value": 1} if in_kind == "Constant" else {}))
    prev = 0
    for i, kind in enumerate(kinds, start=1):
        params = {}
        if kind == "Gain":
            params = {"factor": 3}
        elif kind == "Bias":
            params = {"value": 1}
        elif kind in ("Bit Clear", "Bit Set"):
            params = {"index": 1}
        elif kind in ("Compare To Zero",):
            params = {"op": "ne"}
        m.add_block(BlockInstance(i, kind, t, BASE_PERIOD, params))
        m.connect((prev, 0), (i, 0))
        prev = i
    out = len(kinds) + 1
    m.add_block(BlockInstance(out, "Outport", t, BASE_PERIOD, {}))
    m.connect((prev, 0), (out, 0))
    from blockfuzz.graph import _reinfer_types
    from blockfuzz.catalog import default_catalog
    _reinfer_types(m, default_catalog())
    return m


def two_input_add(wa=4, wb=10, signed=False) -> ModelGraph:
    m = ModelGraph()
    mk = (lambda w: SignalType(Signedness.SIGNED, w)) if signed else ufix
    m.add_block(BlockInstance(0, "Inport", mk(wa), BASE_PERIOD, {}))
    m.add_block(BlockInstance(1, "Inport", mk(wb), BASE_PERIOD, {}))
    m.add_block(BlockInstance(2, "Add", SignalType(
        Signedness.SIGNED if signed else Signedness.UNSIGNED,
        min(max(wa, wb) + 1, 64)), BASE_PERIOD, {"signs": "++"}))
    m.add_block(BlockInstance(3, "Outport", m.blocks[2].output_type, BASE_PERIOD, {}))
    m.connect((0, 0), (2, 0))
    m.connect((1, 0), (2, 1))
    m.connect((2, 0), (3, 0))
    return m


REPLAY_SCRIPT = """\
import pathlib, sys
print(pathlib.Path(sys.argv[1]).read_text())
print("TB_DONE")
"""

BITFLIP_SCRIPT = """\
import pathlib, re, sys
text = pathlib.Path(sys.argv[1]).read_text()
lines = text.splitlines()
for i, line in enumerate(lines):
    m = re.match(r"(\\w+)=([0-9a-f]+)@(\\d+)$", line)
    if m:
        value = int(m.group(2), 16) ^ 1
        lines[i] = f"{m.group(1)}={value:0{len(m.group(2))}x}@{m.group(3)}"
        break
print("\\n".join(lines))
print("TB_DONE")
"""

CRASH_SCRIPT = """\
import sys
print("tool: internal error: assertion failed in net_splitter()", file=sys.stderr)
print("  at /tmp/build12345/src/pass.cc:77 addr 0xdeadbeef", file=sys.stderr)
sys.exit(3)
"""

SLEEP_SCRIPT = """\
import time
time.sleep(30)
"""


def script_adapter(tmp_path: Path, name: str, body: str, extra_args: str = "",
                   kind: str = "simulation", timeout: float = 30.0,
                   dialects=("verilog", "vhdl", "systemverilog")) -> ToolAdapter:
    script = tmp_path / f"{name}.py"
    script.write_text(body)
    cmd = f"{sys.executable} {script}"
    if extra_args:
        cmd += f" {extra_args}"
    return ToolAdapter(name=name, commands=(cmd,), kind=kind,
                       dialects=tuple(dialects), timeout=timeout)
