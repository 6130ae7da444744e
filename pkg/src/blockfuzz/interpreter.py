"""Cycle-accurate two-state reference simulator.

Produces the golden output traces that testbenches embed and the diff
harness compares against.  Semantics: one implicit clock, registers reset
to 0 (synchronous, active high in the emitted HDL), values are bit
patterns, division by zero saturates to all-ones, arithmetic wraps — all
shared with the emitters through the catalog's value functions.

Trace grammar (one line per output per cycle):

    <output_name>=<hex>@<cycle>

with the hex field zero-padded to ceil(width/4) digits.  External
simulator output is parsed with the same grammar; any ``x``/``u`` digit in
a tool's hex field marks the value unknown, which the harness treats as a
divergence from the two-state golden trace.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .catalog import (
    BlockCatalog,
    SignalType,
    Signedness,
    default_catalog,
    detect_compare,
    evaluate,
)
from .graph import GraphError, ModelGraph, comb_through_map, topo_order
from .rng import Rng

RESET_BEHAVIOR = "sync-active-high-to-zero"

DETECT_KINDS = ("Detect Change", "Detect Increase", "Detect Decrease")


def port_name(kind: str, block_id: int) -> str:
    """HDL port name for a boundary block; shared with the emitters."""
    prefix = {"Inport": "in", "Outport": "out", "StimulusSource": "ss"}[kind]
    return f"{prefix}{block_id}"


def hex_digits(width: int) -> int:
    return (width + 3) // 4


def format_value(pattern: int, width: int) -> str:
    return format(pattern, f"0{hex_digits(width)}x")


@dataclass
class Stimulus:
    """Per-cycle input patterns for every top-level Inport/StimulusSource."""

    cycles: int
    values: dict[int, list[int]] = field(default_factory=dict)

    def value(self, block_id: int, t: int) -> int:
        return self.values[block_id][t]


@dataclass
class Trace:
    cycles: int
    outputs: dict[str, list[int]] = field(default_factory=dict)
    widths: dict[str, int] = field(default_factory=dict)
    reset: str = RESET_BEHAVIOR

    def lines(self) -> list[str]:
        out = []
        for t in range(self.cycles):
            for name in sorted(self.outputs):
                out.append(f"{name}={format_value(self.outputs[name][t], self.widths[name])}@{t}")
        return out

    def text(self) -> str:
        return "\n".join(self.lines()) + ("\n" if self.outputs and self.cycles else "")


_TRACE_RE = re.compile(r"^\s*(\w+)=([0-9a-fA-FxXzZuU]+)@(\d+)\s*$")


def parse_trace_text(text: str) -> dict[str, dict[int, Optional[int]]]:
    """Trace lines -> {name: {cycle: pattern or None for unknown digits}}.

    Non-matching lines are ignored so tool banners do not confuse parsing.
    """
    out: dict[str, dict[int, Optional[int]]] = {}
    for line in text.splitlines():
        m = _TRACE_RE.match(line)
        if not m:
            continue
        name, hexval, cyc = m.group(1), m.group(2), int(m.group(3))
        if re.search(r"[xXzZuU]", hexval):
            value: Optional[int] = None
        else:
            value = int(hexval, 16)
        out.setdefault(name, {})[cyc] = value
    return out


def boundary_patterns(t: SignalType) -> list[int]:
    """The four forced first-cycle vectors: all-zero, all-ones, min, max."""
    ones = t.max_pattern()
    if t.signedness is Signedness.SIGNED:
        most_negative = 1 << (t.word_length - 1)
        largest = most_negative - 1
        return [0, ones, most_negative, largest]
    return [0, ones, 0, ones]


def stimulus_blocks(m: ModelGraph) -> list[int]:
    return sorted(b.id for b in m.blocks.values()
                  if b.kind in ("Inport", "StimulusSource"))


def make_stimulus(m: ModelGraph, seed: int, cycles: int) -> Stimulus:
    """Seeded uniform input patterns with boundary vectors up front."""
    if cycles < 1:
        raise ValueError("stimulus needs at least one cycle")
    rng = Rng(seed)
    stim = Stimulus(cycles=cycles)
    for bid in stimulus_blocks(m):
        t = m.blocks[bid].output_type
        values = boundary_patterns(t)[:cycles]
        while len(values) < cycles:
            values.append(rng.randint(0, t.max_pattern()))
        stim.values[bid] = values
    return stim


class _Simulation:
    """One run's mutable state: registers keyed by (instance path, block)."""

    def __init__(self, catalog: BlockCatalog, stimulus: Stimulus, order_seed=None):
        self.catalog = catalog
        self.stimulus = stimulus
        self.order_seed = order_seed
        self.state: dict[tuple, int] = {}
        self._orders: dict[int, list[int]] = {}
        self._through: dict[int, dict[int, bool]] = {}

    def _order(self, g: ModelGraph) -> list[int]:
        key = id(g)
        if key not in self._orders:
            rng = Rng(self.order_seed) if self.order_seed is not None else None
            self._orders[key] = topo_order(g, self.catalog, tie_break=rng)
        return self._orders[key]

    def _through_map(self, g: ModelGraph) -> dict[int, bool]:
        key = id(g)
        if key not in self._through:
            self._through[key] = comb_through_map(g, self.catalog)
        return self._through[key]

    def run_cycle(self, g: ModelGraph, path: tuple, inputs: dict[int, int],
                  t: int, commit: bool) -> dict[int, int]:
        """Evaluate one cycle of ``g``; returns every block's output pattern.

        With ``commit`` false this is a peek: registers are read but not
        updated and gated children are not executed (used to resolve the
        outputs of fully registered referenced models before their inputs
        are available).
        """
        vals: dict[int, int] = {}
        through = self._through_map(g)
        deferred: list[int] = []
        for bid in self._order(g):
            b = g.blocks[bid]
            kind = self.catalog.lookup_kind(b.kind)
            if b.kind == "Inport":
                # bound by the parent instance below the top; stimulus-fed at top
                vals[bid] = inputs[bid] if bid in inputs else self.stimulus.value(bid, t)
            elif b.kind == "StimulusSource":
                if path:
                    raise GraphError("StimulusSource below the top graph is unsupported")
                vals[bid] = self.stimulus.value(bid, t)
            elif b.kind == "Constant":
                vals[bid] = b.params["value"]
            elif b.kind == "Outport":
                conn = g.driver_of(bid, 0)
                vals[bid] = vals[conn.src[0]]
            elif b.kind in DETECT_KINDS:
                conn = g.driver_of(bid, 0)
                x = vals[conn.src[0]]
                prev = self.state.get(path + (bid,), 0)
                vals[bid] = detect_compare(b.kind, x, prev,
                                           g.blocks[conn.src[0]].output_type)
                deferred.append(bid)
            elif b.kind == "Pipeline Register":
                vals[bid] = self.state.get(path + (bid,), 0)
                deferred.append(bid)
            elif b.kind == "If Action Subsystem":
                vals[bid] = self.state.get(path + (bid,), 0)
                deferred.append(bid)
            elif b.kind == "Model":
                child = g.references[b.params["reference"]]
                if through[bid]:
                    conn = g.driver_of(bid, 0)
                    vals[bid] = self._run_child(child, path + (bid,),
                                                vals[conn.src[0]], t, commit)
                else:
                    vals[bid] = self._run_child(child, path + (bid,), 0, t, False)
                    deferred.append(bid)
            else:
                in_types, in_vals = [], []
                for port in range(kind.arity(b.params)):
                    conn = g.driver_of(bid, port)
                    in_types.append(g.blocks[conn.src[0]].output_type)
                    in_vals.append(vals[conn.src[0]])
                vals[bid] = evaluate(kind, b.params, in_types, in_vals, b.output_type)
        if commit:
            for bid in deferred:
                b = g.blocks[bid]
                if b.kind in DETECT_KINDS or b.kind == "Pipeline Register":
                    conn = g.driver_of(bid, 0)
                    self.state[path + (bid,)] = vals[conn.src[0]]
                elif b.kind == "If Action Subsystem":
                    action = vals[g.driver_of(bid, 0).src[0]]
                    if action:
                        child = g.subsystems[b.params["subsystem"]]
                        data = vals[g.driver_of(bid, 1).src[0]]
                        self.state[path + (bid,)] = self._run_child(
                            child, path + (bid,), data, t, True)
                elif b.kind == "Model":
                    child = g.references[b.params["reference"]]
                    data = vals[g.driver_of(bid, 0).src[0]]
                    self._run_child(child, path + (bid,), data, t, True)
        return vals

    def _run_child(self, child: ModelGraph, path: tuple, data: int,
                   t: int, commit: bool) -> int:
        inport = next(b.id for b in child.blocks.values() if b.kind == "Inport")
        outport = next(b.id for b in child.blocks.values() if b.kind == "Outport")
        vals = self.run_cycle(child, path, {inport: data}, t, commit)
        return vals[outport]


def simulate(m: ModelGraph, stimulus: Stimulus, catalog: Optional[BlockCatalog] = None,
             order_seed: Optional[int] = None) -> Trace:
    """Golden trace of ``m`` under ``stimulus``.

    ``order_seed`` shuffles topological tie-breaking; any seed must yield
    the identical trace (combinational evaluation is confluent), which the
    tests exercise directly.
    """
    catalog = catalog or default_catalog()
    sim = _Simulation(catalog, stimulus, order_seed)
    outports = sorted(b.id for b in m.blocks.values() if b.kind == "Outport")
    trace = Trace(cycles=stimulus.cycles)
    for bid in outports:
        name = port_name("Outport", bid)
        trace.outputs[name] = []
        trace.widths[name] = m.blocks[bid].output_type.word_length
    for t in range(stimulus.cycles):
        vals = sim.run_cycle(m, (), {}, t, commit=True)
        for bid in outports:
            trace.outputs[port_name("Outport", bid)].append(vals[bid])
    return trace
