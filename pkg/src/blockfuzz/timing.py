"""Critical-path analysis and pipelining strategy selection.

Path delay is the sum of block delay weights along a register-free run:
source and sink blocks are path endpoints (their weights never enter a
sum), sequential register elements cut paths, and a referenced model
contributes its own input-to-output combinational delay as a single node.
Each module's internal segments are also scored recursively and the
overall critical delay is the maximum over all of them; segments that
straddle an instance boundary are approximated by the instance's
through-delay, which keeps the analysis linear instead of full static
timing.

Pipelining level ``i`` applies ``i`` rounds of register insertion.  One
round cuts the top-level graph at a frontier inside the stateless output
cone (the blocks whose every forward path to an output crosses no state):
every net into that region gets a register, and output ports are always on
the registered side, so each round delays every output by exactly one
cycle.  Keeping state strictly upstream of the cut is what makes the shift
exact rather than approximate: a register initialized to zero upstream of
a change detector or a gated subsystem would rewrite that block's history
(zero inputs do not reproduce defined initial state under saturating
division or negated bit operations), while a cut downstream of all state
leaves every trajectory untouched.  The frontier aims at the weighted
midpoint of the current critical segment when the cone allows it; when the
critical path lies behind state the cut degenerates to the output ports,
the delay does not improve and the strategy table simply keeps legacy.

The table compares legacy (no pipelining) with every level by negated
critical delay; legacy is kept unless strictly beaten, and equal levels
resolve to the deeper one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .catalog import BlockCatalog, BlockGroup, default_catalog
from .graph import (
    BlockInstance,
    ModelGraph,
    comb_through_map,
    validate,
)

ENDPOINT_KINDS = frozenset({"Constant", "Inport", "StimulusSource", "Outport"})


@dataclass(frozen=True)
class TimingReport:
    critical_delay: float
    critical_path: tuple[int, ...]
    strategy_delays: dict = field(default_factory=dict)


@dataclass(frozen=True)
class OptimizationChoice:
    strategies: tuple[str, ...]
    metrics: dict
    chosen: str
    depth: int


def _effective_delay(g: ModelGraph, bid: int, catalog: BlockCatalog, memo: dict) -> float:
    b = g.blocks[bid]
    kind = catalog.lookup_kind(b.kind)
    if b.kind in ENDPOINT_KINDS:
        return 0.0
    if b.kind == "Model":
        child = g.references[b.params["reference"]]
        return _through_delay(child, catalog, memo)
    if not kind.comb_through:
        return 0.0
    return kind.delay_weight


def _segment_arrivals(g: ModelGraph, catalog: BlockCatalog, memo: dict
                      ) -> tuple[dict[int, float], dict[int, Optional[int]]]:
    """Longest register-free delay ending at each block's output, plus the
    argmax predecessor for path reconstruction."""
    through = comb_through_map(g, catalog)
    arrival: dict[int, float] = {}
    pred: dict[int, Optional[int]] = {}
    order = _dag_order(g, through)
    drivers: dict[int, list[int]] = {b: [] for b in g.blocks}
    for c in g.connections:
        drivers[c.dst[0]].append(c.src[0])
    for bid in order:
        b = g.blocks[bid]
        starts_fresh = (b.kind in ("Constant", "Inport", "StimulusSource")
                        or not (through.get(bid, False) or b.kind == "Outport"))
        w = _effective_delay(g, bid, catalog, memo)
        if starts_fresh:
            arrival[bid] = w if b.kind not in ENDPOINT_KINDS else 0.0
            pred[bid] = None
            continue
        best, best_pred = 0.0, None
        for d in sorted(drivers[bid]):
            if arrival.get(d, 0.0) > best:
                best, best_pred = arrival[d], d
        arrival[bid] = best + w
        pred[bid] = best_pred
    return arrival, pred


def _dag_order(g: ModelGraph, through: dict[int, bool]) -> list[int]:
    indeg = {b: 0 for b in g.blocks}
    adj: dict[int, list[int]] = {b: [] for b in g.blocks}
    for c in g.connections:
        if through.get(c.dst[0], False) or g.blocks[c.dst[0]].kind == "Outport":
            indeg[c.dst[0]] += 1
            adj[c.src[0]].append(c.dst[0])
    ready = sorted(b for b in g.blocks if indeg[b] == 0)
    order = []
    while ready:
        u = ready.pop(0)
        order.append(u)
        for v in sorted(adj[u]):
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
        ready.sort()
    if len(order) != len(g.blocks):
        raise ValueError("combinational cycle; validate the model first")
    return order


def _through_delay(child: ModelGraph, catalog: BlockCatalog, memo: dict) -> float:
    """Max register-free Inport-to-Outport delay of a referenced model."""
    key = id(child)
    if key in memo:
        return memo[key]
    memo[key] = 0.0  # cycle guard
    through = comb_through_map(child, catalog)
    inports = {b.id for b in child.blocks.values() if b.kind == "Inport"}
    best: dict[int, float] = {b: float("-inf") for b in child.blocks}
    for b in inports:
        best[b] = 0.0
    drivers: dict[int, list[int]] = {b: [] for b in child.blocks}
    for c in child.connections:
        drivers[c.dst[0]].append(c.src[0])
    result = 0.0
    for bid in _dag_order(child, through):
        b = child.blocks[bid]
        if bid in inports:
            continue
        if not (through.get(bid, False) or b.kind == "Outport"):
            continue
        incoming = [best[d] for d in drivers[bid] if best[d] > float("-inf")]
        if not incoming:
            continue
        w = _effective_delay(child, bid, catalog, memo)
        best[bid] = max(incoming) + w
        if b.kind == "Outport":
            result = max(result, best[bid])
    memo[key] = result
    return result


def critical_path(m: ModelGraph, catalog: Optional[BlockCatalog] = None) -> TimingReport:
    """Longest weighted register-free path anywhere in the hierarchy."""
    catalog = catalog or default_catalog()
    memo: dict = {}

    def graph_critical(g: ModelGraph) -> tuple[float, tuple[int, ...]]:
        arrival, pred = _segment_arrivals(g, catalog, memo)
        best_delay, best_path = 0.0, ()
        if arrival:
            end = max(sorted(arrival), key=lambda b: arrival[b])
            if arrival[end] > 0.0:
                chain = []
                node: Optional[int] = end
                while node is not None:
                    chain.append(node)
                    node = pred[node]
                chain.reverse()
                trimmed = [b for b in chain
                           if _effective_delay(g, b, catalog, memo) > 0.0]
                best_delay, best_path = arrival[end], tuple(trimmed)
        for sub in list(g.subsystems.values()) + list(g.references.values()):
            d, p = graph_critical(sub)
            if d > best_delay:
                best_delay, best_path = d, p
        return best_delay, best_path

    delay, path = graph_critical(m)
    return TimingReport(critical_delay=delay, critical_path=path)


# -- pipelining ---------------------------------------------------------------


def _graph_has_state(g: ModelGraph, catalog: BlockCatalog, memo: dict) -> bool:
    key = id(g)
    if key in memo:
        return memo[key]
    memo[key] = False
    found = False
    for b in g.blocks.values():
        if catalog.lookup_kind(b.kind).is_sequential:
            found = True
            break
        if b.kind == "Model":
            child = g.references.get(b.params.get("reference", ""))
            if child is not None and _graph_has_state(child, catalog, memo):
                found = True
                break
    memo[key] = found
    return found


def _stateless_output_cone(g: ModelGraph, catalog: BlockCatalog) -> set[int]:
    """Blocks whose every forward path to a sink crosses no state; output
    ports always qualify.  Registers inserted inside this cone provably
    delay every output by one cycle without touching any state trajectory."""
    state_memo: dict = {}
    adj: dict[int, list[int]] = {b: [] for b in g.blocks}
    for c in g.connections:
        adj[c.src[0]].append(c.dst[0])

    def stateful(bid: int) -> bool:
        b = g.blocks[bid]
        kind = catalog.lookup_kind(b.kind)
        if kind.is_sequential:
            return True
        if b.kind == "Model":
            child = g.references.get(b.params.get("reference", ""))
            return child is None or _graph_has_state(child, catalog, state_memo)
        return False

    safe: dict[int, bool] = {}

    def compute(bid: int, active: frozenset) -> bool:
        if bid in safe:
            return safe[bid]
        if bid in active:
            return False  # combinational cycles never qualify anyway
        b = g.blocks[bid]
        if b.kind == "Outport":
            safe[bid] = True
            return True
        if b.kind in ("Constant", "Inport", "StimulusSource") or stateful(bid):
            safe[bid] = False
            return False
        ok = all(compute(d, active | {bid}) for d in adj[bid])
        safe[bid] = ok
        return ok

    for bid in sorted(g.blocks):
        compute(bid, frozenset())
    return {bid for bid, ok in safe.items() if ok}


def _pipeline_round(m: ModelGraph, catalog: BlockCatalog) -> Optional[ModelGraph]:
    """One register frontier inside the stateless output cone, aimed at the
    critical segment's weighted midpoint; None when nothing is left to cut."""
    memo: dict = {}
    seg, _pred = _segment_arrivals(m, catalog, memo)
    if not seg:
        return None
    end = max(sorted(seg), key=lambda b: seg[b])
    if seg[end] <= 0.0:
        return None
    theta = seg[end] / 2.0

    cone = _stateless_output_cone(m, catalog)
    outports = {b.id for b in m.blocks.values() if b.kind == "Outport"}
    registered = {bid for bid in cone
                  if bid in outports or seg.get(bid, 0.0) > theta}
    if not registered:
        registered = set(outports)
    if not registered:
        return None

    result = m.clone()
    crossing: dict[tuple[int, int], list] = {}
    for c in list(result.connections):
        if c.src[0] not in registered and c.dst[0] in registered:
            crossing.setdefault(c.src, []).append(c)
    if not crossing:
        return None
    for src in sorted(crossing):
        reg_id = result.next_id()
        src_block = result.blocks[src[0]]
        result.add_block(BlockInstance(
            id=reg_id,
            kind="Pipeline Register",
            output_type=src_block.output_type,
            sample_period=src_block.sample_period,
            params={},
        ))
        for conn in crossing[src]:
            result.connections.remove(conn)
            result.connect((reg_id, 0), conn.dst)
        result.connect(src, (reg_id, 0))
    assert not validate(result, catalog), "pipeline cut broke the model"
    return result


def optimize(m: ModelGraph, levels: int,
             catalog: Optional[BlockCatalog] = None
             ) -> tuple[ModelGraph, OptimizationChoice]:
    """Best strategy among legacy and pipeline depths 0..levels.

    The metric is negated critical delay.  Legacy wins ties against any
    level; among levels with equal metric the deeper pipeline is kept.
    The returned graph is the chosen strategy's graph (``m`` itself for
    legacy) and ``depth`` is its added output latency in cycles.
    """
    catalog = catalog or default_catalog()
    base = critical_path(m, catalog).critical_delay
    strategies = ["legacy"] + [f"level{i}" for i in range(levels + 1)]
    metrics = {"legacy": -base}
    graphs: dict[str, tuple[ModelGraph, int]] = {"legacy": (m, 0)}

    current = m
    applied = 0
    for i in range(levels + 1):
        while applied < i:
            nxt = _pipeline_round(current, catalog)
            if nxt is None:
                break
            current = nxt
            applied += 1
        graphs[f"level{i}"] = (current, applied)
        metrics[f"level{i}"] = -critical_path(current, catalog).critical_delay

    chosen = "legacy"
    for i in range(levels + 1):
        name = f"level{i}"
        if metrics[name] > metrics[chosen]:
            chosen = name
        elif chosen != "legacy" and metrics[name] == metrics[chosen]:
            chosen = name
    graph, depth = graphs[chosen]
    choice = OptimizationChoice(
        strategies=tuple(strategies),
        metrics=metrics,
        chosen=chosen,
        depth=depth,
    )
    return graph, choice
