"""Trigger minimization on the model, not on HDL text.

Deleting blocks from the graph and re-emitting keeps every candidate
well-formed, which raw text deletion cannot guarantee.  Reduction walks a
granularity ladder (reference instances, then subsystem instances, then
single blocks) and partitions each level's elements in halves, testing
complements and refining, until no single removable element can go while
the trigger predicate still holds.

``splice_repair`` is the deletion primitive: a removed block's consumers
are rewired to its type-matching driver when one exists, otherwise they
are driven by a zero constant of the expected type, so the result always
validates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .catalog import BlockCatalog, default_catalog
from .graph import (
    BlockInstance,
    ComplexityMetrics,
    ModelGraph,
    iter_graphs,
    metrics,
    validate,
)


class ReducerError(Exception):
    pass


class TriggerLost(ReducerError):
    pass


class BudgetExhausted(ReducerError):
    def __init__(self, message: str, result: "ReductionResult"):
        super().__init__(message)
        self.result = result


@dataclass
class TriggerPredicate:
    """Re-run matcher: the trigger survives when re-running the configured
    adapters reproduces the expected verdict class and dedup signature.

    ``rerun`` maps a model to (classification, signature); the campaign
    wires it to a real tool rerun, tests script it directly.
    """

    classification: str
    signature: str
    adapters: tuple[str, ...] = ()
    budget: int = 500
    rerun: Optional[Callable] = None

    def holds(self, model: ModelGraph) -> bool:
        got_class, got_sig = self.rerun(model)
        return got_class == self.classification and got_sig == self.signature


@dataclass
class ReductionResult:
    reduced: ModelGraph
    evaluations: int
    steps: int
    before: ComplexityMetrics
    after: ComplexityMetrics
    minimal: bool


Element = tuple[tuple, int]  # (graph path, block id)


def _removable(m: ModelGraph, level: str) -> list[Element]:
    """Elements of one granularity level, deterministic order.

    Boundary ports of child graphs stay: a subsystem or referenced model
    must keep exactly one Inport and one Outport to remain instantiable.
    """
    out: list[Element] = []
    for path, g in iter_graphs(m):
        for bid in sorted(g.blocks):
            kind = g.blocks[bid].kind
            if level == "references" and kind != "Model":
                continue
            if level == "subsystems" and kind != "If Action Subsystem":
                continue
            if level == "blocks":
                if path and kind in ("Inport", "Outport"):
                    continue
                if kind == "StimulusSource" and path:
                    continue
            out.append((path, bid))
    return out


def splice_repair(m: ModelGraph, removed: int, path: tuple = (),
                  catalog: Optional[BlockCatalog] = None) -> ModelGraph:
    """Delete one block, rewiring its consumers so the graph stays valid.

    Consumers move to the removed block's type-matching driver when that
    keeps the graph valid (removing a register on a feedback loop would
    not: bridging it closes a combinational cycle); otherwise they are
    driven by a zero constant of the expected type.
    """
    catalog = catalog or default_catalog()
    first = _splice_repair_once(m, removed, path, catalog, allow_donor=True)
    if not validate(first, catalog):
        return first
    fallback = _splice_repair_once(m, removed, path, catalog, allow_donor=False)
    problems = validate(fallback, catalog)
    if problems:
        raise ReducerError(f"splice repair left violations: {problems[0]}")
    return fallback


def _splice_repair_once(m: ModelGraph, removed: int, path: tuple,
                        catalog: BlockCatalog, allow_donor: bool) -> ModelGraph:
    result = m.clone_path(path)
    g = result.subgraph_at(path)
    if removed not in g.blocks:
        raise ReducerError(f"block {removed} not present at {path!r}")
    block = g.blocks[removed]
    kind = catalog.lookup_kind(block.kind)

    # the donor driver: first input whose type matches the removed output
    donor = None
    if allow_donor:
        for port in range(kind.arity(block.params)):
            conn = g.driver_of(removed, port)
            if conn is None or conn.src[0] == removed:
                continue
            src = g.blocks[conn.src[0]]
            if kind.outputs and src.output_type == block.output_type \
                    and src.sample_period == block.sample_period:
                donor = conn.src
                break

    consumers = [c for c in g.connections
                 if c.src[0] == removed and c.dst[0] != removed]
    g.connections = [c for c in g.connections
                     if c.src[0] != removed and c.dst[0] != removed]
    del g.blocks[removed]

    if consumers:
        if donor is None:
            donor_id = g.next_id()
            g.add_block(BlockInstance(donor_id, "Constant", block.output_type,
                                      block.sample_period, {"value": 0}))
            donor = (donor_id, 0)
        for c in consumers:
            g.connect(donor, c.dst)

    if block.kind == "If Action Subsystem":
        name = block.params.get("subsystem")
        if name in g.subsystems and not any(
                b.kind == "If Action Subsystem" and b.params.get("subsystem") == name
                for b in g.blocks.values()):
            del g.subsystems[name]
    elif block.kind == "Model":
        name = block.params.get("reference")
        if name in g.references and not any(
                b.kind == "Model" and b.params.get("reference") == name
                for b in g.blocks.values()):
            del g.references[name]
    return result


def removable_elements(m: ModelGraph, catalog: Optional[BlockCatalog] = None
                       ) -> list[Element]:
    """Block-granularity elements whose single removal strictly shrinks the
    model; the 1-minimality certificate quantifies over exactly this set."""
    catalog = catalog or default_catalog()
    out = []
    for element in _removable(m, "blocks"):
        candidate = _apply_removals(m, [element], catalog)
        if _shrinks(m, candidate):
            out.append(element)
    return out


def _apply_removals(m: ModelGraph, elements: list[Element],
                    catalog: BlockCatalog) -> Optional[ModelGraph]:
    current = m
    for path, bid in sorted(elements):
        g = _resolve(current, path)
        if g is None or bid not in g.blocks:
            continue  # removed along with an enclosing child definition
        try:
            current = splice_repair(current, bid, path, catalog)
        except ReducerError:
            return None
    return current


def _resolve(m: ModelGraph, path: tuple) -> Optional[ModelGraph]:
    g = m
    for step_kind, name in path:
        store = g.subsystems if step_kind == "sub" else g.references
        if name not in store:
            return None
        g = store[name]
    return g


class _Session:
    def __init__(self, predicate, catalog):
        self.predicate = predicate
        self.catalog = catalog
        self.evaluations = 0
        self.steps = 0

    def test(self, model: Optional[ModelGraph]) -> bool:
        if model is None:
            return False
        if self.evaluations >= self.predicate.budget:
            raise _OutOfBudget()
        self.evaluations += 1
        return self.predicate.holds(model)


class _OutOfBudget(Exception):
    pass


def _shrinks(current: ModelGraph, candidate: Optional[ModelGraph]) -> bool:
    """Progress means strictly fewer nodes: splice repair may swap a donor
    constant in for a removed block, and size-neutral swaps must not count
    as reduction steps or the walk would never terminate."""
    if candidate is None:
        return False
    return metrics(candidate).node_count < metrics(current).node_count


def _ddmin_level(session: _Session, model: ModelGraph, level: str,
                 catalog: BlockCatalog) -> ModelGraph:
    """Remove as many elements of one granularity as the trigger allows."""
    current = model
    elements = _removable(current, level)
    n = 2
    while len(elements) >= 2:
        chunk = max(1, len(elements) // n)
        parts = [elements[i:i + chunk] for i in range(0, len(elements), chunk)]
        progressed = False
        for part in parts:
            candidate = _apply_removals(current, part, catalog)
            if _shrinks(current, candidate) and session.test(candidate):
                current = candidate
                session.steps += 1
                elements = _removable(current, level)
                n = 2
                progressed = True
                break
        if progressed:
            continue
        if n >= len(elements):
            break
        n = min(len(elements), n * 2)
    return current


def reduce(model: ModelGraph, predicate: TriggerPredicate,
           catalog: Optional[BlockCatalog] = None,
           verify_original: bool = False) -> ReductionResult:
    """Shrink ``model`` while the trigger predicate keeps holding.

    The caller asserts the predicate holds on the input; pass
    ``verify_original`` to spend one evaluation confirming that (flaky
    tool triggers then raise TriggerLost instead of reducing to nothing).
    Exceeding the evaluation budget raises BudgetExhausted carrying the
    best result so far.
    """
    catalog = catalog or default_catalog()
    before = metrics(model)
    session = _Session(predicate, catalog)
    current = model
    try:
        if verify_original and not session.test(current):
            raise TriggerLost("predicate does not hold on the original case")
        for level in ("references", "subsystems", "blocks"):
            current = _ddmin_level(session, current, level, catalog)
        # single-element certificate: no shrinking removal keeps the trigger
        minimal = False
        while not minimal:
            minimal = True
            for element in removable_elements(current, catalog):
                candidate = _apply_removals(current, [element], catalog)
                if session.test(candidate):
                    current = candidate
                    session.steps += 1
                    minimal = False
                    break
    except _OutOfBudget:
        raise BudgetExhausted(
            f"predicate budget ({predicate.budget}) exhausted",
            ReductionResult(current, session.evaluations, session.steps,
                            before, metrics(current), minimal=False),
        ) from None
    return ReductionResult(current, session.evaluations, session.steps,
                           before, metrics(current), minimal=True)
