"""Hierarchical block-diagram intermediate representation.

A ModelGraph owns its blocks and connections plus two kinds of children:
``subsystems`` (conditionally executed bodies bound to If Action Subsystem
instances) and ``references`` (named sibling models instantiated by Model
blocks).  Mutation is modeled as producing new graphs: ``insert_block``
works on a deep copy and either returns a valid graph or raises, so no
caller ever observes a half-edited model.

Values are bit patterns; types live on the producing block.  An Outport
stores the type it receives so emitters can size the port.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .catalog import (
    BlockCatalog,
    BlockKind,
    SamplePeriod,
    SignalType,
    Signedness,
    default_catalog,
    infer_output_type,
    validate_params,
    TypeRuleViolation,
)

SOURCE_KINDS = frozenset({"Constant", "Inport", "StimulusSource"})
HIERARCHY_KINDS = frozenset({"If Action Subsystem", "Model"})

# rule names used in Violation records
RULE_TYPE = "TypeDomain"
RULE_RATE = "RateMismatch"
RULE_LOOP = "CombinationalLoop"
RULE_UNDRIVEN = "UndrivenPort"
RULE_RECURSION = "RecursiveReference"
RULE_UNREACHABLE = "UnreachableOutport"
RULE_STRUCTURE = "BadConnection"


class GraphError(Exception):
    pass


class ConstraintViolated(GraphError):
    """Insertion would produce an invalid graph; nothing was changed."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


@dataclass(frozen=True, order=True)
class Connection:
    """Directed net segment from an output port to an input port."""

    src: tuple[int, int]
    dst: tuple[int, int]


@dataclass
class BlockInstance:
    id: int
    kind: str
    output_type: SignalType
    sample_period: SamplePeriod
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Violation:
    rule: str
    path: tuple[str, ...]
    block_ids: tuple[int, ...]
    detail: str

    def __str__(self) -> str:
        where = "/".join(self.path) or "top"
        return f"[{self.rule}] {where} blocks={list(self.block_ids)}: {self.detail}"


@dataclass(frozen=True)
class ComplexityMetrics:
    node_count: int
    connection_count: int
    reference_count: int


@dataclass
class ModelGraph:
    blocks: dict[int, BlockInstance] = field(default_factory=dict)
    connections: list[Connection] = field(default_factory=list)
    subsystems: dict[str, "ModelGraph"] = field(default_factory=dict)
    references: dict[str, "ModelGraph"] = field(default_factory=dict)

    # -- construction helpers -------------------------------------------------

    def add_block(self, block: BlockInstance) -> BlockInstance:
        if block.id in self.blocks:
            raise GraphError(f"duplicate block id {block.id}")
        self.blocks[block.id] = block
        return block

    def connect(self, src: tuple[int, int], dst: tuple[int, int]) -> Connection:
        conn = Connection(src, dst)
        self.connections.append(conn)
        self.connections.sort()
        return conn

    def next_id(self) -> int:
        return max(self.blocks, default=-1) + 1

    def clone(self, _memo: Optional[dict] = None) -> "ModelGraph":
        """Structural copy; much faster than deepcopy on hot paths.

        Types, periods and connections are immutable and shared; blocks and
        child graphs are copied.  A child graph referenced from several
        places stays shared in the copy.
        """
        memo = _memo if _memo is not None else {}
        if id(self) in memo:
            return memo[id(self)]
        g = ModelGraph()
        memo[id(self)] = g
        g.blocks = {
            bid: BlockInstance(b.id, b.kind, b.output_type, b.sample_period,
                               dict(b.params))
            for bid, b in self.blocks.items()
        }
        g.connections = list(self.connections)
        g.subsystems = {name: sub.clone(memo) for name, sub in self.subsystems.items()}
        g.references = {name: ref.clone(memo) for name, ref in self.references.items()}
        return g

    def clone_path(self, path: tuple) -> "ModelGraph":
        """Copy-on-write clone: graphs along ``path`` are copied, all
        off-path children are shared with the original.  Safe as long as
        mutations stay on the copied spine, which insert_block guarantees."""
        g = ModelGraph()
        g.blocks = {
            bid: BlockInstance(b.id, b.kind, b.output_type, b.sample_period,
                               dict(b.params))
            for bid, b in self.blocks.items()
        }
        g.connections = list(self.connections)
        g.subsystems = dict(self.subsystems)
        g.references = dict(self.references)
        if path:
            step_kind, name = path[0]
            store = g.subsystems if step_kind == "sub" else g.references
            store[name] = store[name].clone_path(path[1:])
        return g

    # -- queries --------------------------------------------------------------

    def driver_of(self, block_id: int, port: int) -> Optional[Connection]:
        for c in self.connections:
            if c.dst == (block_id, port):
                return c
        return None

    def consumers_of(self, block_id: int, port: int = 0) -> list[Connection]:
        return [c for c in self.connections if c.src == (block_id, port)]

    def input_types(self, block_id: int, catalog: BlockCatalog) -> list[SignalType]:
        block = self.blocks[block_id]
        kind = catalog.lookup_kind(block.kind)
        types = []
        for port in range(kind.arity(block.params)):
            conn = self.driver_of(block_id, port)
            if conn is None:
                raise GraphError(f"block {block_id} port {port} undriven")
            types.append(self.blocks[conn.src[0]].output_type)
        return types

    def subgraph_at(self, path: tuple) -> "ModelGraph":
        g = self
        for step_kind, name in path:
            g = g.subsystems[name] if step_kind == "sub" else g.references[name]
        return g


def iter_graphs(m: ModelGraph) -> Iterator[tuple[tuple, ModelGraph]]:
    """All definition sites, parents before children, deterministic order.

    Raises GraphError on an identity cycle in the hierarchy; validate()
    reports that case as RecursiveReference before walking.
    """

    def walk(path, g, active):
        if id(g) in active:
            raise GraphError("model hierarchy contains itself")
        yield path, g
        deeper = active | {id(g)}
        for name in sorted(g.subsystems):
            yield from walk(path + (("sub", name),), g.subsystems[name], deeper)
        for name in sorted(g.references):
            yield from walk(path + (("ref", name),), g.references[name], deeper)

    yield from walk((), m, frozenset())


def _recursion_check(m: ModelGraph) -> Optional[tuple]:
    """Path of the first identity cycle in the hierarchy, if any."""
    found = []

    def walk(g, path, active):
        if id(g) in active:
            found.append(path)
            return True
        active = active | {id(g)}
        for name in sorted(g.subsystems):
            if walk(g.subsystems[name], path + (("sub", name),), active):
                return True
        for name in sorted(g.references):
            if walk(g.references[name], path + (("ref", name),), active):
                return True
        return False

    walk(m, (), frozenset())
    return found[0] if found else None


# -- combinational structure --------------------------------------------------

def comb_through_map(g: ModelGraph, catalog: BlockCatalog) -> dict[int, bool]:
    """Whether each block's output depends on its current-cycle inputs.

    Model instances are resolved against the referenced graph: the instance
    passes through combinationally iff the child has a register-free path
    from its Inport to its Outport.
    """
    memo: dict[int, bool] = {}

    def graph_through(child: ModelGraph) -> bool:
        key = id(child)
        if key in memo:
            return memo[key]
        memo[key] = False  # break accidental identity cycles conservatively
        through = child_comb_map(child)
        inports = [b.id for b in child.blocks.values() if b.kind == "Inport"]
        outports = [b.id for b in child.blocks.values() if b.kind == "Outport"]
        reach = set(inports)
        frontier = list(inports)
        while frontier:
            u = frontier.pop()
            for c in child.connections:
                if c.src[0] == u:
                    v = c.dst[0]
                    if v in reach:
                        continue
                    if v in outports:
                        memo[key] = True
                        return True
                    if through.get(v, False):
                        reach.add(v)
                        frontier.append(v)
        memo[key] = False
        return False

    def child_comb_map(child: ModelGraph) -> dict[int, bool]:
        out = {}
        for b in child.blocks.values():
            kind = catalog.lookup_kind(b.kind)
            if b.kind == "Model":
                ref = child.references.get(b.params.get("reference", ""))
                out[b.id] = graph_through(ref) if ref is not None else True
            else:
                out[b.id] = kind.comb_through
        return out

    return child_comb_map(g)


def find_comb_cycle(g: ModelGraph, catalog: BlockCatalog) -> Optional[list[int]]:
    """A cycle whose every block passes through combinationally, or None."""
    through = comb_through_map(g, catalog)
    nodes = [b for b in g.blocks if through.get(b, False)]
    adj = {u: [] for u in nodes}
    for c in g.connections:
        if c.src[0] in adj and c.dst[0] in adj:
            adj[c.src[0]].append(c.dst[0])
    color = {u: 0 for u in nodes}
    parent: dict[int, int] = {}
    for start in sorted(nodes):
        if color[start]:
            continue
        stack = [(start, iter(sorted(adj[start])))]
        color[start] = 1
        while stack:
            u, it = stack[-1]
            advanced = False
            for v in it:
                if color[v] == 0:
                    color[v] = 1
                    parent[v] = u
                    stack.append((v, iter(sorted(adj[v]))))
                    advanced = True
                    break
                if color[v] == 1:
                    cycle = [v, u]
                    w = u
                    while w != v and w in parent:
                        w = parent[w]
                        cycle.append(w)
                    return list(reversed(cycle))
            if not advanced:
                color[u] = 2
                stack.pop()
    return None


def topo_order(g: ModelGraph, catalog: BlockCatalog, tie_break=None) -> list[int]:
    """Deterministic evaluation order for one cycle.

    Blocks whose output is pure state (pipeline registers, gated
    subsystems) have no evaluation dependencies; everything else waits for
    its drivers.  Ties are broken by block id, or shuffled when an Rng is
    passed (evaluation must be order-independent; tests rely on this knob).
    Raises GraphError on a combinational cycle.
    """
    through = comb_through_map(g, catalog)
    indeg = {b: 0 for b in g.blocks}
    adj: dict[int, list[int]] = {b: [] for b in g.blocks}
    for c in g.connections:
        if through.get(c.dst[0], False):
            indeg[c.dst[0]] += 1
            adj[c.src[0]].append(c.dst[0])
    ready = sorted(b for b in g.blocks if indeg[b] == 0)
    order: list[int] = []
    while ready:
        if tie_break is not None:
            tie_break.shuffle(ready)
        else:
            ready.sort()
        u = ready.pop(0)
        order.append(u)
        for v in sorted(adj[u]):
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
    if len(order) != len(g.blocks):
        raise GraphError("combinational cycle prevents evaluation ordering")
    return order


# -- validation ----------------------------------------------------------------

def _validate_one(g: ModelGraph, path: tuple, catalog: BlockCatalog,
                  out: list[Violation]) -> None:
    def bad(rule, ids, detail):
        out.append(Violation(rule, tuple(f"{k}:{n}" for k, n in path), tuple(ids), detail))

    driver_map: dict[tuple[int, int], list[Connection]] = {}
    for c in g.connections:
        driver_map.setdefault(c.dst, []).append(c)

    # structural: endpoints and port ranges
    for c in g.connections:
        sb, sp = c.src
        db, dp = c.dst
        if sb not in g.blocks or db not in g.blocks:
            bad(RULE_STRUCTURE, [sb, db], "connection references missing block")
            continue
        src_kind = catalog.lookup_kind(g.blocks[sb].kind)
        dst_kind = catalog.lookup_kind(g.blocks[db].kind)
        if sp >= len(src_kind.outputs):
            bad(RULE_STRUCTURE, [sb], f"output port {sp} out of range for {src_kind.name}")
        if dp >= dst_kind.arity(g.blocks[db].params):
            bad(RULE_STRUCTURE, [db], f"input port {dp} out of range for {dst_kind.name}")

    # drivers: every input port exactly one
    for b in g.blocks.values():
        kind = catalog.lookup_kind(b.kind)
        for port in range(kind.arity(b.params)):
            n_drivers = len(driver_map.get((b.id, port), []))
            if n_drivers != 1:
                bad(RULE_UNDRIVEN, [b.id],
                    f"{kind.name} input {port} has {n_drivers} drivers")
    if any(v.rule in (RULE_STRUCTURE, RULE_UNDRIVEN) for v in out):
        return  # type/rate/loop checks assume a well-formed wiring

    def typed_inputs(block):
        kind = catalog.lookup_kind(block.kind)
        return [g.blocks[driver_map[(block.id, p)][0].src[0]].output_type
                for p in range(kind.arity(block.params))]

    # types and params
    for bid in sorted(g.blocks):
        b = g.blocks[bid]
        kind = catalog.lookup_kind(b.kind)
        in_types = typed_inputs(b)
        problems = validate_params(kind, b.params, b.output_type, in_types)
        for p in problems:
            bad(RULE_TYPE, [bid], p)
        if problems:
            continue
        if b.kind == "Outport":
            if b.output_type != in_types[0]:
                bad(RULE_TYPE, [bid],
                    f"Outport records {b.output_type}, receives {in_types[0]}")
            continue
        try:
            inferred = infer_output_type(kind, in_types, declared=b.output_type)
        except TypeRuleViolation as exc:
            bad(RULE_TYPE, [bid], str(exc))
            continue
        if inferred != b.output_type:
            bad(RULE_TYPE, [bid],
                f"{kind.name} output declared {b.output_type}, inferred {inferred}")
        if b.kind in HIERARCHY_KINDS:
            _validate_boundary(g, b, in_types, bad)

    # sample rates along every connection
    for c in g.connections:
        src_p = g.blocks[c.src[0]].sample_period
        dst_p = g.blocks[c.dst[0]].sample_period
        if src_p != dst_p:
            bad(RULE_RATE, [c.src[0], c.dst[0]],
                f"connected blocks run at {src_p} and {dst_p}")

    # combinational loops
    cycle = find_comb_cycle(g, catalog)
    if cycle:
        bad(RULE_LOOP, cycle, "register-free cycle")

    # every Outport fed (transitively) by a source block
    back: dict[int, set[int]] = {b: set() for b in g.blocks}
    for c in g.connections:
        back[c.dst[0]].add(c.src[0])
    for bid in sorted(g.blocks):
        if g.blocks[bid].kind != "Outport":
            continue
        seen, frontier = {bid}, [bid]
        fed = False
        while frontier and not fed:
            u = frontier.pop()
            for v in back[u]:
                if g.blocks[v].kind in SOURCE_KINDS:
                    fed = True
                    break
                if v not in seen:
                    seen.add(v)
                    frontier.append(v)
        if not fed:
            bad(RULE_UNREACHABLE, [bid], "Outport not reachable from any source")


def _validate_boundary(g, block, in_types, bad):
    """Hierarchy instance against its child graph's port blocks."""
    if block.kind == "If Action Subsystem":
        child = g.subsystems.get(block.params.get("subsystem", ""))
        label = f"subsystem {block.params.get('subsystem')!r}"
        data_type = in_types[1] if len(in_types) > 1 else None
    else:
        child = g.references.get(block.params.get("reference", ""))
        label = f"reference {block.params.get('reference')!r}"
        data_type = in_types[0] if in_types else None
    if child is None:
        bad(RULE_TYPE, [block.id], f"{label} not defined")
        return
    inports = sorted(b.id for b in child.blocks.values() if b.kind == "Inport")
    outports = sorted(b.id for b in child.blocks.values() if b.kind == "Outport")
    if len(inports) != 1 or len(outports) != 1:
        bad(RULE_TYPE, [block.id],
            f"{label} must expose exactly one Inport and one Outport")
        return
    child_in = child.blocks[inports[0]].output_type
    child_out = child.blocks[outports[0]].output_type
    if data_type != child_in:
        bad(RULE_TYPE, [block.id],
            f"{label} Inport is {child_in}, instance drives {data_type}")
    if block.output_type != child_out:
        bad(RULE_TYPE, [block.id],
            f"{label} Outport is {child_out}, instance declares {block.output_type}")


def validate(m: ModelGraph, catalog: Optional[BlockCatalog] = None,
             _skip_ids: Optional[set] = None) -> list[Violation]:
    """All invariant violations, hierarchy-wide.  Empty list means valid.

    ``_skip_ids`` lets incremental callers omit definition sites already
    known valid (matched by object identity); the recursion check always
    covers the whole hierarchy.
    """
    catalog = catalog or default_catalog()
    cycle_path = _recursion_check(m)
    if cycle_path is not None:
        return [Violation(RULE_RECURSION, tuple(f"{k}:{n}" for k, n in cycle_path), (),
                          "model hierarchy contains itself")]
    out: list[Violation] = []
    for path, g in iter_graphs(m):
        if _skip_ids is not None and id(g) in _skip_ids:
            continue
        _validate_one(g, path, catalog, out)
    return out


# -- metrics --------------------------------------------------------------------

def metrics(m: ModelGraph) -> ComplexityMetrics:
    """Node/connection counts over every definition site, plus the number
    of distinct models the top-level body references."""
    nodes = 0
    conns = 0
    for _path, g in iter_graphs(m):
        nodes += len(g.blocks)
        conns += len(g.connections)

    ref_names: set[str] = set()

    def scan(g: ModelGraph):
        for b in g.blocks.values():
            if b.kind == "Model":
                ref_names.add(b.params.get("reference", ""))
        for sub in g.subsystems.values():
            scan(sub)

    scan(m)
    return ComplexityMetrics(nodes, conns, len(ref_names))


# -- insertion --------------------------------------------------------------------

@dataclass(frozen=True)
class NetLocation:
    """A specific connection inside one definition site of the hierarchy."""

    graph_path: tuple
    connection: Connection


def _splice_port(kind: BlockKind, params: dict, driver_type: SignalType) -> Optional[int]:
    for port in range(kind.arity(params)):
        if kind.port_accepts(port, driver_type):
            return port
    return None


def _tap_filter(kind: BlockKind, driver_type: SignalType):
    """Extra-port tap compatibility for kinds with cross-port constraints."""
    name = kind.name
    if name == "Bitwise Operator":
        return lambda t: t == driver_type
    if name in ("MinMax", "Divide"):
        return lambda t: (not t.is_boolean) and t.signedness == driver_type.signedness
    return None


def insert_block(
    m: ModelGraph,
    at,
    b: BlockInstance,
    taps: Optional[dict[int, tuple[int, int]]] = None,
    catalog: Optional[BlockCatalog] = None,
    _staged: bool = False,
    _known_valid: Optional[set] = None,
) -> ModelGraph:
    """Splice ``b`` into the net named by ``at`` and return the new graph.

    ``at`` needs ``graph_path`` and ``connection`` attributes (NetLocation
    or a guidance insertion point).  The net's driver feeds the first
    accepting input port; remaining ports are wired from ``taps`` (port ->
    (block, out_port)) or, when omitted, from the lowest-id compatible
    output in the same graph.  Output types downstream of the splice are
    re-inferred.  The original graph is never modified; on any failure
    ConstraintViolated is raised.

    ``_staged`` marks ``m`` as a private copy that may be edited in place;
    ``_known_valid`` skips revalidation of untouched definition sites
    (generator fast path).
    """
    catalog = catalog or default_catalog()
    kind = catalog.lookup_kind(b.kind)
    if not kind.inputs:
        raise ConstraintViolated(f"{kind.name} has no inputs and cannot be spliced into a net")

    result = m if _staged else m.clone_path(at.graph_path)
    g = result.subgraph_at(at.graph_path)
    conn = at.connection
    if conn not in g.connections:
        raise ConstraintViolated(f"net {conn} not present at {at.graph_path!r}")
    if b.id in g.blocks:
        raise ConstraintViolated(f"block id {b.id} already used")

    driver_type = g.blocks[conn.src[0]].output_type
    arity = kind.arity(b.params)

    if not kind.outputs:  # sink: tap the net, keep the existing consumer wiring
        g.add_block(b)
        g.connect(conn.src, (b.id, 0))
        b.output_type = driver_type
    else:
        port = _splice_port(kind, b.params, driver_type)
        if port is None:
            raise ConstraintViolated(f"{kind.name} does not accept {driver_type}")
        g.add_block(b)
        g.connections.remove(conn)
        g.connect(conn.src, (b.id, port))
        g.connect((b.id, 0), conn.dst)
        extra = _tap_filter(kind, driver_type)
        for j in range(arity):
            if j == port:
                continue
            chosen = (taps or {}).get(j)
            if chosen is None:
                chosen = _default_tap(g, kind, j, b.id, extra, catalog)
                if chosen is None:
                    raise ConstraintViolated(f"no compatible net to feed {kind.name} input {j}")
            src_block = g.blocks.get(chosen[0])
            if src_block is None:
                raise ConstraintViolated(f"tap {chosen} references missing block")
            g.connect(chosen, (b.id, j))
        try:
            _reinfer_types(g, catalog)
        except (TypeRuleViolation, GraphError) as exc:
            raise ConstraintViolated(f"type propagation failed: {exc}") from exc

    problems = validate(result, catalog, _skip_ids=_known_valid)
    if problems:
        raise ConstraintViolated(
            f"insertion of {kind.name} at {conn} violates: {problems[0]}", problems
        )
    return result


def _default_tap(g, kind, port, new_id, extra_filter, catalog):
    for bid in sorted(g.blocks):
        if bid == new_id:
            continue
        block = g.blocks[bid]
        if not catalog.lookup_kind(block.kind).outputs:
            continue
        t = block.output_type
        if not kind.port_accepts(port, t):
            continue
        if extra_filter is not None and not extra_filter(t):
            continue
        if block.sample_period != g.blocks[new_id].sample_period:
            continue
        return (bid, 0)
    return None


def _reinfer_types(g: ModelGraph, catalog: BlockCatalog) -> None:
    """Forward type propagation after a rewiring.

    Inference kinds take whatever their (possibly widened) inputs imply;
    Outports record the received type.  Declared-type kinds are left alone
    and any resulting mismatch is caught by validation.
    """
    driver_map = {c.dst: c for c in g.connections}
    order = topo_order(g, catalog)
    for bid in order:
        b = g.blocks[bid]
        kind = catalog.lookup_kind(b.kind)
        if b.kind in SOURCE_KINDS or b.kind in HIERARCHY_KINDS:
            continue
        try:
            in_types = [g.blocks[driver_map[(bid, p)].src[0]].output_type
                        for p in range(kind.arity(b.params))]
        except KeyError:
            continue
        if b.kind == "Outport":
            b.output_type = in_types[0]
            continue
        b.output_type = infer_output_type(kind, in_types, declared=b.output_type)


# -- serialization ------------------------------------------------------------------

def _type_doc(t: SignalType) -> dict:
    return {
        "signedness": t.signedness.value,
        "word_length": t.word_length,
        "fraction_length": t.fraction_length,
    }


def _type_from(doc: dict) -> SignalType:
    return SignalType(Signedness(doc["signedness"]), doc["word_length"],
                      doc.get("fraction_length", 0))


def to_document(m: ModelGraph) -> dict:
    return {
        "blocks": [
            {
                "id": b.id,
                "kind": b.kind,
                "output_type": _type_doc(b.output_type),
                "sample_period": {
                    "numerator": b.sample_period.numerator,
                    "denominator": b.sample_period.denominator,
                },
                "params": dict(sorted(b.params.items())),
            }
            for b in (m.blocks[i] for i in sorted(m.blocks))
        ],
        "connections": [
            {"src": list(c.src), "dst": list(c.dst)} for c in sorted(m.connections)
        ],
        "subsystems": {name: to_document(m.subsystems[name]) for name in sorted(m.subsystems)},
        "references": {name: to_document(m.references[name]) for name in sorted(m.references)},
    }


def from_document(doc: dict) -> ModelGraph:
    g = ModelGraph()
    for bd in doc.get("blocks", []):
        g.add_block(BlockInstance(
            id=bd["id"],
            kind=bd["kind"],
            output_type=_type_from(bd["output_type"]),
            sample_period=SamplePeriod(bd["sample_period"]["numerator"],
                                       bd["sample_period"]["denominator"]),
            params=dict(bd.get("params", {})),
        ))
    for cd in doc.get("connections", []):
        g.connect(tuple(cd["src"]), tuple(cd["dst"]))
    for name, sub in doc.get("subsystems", {}).items():
        g.subsystems[name] = from_document(sub)
    for name, ref in doc.get("references", {}).items():
        g.references[name] = from_document(ref)
    return g


def serialize(m: ModelGraph) -> str:
    """Canonical JSON text; identical models serialize byte-identically."""
    return json.dumps(to_document(m), indent=2, sort_keys=True) + "\n"


def deserialize(text: str) -> ModelGraph:
    return from_document(json.loads(text))
