"""Insertion-point selection from def/use, control and resource facts.

Facts are extracted from the emitted AST in elaborated evaluation order:
input ports and register state exist before anything runs in a cycle, then
assignments and instantiations in dependency order, then the register
updates that commit at the cycle boundary.  Under that ordering every use
sits after a definition, which is both a well-formedness check on emitted
designs and the first of the three insertion rules.

The other two rules: a point is rejected when its defining node sits under
more than one control construct (an inserted block there would become a
second controlled exit), and when the target net already has more than one
concurrent writer (a resource conflict).  On designs this package emits
those filters pass everywhere by construction; they exist to guard guided
insertion into any in-subset AST.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .catalog import BlockCatalog, SamplePeriod, SignalType, default_catalog
from .emitter import build_ast
from .generator import (
    ConstraintInfo,
    GenerationConfig,
    forbidden_kinds_for,
    widened_types,
)
from .graph import Connection, ModelGraph, iter_graphs
from .hdl_ast import (
    Assign,
    Binary,
    BitSelect,
    Concat,
    Cond,
    Const,
    EmissionMap,
    Expr,
    Extend,
    HdlAst,
    Instance,
    Ref,
    Unary,
)
from .rng import Rng


class GuidanceError(Exception):
    pass


class FactExtractionError(GuidanceError):
    pass


class NoInsertionPoint(GuidanceError):
    pass


@dataclass(frozen=True)
class FactNode:
    node_id: int
    module: str
    kind: str  # port | reg | control | assign | instance | update
    label: str


@dataclass
class DefUseFacts:
    nodes: list[FactNode] = field(default_factory=list)
    defs: set = field(default_factory=set)       # (node_id, (module, signal))
    uses: set = field(default_factory=set)       # (node_id, (module, signal))
    controls: set = field(default_factory=set)   # (controller, controlled)
    resources: set = field(default_factory=set)  # (node_id, (module, resource))

    def def_node(self, module: str, signal: str) -> Optional[int]:
        hits = [n for n, sig in self.defs if sig == (module, signal)]
        return min(hits) if hits else None

    def writers(self, module: str, resource: str) -> list[int]:
        return sorted(n for n, r in self.resources if r == (module, resource))

    def control_depth(self, node_id: int) -> int:
        depth = 0
        current = node_id
        parents = {m: n for n, m in self.controls}
        while current in parents:
            depth += 1
            current = parents[current]
        return depth


def _expr_refs(e: Expr) -> list[str]:
    if isinstance(e, Ref):
        return [e.name]
    if isinstance(e, Const):
        return []
    if isinstance(e, Unary):
        return _expr_refs(e.a)
    if isinstance(e, Binary):
        return _expr_refs(e.a) + _expr_refs(e.b)
    if isinstance(e, Cond):
        return _expr_refs(e.cond) + _expr_refs(e.then) + _expr_refs(e.other)
    if isinstance(e, BitSelect):
        return _expr_refs(e.a)
    if isinstance(e, Concat):
        return [r for p in e.parts for r in _expr_refs(p)]
    if isinstance(e, Extend):
        return _expr_refs(e.a)
    raise FactExtractionError(f"unknown expression node {e!r}")


def _module_through_map(ast: HdlAst) -> dict[str, bool]:
    """Whether each module's outputs depend combinationally on its data
    inputs; registered-only modules behave like registers at their
    instantiation sites (their outputs are state, not functions of the
    current-cycle inputs)."""
    through: dict[str, bool] = {}
    for mod in ast.modules:  # children precede their instantiators
        dep: dict[str, set] = {}

        def feeds(target, sources):
            dep.setdefault(target, set()).update(sources)

        for a in mod.assigns:
            feeds(a.target, _expr_refs(a.expr))
        for inst in mod.instances:
            child_through = through.get(inst.module, True)
            child = ast.module(inst.module) if child_through else None
            if not child_through:
                continue
            ins, outs = set(), set()
            for formal, actual in inst.ports:
                refs = _expr_refs(actual)
                if child.port(formal).direction == "output":
                    outs.update(refs)
                elif formal not in ("clk", "rst"):
                    ins.update(refs)
            for out in outs:
                feeds(out, ins)
        data_in = {p.name for p in mod.ports
                   if p.direction == "input" and p.name not in ("clk", "rst", "en")}
        outputs = {p.name for p in mod.ports if p.direction == "output"}
        reached = set(data_in)
        frontier = list(data_in)
        while frontier:
            sig = frontier.pop()
            for target, sources in dep.items():
                if sig in sources and target not in reached:
                    reached.add(target)
                    frontier.append(target)
        through[mod.name] = bool(reached & outputs)
    return through


def extract_facts(ast: HdlAst) -> DefUseFacts:
    """Relations over every module, nodes numbered in evaluation order.

    Register state and the outputs of registered child instances are
    defined before anything evaluates in a cycle; register updates and the
    inputs of those instances are consumed at the cycle boundary.  That is
    the elaborated order the simulator follows, and under it every use in
    an emitted design sits after a definition even with feedback loops
    through registered children.
    """
    facts = DefUseFacts()
    counter = 0
    module_through = _module_through_map(ast)

    def new_node(module, kind, label) -> int:
        nonlocal counter
        node = FactNode(counter, module, kind, label)
        facts.nodes.append(node)
        counter += 1
        return node.node_id

    port_dirs = {}
    for mod in ast.modules:
        port_dirs[mod.name] = {p.name: p.direction for p in mod.ports}

    for mod in ast.modules:
        for p in mod.ports:
            if p.direction == "input":
                n = new_node(mod.name, "port", p.name)
                facts.defs.add((n, (mod.name, p.name)))
        for r in mod.regs:
            n = new_node(mod.name, "reg", r.name)
            facts.defs.add((n, (mod.name, r.name)))

        # registered child instances: outputs are available state
        deferred_instances = []
        for inst in mod.instances:
            if module_through.get(inst.module, True):
                continue
            deferred_instances.append(inst)
            n = new_node(mod.name, "instance", inst.name)
            for formal, actual in inst.ports:
                if port_dirs[inst.module].get(formal) == "output":
                    for sig in sorted(set(_expr_refs(actual))):
                        facts.defs.add((n, (mod.name, sig)))
                        facts.resources.add((n, (mod.name, sig)))
            facts.resources.add((n, (mod.name, f"instance:{inst.name}")))

        # assignments and pass-through instantiations in dependency order
        items: list[tuple[str, object]] = [("assign", a) for a in mod.assigns]
        items += [("instance", i) for i in mod.instances
                  if module_through.get(i.module, True)]
        defined = {sig for _n, (m, sig) in facts.defs if m == mod.name}
        pending = list(items)
        while pending:
            progressed = False
            for idx, (kind, item) in enumerate(pending):
                if kind == "assign":
                    needs = set(_expr_refs(item.expr))
                    gives = {item.target}
                else:
                    dirs = port_dirs.get(item.module)
                    if dirs is None:
                        raise FactExtractionError(
                            f"instance of unknown module {item.module!r}")
                    needs, gives = set(), set()
                    for formal, actual in item.ports:
                        refs = set(_expr_refs(actual))
                        if dirs.get(formal) == "output":
                            gives |= refs
                        else:
                            needs |= refs
                if not needs <= defined:
                    continue
                n = new_node(mod.name, kind,
                             item.target if kind == "assign" else item.name)
                for sig in sorted(needs):
                    facts.uses.add((n, (mod.name, sig)))
                for sig in sorted(gives):
                    facts.defs.add((n, (mod.name, sig)))
                    facts.resources.add((n, (mod.name, sig)))
                if kind == "instance":
                    facts.resources.add((n, (mod.name, f"instance:{item.name}")))
                defined |= gives
                pending.pop(idx)
                progressed = True
                break
            if not progressed:
                missing = sorted(set(
                    sig for kind, item in pending
                    for sig in _expr_refs(item.expr if kind == "assign" else
                                          Concat(tuple(a for _f, a in item.ports)))
                ) - defined)
                raise FactExtractionError(
                    f"module {mod.name}: no definition for {missing}")

        # cycle-boundary consumers: register updates and the inputs of
        # registered child instances
        for inst in deferred_instances:
            n = new_node(mod.name, "update", inst.name)
            for formal, actual in inst.ports:
                if port_dirs[inst.module].get(formal) != "output":
                    for sig in sorted(set(_expr_refs(actual))):
                        facts.uses.add((n, (mod.name, sig)))
        if mod.regs:
            rst_node = new_node(mod.name, "control", "rst")
            en_node = None
            if mod.enable:
                en_node = new_node(mod.name, "control", mod.enable)
                facts.controls.add((rst_node, en_node))
                facts.uses.add((en_node, (mod.name, mod.enable)))
            for u in mod.updates:
                n = new_node(mod.name, "update", u.target)
                for sig in sorted(set(_expr_refs(u.expr))):
                    facts.uses.add((n, (mod.name, sig)))
                facts.resources.add((n, (mod.name, u.target)))
                facts.controls.add((rst_node, n))
                if en_node is not None:
                    facts.controls.add((en_node, n))
    return facts


def use_after_def_holds(facts: DefUseFacts) -> bool:
    """Every use is preceded by a definition of the same signal."""
    for use_node, sig in facts.uses:
        if not any(def_node < use_node for def_node, s in facts.defs if s == sig):
            return False
    return True


def resource_conflicts(facts: DefUseFacts) -> list[tuple]:
    """Resources claimed by more than one concurrent node."""
    by_resource: dict = {}
    for node, res in facts.resources:
        by_resource.setdefault(res, set()).add(node)
    return sorted((res, tuple(sorted(nodes)))
                  for res, nodes in by_resource.items() if len(nodes) > 1)


def facts_ok(facts: DefUseFacts) -> bool:
    return use_after_def_holds(facts) and not resource_conflicts(facts)


def facts_text(facts: DefUseFacts) -> str:
    """Debug dump of the relation tuples, stable order."""
    lines = []
    for n in facts.nodes:
        lines.append(f"node {n.node_id} {n.module} {n.kind} {n.label}")
    for rel, name in ((facts.defs, "def"), (facts.uses, "use"),
                      (facts.resources, "resource")):
        for node, payload in sorted(rel):
            lines.append(f"{name} {node} {payload[0]}.{payload[1]}")
    for a, b in sorted(facts.controls):
        lines.append(f"control {a} -> {b}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class InsertionPoint:
    """A net the generator may splice into: the model-side connection and
    its AST-side signal, which the emission map keeps in lockstep."""

    graph_path: tuple
    connection: Connection
    module: str
    signal: str
    def_node: int
    net_type: SignalType
    admissible: frozenset
    period: SamplePeriod


MAX_CONTROL_DEPTH = 1


def candidate_points(facts: DefUseFacts, emission_map: EmissionMap,
                     model: ModelGraph,
                     catalog: Optional[BlockCatalog] = None) -> list[InsertionPoint]:
    """Nets where a unit pass-through block could be spliced and the three
    rules still hold; equals the insert-and-check oracle on emitted designs."""
    catalog = catalog or default_catalog()
    points: list[InsertionPoint] = []
    for path, g in iter_graphs(model):
        for conn in sorted(g.connections):
            src_block = g.blocks[conn.src[0]]
            net_type = src_block.output_type
            if net_type.is_boolean:
                continue  # pass-through math blocks reject boolean nets
            key = (path, conn.src[0], conn.src[1])
            located = emission_map.model_to_ast.get(key)
            if located is None:
                continue
            module, signal = located
            def_node = facts.def_node(module, signal)
            if def_node is None:
                continue
            if facts.control_depth(def_node) > MAX_CONTROL_DEPTH:
                continue
            if len(facts.writers(module, signal)) > 1:
                continue
            dst_kind = catalog.lookup_kind(g.blocks[conn.dst[0]].kind)
            points.append(InsertionPoint(
                graph_path=path,
                connection=conn,
                module=module,
                signal=signal,
                def_node=def_node,
                net_type=net_type,
                admissible=widened_types(net_type, dst_kind, conn.dst[1]),
                period=src_block.sample_period,
            ))
    return points


def next_constraint(points: list[InsertionPoint], rng: Rng, model: ModelGraph,
                    catalog: Optional[BlockCatalog] = None,
                    config: Optional[GenerationConfig] = None) -> ConstraintInfo:
    """Uniformly sample one point and package the generator's constraint."""
    if not points:
        raise NoInsertionPoint("no admissible insertion point")
    catalog = catalog or default_catalog()
    config = config or GenerationConfig(seed=0)
    point = points[rng.randint(0, len(points) - 1)]
    g = model.subgraph_at(point.graph_path)
    return ConstraintInfo(
        insertion_point=point,
        net_type=point.net_type,
        admissible_types=point.admissible,
        required_period=point.period,
        forbidden_kinds=forbidden_kinds_for(g, point.graph_path, point.net_type,
                                            point.period, catalog, config),
    )


def syntax_guidance(config: GenerationConfig, catalog: Optional[BlockCatalog] = None,
                    seed: Optional[int] = None):
    """The feedback callback wired into model generation: emit the current
    model, extract facts from the AST, pick the next guided point."""
    catalog = catalog or default_catalog()
    rng = Rng(seed if seed is not None else config.seed ^ 0x5EED)

    def callback(m: ModelGraph) -> ConstraintInfo:
        ast, emission_map = build_ast(m, catalog)
        facts = extract_facts(ast)
        points = candidate_points(facts, emission_map, m, catalog)
        return next_constraint(points, rng, m, catalog, config)

    return callback
