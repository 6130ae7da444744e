import pytest

from blockfuzz.catalog import BASE_PERIOD, default_catalog, ufix
from blockfuzz.emitter import Dialect, build_ast, emit
from blockfuzz.generator import GenerationConfig, default_matrix, generate_model
from blockfuzz.graph import (
    BlockInstance,
    ConstraintViolated,
    NetLocation,
    insert_block,
    iter_graphs,
    validate,
)
from blockfuzz.guidance import (
    NoInsertionPoint,
    candidate_points,
    extract_facts,
    facts_text,
    facts_ok,
    next_constraint,
    resource_conflicts,
    syntax_guidance,
    use_after_def_holds,
)
from blockfuzz.hdl_ast import (
    Assign,
    Binary,
    Const,
    HdlAst,
    Module,
    NetDecl,
    PortDecl,
    Ref,
    RegDecl,
    RegUpdate,
)
from blockfuzz.rng import Rng

from helpers import two_input_add, unary_chain

CAT = default_catalog()


def _generated(seed, target=22):
    cfg = GenerationConfig(seed=seed, block_count_target=target)
    return generate_model(cfg, CAT, default_matrix(CAT), syntax_guidance(cfg, CAT))


def test_assign_defs_and_uses():
    m = two_input_add(4, 4)
    ast, _ = build_ast(m, CAT)
    facts = extract_facts(ast)
    add_nodes = [n for n in facts.nodes if n.kind == "assign" and n.label == "n2"]
    assert len(add_nodes) == 1
    node = add_nodes[0].node_id
    used = {sig for nid, (mod, sig) in facts.uses if nid == node}
    assert used == {"in0", "in1"}
    assert (node, ("top", "n2")) in facts.defs


def test_control_relation_for_register_updates():
    m = unary_chain(["Detect Change"], width=4)
    ast, _ = build_ast(m, CAT)
    facts = extract_facts(ast)
    controls = list(facts.controls)
    assert len(controls) == 1
    controller, controlled = controls[0]
    names = {n.node_id: n for n in facts.nodes}
    assert names[controller].kind == "control"
    assert names[controlled].kind == "update"
    assert facts.control_depth(controlled) == 1


def test_gated_module_updates_sit_two_controls_deep():
    m = _generated(11)
    design = emit(m, Dialect.VERILOG, CAT)
    facts = extract_facts(design.ast)
    gated = [mod for mod in design.ast.modules if mod.enable and mod.regs]
    if not gated:
        pytest.skip("no gated sequential module in this seed")
    depth2 = [n for n in facts.nodes
              if n.kind == "update" and n.module == gated[0].name]
    assert depth2 and all(facts.control_depth(n.node_id) == 2 for n in depth2)


def test_use_after_def_on_emitted_designs():
    """Every use is preceded by a definition, over 100 emitted designs."""
    for seed in range(100):
        m = _generated(seed, target=14)
        ast, _ = build_ast(m, CAT)
        facts = extract_facts(ast)
        assert use_after_def_holds(facts), seed
        assert not resource_conflicts(facts), seed


def test_resource_conflict_detected_on_double_writer():
    mod = Module(
        name="top",
        ports=(PortDecl("clk", "input", 0), PortDecl("rst", "input", 0),
               PortDecl("in0", "input", 4), PortDecl("out1", "output", 4)),
        nets=(NetDecl("n2", 4),),
        regs=(),
        assigns=(Assign("n2", Ref("in0")),
                 Assign("n2", Binary("add", Ref("in0"), Const(1, 4))),
                 Assign("out1", Ref("n2"))),
        updates=(), instances=(), enable=None)
    facts = extract_facts(HdlAst((mod,)))
    conflicts = resource_conflicts(facts)
    assert conflicts and conflicts[0][0] == ("top", "n2")
    assert not facts_ok(facts)


def test_straight_line_all_internal_nets_candidates():
    m = unary_chain(["Gain", "Bias", "Abs"], width=8)
    ast, emap = build_ast(m, CAT)
    facts = extract_facts(ast)
    points = candidate_points(facts, emap, m, CAT)
    # four nets: in->gain, gain->bias, bias->abs, abs->out; all unsigned
    assert len(points) == 4
    assert {p.signal for p in points} == {"in0", "n1", "n2", "n3"}


def test_boolean_nets_excluded():
    m = unary_chain(["Compare To Zero"], width=8)
    ast, emap = build_ast(m, CAT)
    points = candidate_points(extract_facts(ast), emap, m, CAT)
    assert {p.signal for p in points} == {"in0"}


def test_candidates_equal_insert_and_check_oracle():
    """The predictive filter equals actually trying a unit pass-through
    block at every net, on 50 emitted designs."""
    for seed in range(50):
        m = _generated(seed, target=16)
        ast, emap = build_ast(m, CAT)
        facts = extract_facts(ast)
        predicted = {(p.graph_path, p.connection) for p in
                     candidate_points(facts, emap, m, CAT)}
        oracle = set()
        for path, g in iter_graphs(m):
            for conn in list(g.connections):
                probe = BlockInstance(g.next_id(), "Gain",
                                      g.blocks[conn.src[0]].output_type,
                                      g.blocks[conn.src[0]].sample_period,
                                      {"factor": 1})
                try:
                    result = insert_block(m, NetLocation(path, conn), probe,
                                          catalog=CAT)
                except ConstraintViolated:
                    continue
                new_ast, _ = build_ast(result, CAT)
                if facts_ok(extract_facts(new_ast)):
                    oracle.add((path, conn))
        assert predicted == oracle, seed


def test_next_constraint_uniform_and_seeded():
    from scipy.stats import chisquare

    m = unary_chain(["Gain", "Bias", "Abs", "Unary Minus"], width=8)
    ast, emap = build_ast(m, CAT)
    points = candidate_points(extract_facts(ast), emap, m, CAT)
    assert len(points) == 5
    rng = Rng(55)
    counts = {p.connection: 0 for p in points}
    for _ in range(10_000):
        c = next_constraint(points, rng, m, CAT)
        counts[c.insertion_point.connection] += 1
    _stat, p_value = chisquare(list(counts.values()))
    assert p_value > 0.01, counts


def test_next_constraint_singleton_and_empty():
    m = unary_chain(["Gain"], width=8)
    ast, emap = build_ast(m, CAT)
    points = candidate_points(extract_facts(ast), emap, m, CAT)
    one = [points[0]]
    rng = Rng(1)
    assert next_constraint(one, rng, m, CAT).insertion_point is points[0]
    with pytest.raises(NoInsertionPoint):
        next_constraint([], rng, m, CAT)


def test_widening_follows_merged_width():
    """A net produced by merging narrower inputs admits only widths beyond
    the merged width."""
    m = two_input_add(4, 10)
    ast, emap = build_ast(m, CAT)
    points = candidate_points(extract_facts(ast), emap, m, CAT)
    merged = [p for p in points if p.signal == "n2"]
    assert merged
    widths = sorted(t.word_length for t in merged[0].admissible if not t.is_boolean)
    assert widths[0] == 11 and all(w > 10 for w in widths)


def test_map_coherence():
    """Insertion points name the same signal on both sides of the map."""
    for seed in range(10):
        m = _generated(seed, target=18)
        ast, emap = build_ast(m, CAT)
        for p in candidate_points(extract_facts(ast), emap, m, CAT):
            key = (p.graph_path, p.connection.src[0], p.connection.src[1])
            assert emap.signal_for(key) == (p.module, p.signal)
            assert emap.net_for(p.module, p.signal) == key


def test_facts_dump_stable():
    m = two_input_add(4, 4)
    ast, _ = build_ast(m, CAT)
    a = facts_text(extract_facts(ast))
    b = facts_text(extract_facts(ast))
    assert a == b and "def" in a and "use" in a
