import pytest

from blockfuzz.catalog import BASE_PERIOD, BOOL, SamplePeriod, default_catalog, sfix, ufix
from blockfuzz.graph import (
    BlockInstance,
    Connection,
    ConstraintViolated,
    ModelGraph,
    NetLocation,
    deserialize,
    insert_block,
    iter_graphs,
    metrics,
    serialize,
    validate,
)
from blockfuzz.rng import Rng

from helpers import const_to_out, two_input_add, unary_chain

CAT = default_catalog()


def test_empty_graph_validates():
    assert validate(ModelGraph()) == []


def test_combinational_self_loop_detected():
    m = ModelGraph()
    m.add_block(BlockInstance(0, "Inport", ufix(4), BASE_PERIOD, {}))
    m.add_block(BlockInstance(1, "Add", ufix(5), BASE_PERIOD, {"signs": "++"}))
    m.connect((0, 0), (1, 0))
    m.connect((1, 0), (1, 1))  # feeds its own input, no register
    rules = {v.rule for v in validate(m)}
    assert "CombinationalLoop" in rules


def test_register_breaks_loop():
    m = ModelGraph()
    m.add_block(BlockInstance(0, "Pipeline Register", ufix(4), BASE_PERIOD, {}))
    m.add_block(BlockInstance(1, "Bit Set", ufix(4), BASE_PERIOD, {"index": 0}))
    m.add_block(BlockInstance(2, "Outport", ufix(4), BASE_PERIOD, {}))
    m.connect((0, 0), (1, 0))
    m.connect((1, 0), (0, 0))
    m.connect((1, 0), (2, 0))
    rules = {v.rule for v in validate(m)}
    assert "CombinationalLoop" not in rules
    # but the output port never sees a source block
    assert "UnreachableOutport" in rules


def test_undriven_and_rate_rules():
    m = two_input_add()
    m.connections = [c for c in m.connections if c.dst != (2, 1)]
    assert {v.rule for v in validate(m)} == {"UndrivenPort"}

    m2 = two_input_add()
    m2.blocks[1].sample_period = SamplePeriod(2, 1)
    assert "RateMismatch" in {v.rule for v in validate(m2)}


def test_type_domain_rules():
    m = two_input_add()
    m.blocks[2].output_type = ufix(12)  # declared wider than inferred
    assert "TypeDomain" in {v.rule for v in validate(m)}

    m2 = const_to_out()
    m2.blocks[0].params["value"] = 99  # not representable in 4 bits
    assert "TypeDomain" in {v.rule for v in validate(m2)}


def test_recursive_reference_detected():
    m = const_to_out()
    child = const_to_out()
    m.references["a"] = child
    child.references["b"] = m  # identity cycle
    out = validate(m)
    assert [v.rule for v in out] == ["RecursiveReference"]


def _random_graph(rng: Rng) -> ModelGraph:
    """Arbitrary wiring over same-width blocks; may contain loops."""
    m = ModelGraph()
    width = 6
    n_blocks = rng.randint(3, 10)
    kinds = ["Gain", "Bias", "Unary Minus", "Pipeline Register", "Detect Change",
             "Bit Set", "Bit Clear"]
    m.add_block(BlockInstance(0, "Inport", ufix(width), BASE_PERIOD, {}))
    for i in range(1, n_blocks):
        kind = kinds[rng.randint(0, len(kinds) - 1)]
        params = {}
        if kind == "Gain":
            params = {"factor": rng.randint(0, 63)}
        elif kind == "Bias":
            params = {"value": rng.randint(0, 63)}
        elif kind in ("Bit Set", "Bit Clear"):
            params = {"index": rng.randint(0, width - 1)}
        t = BOOL if kind == "Detect Change" else ufix(width)
        m.add_block(BlockInstance(i, kind, t, BASE_PERIOD, params))
    for i in range(1, n_blocks):
        src = rng.randint(0, n_blocks - 1)
        m.connect((src, 0), (i, 0))
    return m


def test_loop_verdict_matches_dfs_oracle():
    """validate's loop rule equals a brute-force cycle search over the
    pass-through edge set, on 200 random graphs."""
    cat = CAT

    def oracle_has_comb_cycle(g: ModelGraph) -> bool:
        through = {b.id: cat.lookup_kind(b.kind).comb_through
                   for b in g.blocks.values()}
        adj = {b: [] for b in g.blocks}
        for c in g.connections:
            if through[c.src[0]] and through[c.dst[0]]:
                adj[c.src[0]].append(c.dst[0])

        state = {b: 0 for b in g.blocks}

        def dfs(u):
            state[u] = 1
            for v in adj[u]:
                if state[v] == 1 or (state[v] == 0 and dfs(v)):
                    return True
            state[u] = 2
            return False

        return any(state[b] == 0 and dfs(b) for b in g.blocks)

    rng = Rng(2024)
    agreements = 0
    for _ in range(200):
        g = _random_graph(rng)
        flagged = any(v.rule == "CombinationalLoop" for v in validate(g, cat))
        assert flagged == oracle_has_comb_cycle(g)
        agreements += 1
    assert agreements == 200


def test_metrics_direct_counts():
    m = const_to_out()
    g = BlockInstance(2, "Gain", ufix(4), BASE_PERIOD, {"factor": 1})
    m2 = insert_block(m, NetLocation((), Connection((0, 0), (1, 0))), g)
    got = metrics(m2)
    assert (got.node_count, got.connection_count, got.reference_count) == (3, 2, 0)


def test_metrics_counts_references_once():
    m = two_input_add(4, 4)
    child = unary_chain(["Gain"], width=5)
    m.references["m1"] = child
    m.references["m2"] = unary_chain(["Bias"], width=5)
    m.add_block(BlockInstance(4, "Model", ufix(5), BASE_PERIOD, {"reference": "m1"}))
    m.add_block(BlockInstance(5, "Model", ufix(5), BASE_PERIOD, {"reference": "m1"}))
    m.add_block(BlockInstance(6, "Model", ufix(5), BASE_PERIOD, {"reference": "m2"}))
    for i in (4, 5, 6):
        m.connect((2, 0), (i, 0))
        out = m.next_id()
        m.add_block(BlockInstance(out, "Outport", ufix(5), BASE_PERIOD, {}))
        m.connect((i, 0), (out, 0))
    assert validate(m, CAT) == []
    got = metrics(m)
    assert got.reference_count == 2  # m1 shared by two instances
    # 4 original + 3 instances + 3 outports at top, plus 3 per child definition
    assert got.node_count == 10 + 3 + 3


def test_metrics_equal_recursive_oracle():
    """Counts match an independent recursive walk on 100 random hierarchies."""
    rng = Rng(99)

    def random_hierarchy(depth) -> ModelGraph:
        m = unary_chain(["Gain", "Bias"], width=4)
        if depth > 0 and rng.randint(0, 1):
            m.references[f"r{depth}"] = random_hierarchy(depth - 1)
        if depth > 0 and rng.randint(0, 1):
            m.subsystems[f"s{depth}"] = random_hierarchy(depth - 1)
        return m

    def oracle(g: ModelGraph):
        nodes = len(g.blocks)
        conns = len(g.connections)
        for child in list(g.subsystems.values()) + list(g.references.values()):
            n, c = oracle(child)
            nodes += n
            conns += c
        return nodes, conns

    for _ in range(100):
        m = random_hierarchy(3)
        got = metrics(m)
        nodes, conns = oracle(m)
        assert (got.node_count, got.connection_count) == (nodes, conns)


def test_insert_gain_splices_linearly():
    m = const_to_out()
    g = BlockInstance(2, "Gain", ufix(4), BASE_PERIOD, {"factor": 2})
    m2 = insert_block(m, NetLocation((), Connection((0, 0), (1, 0))), g)
    assert validate(m2) == []
    assert sorted(m2.connections) == [Connection((0, 0), (2, 0)),
                                      Connection((2, 0), (1, 0))]
    # original untouched
    assert len(m.blocks) == 2 and len(m.connections) == 1


def test_insert_add_widens_downstream():
    m = ModelGraph()
    m.add_block(BlockInstance(0, "Inport", ufix(10), BASE_PERIOD, {}))
    m.add_block(BlockInstance(1, "Inport", ufix(4), BASE_PERIOD, {}))
    m.add_block(BlockInstance(2, "Outport", ufix(10), BASE_PERIOD, {}))
    m.connect((0, 0), (2, 0))
    b = BlockInstance(3, "Add", ufix(11), BASE_PERIOD, {"signs": "++"})
    m2 = insert_block(m, NetLocation((), Connection((0, 0), (2, 0))), b,
                      taps={1: (1, 0)})
    assert validate(m2) == []
    assert m2.blocks[3].output_type == ufix(11)
    assert m2.blocks[2].output_type == ufix(11)  # outport re-typed


def test_insert_rejects_self_cycle():
    m = two_input_add(4, 4)
    # tapping the Add output feeds the new block from downstream of the net
    b = BlockInstance(9, "Add", ufix(6), BASE_PERIOD, {"signs": "++"})
    with pytest.raises(ConstraintViolated):
        insert_block(m, NetLocation((), Connection((0, 0), (2, 0))), b,
                     taps={1: (2, 0)})


def test_insert_source_rejected():
    m = const_to_out()
    b = BlockInstance(7, "Constant", ufix(4), BASE_PERIOD, {"value": 0})
    with pytest.raises(ConstraintViolated):
        insert_block(m, NetLocation((), Connection((0, 0), (1, 0))), b)


def test_insert_transactional_property():
    """Either the insertion raises or the result validates; the input graph
    is never modified, nodes grow by one and connections never shrink."""
    rng = Rng(31)
    cat = CAT
    kinds = ["Gain", "Abs", "Add", "Compare To Zero", "Outport", "MinMax",
             "Pipeline Register", "Bit Set", "Divide"]
    trials = successes = 0
    for seed in range(40):
        m = two_input_add(rng.randint(2, 8), rng.randint(2, 8))
        before = serialize(m)
        base_metrics = metrics(m)
        conns = sorted(m.connections)
        conn = conns[rng.randint(0, len(conns) - 1)]
        name = kinds[rng.randint(0, len(kinds) - 1)]
        params = {}
        if name == "Gain":
            params = {"factor": 1}
        elif name == "Add":
            params = {"signs": "++"}
        elif name == "Compare To Zero":
            params = {"op": "ne"}
        elif name == "MinMax":
            params = {"mode": "min", "input_count": 3}
        elif name == "Bit Set":
            params = {"index": 0}
        b = BlockInstance(m.next_id(), name, ufix(4), BASE_PERIOD, params)
        trials += 1
        try:
            result = insert_block(m, NetLocation((), conn), b, catalog=cat)
        except ConstraintViolated:
            assert serialize(m) == before
            continue
        successes += 1
        assert validate(result, cat) == []
        assert serialize(m) == before
        after = metrics(result)
        assert after.node_count == base_metrics.node_count + 1
        assert after.connection_count >= base_metrics.connection_count + 1
    assert successes >= 10 and trials - successes >= 1


def test_serialize_round_trip():
    m = two_input_add(4, 10)
    m.references["child"] = unary_chain(["Gain"], width=11)
    text = serialize(m)
    again = deserialize(text)
    assert serialize(again) == text
    assert sorted(again.blocks) == sorted(m.blocks)
    assert sorted(again.connections) == sorted(m.connections)
    assert list(again.references) == ["child"]


def test_iter_graphs_deterministic_order():
    m = const_to_out()
    m.subsystems["b"] = const_to_out()
    m.subsystems["a"] = const_to_out()
    m.references["z"] = const_to_out()
    paths = [p for p, _ in iter_graphs(m)]
    assert paths == [(), (("sub", "a"),), (("sub", "b"),), (("ref", "z"),)]
