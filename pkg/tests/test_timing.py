from blockfuzz.catalog import BASE_PERIOD, default_catalog, ufix
from blockfuzz.graph import BlockInstance, ModelGraph, metrics, validate
from blockfuzz.interpreter import make_stimulus, simulate
from blockfuzz.rng import Rng
from blockfuzz.timing import critical_path, optimize

from helpers import two_input_add, unary_chain

CAT = default_catalog()


def test_single_add_unit_delay():
    report = critical_path(two_input_add(4, 4))
    assert report.critical_delay == 1.0
    assert report.critical_path == (2,)


def test_chain_sums_weights():
    m = unary_chain(["Gain", "Bias", "Abs"], width=8)
    report = critical_path(m)
    assert report.critical_delay == 3.0
    assert report.critical_path == (1, 2, 3)


def test_registers_cut_paths():
    m = unary_chain(["Gain", "Pipeline Register", "Bias", "Abs"], width=8)
    assert critical_path(m).critical_delay == 2.0


def test_delay_override_changes_path():
    m = unary_chain(["Gain", "Bias"], width=8)
    tuned = CAT.with_delay_overrides({"Gain": 5.0})
    assert critical_path(m, tuned).critical_delay == 6.0


def test_model_reference_contributes_child_delay():
    child = unary_chain(["Gain", "Bias"], width=4)
    m = ModelGraph()
    m.add_block(BlockInstance(0, "Inport", ufix(4), BASE_PERIOD, {}))
    m.references["c"] = child
    m.add_block(BlockInstance(1, "Model", ufix(4), BASE_PERIOD, {"reference": "c"}))
    m.add_block(BlockInstance(2, "Abs", ufix(4), BASE_PERIOD, {}))
    m.add_block(BlockInstance(3, "Outport", ufix(4), BASE_PERIOD, {}))
    m.connect((0, 0), (1, 0))
    m.connect((1, 0), (2, 0))
    m.connect((2, 0), (3, 0))
    assert validate(m) == []
    assert critical_path(m).critical_delay == 3.0


def _random_dag(rng: Rng, max_nodes=15) -> ModelGraph:
    """Register-free random DAG of unit-weight unary blocks plus sinks."""
    m = ModelGraph()
    m.add_block(BlockInstance(0, "Inport", ufix(6), BASE_PERIOD, {}))
    kinds = ["Gain", "Bias", "Unary Minus", "Bit Set", "Abs"]
    n = rng.randint(2, max_nodes - 2)
    for i in range(1, n):
        kind = kinds[rng.randint(0, len(kinds) - 1)]
        params = {"factor": 1} if kind == "Gain" else \
            {"value": 1} if kind == "Bias" else \
            {"index": 0} if kind == "Bit Set" else {}
        m.add_block(BlockInstance(i, kind, ufix(6), BASE_PERIOD, params))
        m.connect((rng.randint(0, i - 1), 0), (i, 0))
    m.add_block(BlockInstance(n, "Outport", ufix(6), BASE_PERIOD, {}))
    m.connect((n - 1, 0), (n, 0))
    return m


def test_matches_brute_force_on_random_dags():
    """Exact equality with all-paths enumeration on 200 random DAGs."""
    rng = Rng(404)

    def brute_force(g: ModelGraph) -> float:
        weights = {b.id: (0.0 if g.blocks[b.id].kind in
                          ("Inport", "Outport", "Constant", "StimulusSource")
                          else CAT.lookup_kind(g.blocks[b.id].kind).delay_weight)
                   for b in g.blocks.values()}
        adj = {b: [] for b in g.blocks}
        for c in g.connections:
            adj[c.src[0]].append(c.dst[0])
        best = 0.0
        sources = [b.id for b in g.blocks.values() if b.kind == "Inport"]

        def walk(u, acc):
            nonlocal best
            acc += weights[u]
            best = max(best, acc)
            for v in adj[u]:
                walk(v, acc)

        for s in sources:
            walk(s, 0.0)
        return best

    for _ in range(200):
        g = _random_dag(rng)
        assert validate(g, CAT) == []
        assert critical_path(g, CAT).critical_delay == brute_force(g)


def test_optimize_four_chain():
    m = unary_chain(["Gain", "Bias", "Gain", "Bias"], width=8)
    graph, choice = optimize(m, 2, CAT)
    assert choice.chosen == "level2"
    assert choice.depth == 2
    assert critical_path(graph, CAT).critical_delay == 2.0
    # latency equivalence: outputs shift by exactly the depth
    stim = make_stimulus(m, 9, 16)
    base = simulate(m, stim, CAT)
    piped = simulate(graph, stim, CAT)
    for name in base.outputs:
        for t in range(16 - choice.depth):
            assert piped.outputs[name][t + choice.depth] == base.outputs[name][t]


def test_optimize_keeps_legacy_when_no_gain():
    m = unary_chain(["Pipeline Register", "Gain", "Pipeline Register"], width=8)
    graph, choice = optimize(m, 3, CAT)
    assert choice.chosen == "legacy"
    assert choice.depth == 0
    assert metrics(graph) == metrics(m)


def test_optimize_metric_table_contract():
    m = unary_chain(["Gain", "Bias", "Abs", "Unary Minus", "Gain"], width=8)
    m.blocks[5].params["factor"] = 1
    _graph, choice = optimize(m, 3, CAT)
    best = choice.metrics[choice.chosen]
    assert all(best >= v for v in choice.metrics.values())
    assert choice.metrics[choice.chosen] >= choice.metrics["legacy"]


def test_optimize_feedback_designs_fall_back_to_legacy():
    m = ModelGraph()
    m.add_block(BlockInstance(0, "Inport", ufix(4), BASE_PERIOD, {}))
    m.add_block(BlockInstance(1, "Pipeline Register", ufix(4), BASE_PERIOD, {}))
    m.add_block(BlockInstance(2, "Bitwise Operator", ufix(4), BASE_PERIOD,
                              {"op": "AND", "input_count": 2}))
    m.add_block(BlockInstance(3, "Outport", ufix(4), BASE_PERIOD, {}))
    m.connect((0, 0), (2, 0))
    m.connect((1, 0), (2, 1))   # feedback through the register
    m.connect((2, 0), (1, 0))
    m.connect((2, 0), (3, 0))
    assert validate(m, CAT) == []
    _graph, choice = optimize(m, 2, CAT)
    assert choice.chosen == "legacy"
