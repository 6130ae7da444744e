import pytest

from blockfuzz.catalog import BASE_PERIOD, default_catalog, ufix
from blockfuzz.generator import GenerationConfig, default_matrix, generate_model
from blockfuzz.graph import BlockInstance, iter_graphs, metrics, validate
from blockfuzz.guidance import syntax_guidance
from blockfuzz.reducer import (
    BudgetExhausted,
    TriggerLost,
    TriggerPredicate,
    _apply_removals,
    reduce,
    removable_elements,
    splice_repair,
)
from blockfuzz.rng import Rng

from helpers import const_to_out, two_input_add, unary_chain

CAT = default_catalog()


def _generated(seed, target=30):
    cfg = GenerationConfig(seed=seed, block_count_target=target)
    return generate_model(cfg, CAT, default_matrix(CAT), syntax_guidance(cfg, CAT))


def _marked_predicate(marked_id, kind_name, budget=500):
    def rerun(model):
        block = model.blocks.get(marked_id)
        hit = block is not None and block.kind == kind_name
        return ("Crash", "sig") if hit else ("none", "")

    return TriggerPredicate(classification="Crash", signature="sig",
                            budget=budget, rerun=rerun), rerun


def test_splice_repair_passthrough():
    m = const_to_out()
    from blockfuzz.graph import NetLocation, Connection, insert_block
    g = BlockInstance(2, "Gain", ufix(4), BASE_PERIOD, {"factor": 2})
    m = insert_block(m, NetLocation((), Connection((0, 0), (1, 0))), g)
    r = splice_repair(m, 2)
    assert sorted(b.kind for b in r.blocks.values()) == ["Constant", "Outport"]
    assert len(r.connections) == 1
    assert validate(r, CAT) == []


def test_splice_repair_type_mismatch_gets_constant():
    m = two_input_add(4, 10)  # Add output ufix11, inputs narrower
    r = splice_repair(m, 2)
    kinds = sorted(b.kind for b in r.blocks.values())
    assert kinds.count("Constant") == 1
    new_const = next(b for b in r.blocks.values() if b.kind == "Constant")
    assert new_const.output_type == ufix(11)
    assert new_const.params["value"] == 0
    assert validate(r, CAT) == []


def test_splice_repair_random_sweep():
    """100 random removals all leave a valid graph."""
    rng = Rng(8)
    removed = 0
    while removed < 100:
        m = _generated(rng.randint(0, 9), target=20)
        sites = [(path, bid) for path, g in iter_graphs(m)
                 for bid in sorted(g.blocks)
                 if not (path and g.blocks[bid].kind in ("Inport", "Outport"))]
        path, bid = sites[rng.randint(0, len(sites) - 1)]
        r = splice_repair(m, bid, path, CAT)
        assert validate(r, CAT) == [], (path, bid)
        removed += 1


def test_reduce_seeded_cases_preserve_and_minimize():
    """Marked-block predicate over many seeds: trigger-preserving and
    single-element minimal at block granularity."""
    done = 0
    for seed in range(60):
        if done >= 25:
            break
        m = _generated(seed)
        marked = next((bid for bid in sorted(m.blocks)
                       if m.blocks[bid].kind == "MinMax"), None)
        if marked is None:
            continue
        predicate, rerun = _marked_predicate(marked, "MinMax")
        result = reduce(m, predicate, CAT)
        assert rerun(result.reduced)[0] == "Crash"
        assert validate(result.reduced, CAT) == []
        assert result.minimal
        assert result.evaluations <= 500
        assert result.after.node_count <= result.before.node_count
        for element in removable_elements(result.reduced, CAT):
            candidate = _apply_removals(result.reduced, [element], CAT)
            assert rerun(candidate)[0] != "Crash", (seed, element)
        done += 1
    assert done >= 25


def test_already_minimal_two_block_case():
    m = const_to_out()

    def rerun(model):
        kinds = sorted(b.kind for b in model.blocks.values())
        return ("Crash", "sig") if kinds == ["Constant", "Outport"] else ("none", "")

    predicate = TriggerPredicate(classification="Crash", signature="sig",
                                 rerun=rerun)
    result = reduce(m, predicate, CAT)
    assert result.after.node_count == 2
    assert result.evaluations <= 2


def test_reduction_monotone_node_count():
    m = _generated(4)
    marked = next(bid for bid in sorted(m.blocks)
                  if m.blocks[bid].kind not in ("Inport", "Outport"))
    predicate, _ = _marked_predicate(marked, m.blocks[marked].kind)
    result = reduce(m, predicate, CAT)
    assert result.after.node_count <= result.before.node_count


def test_trigger_lost_when_verifying():
    m = const_to_out()

    def never(_model):
        return ("none", "")

    predicate = TriggerPredicate(classification="Crash", signature="s",
                                 rerun=never)
    with pytest.raises(TriggerLost):
        reduce(m, predicate, CAT, verify_original=True)


def test_budget_exhausted_carries_best_so_far():
    m = _generated(6)
    marked = next(bid for bid in sorted(m.blocks)
                  if m.blocks[bid].kind not in ("Inport", "Outport"))
    predicate, _ = _marked_predicate(marked, m.blocks[marked].kind, budget=3)
    with pytest.raises(BudgetExhausted) as err:
        reduce(m, predicate, CAT)
    best = err.value.result
    assert best.evaluations <= 3
    assert validate(best.reduced, CAT) == []
    assert best.after.node_count <= best.before.node_count


def test_reduction_deterministic():
    m = _generated(7)
    marked = next(bid for bid in sorted(m.blocks)
                  if m.blocks[bid].kind not in ("Inport", "Outport"))
    predicate, _ = _marked_predicate(marked, m.blocks[marked].kind)
    a = reduce(m, predicate, CAT)
    predicate2, _ = _marked_predicate(marked, m.blocks[marked].kind)
    b = reduce(m, predicate2, CAT)
    from blockfuzz.graph import serialize
    assert serialize(a.reduced) == serialize(b.reduced)
    assert a.evaluations == b.evaluations


def test_reduce_drops_unused_references():
    m = _generated(9)
    if metrics(m).reference_count == 0:
        pytest.skip("seed grew no references")
    marked = next(bid for bid in sorted(m.blocks)
                  if m.blocks[bid].kind == "Constant")
    predicate, rerun = _marked_predicate(marked, "Constant")
    result = reduce(m, predicate, CAT)
    assert metrics(result.reduced).reference_count == 0
    assert rerun(result.reduced)[0] == "Crash"
