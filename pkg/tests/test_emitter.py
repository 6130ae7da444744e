import pytest

from blockfuzz.catalog import BASE_PERIOD, BOOL, default_catalog, sfix, ufix
from blockfuzz.emitter import Dialect, build_ast, emit
from blockfuzz.generator import GenerationConfig, default_matrix, generate_model
from blockfuzz.graph import BlockInstance, ModelGraph, iter_graphs, validate
from blockfuzz.guidance import syntax_guidance
from blockfuzz.hdl_parser import ParseError, parse

from helpers import const_to_out, two_input_add, unary_chain

CAT = default_catalog()
ALL_DIALECTS = (Dialect.VERILOG, Dialect.VHDL, Dialect.SYSTEMVERILOG)


def _generated(seed, target=25):
    cfg = GenerationConfig(seed=seed, block_count_target=target)
    return generate_model(cfg, CAT, default_matrix(CAT), syntax_guidance(cfg, CAT))


def test_constant_port_width():
    design = emit(const_to_out(5, 4), Dialect.VERILOG)
    assert "output wire [3:0] out1" in design.text
    assert "4'd5" in design.text


def test_identical_ports_across_dialects():
    m = _generated(3)
    ports = None
    for dialect in ALL_DIALECTS:
        design = emit(m, dialect)
        got = [(p.name, p.direction, p.width) for p in design.ast.top.ports]
        if ports is None:
            ports = got
        assert got == ports, dialect


def test_emission_deterministic():
    m = _generated(4)
    for dialect in ALL_DIALECTS:
        assert emit(m, dialect).text == emit(m, dialect).text


def test_parse_emit_round_trip_all_dialects():
    for seed in range(8):
        m = _generated(seed)
        for dialect in ALL_DIALECTS:
            design = emit(m, dialect)
            assert parse(design.text, dialect) == design.ast, (seed, dialect)


def test_parse_error_on_empty_input():
    for dialect in ALL_DIALECTS:
        with pytest.raises(ParseError) as err:
            parse("", dialect)
        assert err.value.line == 1 and err.value.col == 1


def test_parse_error_out_of_subset():
    with pytest.raises(ParseError):
        parse("module t; initial $display(1); endmodule", Dialect.VERILOG)
    with pytest.raises(ParseError):
        parse("entity t is end t;", Dialect.VHDL)


def test_vhdl_entity_architecture_ports_match():
    m = two_input_add(4, 10)
    design = emit(m, Dialect.VHDL)
    ast = parse(design.text, Dialect.VHDL)
    top = ast.top
    assert [p.name for p in top.ports] == ["clk", "rst", "in0", "in1", "out3"]
    assert top.port("in1").width == 10
    assert top.port("out3").width == 11


def test_module_per_definition_site():
    m = _generated(6, target=30)
    sites = sum(1 for _ in iter_graphs(m))
    design = emit(m, Dialect.VERILOG)
    assert len(design.ast.modules) == sites
    assert design.ast.top.name == "top"
    # children precede their parents so single-file analysis works
    names = [mod.name for mod in design.ast.modules]
    assert names[-1] == "top"


def test_emission_map_round_trip():
    m = _generated(7)
    design = emit(m, Dialect.VERILOG)
    emap = design.emission_map
    count = 0
    for path, g in iter_graphs(m):
        for bid in g.blocks:
            key = (path, bid, 0)
            if key not in emap.model_to_ast:
                continue
            module, signal = emap.signal_for(key)
            assert emap.net_for(module, signal) == key
            count += 1
    assert count > 10


def test_sequential_emission_shapes():
    m = unary_chain(["Detect Increase"], width=6)
    v = emit(m, Dialect.VERILOG).text
    assert "always @(posedge clk)" in v
    assert "if (rst)" in v
    sv = emit(m, Dialect.SYSTEMVERILOG).text
    assert "always_ff @(posedge clk)" in sv
    vh = emit(m, Dialect.VHDL).text
    assert "rising_edge(clk)" in vh
    assert "(others => '0')" in vh


def test_signed_ops_render_with_casts():
    m = ModelGraph()
    m.add_block(BlockInstance(0, "Inport", sfix(8), BASE_PERIOD, {}))
    m.add_block(BlockInstance(1, "Compare To Zero", BOOL, BASE_PERIOD, {"op": "lt"}))
    m.add_block(BlockInstance(2, "Outport", BOOL, BASE_PERIOD, {}))
    m.connect((0, 0), (1, 0))
    m.connect((1, 0), (2, 0))
    assert validate(m) == []
    assert "$signed(in0) < $signed(8'd0)" in emit(m, Dialect.VERILOG).text
    assert "signed(in0) < signed(std_logic_vector(to_unsigned(0, 8)))" \
        in emit(m, Dialect.VHDL).text


def test_stimulus_source_only_at_top():
    from blockfuzz.emitter import UnsupportedConstruct
    child = unary_chain(["Gain"], width=4, in_kind="Constant")
    child.add_block(BlockInstance(9, "StimulusSource", ufix(4), BASE_PERIOD, {}))
    m = const_to_out()
    m.references["c"] = child
    with pytest.raises(UnsupportedConstruct):
        build_ast(m, CAT)
