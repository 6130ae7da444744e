import pytest

from blockfuzz.catalog import (
    BOOL,
    BlockGroup,
    SamplePeriod,
    SignalType,
    Signedness,
    TypeRuleViolation,
    UnknownBlockKind,
    default_catalog,
    detect_compare,
    evaluate,
    infer_output_type,
    lookup_kind,
    sfix,
    ufix,
    wrap,
)
from blockfuzz.rng import Rng


def test_lookup_known_kinds():
    add = lookup_kind("Add")
    assert add.group is BlockGroup.MATH
    assert len(add.inputs) == 2
    assert len(add.outputs) == 1
    bit_set = lookup_kind("Bit Set")
    assert bit_set.group is BlockGroup.HDL_SPECIFIC


def test_lookup_unknown_kind():
    with pytest.raises(UnknownBlockKind):
        lookup_kind("NoSuchBlock")


def test_lookup_stable_identity():
    assert lookup_kind("Gain") is lookup_kind("Gain")


def test_group_coverage():
    cat = default_catalog()
    for group in BlockGroup:
        assert len(cat.group(group)) >= 3, group


def test_delay_weights_partition():
    # zero exactly for the state-holding register elements
    for kind in default_catalog().kinds:
        if kind.is_sequential:
            assert kind.delay_weight == 0.0, kind.name
        else:
            assert kind.delay_weight > 0.0, kind.name


def test_delay_override_returns_new_catalog():
    cat = default_catalog()
    tuned = cat.with_delay_overrides({"Add": 2.5})
    assert tuned.lookup_kind("Add").delay_weight == 2.5
    assert cat.lookup_kind("Add").delay_weight == 1.0
    with pytest.raises(UnknownBlockKind):
        cat.with_delay_overrides({"Nope": 1.0})


def test_signal_type_invariants():
    assert str(ufix(4)) == "ufix4"
    assert str(sfix(10)) == "sfix10"
    with pytest.raises(ValueError):
        SignalType(Signedness.UNSIGNED, 0)
    with pytest.raises(ValueError):
        SignalType(Signedness.UNSIGNED, 65)
    with pytest.raises(ValueError):
        SignalType(Signedness.BOOLEAN, 2)
    with pytest.raises(ValueError):
        SignalType(Signedness.UNSIGNED, 8, fraction_length=3)


def test_sample_period_lowest_terms():
    p = SamplePeriod(4, 6)
    assert (p.numerator, p.denominator) == (2, 3)
    assert SamplePeriod(2, 1) == SamplePeriod(4, 2)
    with pytest.raises(ValueError):
        SamplePeriod(0, 1)


def test_add_width_growth():
    assert infer_output_type(lookup_kind("Add"), [ufix(4), ufix(10)]) == ufix(11)
    assert infer_output_type(lookup_kind("Add"), [ufix(64), ufix(64)]) == ufix(64)
    assert infer_output_type(lookup_kind("Add"), [sfix(8), ufix(4)]) == sfix(9)


def test_abs_magnitude_fits_unsigned():
    assert infer_output_type(lookup_kind("Abs"), [sfix(8)]) == ufix(8)
    assert infer_output_type(lookup_kind("Abs"), [ufix(5)]) == ufix(5)


def test_compare_yields_boolean():
    assert infer_output_type(lookup_kind("Compare To Zero"), [sfix(16)]) == BOOL


def test_unsigned_only_blocks_reject_signed():
    with pytest.raises(TypeRuleViolation):
        infer_output_type(lookup_kind("Bit Set"), [sfix(8)])
    with pytest.raises(TypeRuleViolation):
        infer_output_type(lookup_kind("Gain"), [BOOL])


def test_bitwise_requires_identical_types():
    with pytest.raises(TypeRuleViolation):
        infer_output_type(lookup_kind("Bitwise Operator"), [ufix(4), ufix(5)])
    assert infer_output_type(lookup_kind("Bitwise Operator"),
                             [ufix(4), ufix(4), ufix(4)]) == ufix(4)


def test_variadic_arity_bounds():
    with pytest.raises(TypeRuleViolation):
        infer_output_type(lookup_kind("MinMax"), [ufix(4)])
    assert infer_output_type(lookup_kind("MinMax"), [ufix(4)] * 12) == ufix(4)
    with pytest.raises(TypeRuleViolation):
        infer_output_type(lookup_kind("MinMax"), [ufix(4)] * 13)


def test_bit_to_integer_width_tracks_arity():
    assert infer_output_type(lookup_kind("Bit to Integer Converter"),
                             [BOOL] * 5) == ufix(5)


def test_infer_deterministic_and_total():
    """Any admissible input vector infers the same type on every call."""
    rng = Rng(7)
    cat = default_catalog()
    widths = [1, 2, 4, 8, 16, 63, 64]
    types = [ufix(w) for w in widths] + [sfix(w) for w in widths] + [BOOL]
    checked = 0
    for kind in cat.kinds:
        if kind.name in ("Constant", "Inport", "StimulusSource", "Outport",
                         "If Action Subsystem", "Model"):
            continue
        for _ in range(200):
            arity = kind.arity({"input_count": rng.randint(2, 12)}) \
                if kind.variadic else len(kind.inputs)
            vec = [types[rng.randint(0, len(types) - 1)] for _ in range(arity)]
            try:
                first = infer_output_type(kind, vec)
            except TypeRuleViolation:
                continue
            assert infer_output_type(kind, vec) == first
            checked += 1
    assert checked > 500


def test_evaluate_core_semantics():
    add = lookup_kind("Add")
    assert evaluate(add, {"signs": "++"}, [ufix(4), ufix(4)], [3, 5], ufix(5)) == 8
    assert evaluate(add, {"signs": "+-"}, [ufix(4), ufix(4)], [3, 5], ufix(5)) == wrap(-2, 5)
    div = lookup_kind("Divide")
    assert evaluate(div, {}, [ufix(8), ufix(8)], [7, 2], ufix(8)) == 3
    # division by zero saturates to all ones
    assert evaluate(div, {}, [ufix(8), ufix(8)], [7, 0], ufix(8)) == 255
    # signed division truncates toward zero
    assert evaluate(div, {}, [sfix(8), sfix(8)], [wrap(-7, 8), 2], sfix(8)) == wrap(-3, 8)
    ab = lookup_kind("Abs")
    assert evaluate(ab, {}, [sfix(8)], [wrap(-128, 8)], ufix(8)) == 128
    gain = lookup_kind("Gain")
    assert evaluate(gain, {"factor": 5}, [ufix(4)], [7], ufix(4)) == wrap(35, 4)
    mm = lookup_kind("MinMax")
    assert evaluate(mm, {"mode": "max", "input_count": 3},
                    [sfix(4)] * 3, [wrap(-2, 4), 1, 3], sfix(4)) == 3
    bw = lookup_kind("Bitwise Operator")
    assert evaluate(bw, {"op": "NAND", "input_count": 2},
                    [ufix(4)] * 2, [0b1100, 0b1010], ufix(4)) == 0b0111
    b2i = lookup_kind("Bit to Integer Converter")
    assert evaluate(b2i, {"input_count": 3}, [BOOL] * 3, [1, 0, 1], ufix(3)) == 0b101


def test_detect_compare_signedness():
    assert detect_compare("Detect Change", 3, 3, ufix(4)) == 0
    assert detect_compare("Detect Change", 4, 3, ufix(4)) == 1
    # pattern 0b1111 is -1 signed, so it is a decrease from 0
    assert detect_compare("Detect Decrease", 0b1111, 0, sfix(4)) == 1
    assert detect_compare("Detect Increase", 0b1111, 0, ufix(4)) == 1
