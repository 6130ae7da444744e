"""Block library: kinds, port signatures, type rules and value semantics.

Every block kind carries its type rule and its combinational value function
here, so the simulator and the HDL emitters agree on semantics by
construction instead of by parallel maintenance.  Values are always raw bit
patterns (Python ints in [0, 2**W)); signed interpretation happens inside
the operations that care.

Fixed-point types are integer-only in this version: ``fraction_length`` is
pinned to 0 and kept as a field so the extension point is visible in the
serialized form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence


class CatalogError(Exception):
    pass


class UnknownBlockKind(CatalogError):
    pass


class TypeRuleViolation(CatalogError):
    pass


class Signedness(Enum):
    UNSIGNED = "unsigned"
    SIGNED = "signed"
    BOOLEAN = "boolean"


MAX_WORD_LENGTH = 64


@dataclass(frozen=True, order=True)
class SignalType:
    """Signedness plus bit width of a port or net."""

    signedness: Signedness
    word_length: int
    fraction_length: int = 0

    def __post_init__(self):
        if not 1 <= self.word_length <= MAX_WORD_LENGTH:
            raise ValueError(f"word_length {self.word_length} outside 1..{MAX_WORD_LENGTH}")
        if self.signedness is Signedness.BOOLEAN and self.word_length != 1:
            raise ValueError("boolean type must be 1 bit wide")
        if self.fraction_length != 0:
            raise ValueError("fraction_length must be 0 (integer-only fixed point)")

    @property
    def is_boolean(self) -> bool:
        return self.signedness is Signedness.BOOLEAN

    @property
    def is_signed(self) -> bool:
        return self.signedness is Signedness.SIGNED

    def max_pattern(self) -> int:
        return (1 << self.word_length) - 1

    def __str__(self) -> str:
        if self.is_boolean:
            return "bool"
        prefix = "sfix" if self.is_signed else "ufix"
        return f"{prefix}{self.word_length}"


def ufix(width: int) -> SignalType:
    return SignalType(Signedness.UNSIGNED, width)


def sfix(width: int) -> SignalType:
    return SignalType(Signedness.SIGNED, width)


BOOL = SignalType(Signedness.BOOLEAN, 1)


@dataclass(frozen=True, order=True)
class SamplePeriod:
    """Block clocking period as a positive rational, in lowest terms."""

    numerator: int
    denominator: int = 1

    def __post_init__(self):
        if self.numerator <= 0 or self.denominator <= 0:
            raise ValueError("sample period must be positive")
        g = math.gcd(self.numerator, self.denominator)
        object.__setattr__(self, "numerator", self.numerator // g)
        object.__setattr__(self, "denominator", self.denominator // g)

    def __str__(self) -> str:
        return f"{self.numerator}/{self.denominator}"


BASE_PERIOD = SamplePeriod(1, 1)


# ---------------------------------------------------------------------------
# bit-pattern arithmetic helpers

def wrap(value: int, width: int) -> int:
    """Truncate to ``width`` bits (two's-complement wraparound)."""
    return value & ((1 << width) - 1)


def to_signed(pattern: int, width: int) -> int:
    """Reinterpret a bit pattern as a two's-complement integer."""
    if pattern & (1 << (width - 1)):
        return pattern - (1 << width)
    return pattern


def as_integer(pattern: int, t: SignalType) -> int:
    """Numeric value of a pattern under its type's interpretation."""
    if t.is_signed:
        return to_signed(pattern, t.word_length)
    return pattern


class BlockGroup(Enum):
    SOURCE_SINK = "SourceSink"
    MATH = "Math"
    HDL_SPECIFIC = "HdlSpecific"
    CONTROL_FLOW = "ControlFlow"


@dataclass(frozen=True)
class PortSpec:
    name: str
    accepts: Callable[[SignalType], bool]


def _any_type(t: SignalType) -> bool:
    return True


def _numeric(t: SignalType) -> bool:
    return not t.is_boolean


def _unsigned_only(t: SignalType) -> bool:
    return t.signedness is Signedness.UNSIGNED


def _bit_like(t: SignalType) -> bool:
    return t.signedness in (Signedness.UNSIGNED, Signedness.BOOLEAN)


def _boolean_only(t: SignalType) -> bool:
    return t.is_boolean


COMPARE_OPS = ("eq", "ne", "lt", "le", "gt", "ge")
BITWISE_OPS = ("AND", "OR", "XOR", "NAND", "NOR", "XNOR")
ADD_SIGNS = ("++", "+-", "-+", "--")
MINMAX_MODES = ("min", "max")

VARIADIC_MIN = 2
VARIADIC_MAX = 12


@dataclass(frozen=True)
class BlockKind:
    """One entry of the block library.

    ``inputs`` is the base port signature; for variadic kinds the actual
    arity is a per-instance parameter (``input_count``) and every extra
    port repeats the last base spec.  ``is_sequential`` marks kinds that
    hold state across cycles; ``comb_through`` marks kinds whose output
    still depends combinationally on the current-cycle inputs (the change
    detectors do, a pipeline register does not).
    """

    name: str
    group: BlockGroup
    inputs: tuple[PortSpec, ...]
    outputs: tuple[PortSpec, ...]
    is_sequential: bool = False
    comb_through: bool = True
    delay_weight: float = 1.0
    variadic: bool = False
    template: str = ""
    param_spec: tuple[str, ...] = ()
    # None inherits the rate at the insertion point; a value pins the kind
    # to one period and makes it ineligible at any other rate
    fixed_period: Optional[SamplePeriod] = None

    def runs_at(self, period: SamplePeriod) -> bool:
        return self.fixed_period is None or self.fixed_period == period

    def arity(self, params: Optional[dict] = None) -> int:
        if self.variadic:
            if params is None or "input_count" not in params:
                return len(self.inputs)
            return int(params["input_count"])
        return len(self.inputs)

    def port_accepts(self, index: int, t: SignalType) -> bool:
        spec = self.inputs[min(index, len(self.inputs) - 1)]
        return spec.accepts(t)


def _require(cond: bool, message: str):
    if not cond:
        raise TypeRuleViolation(message)


def _same_signedness(types: Sequence[SignalType], kind_name: str) -> Signedness:
    sgn = types[0].signedness
    _require(
        all(t.signedness == sgn for t in types),
        f"{kind_name} requires inputs of one signedness",
    )
    return sgn


def _check_arity(kind: BlockKind, input_types: Sequence[SignalType]):
    n = len(input_types)
    if kind.variadic:
        if not VARIADIC_MIN <= n <= VARIADIC_MAX:
            raise TypeRuleViolation(
                f"{kind.name} takes {VARIADIC_MIN}..{VARIADIC_MAX} inputs, got {n}")
    elif n != len(kind.inputs):
        raise TypeRuleViolation(f"{kind.name} takes {len(kind.inputs)} inputs, got {n}")
    for i, t in enumerate(input_types):
        if not kind.port_accepts(i, t):
            raise TypeRuleViolation(f"{kind.name} input {i} rejects {t}")


# type rules ---------------------------------------------------------------

def _infer(kind: BlockKind, input_types: Sequence[SignalType]) -> SignalType:
    name = kind.name
    if name == "Abs":
        return ufix(input_types[0].word_length)
    if name == "Add":
        sgn = Signedness.SIGNED if any(t.is_signed for t in input_types) else Signedness.UNSIGNED
        width = min(max(t.word_length for t in input_types) + 1, MAX_WORD_LENGTH)
        return SignalType(sgn, width)
    if name in ("Bias", "Gain", "Unary Minus", "Bit Clear", "Bit Set", "Bitwise Operator", "Pipeline Register"):
        if name == "Bitwise Operator":
            first = input_types[0]
            _require(
                all(t == first for t in input_types),
                "Bitwise Operator requires identical input types",
            )
        return input_types[0]
    if name == "Divide":
        _same_signedness(input_types, name)
        return input_types[0]
    if name == "MinMax":
        sgn = _same_signedness(input_types, name)
        return SignalType(sgn, max(t.word_length for t in input_types))
    if name == "Bit to Integer Converter":
        return ufix(len(input_types))
    if name in ("Compare To Constant", "Compare To Zero", "Detect Change",
                "Detect Increase", "Detect Decrease", "If"):
        return BOOL
    raise TypeRuleViolation(f"{name} has no inferable output type")


# kinds whose output type comes from context (declared on the instance)
DECLARED_OUTPUT_KINDS = frozenset(
    {"Constant", "Inport", "StimulusSource", "If Action Subsystem", "Model"}
)


def infer_output_type(
    kind: BlockKind,
    input_types: Sequence[SignalType],
    declared: Optional[SignalType] = None,
) -> SignalType:
    """Output type of ``kind`` driven by ``input_types``.

    Source blocks and hierarchy blocks carry their output type on the
    instance; for those ``declared`` is returned after the input checks.
    Raises TypeRuleViolation for inadmissible inputs.
    """
    _check_arity(kind, input_types)
    if kind.name in DECLARED_OUTPUT_KINDS:
        _require(declared is not None, f"{kind.name} output type is declared, not inferred")
        return declared
    if not kind.outputs:
        raise TypeRuleViolation(f"{kind.name} has no output")
    return _infer(kind, input_types)


# parameter validation ------------------------------------------------------

def validate_params(kind: BlockKind, params: dict, output_type: SignalType,
                    input_types: Sequence[SignalType] = ()) -> list[str]:
    """Range-check instance parameters; returns human-readable problems."""
    problems: list[str] = []
    name = kind.name

    def need(key):
        if key not in params:
            problems.append(f"{name} missing param {key!r}")
            return False
        return True

    for key in params:
        if key not in kind.param_spec:
            problems.append(f"{name} has no param {key!r}")
    if name == "Constant":
        if need("value"):
            v = params["value"]
            if not isinstance(v, int) or not 0 <= v <= output_type.max_pattern():
                problems.append(f"Constant value {v!r} not representable in {output_type}")
    elif name == "Add":
        if need("signs") and params["signs"] not in ADD_SIGNS:
            problems.append(f"Add signs {params['signs']!r} not one of {ADD_SIGNS}")
    elif name in ("Bias", "Gain"):
        key = "value" if name == "Bias" else "factor"
        if need(key):
            v = params[key]
            if not isinstance(v, int) or not 0 <= v <= output_type.max_pattern():
                problems.append(f"{name} {key} {v!r} not representable in {output_type}")
    elif name == "MinMax":
        if need("mode") and params["mode"] not in MINMAX_MODES:
            problems.append(f"MinMax mode {params['mode']!r} not one of {MINMAX_MODES}")
    elif name in ("Bit Clear", "Bit Set"):
        if need("index"):
            i = params["index"]
            width = input_types[0].word_length if input_types else output_type.word_length
            if not isinstance(i, int) or not 0 <= i < width:
                problems.append(f"{name} bit index {i!r} outside 0..{width - 1}")
    elif name == "Bitwise Operator":
        if need("op") and params["op"] not in BITWISE_OPS:
            problems.append(f"Bitwise op {params['op']!r} not one of {BITWISE_OPS}")
    elif name in ("Compare To Constant", "Compare To Zero"):
        if need("op") and params["op"] not in COMPARE_OPS:
            problems.append(f"{name} op {params['op']!r} not one of {COMPARE_OPS}")
        if name == "Compare To Constant" and need("value"):
            v = params["value"]
            if input_types:
                limit = input_types[0].max_pattern()
                if not isinstance(v, int) or not 0 <= v <= limit:
                    problems.append(f"compare constant {v!r} not representable in {input_types[0]}")
    elif name == "If Action Subsystem":
        if need("subsystem"):
            pass
    elif name == "Model":
        if need("reference"):
            pass
    if kind.variadic and "input_count" in kind.param_spec:
        if need("input_count"):
            n = params["input_count"]
            if not isinstance(n, int) or not VARIADIC_MIN <= n <= VARIADIC_MAX:
                problems.append(f"{name} input_count {n!r} outside {VARIADIC_MIN}..{VARIADIC_MAX}")
    return problems


# combinational value semantics ---------------------------------------------

def _compare(op: str, a: int, b: int) -> int:
    return int({
        "eq": a == b,
        "ne": a != b,
        "lt": a < b,
        "le": a <= b,
        "gt": a > b,
        "ge": a >= b,
    }[op])


def _div_trunc(a: int, b: int) -> int:
    # Python // floors; HDL division truncates toward zero.
    q = abs(a) // abs(b)
    return -q if (a < 0) != (b < 0) else q


def evaluate(
    kind: BlockKind,
    params: dict,
    input_types: Sequence[SignalType],
    values: Sequence[int],
    output_type: SignalType,
) -> int:
    """Combinational output pattern for one cycle.

    Division by zero yields the all-ones pattern; everything else wraps
    modulo 2**W.  Sequential kinds are not handled here (the simulator owns
    their state).
    """
    name = kind.name
    W = output_type.word_length
    if name in ("Inport", "StimulusSource", "Constant"):
        return params["value"] if name == "Constant" else values[0]
    if name == "Abs":
        return wrap(abs(as_integer(values[0], input_types[0])), W)
    if name == "Add":
        total = 0
        for sign, t, v in zip(params["signs"], input_types, values):
            x = as_integer(v, t)
            total += x if sign == "+" else -x
        return wrap(total, W)
    if name == "Bias":
        return wrap(values[0] + params["value"], W)
    if name == "Divide":
        if values[1] == 0:
            return output_type.max_pattern()
        if input_types[0].is_signed:
            return wrap(_div_trunc(to_signed(values[0], input_types[0].word_length),
                                   to_signed(values[1], input_types[1].word_length)), W)
        return wrap(values[0] // values[1], W)
    if name == "Gain":
        return wrap(values[0] * params["factor"], W)
    if name == "MinMax":
        nums = [as_integer(v, t) for v, t in zip(values, input_types)]
        pick = min(nums) if params["mode"] == "min" else max(nums)
        return wrap(pick, W)
    if name == "Unary Minus":
        return wrap(-values[0], W)
    if name == "Bit Clear":
        return values[0] & ~(1 << params["index"]) & output_type.max_pattern()
    if name == "Bit Set":
        return values[0] | (1 << params["index"])
    if name == "Bitwise Operator":
        op = params["op"]
        acc = values[0]
        for v in values[1:]:
            if op in ("AND", "NAND"):
                acc &= v
            elif op in ("OR", "NOR"):
                acc |= v
            else:
                acc ^= v
        if op in ("NAND", "NOR", "XNOR"):
            acc = ~acc & output_type.max_pattern()
        return acc
    if name == "Bit to Integer Converter":
        out = 0
        for i, v in enumerate(values):
            out |= (v & 1) << i
        return out
    if name == "Compare To Constant":
        t = input_types[0]
        return _compare(params["op"], as_integer(values[0], t), as_integer(params["value"], t))
    if name == "Compare To Zero":
        return _compare(params["op"], as_integer(values[0], input_types[0]), 0)
    if name == "If":
        return int(values[0] != 0)
    raise TypeRuleViolation(f"{name} has no combinational value rule")


def detect_compare(kind_name: str, current: int, previous: int, t: SignalType) -> int:
    """Change-detector outputs: compare this cycle's input with the last."""
    a = as_integer(current, t)
    b = as_integer(previous, t)
    if kind_name == "Detect Change":
        return int(a != b)
    if kind_name == "Detect Increase":
        return int(a > b)
    if kind_name == "Detect Decrease":
        return int(a < b)
    raise TypeRuleViolation(f"{kind_name} is not a change detector")


# the library ----------------------------------------------------------------

def _kind(name, group, inputs, outputs=1, *, sequential=False, through=True,
          delay=1.0, variadic=False, template="", params=()):
    out = tuple(PortSpec(f"out{i}", _any_type) for i in range(outputs))
    return BlockKind(
        name=name,
        group=group,
        inputs=tuple(inputs),
        outputs=out,
        is_sequential=sequential,
        comb_through=through,
        delay_weight=delay,
        variadic=variadic,
        template=template,
        param_spec=tuple(params),
    )


def _build_kinds() -> tuple[BlockKind, ...]:
    g = BlockGroup
    p_any = PortSpec("in0", _any_type)
    p_num = PortSpec("in0", _numeric)
    p_num1 = PortSpec("in1", _numeric)
    p_uns = PortSpec("in0", _unsigned_only)
    p_bit = PortSpec("in0", _bit_like)
    p_bool = PortSpec("in0", _boolean_only)
    return (
        # sources and sinks: a source's output type is declared per instance
        _kind("Constant", g.SOURCE_SINK, (), template="const", params=("value",)),
        _kind("Inport", g.SOURCE_SINK, (), template="port"),
        _kind("StimulusSource", g.SOURCE_SINK, (), template="port"),
        _kind("Outport", g.SOURCE_SINK, (p_any,), outputs=0, template="sink"),
        # mathematical operations
        _kind("Abs", g.MATH, (p_num,), template="abs"),
        _kind("Add", g.MATH, (p_num, p_num1), template="add", params=("signs",)),
        _kind("Bias", g.MATH, (p_num,), template="bias", params=("value",)),
        _kind("Divide", g.MATH, (p_num, p_num1), template="div"),
        _kind("Gain", g.MATH, (p_num,), template="gain", params=("factor",)),
        _kind("MinMax", g.MATH, (p_num, p_num1), variadic=True, template="minmax",
              params=("mode", "input_count")),
        _kind("Unary Minus", g.MATH, (p_num,), template="neg"),
        # HDL-specific operations
        _kind("Bit Clear", g.HDL_SPECIFIC, (p_uns,), template="bitclear", params=("index",)),
        _kind("Bit Set", g.HDL_SPECIFIC, (p_uns,), template="bitset", params=("index",)),
        _kind("Bitwise Operator", g.HDL_SPECIFIC, (p_bit, PortSpec("in1", _bit_like)),
              variadic=True, template="bitwise", params=("op", "input_count")),
        _kind("Bit to Integer Converter", g.HDL_SPECIFIC, (p_bool, PortSpec("in1", _boolean_only)),
              variadic=True, template="b2i", params=("input_count",)),
        _kind("Compare To Constant", g.HDL_SPECIFIC, (p_num,), template="cmpc",
              params=("op", "value")),
        _kind("Compare To Zero", g.HDL_SPECIFIC, (p_num,), template="cmpz", params=("op",)),
        _kind("Detect Change", g.HDL_SPECIFIC, (p_any,), sequential=True, delay=0.0,
              template="detect"),
        _kind("Detect Increase", g.HDL_SPECIFIC, (p_any,), sequential=True, delay=0.0,
              template="detect"),
        _kind("Detect Decrease", g.HDL_SPECIFIC, (p_any,), sequential=True, delay=0.0,
              template="detect"),
        _kind("Pipeline Register", g.HDL_SPECIFIC, (p_any,), sequential=True, through=False,
              delay=0.0, template="pipereg"),
        # control flow
        _kind("If", g.CONTROL_FLOW, (p_any,), template="if"),
        _kind("If Action Subsystem", g.CONTROL_FLOW,
              (PortSpec("action", _boolean_only), PortSpec("in0", _any_type)),
              sequential=True, through=False, delay=0.0, template="subsys",
              params=("subsystem",)),
        _kind("Model", g.CONTROL_FLOW, (p_any,), template="model", params=("reference",)),
    )


@dataclass(frozen=True)
class BlockCatalog:
    """Immutable kind registry; safe to share across workers."""

    kinds: tuple[BlockKind, ...]
    _by_name: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        by_name = {k.name: k for k in self.kinds}
        if len(by_name) != len(self.kinds):
            raise ValueError("duplicate kind names in catalog")
        object.__setattr__(self, "_by_name", by_name)

    def lookup_kind(self, name: str) -> BlockKind:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownBlockKind(f"no block kind named {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def names(self) -> list[str]:
        return [k.name for k in self.kinds]

    def group(self, group: BlockGroup) -> list[BlockKind]:
        return [k for k in self.kinds if k.group == group]

    def with_delay_overrides(self, overrides: dict[str, float]) -> "BlockCatalog":
        """New catalog with per-kind delay weights replaced (config hook)."""
        for name in overrides:
            self.lookup_kind(name)
        kinds = tuple(
            BlockKind(
                name=k.name, group=k.group, inputs=k.inputs, outputs=k.outputs,
                is_sequential=k.is_sequential, comb_through=k.comb_through,
                delay_weight=float(overrides.get(k.name, k.delay_weight)),
                variadic=k.variadic, template=k.template, param_spec=k.param_spec,
                fixed_period=k.fixed_period,
            )
            for k in self.kinds
        )
        return BlockCatalog(kinds)


_DEFAULT = BlockCatalog(_build_kinds())


def default_catalog() -> BlockCatalog:
    return _DEFAULT


def lookup_kind(name: str) -> BlockKind:
    """Kind by name from the built-in catalog."""
    return _DEFAULT.lookup_kind(name)
