"""Dialect-neutral structural AST for the emitted HDL subset.

The emitters build this tree from a model and render it to Verilog-2005,
VHDL-93 or SystemVerilog-2017 text; the parsers take such text back to the
identical tree (dialect decorations like resize()/$signed() fold away), so
``parse(emit(m).text) == emit(m).ast`` holds structurally.

The subset is deliberately small: unsigned vector nets, continuous
assignments whose conditional/comparison nodes appear only at the top of an
assignment, one clocked process per module with synchronous active-high
reset and an optional enable, and module instantiations.  Signedness is
explicit in the operator (slt vs ult, sdiv vs udiv) and in Extend nodes, so
no implicit width or sign context is ever relied upon.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union


class Dialect(Enum):
    VERILOG = "verilog"
    VHDL = "vhdl"
    SYSTEMVERILOG = "systemverilog"

    @property
    def extension(self) -> str:
        return {"verilog": "v", "vhdl": "vhd", "systemverilog": "sv"}[self.value]


class Expr:
    pass


@dataclass(frozen=True)
class Ref(Expr):
    name: str


@dataclass(frozen=True)
class Const(Expr):
    pattern: int
    width: int


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # "not" | "neg"
    a: Expr


@dataclass(frozen=True)
class Binary(Expr):
    # arithmetic: add sub mul udiv sdiv; bitwise: and or xor
    # comparisons: eq ne ult ule ugt uge slt sle sgt sge
    op: str
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Cond(Expr):
    """Guarded choice; only ever the top node of an assignment."""

    cond: Expr
    then: Expr
    other: Expr


@dataclass(frozen=True)
class BitSelect(Expr):
    a: Expr
    index: int


@dataclass(frozen=True)
class Concat(Expr):
    parts: tuple[Expr, ...]  # most significant first


@dataclass(frozen=True)
class Extend(Expr):
    a: Expr
    from_width: int
    to_width: int
    signed: bool


COMPARE_BINOPS = frozenset({"eq", "ne", "ult", "ule", "ugt", "uge",
                            "slt", "sle", "sgt", "sge"})
SIGNED_BINOPS = frozenset({"slt", "sle", "sgt", "sge", "sdiv"})


@dataclass(frozen=True)
class PortDecl:
    name: str
    direction: str  # "input" | "output"
    width: int


@dataclass(frozen=True)
class NetDecl:
    name: str
    width: int


@dataclass(frozen=True)
class RegDecl:
    name: str
    width: int


@dataclass(frozen=True)
class Assign:
    target: str
    expr: Expr


@dataclass(frozen=True)
class RegUpdate:
    """One register assignment inside the module's clocked process."""

    target: str
    expr: Expr


@dataclass(frozen=True)
class Instance:
    name: str
    module: str
    ports: tuple[tuple[str, Expr], ...]  # (formal, actual) in declaration order


@dataclass(frozen=True)
class Module:
    """All registers reset to zero; ``enable`` (a port name) gates every
    register update when present."""

    name: str
    ports: tuple[PortDecl, ...]
    nets: tuple[NetDecl, ...]
    regs: tuple[RegDecl, ...]
    assigns: tuple[Assign, ...]
    updates: tuple[RegUpdate, ...]
    instances: tuple[Instance, ...]
    enable: Optional[str] = None

    def port(self, name: str) -> PortDecl:
        for p in self.ports:
            if p.name == name:
                return p
        raise KeyError(name)

    def width_of(self, name: str) -> int:
        for group in (self.ports, self.nets, self.regs):
            for item in group:
                if item.name == name:
                    return item.width
        raise KeyError(name)


@dataclass(frozen=True)
class HdlAst:
    """Modules in dependency order (children first, top last)."""

    modules: tuple[Module, ...]

    @property
    def top(self) -> Module:
        return self.modules[-1]

    def module(self, name: str) -> Module:
        for mod in self.modules:
            if mod.name == name:
                return mod
        raise KeyError(name)


@dataclass(frozen=True)
class EmissionMap:
    """Bidirectional net map maintained while emitting.

    A model net is the output pin (graph path, block id, port); its HDL side
    is (module name, signal name).  Both directions are exact inverses.
    """

    model_to_ast: dict
    ast_to_model: dict

    def signal_for(self, net) -> tuple[str, str]:
        return self.model_to_ast[net]

    def net_for(self, module: str, signal: str):
        return self.ast_to_model[(module, signal)]


@dataclass
class HdlDesign:
    dialect: Dialect
    text: str
    ast: HdlAst
    top: str
    emission_map: EmissionMap = field(default=None)


def expr_width(e: Expr, lookup) -> int:
    """Result width of an expression; ``lookup(name)`` resolves signals.

    Comparison operators yield 1; arithmetic preserves its operands' common
    width, which the builders guarantee by inserting explicit Extends.
    """
    if isinstance(e, Ref):
        return lookup(e.name)
    if isinstance(e, Const):
        return e.width
    if isinstance(e, Extend):
        return e.to_width
    if isinstance(e, Unary):
        return expr_width(e.a, lookup)
    if isinstance(e, Binary):
        if e.op in COMPARE_BINOPS:
            return 1
        return expr_width(e.a, lookup)
    if isinstance(e, Cond):
        return expr_width(e.then, lookup)
    if isinstance(e, BitSelect):
        return 1
    if isinstance(e, Concat):
        return sum(expr_width(p, lookup) for p in e.parts)
    raise TypeError(f"unknown expression node {e!r}")
