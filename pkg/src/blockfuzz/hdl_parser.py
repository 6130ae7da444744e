"""Parsers for the emitted HDL subset, one per dialect.

Each parser reconstructs the dialect-neutral AST: renderer decorations
(``$signed`` wrappers, ``resize``/``to_unsigned`` casts, when/else forms)
fold back into the neutral nodes, so a parse of emitted text compares equal
to the AST the emitter produced.  Anything outside the subset raises
ParseError with a line/column position.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .hdl_ast import (
    Assign,
    Binary,
    BitSelect,
    Concat,
    Cond,
    Const,
    Dialect,
    Expr,
    Extend,
    HdlAst,
    Instance,
    Module,
    NetDecl,
    PortDecl,
    Ref,
    RegDecl,
    RegUpdate,
    Unary,
)


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # ident, number, sized, string, charlit, op
    value: str
    line: int
    col: int


_V_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*)
  | (?P<sized>\d+'[bd][0-9a-fA-F]+)
  | (?P<number>\d+)
  | (?P<ident>[A-Za-z_$][A-Za-z0-9_$]*)
  | (?P<op><=|==|!=|>=|[()\[\]{}@.,;:?=<>~&|^*/+-])
""", re.VERBOSE)

_VH_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<comment>--[^\n]*)
  | (?P<string>"[01]+")
  | (?P<charlit>'[01]')
  | (?P<number>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|=>|/=|>=|[().,;:=<>&*/+-])
""", re.VERBOSE)


def _tokenize(text: str, table: re.Pattern, dialect: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = table.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            col = len(value) - value.rfind("\n")
        else:
            col += len(value)
        pos = m.end()
    return tokens


class _Cursor:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self, ahead: int = 0) -> Token:
        j = self.i + ahead
        if j < len(self.tokens):
            return self.tokens[j]
        last = self.tokens[-1] if self.tokens else None
        line = last.line if last else 1
        col = (last.col + len(last.value)) if last else 1
        return Token("eof", "", line, col)

    def next(self) -> Token:
        t = self.peek()
        self.i += 1
        return t

    def fail(self, message: str):
        t = self.peek()
        raise ParseError(message + (f", got {t.value!r}" if t.kind != "eof" else ", got end of input"),
                         t.line, t.col)

    def expect(self, value: str) -> Token:
        t = self.peek()
        if t.value.lower() != value.lower():
            self.fail(f"expected {value!r}")
        return self.next()

    def accept(self, value: str) -> bool:
        if self.peek().value.lower() == value.lower():
            self.next()
            return True
        return False

    def ident(self) -> str:
        t = self.peek()
        if t.kind != "ident":
            self.fail("expected identifier")
        return self.next().value

    def number(self) -> int:
        t = self.peek()
        if t.kind != "number":
            self.fail("expected number")
        return int(self.next().value)


# Verilog / SystemVerilog -------------------------------------------------------

_V_CMP = {"==": "eq", "!=": "ne", "<": "lt", "<=": "le", ">": "gt", ">=": "ge"}
_V_ARITH = {"+": "add", "-": "sub", "*": "mul", "/": "udiv",
            "&": "and", "|": "or", "^": "xor"}


class _VerilogParser:
    def __init__(self, text: str, sv: bool):
        self.cur = _Cursor(_tokenize(text, _V_TOKEN, "verilog"))
        self.sv = sv
        self.widths: dict[str, int] = {}

    def parse(self) -> HdlAst:
        modules = []
        if self.cur.peek().kind == "eof":
            self.cur.fail("expected 'module'")
        while self.cur.peek().kind != "eof":
            modules.append(self.module())
        return HdlAst(tuple(modules))

    def module(self) -> Module:
        cur = self.cur
        self.widths = {}
        cur.expect("module")
        name = cur.ident()
        cur.expect("(")
        ports = []
        while True:
            ports.append(self.port_decl())
            if not cur.accept(","):
                break
        cur.expect(")")
        cur.expect(";")
        nets, regs, assigns, instances = [], [], [], []
        updates: list[RegUpdate] = []
        while not cur.accept("endmodule"):
            t = cur.peek()
            if t.value == "wire":
                nets.append(self.net_decl())
            elif t.value in ("reg", "logic"):
                regs.append(self.reg_decl())
            elif t.value == "assign":
                assigns.append(self.assign())
            elif t.value in ("always", "always_ff"):
                updates = self.always(regs)
            elif t.kind == "ident":
                instances.append(self.instance())
            else:
                cur.fail("expected module item")
        enable = "en" if any(p.name == "en" for p in ports) else None
        return Module(name, tuple(ports), tuple(nets), tuple(regs), tuple(assigns),
                      tuple(updates), tuple(instances), enable)

    def _range(self) -> int:
        cur = self.cur
        if not cur.accept("["):
            return 0
        hi = cur.number()
        cur.expect(":")
        lo = cur.number()
        cur.expect("]")
        if lo != 0:
            cur.fail("ranges must end at 0")
        return hi + 1

    def port_decl(self) -> PortDecl:
        cur = self.cur
        direction = cur.next().value
        if direction not in ("input", "output"):
            cur.fail("expected port direction")
        kw = cur.next().value
        if kw not in ("wire", "logic"):
            cur.fail("expected wire/logic")
        width = self._range()
        name = cur.ident()
        self.widths[name] = max(width, 1)
        return PortDecl(name, direction, width)

    def net_decl(self) -> NetDecl:
        cur = self.cur
        cur.expect("wire")
        width = self._range()
        if width == 0:
            cur.fail("net declarations carry a range")
        name = cur.ident()
        cur.expect(";")
        self.widths[name] = width
        return NetDecl(name, width)

    def reg_decl(self) -> RegDecl:
        cur = self.cur
        cur.next()  # reg | logic
        width = self._range()
        if width == 0:
            cur.fail("register declarations carry a range")
        name = cur.ident()
        cur.expect(";")
        self.widths[name] = width
        return RegDecl(name, width)

    def assign(self) -> Assign:
        cur = self.cur
        cur.expect("assign")
        target = cur.ident()
        cur.expect("=")
        expr, _signed = self.expr()
        cur.expect(";")
        return Assign(target, expr)

    def instance(self) -> Instance:
        cur = self.cur
        module = cur.ident()
        name = cur.ident()
        cur.expect("(")
        ports = []
        while True:
            cur.expect(".")
            formal = cur.ident()
            cur.expect("(")
            actual, _ = self.expr()
            cur.expect(")")
            ports.append((formal, actual))
            if not cur.accept(","):
                break
        cur.expect(")")
        cur.expect(";")
        return Instance(name, module, tuple(ports))

    def always(self, regs: list[RegDecl]) -> list[RegUpdate]:
        cur = self.cur
        cur.next()  # always | always_ff
        cur.expect("@")
        cur.expect("(")
        cur.expect("posedge")
        cur.expect("clk")
        cur.expect(")")
        cur.expect("begin")
        cur.expect("if")
        cur.expect("(")
        cur.expect("rst")
        cur.expect(")")
        cur.expect("begin")
        for reg in regs:
            cur.expect(reg.name)
            cur.expect("<=")
            t = cur.next()
            if t.kind != "sized" or int(t.value.split("'")[1][1:], 10) != 0:
                raise ParseError("registers reset to zero", t.line, t.col)
            cur.expect(";")
        cur.expect("end")
        cur.expect("else")
        cur.expect("begin")
        gated = False
        if cur.peek().value == "if":
            cur.expect("if")
            cur.expect("(")
            cur.expect("en")
            cur.expect(")")
            cur.expect("begin")
            gated = True
        updates = []
        while cur.peek().value != "end":
            target = cur.ident()
            cur.expect("<=")
            expr, _ = self.expr()
            cur.expect(";")
            updates.append(RegUpdate(target, expr))
        cur.expect("end")
        if gated:
            cur.expect("end")
        cur.expect("end")
        return updates

    # expressions ---------------------------------------------------------

    def _sized(self, tok: Token) -> Const:
        width_s, rest = tok.value.split("'")
        base, digits = rest[0], rest[1:]
        value = int(digits, 2 if base == "b" else 10)
        return Const(value, int(width_s))

    def expr(self) -> tuple[Expr, bool]:
        """Returns (node, had_signed_wrapper)."""
        cur = self.cur
        t = cur.peek()
        if t.kind == "sized":
            cur.next()
            return self._sized(t), False
        if t.value == "$signed":
            cur.next()
            cur.expect("(")
            inner, _ = self.expr()
            cur.expect(")")
            return inner, True
        if t.kind == "ident":
            cur.next()
            if cur.peek().value == "[":
                cur.expect("[")
                index = cur.number()
                cur.expect("]")
                return BitSelect(Ref(t.value), index), False
            return Ref(t.value), False
        if t.value == "{":
            return self._braced(), False
        if t.value == "(":
            cur.next()
            if cur.peek().value == "~":
                cur.next()
                a, _ = self.expr()
                cur.expect(")")
                return Unary("not", a), False
            if cur.peek().value == "-":
                cur.next()
                a, _ = self.expr()
                cur.expect(")")
                return Unary("neg", a), False
            a, a_signed = self.expr()
            op_tok = cur.next()
            if op_tok.value == "?":
                then, _ = self.expr()
                cur.expect(":")
                other, _ = self.expr()
                cur.expect(")")
                return Cond(a, then, other), False
            b, b_signed = self.expr()
            cur.expect(")")
            signed = a_signed and b_signed
            if op_tok.value in _V_CMP:
                op = _V_CMP[op_tok.value]
                if op in ("eq", "ne"):
                    return Binary(op, a, b), False
                return Binary(("s" if signed else "u") + op, a, b), False
            if op_tok.value == "/" and signed:
                return Binary("sdiv", a, b), False
            if op_tok.value in _V_ARITH:
                return Binary(_V_ARITH[op_tok.value], a, b), False
            raise ParseError(f"unknown operator {op_tok.value!r}", op_tok.line, op_tok.col)
        cur.fail("expected expression")

    def _braced(self) -> Expr:
        cur = self.cur
        cur.expect("{")
        if cur.peek().value == "{":  # {{K{fill}}, expr} extension
            cur.expect("{")
            k = cur.number()
            cur.expect("{")
            fill = cur.peek()
            signed = False
            if fill.kind == "sized":
                cur.next()
                if fill.value != "1'b0":
                    raise ParseError("zero-extension fills with 1'b0", fill.line, fill.col)
            else:
                name = cur.ident()
                cur.expect("[")
                cur.number()
                cur.expect("]")
                signed = True
                fill_name = name
            cur.expect("}")
            cur.expect("}")
            cur.expect(",")
            inner, _ = self.expr()
            cur.expect("}")
            if not isinstance(inner, Ref):
                cur.fail("extension operand must be a named net")
            if signed and inner.name != fill_name:
                cur.fail("sign fill must replicate the operand's top bit")
            from_w = self.widths.get(inner.name)
            if from_w is None:
                cur.fail(f"unknown signal {inner.name!r}")
            return Extend(inner, from_w, from_w + k, signed)
        parts = []
        while True:
            part, _ = self.expr()
            parts.append(part)
            if not cur.accept(","):
                break
        cur.expect("}")
        return Concat(tuple(parts))


# VHDL ---------------------------------------------------------------------------

_VH_CMP = {"=": "eq", "/=": "ne", "<": "lt", "<=": "le", ">": "gt", ">=": "ge"}


class _VhdlParser:
    def __init__(self, text: str):
        self.cur = _Cursor(_tokenize(text, _VH_TOKEN, "vhdl"))
        self.widths: dict[str, int] = {}

    def parse(self) -> HdlAst:
        modules = []
        if self.cur.peek().kind == "eof":
            self.cur.fail("expected 'library'")
        while self.cur.peek().kind != "eof":
            modules.append(self.design_unit())
        return HdlAst(tuple(modules))

    def design_unit(self) -> Module:
        cur = self.cur
        self.widths = {}
        cur.expect("library")
        cur.expect("ieee")
        cur.expect(";")
        for _ in range(2):
            cur.expect("use")
            cur.expect("ieee")
            cur.expect(".")
            cur.ident()
            cur.expect(".")
            cur.expect("all")
            cur.expect(";")
        cur.expect("entity")
        name = cur.ident()
        cur.expect("is")
        cur.expect("port")
        cur.expect("(")
        ports = []
        while True:
            ports.append(self.port_decl())
            if not cur.accept(";"):
                break
        cur.expect(")")
        cur.expect(";")
        cur.expect("end")
        cur.expect(name)
        cur.expect(";")
        cur.expect("architecture")
        cur.expect("rtl")
        cur.expect("of")
        cur.expect(name)
        cur.expect("is")
        signals: list[str] = []
        while cur.peek().value.lower() == "signal":
            cur.expect("signal")
            sig = cur.ident()
            cur.expect(":")
            width = self._vector_type()
            cur.expect(";")
            signals.append(sig)
            self.widths[sig] = width
        cur.expect("begin")
        assigns, instances = [], []
        updates: list[RegUpdate] = []
        reg_names: list[str] = []
        while not cur.accept("end"):
            t = cur.peek()
            if t.value.lower() == "process":
                reg_names, updates = self.process()
                continue
            target = cur.ident()
            if cur.peek().value == ":":
                instances.append(self.instance(target))
            else:
                assigns.append(self.assign(target))
        cur.expect("rtl")
        cur.expect(";")
        regs = tuple(RegDecl(n, self.widths[n]) for n in reg_names)
        reg_set = set(reg_names)
        nets = tuple(NetDecl(s, self.widths[s]) for s in signals if s not in reg_set)
        enable = "en" if any(p.name == "en" for p in ports) else None
        return Module(name, tuple(ports), nets, regs, tuple(assigns),
                      tuple(updates), tuple(instances), enable)

    def _vector_type(self) -> int:
        cur = self.cur
        kw = cur.ident().lower()
        if kw == "std_logic":
            return 0
        if kw != "std_logic_vector":
            cur.fail("expected std_logic or std_logic_vector")
        cur.expect("(")
        hi = cur.number()
        cur.expect("downto")
        lo = cur.number()
        cur.expect(")")
        if lo != 0:
            cur.fail("vectors must end at 0")
        return hi + 1

    def port_decl(self) -> PortDecl:
        cur = self.cur
        name = cur.ident()
        cur.expect(":")
        direction = cur.next().value.lower()
        if direction not in ("in", "out"):
            cur.fail("expected port direction")
        width = self._vector_type()
        self.widths[name] = max(width, 1)
        return PortDecl(name, "input" if direction == "in" else "output", width)

    def assign(self, target: str) -> Assign:
        cur = self.cur
        cur.expect("<=")
        if cur.peek().kind == "string":  # "1" when COND else "0"
            lit = cur.next().value
            if lit != '"1"':
                cur.fail("comparison assignments start with \"1\"")
            cur.expect("when")
            condition = self.condition()
            cur.expect("else")
            t = cur.next()
            if t.value != '"0"':
                raise ParseError("comparison assignments end with \"0\"", t.line, t.col)
            cur.expect(";")
            return Assign(target, condition)
        first = self.expr()
        if cur.accept("when"):
            condition = self.condition()
            cur.expect("else")
            other = self.expr()
            cur.expect(";")
            return Assign(target, Cond(condition, first, other))
        cur.expect(";")
        return Assign(target, first)

    def instance(self, label: str) -> Instance:
        cur = self.cur
        cur.expect(":")
        cur.expect("entity")
        cur.expect("work")
        cur.expect(".")
        module = cur.ident()
        cur.expect("port")
        cur.expect("map")
        cur.expect("(")
        ports = []
        while True:
            formal = cur.ident()
            cur.expect("=>")
            ports.append((formal, self.expr()))
            if not cur.accept(","):
                break
        cur.expect(")")
        cur.expect(";")
        return Instance(label, module, tuple(ports))

    def process(self) -> tuple[list[str], list[RegUpdate]]:
        cur = self.cur
        cur.expect("process")
        cur.expect("(")
        cur.expect("clk")
        cur.expect(")")
        cur.expect("begin")
        cur.expect("if")
        cur.expect("rising_edge")
        cur.expect("(")
        cur.expect("clk")
        cur.expect(")")
        cur.expect("then")
        cur.expect("if")
        cur.expect("rst")
        cur.expect("=")
        t = cur.next()
        if t.value != "'1'":
            raise ParseError("reset compares against '1'", t.line, t.col)
        cur.expect("then")
        regs: list[str] = []
        while cur.peek().value.lower() != "else":
            reg = cur.ident()
            cur.expect("<=")
            cur.expect("(")
            cur.expect("others")
            cur.expect("=>")
            t = cur.next()
            if t.value != "'0'":
                raise ParseError("registers reset to zero", t.line, t.col)
            cur.expect(")")
            cur.expect(";")
            regs.append(reg)
        cur.expect("else")
        gated = False
        if cur.peek().value.lower() == "if":
            cur.expect("if")
            cur.expect("en")
            cur.expect("=")
            t = cur.next()
            if t.value != '"1"':
                raise ParseError("enables compare against \"1\"", t.line, t.col)
            cur.expect("then")
            gated = True
        updates = []
        while cur.peek().value.lower() != "end":
            target = cur.ident()
            cur.expect("<=")
            expr = self.expr()
            cur.expect(";")
            updates.append(RegUpdate(target, expr))
        if gated:
            cur.expect("end")
            cur.expect("if")
            cur.expect(";")
        cur.expect("end")
        cur.expect("if")
        cur.expect(";")
        cur.expect("end")
        cur.expect("if")
        cur.expect(";")
        cur.expect("end")
        cur.expect("process")
        cur.expect(";")
        return regs, updates

    # expressions ----------------------------------------------------------

    def condition(self) -> Expr:
        cur = self.cur
        cur.expect("(")
        t = cur.peek()
        if t.kind == "ident" and t.value.lower() in ("unsigned", "signed") \
                and self.cur.peek(1).value == "(":
            cast = cur.ident().lower()
            cur.expect("(")
            a = self.expr()
            cur.expect(")")
            op_tok = cur.next()
            if op_tok.value not in ("<", "<=", ">", ">="):
                raise ParseError("expected ordering comparison", op_tok.line, op_tok.col)
            cur.expect(cast)
            cur.expect("(")
            b = self.expr()
            cur.expect(")")
            cur.expect(")")
            prefix = "s" if cast == "signed" else "u"
            return Binary(prefix + _VH_CMP[op_tok.value], a, b)
        a = self.expr()
        if isinstance(a, Ref) and cur.peek().value == "(":
            cur.expect("(")
            index = cur.number()
            cur.expect(")")
            cur.expect("=")
            t = cur.next()
            if t.value != "'1'":
                raise ParseError("bit tests compare against '1'", t.line, t.col)
            cur.expect(")")
            return BitSelect(a, index)
        op_tok = cur.next()
        if op_tok.value not in ("=", "/="):
            raise ParseError("expected equality comparison", op_tok.line, op_tok.col)
        b = self.expr()
        cur.expect(")")
        return Binary(_VH_CMP[op_tok.value], a, b)

    def expr(self) -> Expr:
        cur = self.cur
        t = cur.peek()
        if t.kind == "string":
            cur.next()
            bits = t.value.strip('"')
            return Const(int(bits, 2), len(bits))
        if t.kind == "ident" and t.value.lower() == "std_logic_vector":
            cur.next()
            cur.expect("(")
            inner = self._slv_inner()
            cur.expect(")")
            return inner
        if t.kind == "ident":
            return Ref(cur.ident())
        if t.value == "(":
            cur.next()
            if cur.accept("not"):
                a = self.expr()
                cur.expect(")")
                return Unary("not", a)
            parts = [self.expr()]
            op_tok = cur.next()
            if op_tok.value == "&":
                parts.append(self.expr())
                while cur.accept("&"):
                    parts.append(self.expr())
                cur.expect(")")
                return Concat(tuple(parts))
            if op_tok.value.lower() in ("and", "or", "xor"):
                b = self.expr()
                cur.expect(")")
                return Binary(op_tok.value.lower(), parts[0], b)
            raise ParseError(f"unknown operator {op_tok.value!r}", op_tok.line, op_tok.col)
        cur.fail("expected expression")

    def _cast_operand(self, cast: str) -> Expr:
        cur = self.cur
        cur.expect(cast)
        cur.expect("(")
        e = self.expr()
        cur.expect(")")
        return e

    def _slv_inner(self) -> Expr:
        cur = self.cur
        t = cur.peek()
        word = t.value.lower()
        if word == "to_unsigned":
            cur.next()
            cur.expect("(")
            value = cur.number()
            cur.expect(",")
            width = cur.number()
            cur.expect(")")
            return Const(value, width)
        if word == "-":
            cur.next()
            return Unary("neg", self._cast_operand("signed"))
        if word == "resize":
            cur.next()
            cur.expect("(")
            cast = cur.ident().lower()
            if cast not in ("unsigned", "signed"):
                cur.fail("expected unsigned/signed")
            cur.expect("(")
            a = self.expr()
            cur.expect(")")
            nxt = cur.next()
            if nxt.value == ",":
                width = cur.number()
                cur.expect(")")
                if not isinstance(a, Ref):
                    cur.fail("extension operand must be a named net")
                from_w = self.widths.get(a.name)
                if from_w is None:
                    cur.fail(f"unknown signal {a.name!r}")
                return Extend(a, from_w, width, cast == "signed")
            if nxt.value == "*":
                b = self._cast_operand(cast)
                cur.expect(",")
                cur.number()  # result width is implied by the target
                cur.expect(")")
                return Binary("mul", a, b)
            raise ParseError("expected ',' or '*' in resize", nxt.line, nxt.col)
        if word in ("unsigned", "signed"):
            a = self._cast_operand(word)
            op_tok = cur.next()
            b = self._cast_operand(word)
            if op_tok.value == "+":
                return Binary("add", a, b)
            if op_tok.value == "-":
                return Binary("sub", a, b)
            if op_tok.value == "/":
                return Binary("sdiv" if word == "signed" else "udiv", a, b)
            raise ParseError(f"unknown operator {op_tok.value!r}", op_tok.line, op_tok.col)
        cur.fail("expected numeric_std expression")


def parse(text: str, dialect: Dialect) -> HdlAst:
    """Structural AST of ``text``; must be within the emitted subset."""
    if dialect is Dialect.VHDL:
        return _VhdlParser(text).parse()
    return _VerilogParser(text, sv=dialect is Dialect.SYSTEMVERILOG).parse()
