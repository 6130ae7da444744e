"""Model-to-HDL translation.

One HDL module per definition site: the top graph becomes module ``top``,
subsystem and reference children become modules named after their path in
the hierarchy.  Blocks map to continuous assignments over explicit-width
expressions (see hdl_ast), sequential blocks to entries of the module's
single clocked process, hierarchy blocks to instantiations.  All three
dialect renderers share the same AST, so the emitted designs have identical
port lists and structure; only surface syntax differs.

Every non-top module carries ``clk``/``rst`` plus an ``en`` enable input so
conditionally executed subsystems freeze their whole subtree exactly like
the reference simulator does.
"""

from __future__ import annotations

from typing import Optional

from .catalog import BlockCatalog, SignalType, default_catalog
from .graph import ModelGraph, topo_order
from .hdl_ast import (
    Assign,
    Binary,
    BitSelect,
    Concat,
    Cond,
    Const,
    Dialect,
    EmissionMap,
    Expr,
    Extend,
    HdlAst,
    HdlDesign,
    Instance,
    Module,
    NetDecl,
    PortDecl,
    Ref,
    RegDecl,
    RegUpdate,
    SIGNED_BINOPS,
    Unary,
    expr_width,
)
from .interpreter import port_name

DETECT_OPS = {"Detect Change": "ne", "Detect Increase": "gt", "Detect Decrease": "lt"}
CMP_VERILOG = {"eq": "==", "ne": "!=", "lt": "<", "le": "<=", "gt": ">", "ge": ">="}


class UnsupportedConstruct(Exception):
    pass


def module_name_for(path: tuple) -> str:
    if not path:
        return "top"
    return "_".join(name for _kind, name in path)


def _sig(g: ModelGraph, bid: int) -> str:
    kind = g.blocks[bid].kind
    if kind in ("Inport", "StimulusSource"):
        return port_name(kind, bid)
    return f"n{bid}"


def _ext(e: Expr, from_w: int, to_w: int, signed: bool) -> Expr:
    if from_w == to_w:
        return e
    return Extend(e, from_w, to_w, signed)


def _cmp_op(op: str, t: SignalType) -> str:
    """Comparison node op for a catalog comparison under type ``t``."""
    if op in ("eq", "ne"):
        return op
    return ("s" if t.is_signed else "u") + op


class _ModuleBuilder:
    def __init__(self, g: ModelGraph, path: tuple, catalog: BlockCatalog,
                 emap_fwd: dict, emap_rev: dict):
        self.g = g
        self.path = path
        self.catalog = catalog
        self.name = module_name_for(path)
        self.is_top = not path
        # a conditionally executed subsystem presents a registered output:
        # it holds its last enabled result, exactly like the simulator
        self.gated_subsystem = bool(path) and path[-1][0] == "sub"
        self.emap_fwd = emap_fwd
        self.emap_rev = emap_rev
        self.nets: list[NetDecl] = []
        self.regs: list[RegDecl] = []
        self.assigns: list[Assign] = []
        self.updates: list[RegUpdate] = []
        self.instances: list[Instance] = []

    def _input(self, bid: int, port: int) -> tuple[Expr, SignalType]:
        conn = self.g.driver_of(bid, port)
        src = conn.src[0]
        return Ref(_sig(self.g, src)), self.g.blocks[src].output_type

    def _map_net(self, bid: int):
        self.emap_fwd[(self.path, bid, 0)] = (self.name, _sig(self.g, bid))
        self.emap_rev[(self.name, _sig(self.g, bid))] = (self.path, bid, 0)

    def build(self) -> Module:
        g = self.g
        ports = [PortDecl("clk", "input", 0), PortDecl("rst", "input", 0)]
        if not self.is_top:
            ports.append(PortDecl("en", "input", 1))
        ins = sorted(b.id for b in g.blocks.values() if b.kind == "Inport")
        stims = sorted(b.id for b in g.blocks.values() if b.kind == "StimulusSource")
        outs = sorted(b.id for b in g.blocks.values() if b.kind == "Outport")
        if stims and not self.is_top:
            raise UnsupportedConstruct(
                f"StimulusSource below the top graph (module {self.name})")
        for bid in ins:
            ports.append(PortDecl(port_name("Inport", bid), "input",
                                  g.blocks[bid].output_type.word_length))
        for bid in stims:
            ports.append(PortDecl(port_name("StimulusSource", bid), "input",
                                  g.blocks[bid].output_type.word_length))
        for bid in outs:
            ports.append(PortDecl(port_name("Outport", bid), "output",
                                  g.blocks[bid].output_type.word_length))

        for bid in topo_order(g, self.catalog):
            self._build_block(bid)

        return Module(
            name=self.name,
            ports=tuple(ports),
            nets=tuple(self.nets),
            regs=tuple(self.regs),
            assigns=tuple(self.assigns),
            updates=tuple(self.updates),
            instances=tuple(self.instances),
            enable=None if self.is_top else "en",
        )

    # one block -> module items ------------------------------------------------

    def _build_block(self, bid: int) -> None:
        g = self.g
        b = g.blocks[bid]
        kind = self.catalog.lookup_kind(b.kind)
        name = b.kind
        W = b.output_type.word_length
        out = _sig(g, bid)

        if name in ("Inport", "StimulusSource"):
            self._map_net(bid)
            return
        if name == "Outport":
            src, t = self._input(bid, 0)
            target = port_name("Outport", bid)
            if self.gated_subsystem:
                reg = f"qout{bid}"
                self.regs.append(RegDecl(reg, t.word_length))
                self.assigns.append(Assign(target, Ref(reg)))
                self.updates.append(RegUpdate(reg, src))
            else:
                self.assigns.append(Assign(target, src))
            return

        if kind.outputs:
            self.nets.append(NetDecl(out, W))
            self._map_net(bid)

        if name == "Constant":
            self.assigns.append(Assign(out, Const(b.params["value"], W)))
            return
        if name == "Abs":
            x, t = self._input(bid, 0)
            self.assigns.append(Assign(out, Cond(BitSelect(x, W - 1), Unary("neg", x), x)))
            return
        if name == "Add":
            expr = None
            for sign, port in zip(b.params["signs"], range(kind.arity(b.params))):
                x, t = self._input(bid, port)
                term = _ext(x, t.word_length, W, t.is_signed)
                if expr is None:
                    expr = Unary("neg", term) if sign == "-" else term
                else:
                    expr = Binary("add" if sign == "+" else "sub", expr, term)
            self.assigns.append(Assign(out, expr))
            return
        if name == "Bias":
            x, _t = self._input(bid, 0)
            self.assigns.append(Assign(out, Binary("add", x, Const(b.params["value"], W))))
            return
        if name == "Divide":
            a, ta = self._input(bid, 0)
            bx, tb = self._input(bid, 1)
            bext = _ext(bx, tb.word_length, W, tb.is_signed)
            div = Binary("sdiv" if ta.is_signed else "udiv", a, bext)
            guard = Binary("eq", bext, Const(0, W))
            ones = Const(b.output_type.max_pattern(), W)
            self.assigns.append(Assign(out, Cond(guard, ones, div)))
            return
        if name == "Gain":
            x, _t = self._input(bid, 0)
            self.assigns.append(Assign(out, Binary("mul", x, Const(b.params["factor"], W))))
            return
        if name == "MinMax":
            arity = kind.arity(b.params)
            cmp = _cmp_op("lt" if b.params["mode"] == "min" else "gt", b.output_type)
            cur = None
            for port in range(arity):
                x, t = self._input(bid, port)
                term = _ext(x, t.word_length, W, t.is_signed)
                if cur is None:
                    cur = term
                    continue
                expr = Cond(Binary(cmp, cur, term), cur, term)
                target = out if port == arity - 1 else f"{out}_{port}"
                if target != out:
                    self.nets.append(NetDecl(target, W))
                self.assigns.append(Assign(target, expr))
                cur = Ref(target)
            return
        if name == "Unary Minus":
            x, _t = self._input(bid, 0)
            self.assigns.append(Assign(out, Unary("neg", x)))
            return
        if name == "Bit Clear":
            x, t = self._input(bid, 0)
            mask = t.max_pattern() & ~(1 << b.params["index"])
            self.assigns.append(Assign(out, Binary("and", x, Const(mask, W))))
            return
        if name == "Bit Set":
            x, _t = self._input(bid, 0)
            self.assigns.append(Assign(out, Binary("or", x, Const(1 << b.params["index"], W))))
            return
        if name == "Bitwise Operator":
            op = b.params["op"]
            base = {"AND": "and", "NAND": "and", "OR": "or", "NOR": "or",
                    "XOR": "xor", "XNOR": "xor"}[op]
            expr, _t = self._input(bid, 0)
            for port in range(1, kind.arity(b.params)):
                x, _t = self._input(bid, port)
                expr = Binary(base, expr, x)
            if op in ("NAND", "NOR", "XNOR"):
                expr = Unary("not", expr)
            self.assigns.append(Assign(out, expr))
            return
        if name == "Bit to Integer Converter":
            parts = []
            for port in reversed(range(kind.arity(b.params))):
                x, _t = self._input(bid, port)
                parts.append(x)
            self.assigns.append(Assign(out, Concat(tuple(parts))))
            return
        if name == "Compare To Constant":
            x, t = self._input(bid, 0)
            op = _cmp_op(b.params["op"], t)
            self.assigns.append(Assign(out, Binary(op, x, Const(b.params["value"],
                                                                t.word_length))))
            return
        if name == "Compare To Zero":
            x, t = self._input(bid, 0)
            op = _cmp_op(b.params["op"], t)
            self.assigns.append(Assign(out, Binary(op, x, Const(0, t.word_length))))
            return
        if name == "If":
            x, t = self._input(bid, 0)
            self.assigns.append(Assign(out, Binary("ne", x, Const(0, t.word_length))))
            return
        if name in DETECT_OPS:
            x, t = self._input(bid, 0)
            reg = f"q{bid}"
            self.regs.append(RegDecl(reg, t.word_length))
            op = _cmp_op(DETECT_OPS[name], t)
            self.assigns.append(Assign(out, Binary(op, x, Ref(reg))))
            self.updates.append(RegUpdate(reg, x))
            return
        if name == "Pipeline Register":
            x, _t = self._input(bid, 0)
            reg = f"q{bid}"
            self.regs.append(RegDecl(reg, W))
            self.assigns.append(Assign(out, Ref(reg)))
            self.updates.append(RegUpdate(reg, x))
            return
        if name == "If Action Subsystem":
            action, _t = self._input(bid, 0)
            data, _t = self._input(bid, 1)
            child = self.g.subsystems[b.params["subsystem"]]
            child_name = module_name_for(self.path + (("sub", b.params["subsystem"]),))
            if self.is_top:
                enable = action
            else:
                cen = f"cen{bid}"
                self.nets.append(NetDecl(cen, 1))
                self.assigns.append(Assign(cen, Binary("and", Ref("en"), action)))
                enable = Ref(cen)
            self._instantiate(bid, child, child_name, enable, data, out)
            return
        if name == "Model":
            data, _t = self._input(bid, 0)
            child = self.g.references[b.params["reference"]]
            child_name = module_name_for(self.path + (("ref", b.params["reference"]),))
            enable = Ref("en") if not self.is_top else Const(1, 1)
            self._instantiate(bid, child, child_name, enable, data, out)
            return
        raise UnsupportedConstruct(f"no emission template for kind {name!r}")

    def _instantiate(self, bid, child, child_name, enable, data, out):
        child_in = next(b.id for b in child.blocks.values() if b.kind == "Inport")
        child_out = next(b.id for b in child.blocks.values() if b.kind == "Outport")
        self.instances.append(Instance(
            name=f"u{bid}",
            module=child_name,
            ports=(
                ("clk", Ref("clk")),
                ("rst", Ref("rst")),
                ("en", enable),
                (port_name("Inport", child_in), data),
                (port_name("Outport", child_out), Ref(out)),
            ),
        ))


def build_ast(m: ModelGraph, catalog: Optional[BlockCatalog] = None
              ) -> tuple[HdlAst, EmissionMap]:
    """Neutral AST for the whole hierarchy, children before parents."""
    catalog = catalog or default_catalog()
    fwd: dict = {}
    rev: dict = {}
    modules: list[Module] = []

    def walk(g: ModelGraph, path: tuple):
        for name in sorted(g.subsystems):
            walk(g.subsystems[name], path + (("sub", name),))
        for name in sorted(g.references):
            walk(g.references[name], path + (("ref", name),))
        modules.append(_ModuleBuilder(g, path, catalog, fwd, rev).build())

    walk(m, ())
    return HdlAst(tuple(modules)), EmissionMap(fwd, rev)


def emit(m: ModelGraph, dialect: Dialect, catalog: Optional[BlockCatalog] = None
         ) -> HdlDesign:
    """Deterministic HDL text plus its AST for one dialect."""
    ast, emap = build_ast(m, catalog)
    if dialect is Dialect.VHDL:
        text = _render_vhdl(ast)
    elif dialect is Dialect.VERILOG:
        text = _render_verilog(ast, sv=False)
    elif dialect is Dialect.SYSTEMVERILOG:
        text = _render_verilog(ast, sv=True)
    else:
        raise UnsupportedConstruct(f"no renderer for {dialect}")
    return HdlDesign(dialect=dialect, text=text, ast=ast, top="top", emission_map=emap)


def emit_all(m: ModelGraph, dialects, catalog=None) -> dict[Dialect, HdlDesign]:
    return {d: emit(m, d, catalog) for d in dialects}


# Verilog / SystemVerilog ------------------------------------------------------

def _v_const(e: Const) -> str:
    if e.width == 1:
        return f"1'b{e.pattern}"
    return f"{e.width}'d{e.pattern}"


def _v_expr(e: Expr, widths, signed_ctx: bool = False) -> str:
    if isinstance(e, Ref):
        return f"$signed({e.name})" if signed_ctx else e.name
    if isinstance(e, Const):
        return f"$signed({_v_const(e)})" if signed_ctx else _v_const(e)
    if isinstance(e, Extend):
        a = _v_expr(e.a, widths)
        k = e.to_width - e.from_width
        if e.signed:
            assert isinstance(e.a, Ref), "sign-extension operand must be a named net"
            fill = f"{e.a.name}[{e.from_width - 1}]"
        else:
            fill = "1'b0"
        body = f"{{{{{k}{{{fill}}}}}, {a}}}"
        return f"$signed({body})" if signed_ctx else body
    if isinstance(e, Unary):
        op = "~" if e.op == "not" else "-"
        return f"({op}{_v_expr(e.a, widths)})"
    if isinstance(e, Binary):
        if e.op in ("slt", "sle", "sgt", "sge"):
            op = CMP_VERILOG[e.op[1:]]
            return f"({_v_expr(e.a, widths, True)} {op} {_v_expr(e.b, widths, True)})"
        if e.op in ("ult", "ule", "ugt", "uge"):
            op = CMP_VERILOG[e.op[1:]]
            return f"({_v_expr(e.a, widths)} {op} {_v_expr(e.b, widths)})"
        if e.op in ("eq", "ne"):
            return f"({_v_expr(e.a, widths)} {CMP_VERILOG[e.op]} {_v_expr(e.b, widths)})"
        if e.op == "sdiv":
            return f"({_v_expr(e.a, widths, True)} / {_v_expr(e.b, widths, True)})"
        sym = {"add": "+", "sub": "-", "mul": "*", "udiv": "/",
               "and": "&", "or": "|", "xor": "^"}[e.op]
        return f"({_v_expr(e.a, widths)} {sym} {_v_expr(e.b, widths)})"
    if isinstance(e, Cond):
        return (f"({_v_expr(e.cond, widths)} ? {_v_expr(e.then, widths)}"
                f" : {_v_expr(e.other, widths)})")
    if isinstance(e, BitSelect):
        assert isinstance(e.a, Ref), "bit-select operand must be a named net"
        return f"{e.a.name}[{e.index}]"
    if isinstance(e, Concat):
        return "{" + ", ".join(_v_expr(p, widths) for p in e.parts) + "}"
    raise UnsupportedConstruct(f"cannot render {e!r}")


def _render_verilog(ast: HdlAst, sv: bool) -> str:
    out: list[str] = []
    net_kw = "wire"
    reg_kw = "logic" if sv else "reg"
    always = "always_ff" if sv else "always"
    port_kw = "logic" if sv else "wire"
    for mod in ast.modules:
        widths = mod.width_of
        decls = []
        for p in mod.ports:
            rng = f" [{p.width - 1}:0]" if p.width else ""
            decls.append(f"  {p.direction} {port_kw}{rng} {p.name}")
        out.append(f"module {mod.name} (")
        out.append(",\n".join(decls))
        out.append(");")
        for n in mod.nets:
            out.append(f"  {net_kw} [{n.width - 1}:0] {n.name};")
        for r in mod.regs:
            out.append(f"  {reg_kw} [{r.width - 1}:0] {r.name};")
        for a in mod.assigns:
            out.append(f"  assign {a.target} = {_v_expr(a.expr, widths)};")
        for inst in mod.instances:
            ports = ", ".join(f".{formal}({_v_expr(actual, widths)})"
                              for formal, actual in inst.ports)
            out.append(f"  {inst.module} {inst.name} ({ports});")
        if mod.regs:
            out.append(f"  {always} @(posedge clk) begin")
            out.append("    if (rst) begin")
            for r in mod.regs:
                out.append(f"      {r.name} <= {r.width}'d0;")
            out.append("    end else begin")
            indent = "      "
            if mod.enable:
                out.append(f"      if ({mod.enable}) begin")
                indent = "        "
            for u in mod.updates:
                out.append(f"{indent}{u.target} <= {_v_expr(u.expr, widths)};")
            if mod.enable:
                out.append("      end")
            out.append("    end")
            out.append("  end")
        out.append("endmodule")
        out.append("")
    return "\n".join(out)


# VHDL ------------------------------------------------------------------------

def _vh_const(e: Const) -> str:
    return f"std_logic_vector(to_unsigned({e.pattern}, {e.width}))"


def _vh_cond(e: Expr, widths) -> str:
    """Boolean-position rendering (when/else conditions)."""
    if isinstance(e, Binary) and e.op == "eq":
        return f"({_vh_expr(e.a, widths)} = {_vh_expr(e.b, widths)})"
    if isinstance(e, Binary) and e.op == "ne":
        return f"({_vh_expr(e.a, widths)} /= {_vh_expr(e.b, widths)})"
    if isinstance(e, Binary) and e.op in ("ult", "ule", "ugt", "uge", "slt", "sle", "sgt", "sge"):
        cast = "signed" if e.op[0] == "s" else "unsigned"
        sym = {"lt": "<", "le": "<=", "gt": ">", "ge": ">="}[e.op[1:]]
        return (f"({cast}({_vh_expr(e.a, widths)}) {sym}"
                f" {cast}({_vh_expr(e.b, widths)}))")
    if isinstance(e, BitSelect):
        assert isinstance(e.a, Ref)
        return f"({e.a.name}({e.index}) = '1')"
    raise UnsupportedConstruct(f"cannot render condition {e!r}")


def _vh_expr(e: Expr, widths) -> str:
    if isinstance(e, Ref):
        return e.name
    if isinstance(e, Const):
        return _vh_const(e)
    if isinstance(e, Extend):
        cast = "signed" if e.signed else "unsigned"
        return f"std_logic_vector(resize({cast}({_vh_expr(e.a, widths)}), {e.to_width}))"
    if isinstance(e, Unary):
        if e.op == "not":
            return f"(not {_vh_expr(e.a, widths)})"
        return f"std_logic_vector(-signed({_vh_expr(e.a, widths)}))"
    if isinstance(e, Binary):
        if e.op in ("add", "sub"):
            sym = "+" if e.op == "add" else "-"
            return (f"std_logic_vector(unsigned({_vh_expr(e.a, widths)}) {sym}"
                    f" unsigned({_vh_expr(e.b, widths)}))")
        if e.op == "mul":
            w = expr_width(e, widths)
            return (f"std_logic_vector(resize(unsigned({_vh_expr(e.a, widths)}) *"
                    f" unsigned({_vh_expr(e.b, widths)}), {w}))")
        if e.op == "udiv":
            return (f"std_logic_vector(unsigned({_vh_expr(e.a, widths)}) /"
                    f" unsigned({_vh_expr(e.b, widths)}))")
        if e.op == "sdiv":
            return (f"std_logic_vector(signed({_vh_expr(e.a, widths)}) /"
                    f" signed({_vh_expr(e.b, widths)}))")
        if e.op in ("and", "or", "xor"):
            return f"({_vh_expr(e.a, widths)} {e.op} {_vh_expr(e.b, widths)})"
        raise UnsupportedConstruct(f"comparison {e.op} outside condition position")
    if isinstance(e, Concat):
        return "(" + " & ".join(_vh_expr(p, widths) for p in e.parts) + ")"
    raise UnsupportedConstruct(f"cannot render {e!r}")


def _vh_assign(a: Assign, widths) -> str:
    e = a.expr
    if isinstance(e, Cond):
        return (f"  {a.target} <= {_vh_expr(e.then, widths)} when"
                f" {_vh_cond(e.cond, widths)} else {_vh_expr(e.other, widths)};")
    if isinstance(e, Binary) and e.op in ("eq", "ne", "ult", "ule", "ugt", "uge",
                                          "slt", "sle", "sgt", "sge"):
        return f'  {a.target} <= "1" when {_vh_cond(e, widths)} else "0";'
    return f"  {a.target} <= {_vh_expr(e, widths)};"


def _vh_port_type(p: PortDecl) -> str:
    if p.width == 0:
        return "std_logic"
    return f"std_logic_vector({p.width - 1} downto 0)"


def _render_vhdl(ast: HdlAst) -> str:
    out: list[str] = []
    for mod in ast.modules:
        widths = mod.width_of
        out.append("library ieee;")
        out.append("use ieee.std_logic_1164.all;")
        out.append("use ieee.numeric_std.all;")
        out.append("")
        out.append(f"entity {mod.name} is")
        out.append("  port (")
        ports = [f"    {p.name} : {'in' if p.direction == 'input' else 'out'}"
                 f" {_vh_port_type(p)}" for p in mod.ports]
        out.append(";\n".join(ports))
        out.append("  );")
        out.append(f"end {mod.name};")
        out.append("")
        out.append(f"architecture rtl of {mod.name} is")
        for n in mod.nets:
            out.append(f"  signal {n.name} : std_logic_vector({n.width - 1} downto 0);")
        for r in mod.regs:
            out.append(f"  signal {r.name} : std_logic_vector({r.width - 1} downto 0);")
        out.append("begin")
        for a in mod.assigns:
            out.append(_vh_assign(a, widths))
        for inst in mod.instances:
            ports = ", ".join(f"{formal} => {_vh_expr(actual, widths)}"
                              for formal, actual in inst.ports)
            out.append(f"  {inst.name} : entity work.{inst.module} port map ({ports});")
        if mod.regs:
            out.append("  process (clk)")
            out.append("  begin")
            out.append("    if rising_edge(clk) then")
            out.append("      if rst = '1' then")
            for r in mod.regs:
                out.append(f"        {r.name} <= (others => '0');")
            out.append("      else")
            indent = "        "
            if mod.enable:
                out.append(f'        if {mod.enable} = "1" then')
                indent = "          "
            for u in mod.updates:
                out.append(f"{indent}{u.target} <= {_vh_expr(u.expr, widths)};")
            if mod.enable:
                out.append("        end if;")
            out.append("      end if;")
            out.append("    end if;")
            out.append("  end process;")
        out.append("end rtl;")
        out.append("")
    return "\n".join(out)
