"""Self-checking testbench generation.

A testbench drives the recorded stimulus into the design, prints one trace
line per output per cycle in the harness grammar (``name=hex@cycle``) and
compares each sample against the embedded golden value, printing
``MISMATCH <name> <cycle>`` on disagreement.  Timing: the clock rises at
5 ns + 10 ns*k; reset covers the first edge; cycle ``t`` drives inputs at
10t+7 ns and samples just before the edge at 10t+15 ns, which matches the
reference simulator's input/state alignment exactly.
"""

from __future__ import annotations

import re

from .hdl_ast import Dialect, HdlDesign
from .interpreter import Stimulus, Trace, hex_digits

_PORT_ID = re.compile(r"(\d+)$")


def _top_ports(design: HdlDesign):
    ins, outs = [], []
    for p in design.ast.top.ports:
        if p.name in ("clk", "rst"):
            continue
        (ins if p.direction == "input" else outs).append(p)
    return ins, outs


def _stim_for(port_name: str, stimulus: Stimulus) -> list[int]:
    block_id = int(_PORT_ID.search(port_name).group(1))
    return stimulus.values[block_id]


def make_testbench(design: HdlDesign, stimulus: Stimulus, golden: Trace) -> str:
    """Testbench source in the design's own dialect."""
    if design.dialect is Dialect.VHDL:
        return _vhdl_tb(design, stimulus, golden)
    return _verilog_tb(design, stimulus, golden,
                       sv=design.dialect is Dialect.SYSTEMVERILOG)


def _verilog_tb(design: HdlDesign, stimulus: Stimulus, golden: Trace, sv: bool) -> str:
    ins, outs = _top_ports(design)
    T = stimulus.cycles
    reg = "logic" if sv else "reg"
    wire = "logic" if sv else "wire"
    L: list[str] = []
    L.append("`timescale 1ns/1ps")
    L.append("module tb;")
    L.append(f"  {reg} clk;")
    L.append(f"  {reg} rst;")
    for p in ins:
        L.append(f"  {reg} [{p.width - 1}:0] {p.name};")
    for p in outs:
        L.append(f"  {wire} [{p.width - 1}:0] {p.name};")
    conns = ", ".join([".clk(clk)", ".rst(rst)"] +
                      [f".{p.name}({p.name})" for p in ins + outs])
    L.append(f"  {design.top} dut ({conns});")
    for p in ins:
        L.append(f"  {reg} [{p.width - 1}:0] stim_{p.name} [0:{max(T - 1, 0)}];")
    for p in outs:
        L.append(f"  {reg} [{p.width - 1}:0] gold_{p.name} [0:{max(T - 1, 0)}];")
    L.append("  integer t;")
    L.append("  initial begin")
    for p in ins:
        vals = _stim_for(p.name, stimulus)
        for t in range(T):
            L.append(f"    stim_{p.name}[{t}] = {p.width}'d{vals[t]};")
    for p in outs:
        for t in range(T):
            L.append(f"    gold_{p.name}[{t}] = {p.width}'d{golden.outputs[p.name][t]};")
    L.append("  end")
    L.append("  initial clk = 1'b0;")
    L.append("  always #5 clk = ~clk;")
    L.append("  initial begin")
    L.append("    rst = 1'b1;")
    for p in ins:
        L.append(f"    {p.name} = {p.width}'d0;")
    L.append("    #7;")
    L.append("    rst = 1'b0;")
    L.append(f"    for (t = 0; t < {T}; t = t + 1) begin")
    for p in ins:
        L.append(f"      {p.name} = stim_{p.name}[t];")
    L.append("      #6;")
    for p in outs:
        L.append(f'      $display("{p.name}=%h@%0d", {p.name}, t);')
        L.append(f"      if ({p.name} !== gold_{p.name}[t]) "
                 f'$display("MISMATCH {p.name} %0d", t);')
    L.append("      #4;")
    L.append("    end")
    L.append('    $display("TB_DONE");')
    L.append("    $finish;")
    L.append("  end")
    L.append("endmodule")
    L.append("")
    return "\n".join(L)


def _bin(value: int, width: int) -> str:
    return '"' + format(value, f"0{width}b") + '"'


def _vhdl_tb(design: HdlDesign, stimulus: Stimulus, golden: Trace) -> str:
    ins, outs = _top_ports(design)
    T = stimulus.cycles
    L: list[str] = []
    L.append("library ieee;")
    L.append("use ieee.std_logic_1164.all;")
    L.append("use ieee.numeric_std.all;")
    L.append("use ieee.std_logic_textio.all;")
    L.append("use std.textio.all;")
    L.append("")
    L.append("entity tb is")
    L.append("end tb;")
    L.append("")
    L.append("architecture sim of tb is")
    L.append("  signal clk : std_logic := '0';")
    L.append("  signal rst : std_logic := '1';")
    L.append("  signal done : boolean := false;")
    for p in ins:
        L.append(f"  signal {p.name} : std_logic_vector({p.width - 1} downto 0)"
                 " := (others => '0');")
    for p in outs:
        L.append(f"  signal {p.name} : std_logic_vector({p.width - 1} downto 0);")
    for p in ins:
        vals = _stim_for(p.name, stimulus)
        L.append(f"  type stim_{p.name}_t is array (0 to {max(T - 1, 0)}) of"
                 f" std_logic_vector({p.width - 1} downto 0);")
        body = ", ".join(_bin(v, p.width) for v in vals) if T > 1 \
            else f"0 => {_bin(vals[0], p.width)}" if T == 1 else ""
        L.append(f"  constant stim_{p.name} : stim_{p.name}_t := ({body});")
    for p in outs:
        vals = golden.outputs[p.name]
        L.append(f"  type gold_{p.name}_t is array (0 to {max(T - 1, 0)}) of"
                 f" std_logic_vector({p.width - 1} downto 0);")
        body = ", ".join(_bin(v, p.width) for v in vals) if T > 1 \
            else f"0 => {_bin(vals[0], p.width)}" if T == 1 else ""
        L.append(f"  constant gold_{p.name} : gold_{p.name}_t := ({body});")
    L.append("begin")
    conns = ", ".join(["clk => clk", "rst => rst"] +
                      [f"{p.name} => {p.name}" for p in ins + outs])
    L.append(f"  dut : entity work.{design.top} port map ({conns});")
    L.append("  clk_gen : process")
    L.append("  begin")
    L.append("    while not done loop")
    L.append("      wait for 5 ns;")
    L.append("      clk <= not clk;")
    L.append("    end loop;")
    L.append("    wait;")
    L.append("  end process;")
    L.append("  drive : process")
    L.append("    variable l : line;")
    L.append("  begin")
    L.append("    wait for 7 ns;")
    L.append("    rst <= '0';")
    L.append(f"    for t in 0 to {T - 1} loop")
    for p in ins:
        L.append(f"      {p.name} <= stim_{p.name}(t);")
    L.append("      wait for 6 ns;")
    for p in outs:
        pad = hex_digits(p.width) * 4
        L.append(f'      write(l, string\'("{p.name}="));')
        if pad == p.width:
            L.append(f"      hwrite(l, {p.name});")
        else:
            L.append(f"      hwrite(l, std_logic_vector(resize(unsigned({p.name}),"
                     f" {pad})));")
        L.append('      write(l, string\'("@"));')
        L.append("      write(l, t);")
        L.append("      writeline(output, l);")
        L.append(f"      if {p.name} /= gold_{p.name}(t) then")
        L.append(f'        write(l, string\'("MISMATCH {p.name} "));')
        L.append("        write(l, t);")
        L.append("        writeline(output, l);")
        L.append("      end if;")
    L.append("      wait for 4 ns;")
    L.append("    end loop;")
    L.append('    write(l, string\'("TB_DONE"));')
    L.append("    writeline(output, l);")
    L.append("    done <= true;")
    L.append("    wait;")
    L.append("  end process;")
    L.append("end sim;")
    L.append("")
    return "\n".join(L)
