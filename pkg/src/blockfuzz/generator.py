"""Model growth: probability-matrix block selection under constraint feedback.

A model starts as a tiny seed (sources feeding output ports) and grows by
splicing blocks into nets, one guided point per round.  The guidance
callback supplies the next constraint (insertion point, admissible types,
required rate, forbidden kinds) once per round; within a round the
generator chains several blocks at that point, so models develop both long
combinational runs and wide fan-in from tapped nets.

Everything is driven by one seeded deterministic stream: the same seed,
config, catalog and matrix always reproduce the identical model down to
the serialized bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional

from .catalog import (
    ADD_SIGNS,
    BITWISE_OPS,
    BOOL,
    COMPARE_OPS,
    MAX_WORD_LENGTH,
    MINMAX_MODES,
    VARIADIC_MAX,
    VARIADIC_MIN,
    BlockCatalog,
    BlockGroup,
    BlockKind,
    SamplePeriod,
    SignalType,
    Signedness,
    default_catalog,
    infer_output_type,
    sfix,
    ufix,
)
from .graph import (
    BlockInstance,
    Connection,
    ConstraintViolated,
    ModelGraph,
    NetLocation,
    iter_graphs,
    metrics,
    validate,
)
from .rng import Rng

BASE_PERIOD = SamplePeriod(1, 1)


class GeneratorError(Exception):
    pass


class NoEligibleKind(GeneratorError):
    pass


class GenerationStalled(GeneratorError):
    pass


@dataclass(frozen=True)
class GenerationConfig:
    seed: int
    block_count_target: int = 35
    b_max: Optional[int] = None
    hdl_max: int = 1
    blocks_per_round: int = 4
    max_depth: int = 4
    max_ref_fanout: int = 8
    dialects: tuple[str, ...] = ("verilog", "vhdl", "systemverilog")

    def __post_init__(self):
        if self.block_count_target < 2:
            raise ValueError("block_count_target must be at least 2")
        if self.hdl_max < 1:
            raise ValueError("hdl_max must be at least 1")
        if self.b_max is not None and self.b_max < 1:
            raise ValueError("b_max must be at least 1")

    @property
    def rounds(self) -> int:
        if self.b_max is not None:
            return self.b_max
        return max(1, math.ceil(self.block_count_target / self.blocks_per_round))


@dataclass(frozen=True)
class ConstraintInfo:
    """Feedback handed to the generator for the next insertions."""

    insertion_point: object  # needs .graph_path and .connection
    net_type: SignalType
    admissible_types: frozenset
    required_period: SamplePeriod
    forbidden_kinds: frozenset

    def widened_to_unsigned(self) -> "ConstraintInfo":
        """Stall fallback: admit any unsigned type instead."""
        return replace(self, admissible_types=frozenset(
            ufix(w) for w in range(1, MAX_WORD_LENGTH + 1)))


@dataclass
class ProbabilityMatrix:
    """Kind-to-kind transition weights; every row sums to one.

    The diagonal is ignored at sampling time (the next kind always differs
    from the current one); the dedicated start row seeds the first pick.
    """

    kinds: tuple[str, ...]
    rows: dict[str, tuple[float, ...]]

    START = "__start__"

    def __post_init__(self):
        for name, row in self.rows.items():
            total = sum(row)
            if total <= 0:
                raise ValueError(f"row {name!r} has no weight")
            self.rows[name] = tuple(w / total for w in row)

    def row(self, current: Optional[str]) -> tuple[float, ...]:
        key = current if current in self.rows else self.START
        return self.rows[key]

    def column(self, kind: str) -> int:
        return self.kinds.index(kind)

    def override(self, overrides: dict[str, dict[str, float]]) -> "ProbabilityMatrix":
        """New matrix with specific kind->kind weights replaced."""
        rows = {name: list(row) for name, row in self.rows.items()}
        for src, cols in overrides.items():
            if src not in rows:
                raise ValueError(f"unknown matrix row {src!r}")
            for dst, w in cols.items():
                rows[src][self.column(dst)] = float(w)
        for name in rows:
            if name != self.START:
                rows[name][self.column(name)] = 0.0
        return ProbabilityMatrix(self.kinds, {k: tuple(v) for k, v in rows.items()})


# Group-level selection mass, redistributed within each group.  The shares
# below were calibrated empirically so that default campaigns land in the
# published complexity bands (median nodes in [30, 41] at a 35-block
# target, median connections in [120, 210]); wide fan-in kinds carry most
# of their group's mass to push connection counts up.
GROUP_WEIGHTS = {
    BlockGroup.SOURCE_SINK: 0.06,
    BlockGroup.MATH: 0.41,
    BlockGroup.HDL_SPECIFIC: 0.41,
    BlockGroup.CONTROL_FLOW: 0.12,
}

KIND_SHARE_BOOSTS = {
    "MinMax": 26.0,
    "Bitwise Operator": 34.0,
    "Bit to Integer Converter": 1.5,
    "Add": 1.5,
    "Model": 2.0,
}


def default_matrix(catalog: Optional[BlockCatalog] = None) -> ProbabilityMatrix:
    catalog = catalog or default_catalog()
    kinds = tuple(catalog.names())
    base = []
    group_totals: dict[BlockGroup, float] = {}
    for k in catalog.kinds:
        group_totals[k.group] = group_totals.get(k.group, 0.0) + KIND_SHARE_BOOSTS.get(k.name, 1.0)
    for k in catalog.kinds:
        share = KIND_SHARE_BOOSTS.get(k.name, 1.0) / group_totals[k.group]
        base.append(GROUP_WEIGHTS[k.group] * share)
    rows: dict[str, tuple[float, ...]] = {ProbabilityMatrix.START: tuple(base)}
    for i, k in enumerate(kinds):
        row = list(base)
        row[i] = 0.0
        rows[k] = tuple(row)
    return ProbabilityMatrix(kinds, rows)


# -- eligibility ---------------------------------------------------------------

def output_feasible(kind: BlockKind, net_type: SignalType, admissible) -> bool:
    """Whether some instantiation of ``kind`` spliced at a net of
    ``net_type`` can produce an admissible output type."""
    name = kind.name
    if name == "Outport":
        return True
    if not kind.inputs or not kind.outputs:
        return name == "Outport"
    if name == "Abs":
        return (not net_type.is_boolean) and ufix(net_type.word_length) in admissible
    if name == "Add":
        if net_type.is_boolean:
            return False
        w = min(net_type.word_length + 1, MAX_WORD_LENGTH)
        return SignalType(net_type.signedness, w) in admissible
    if name in ("Compare To Constant", "Compare To Zero", "If"):
        if name != "If" and net_type.is_boolean:
            return False
        return BOOL in admissible
    if name in ("Detect Change", "Detect Increase", "Detect Decrease"):
        return BOOL in admissible
    if name == "Bit to Integer Converter":
        if not net_type.is_boolean:
            return False
        return any(ufix(k) in admissible
                   for k in range(VARIADIC_MIN, VARIADIC_MAX + 1))
    if name in ("Bit Clear", "Bit Set"):
        return net_type.signedness is Signedness.UNSIGNED and net_type in admissible
    if name == "Bitwise Operator":
        return (not net_type.is_signed) and net_type in admissible
    if name in ("Bias", "Gain", "Divide", "MinMax", "Unary Minus"):
        return (not net_type.is_boolean) and net_type in admissible
    if name in ("Pipeline Register", "If Action Subsystem", "Model"):
        return net_type in admissible
    return False


def choose_next_kind(matrix: ProbabilityMatrix, current: Optional[str],
                     constraint: ConstraintInfo, rng: Rng,
                     catalog: Optional[BlockCatalog] = None) -> BlockKind:
    """Sample the next kind from the matrix row restricted to kinds that
    differ from the current one, run at the required rate, are not
    forbidden, and can produce an admissible output at the point."""
    catalog = catalog or default_catalog()
    row = matrix.row(current)
    names, weights = [], []
    for name, weight in zip(matrix.kinds, row):
        if weight <= 0.0 or name == current or name in constraint.forbidden_kinds:
            continue
        kind = catalog.lookup_kind(name)
        if not kind.runs_at(constraint.required_period):
            continue
        if not output_feasible(kind, constraint.net_type, constraint.admissible_types):
            continue
        names.append(name)
        weights.append(weight)
    if not names:
        raise NoEligibleKind("no kind satisfies the constraint at this point")
    return catalog.lookup_kind(names[rng.weighted_choice(names, weights)])


# -- constraint construction (also used as the generator's built-in fallback) ---

@lru_cache(maxsize=4096)
def _widened_cached(net_type: SignalType, exact: bool, accepts_bool: bool) -> frozenset:
    if exact:
        return frozenset({net_type})
    out = set()
    if net_type.is_boolean:
        out.add(BOOL)
    else:
        for w in range(net_type.word_length, MAX_WORD_LENGTH + 1):
            out.add(SignalType(net_type.signedness, w))
    if accepts_bool:
        out.add(BOOL)
    return frozenset(out)


def widened_types(net_type: SignalType, dst_kind: BlockKind, dst_port: int) -> frozenset:
    """Admissible output types at a net: everything at least as wide with
    the same signedness, plus boolean when the consumer accepts it.

    Nets feeding a subsystem or reference instance admit only the exact
    type: the child's boundary ports are fixed, so no widening survives
    validation there.
    """
    exact = dst_kind.name in ("If Action Subsystem", "Model")
    return _widened_cached(net_type, exact, dst_kind.port_accepts(dst_port, BOOL))


def forbidden_kinds_for(g: ModelGraph, graph_path: tuple, net_type: SignalType,
                        period: SamplePeriod, catalog: BlockCatalog,
                        config: GenerationConfig) -> frozenset:
    """Structural block constraints at a point: kinds that cannot be
    spliced there no matter the sampled parameters."""
    forbidden = set()
    booleans_at_rate = any(
        b.output_type.is_boolean and b.sample_period == period
        and catalog.lookup_kind(b.kind).outputs
        for b in g.blocks.values()
    )
    depth = len(graph_path)
    for kind in catalog.kinds:
        if not kind.inputs:  # sources enter through seeding, not splicing
            forbidden.add(kind.name)
            continue
        if kind.name == "If Action Subsystem":
            if depth >= config.max_depth or not booleans_at_rate:
                forbidden.add(kind.name)
        elif kind.name == "Model":
            if depth >= config.max_depth or len(g.references) >= config.max_ref_fanout:
                forbidden.add(kind.name)
    return frozenset(forbidden)


def constraint_for(m: ModelGraph, graph_path: tuple, conn: Connection,
                   catalog: BlockCatalog, config: GenerationConfig) -> ConstraintInfo:
    g = m.subgraph_at(graph_path)
    src_block = g.blocks[conn.src[0]]
    dst_block = g.blocks[conn.dst[0]]
    dst_kind = catalog.lookup_kind(dst_block.kind)
    net_type = src_block.output_type
    return ConstraintInfo(
        insertion_point=NetLocation(graph_path, conn),
        net_type=net_type,
        admissible_types=widened_types(net_type, dst_kind, conn.dst[1]),
        required_period=src_block.sample_period,
        forbidden_kinds=forbidden_kinds_for(g, graph_path, net_type,
                                            src_block.sample_period, catalog, config),
    )


# -- instantiation --------------------------------------------------------------

def _sample_params(kind: BlockKind, net_type: SignalType, admissible,
                   rng: Rng) -> tuple[dict, int]:
    """Kind-specific parameters plus the planned input arity."""
    name = kind.name
    params: dict = {}
    arity = len(kind.inputs)
    if kind.variadic:
        # skew wide: fan-in is where generated designs get their density
        arity = rng.randint(6, 11)
        params["input_count"] = arity
    if name == "Add":
        params["signs"] = ADD_SIGNS[rng.randint(0, len(ADD_SIGNS) - 1)]
    elif name == "Bias":
        params["value"] = rng.randint(0, net_type.max_pattern())
    elif name == "Gain":
        params["factor"] = rng.randint(0, net_type.max_pattern())
    elif name == "MinMax":
        params["mode"] = MINMAX_MODES[rng.randint(0, 1)]
    elif name in ("Bit Clear", "Bit Set"):
        params["index"] = rng.randint(0, net_type.word_length - 1)
    elif name == "Bitwise Operator":
        params["op"] = BITWISE_OPS[rng.randint(0, len(BITWISE_OPS) - 1)]
    elif name == "Compare To Constant":
        params["op"] = COMPARE_OPS[rng.randint(0, len(COMPARE_OPS) - 1)]
        params["value"] = rng.randint(0, net_type.max_pattern())
    elif name == "Compare To Zero":
        params["op"] = COMPARE_OPS[rng.randint(0, len(COMPARE_OPS) - 1)]
    elif name == "Bit to Integer Converter":
        widths = [k for k in range(VARIADIC_MIN, VARIADIC_MAX + 1)
                  if ufix(k) in admissible]
        arity = widths[rng.randint(0, len(widths) - 1)]
        params["input_count"] = arity
    return params, arity


def _passthrough_child(data_type: SignalType, period: SamplePeriod) -> ModelGraph:
    child = ModelGraph()
    child.add_block(BlockInstance(0, "Inport", data_type, period, {}))
    child.add_block(BlockInstance(1, "Outport", data_type, period, {}))
    child.connect((0, 0), (1, 0))
    return child


def _tap_candidates(g: ModelGraph, kind: BlockKind, port: int, net_type: SignalType,
                    period: SamplePeriod, catalog: BlockCatalog,
                    excluded: frozenset = frozenset()) -> list[tuple[int, int]]:
    out = []
    for bid in sorted(g.blocks):
        if bid in excluded:
            continue
        block = g.blocks[bid]
        if not catalog.lookup_kind(block.kind).outputs:
            continue
        if block.sample_period != period:
            continue
        t = block.output_type
        if not kind.port_accepts(port, t):
            continue
        if kind.name == "Bitwise Operator" and t != net_type:
            continue
        if kind.name in ("MinMax", "Divide") and (
                t.is_boolean or t.signedness != net_type.signedness):
            continue
        out.append((bid, 0))
    return out


def _comb_reachable_from(g: ModelGraph, start: int, catalog: BlockCatalog) -> frozenset:
    """Blocks on a register-free forward path from ``start`` (inclusive
    when pass-through); tapping one of these would close a combinational
    cycle through the inserted block."""
    from .graph import comb_through_map

    through = comb_through_map(g, catalog)
    adj: dict[int, list[int]] = {}
    for c in g.connections:
        adj.setdefault(c.src[0], []).append(c.dst[0])
    seen = set()
    frontier = [start] if through.get(start, False) else []
    while frontier:
        u = frontier.pop()
        if u in seen:
            continue
        seen.add(u)
        for v in adj.get(u, []):
            if through.get(v, False) and v not in seen:
                frontier.append(v)
    return frozenset(seen)


class _Grower:
    def __init__(self, config: GenerationConfig, catalog: BlockCatalog,
                 matrix: ProbabilityMatrix, guidance: Callable, rng: Rng):
        self.config = config
        self.catalog = catalog
        self.matrix = matrix
        self.guidance = guidance
        self.rng = rng
        self.model = self._seed()
        self.current_kind: Optional[str] = None
        self.consecutive_stalls = 0
        self._valid_ids: set = set()

    def _seed(self) -> ModelGraph:
        """Backbone net plus free-standing input blocks for later tapping."""
        cfg = self.config
        rng = self.rng
        m = ModelGraph()

        def random_type() -> SignalType:
            sgn = Signedness.SIGNED if rng.randint(0, 3) == 0 else Signedness.UNSIGNED
            return SignalType(sgn, rng.randint(2, 16))

        t = ufix(rng.randint(2, 8)) if cfg.block_count_target < 4 else random_type()
        m.add_block(BlockInstance(0, "Constant", t, BASE_PERIOD,
                                  {"value": rng.randint(0, t.max_pattern())}))
        m.add_block(BlockInstance(1, "Outport", t, BASE_PERIOD, {}))
        m.connect((0, 0), (1, 0))
        if cfg.block_count_target >= 4:
            m.add_block(BlockInstance(2, "Inport", random_type(), BASE_PERIOD, {}))
        if cfg.block_count_target >= 8:
            m.add_block(BlockInstance(3, "StimulusSource", random_type(), BASE_PERIOD, {}))
        return m

    def node_count(self) -> int:
        return metrics(self.model).node_count

    def grow(self) -> ModelGraph:
        cfg = self.config
        target = cfg.block_count_target
        constraint = self._fallback_constraint()
        rounds = 0
        round_budget = max(4 * cfg.rounds, 8)
        while self.node_count() < target:
            if rounds >= round_budget:
                raise GenerationStalled(
                    f"{self.node_count()} of {target} blocks after {rounds} rounds")
            for _ in range(cfg.blocks_per_round):
                if self.node_count() >= target:
                    break
                constraint = self._insert_one(constraint)
                if constraint is None:
                    break
            rounds += 1
            if self.node_count() >= target:
                break
            try:
                constraint = self.guidance(self.model)
            except Exception:
                constraint = None
            if constraint is None:
                constraint = self._fallback_constraint()
        problems = validate(self.model, self.catalog)
        assert not problems, f"generated model invalid: {problems[0]}"
        return self.model

    def _fallback_constraint(self) -> ConstraintInfo:
        conns = sorted(self.model.connections)
        conn = conns[self.rng.randint(0, len(conns) - 1)]
        return constraint_for(self.model, (), conn, self.catalog, self.config)

    def _insert_one(self, constraint: ConstraintInfo) -> Optional[ConstraintInfo]:
        """One splice at the constrained point; returns the follow-on
        constraint for chaining within the round (None ends the round)."""
        # a subsystem or new reference adds three nodes at once; keep those
        # out when the remaining budget cannot absorb the jump
        if self.config.block_count_target - self.node_count() < 3:
            constraint = replace(constraint, forbidden_kinds=(
                constraint.forbidden_kinds | {"If Action Subsystem", "Model"}))
        for attempt in range(4):
            use = constraint if attempt < 3 else constraint.widened_to_unsigned()
            try:
                kind = choose_next_kind(self.matrix, self.current_kind, use,
                                        self.rng, self.catalog)
            except NoEligibleKind:
                continue
            follow = self._try_insert(kind, use)
            if follow is not None:
                self.consecutive_stalls = 0
                self.current_kind = kind.name
                return follow
        # final resort: terminate the net with an output port
        follow = self._try_insert(self.catalog.lookup_kind("Outport"), constraint)
        if follow is None:
            self.consecutive_stalls += 1
            if self.consecutive_stalls >= self.config.block_count_target:
                raise GenerationStalled("no insertion possible at guided points")
        else:
            self.consecutive_stalls = 0
        return None  # round moves on to fresh guidance either way

    def _try_insert(self, kind: BlockKind, constraint: ConstraintInfo
                    ) -> Optional[ConstraintInfo]:
        point = constraint.insertion_point
        g = self.model.subgraph_at(point.graph_path)
        conn = point.connection
        if conn not in g.connections:
            return None
        net_type = g.blocks[conn.src[0]].output_type
        period = constraint.required_period
        params, arity = _sample_params(kind, net_type, constraint.admissible_types,
                                       self.rng)
        block_id = g.next_id()

        if kind.name == "Outport":
            instance = BlockInstance(block_id, "Outport", net_type, period, {})
            return self._commit(point, instance, {}, conn)

        splice_port = next((p for p in range(arity)
                            if kind.port_accepts(p, net_type)), None)
        if splice_port is None:
            return None

        taps: dict[int, tuple[int, int]] = {}
        in_types: list[Optional[SignalType]] = [None] * arity
        in_types[splice_port] = net_type
        excluded = _comb_reachable_from(g, conn.dst[0], self.catalog) if arity > 1 \
            else frozenset()
        for port in range(arity):
            if port == splice_port:
                continue
            cands = _tap_candidates(g, kind, port, net_type, period, self.catalog,
                                    excluded)
            if not cands:
                return None
            pick = cands[self.rng.randint(0, len(cands) - 1)]
            taps[port] = pick
            in_types[port] = g.blocks[pick[0]].output_type

        if kind.name == "If Action Subsystem":
            sub_name = f"sub{len(g.subsystems)}"
            data_type = in_types[1]
            params = {"subsystem": sub_name}
            out_type = data_type
        elif kind.name == "Model":
            ref_name, out_type = self._pick_reference(g, net_type, period)
            params = {"reference": ref_name}
        else:
            try:
                out_type = infer_output_type(kind, in_types, declared=None)
            except Exception:
                return None

        instance = BlockInstance(block_id, kind.name, out_type, period, params)
        extra = {"__child_type__": in_types[1] if kind.name == "If Action Subsystem" else net_type}
        return self._commit(point, instance, taps, conn, extra if kind.name in
                            ("If Action Subsystem", "Model") else None)

    def _pick_reference(self, g: ModelGraph, net_type: SignalType,
                        period: SamplePeriod) -> tuple[str, SignalType]:
        reusable = []
        for name in sorted(g.references):
            child = g.references[name]
            inports = [b for b in child.blocks.values() if b.kind == "Inport"]
            outports = [b for b in child.blocks.values() if b.kind == "Outport"]
            if len(inports) == 1 and inports[0].output_type == net_type \
                    and inports[0].sample_period == period:
                reusable.append((name, outports[0].output_type))
        if reusable and self.rng.randint(0, 3) > 0:
            return reusable[self.rng.randint(0, len(reusable) - 1)]
        return f"mdl{len(g.references)}", net_type

    def _commit(self, point, instance: BlockInstance, taps: dict,
                conn: Connection, child_info: Optional[dict] = None
                ) -> Optional[ConstraintInfo]:
        staged = child_info is not None
        staging = self.model
        if staged:
            staging = self.model.clone_path(point.graph_path)
            g = staging.subgraph_at(point.graph_path)
            child_type = child_info["__child_type__"]
            if instance.kind == "If Action Subsystem":
                g.subsystems[instance.params["subsystem"]] = _passthrough_child(
                    child_type, instance.sample_period)
            elif instance.params["reference"] not in g.references:
                g.references[instance.params["reference"]] = _passthrough_child(
                    child_type, instance.sample_period)
        try:
            result = _insert_into(staging, point, instance, taps, self.catalog,
                                  staged, self._valid_ids)
        except ConstraintViolated:
            return None
        self.model = result
        self._valid_ids = {id(g) for _p, g in iter_graphs(self.model)}
        if instance.kind == "Outport":
            return constraint_for(self.model, point.graph_path, conn,
                                  self.catalog, self.config)
        return constraint_for(self.model, point.graph_path,
                              Connection((instance.id, 0), conn.dst),
                              self.catalog, self.config)


def _insert_into(staging: ModelGraph, point, instance, taps, catalog,
                 staged: bool = False, known_valid=None) -> ModelGraph:
    from .graph import insert_block
    return insert_block(staging, point, instance, taps=taps, catalog=catalog,
                        _staged=staged, _known_valid=known_valid)


def generate_model(config: GenerationConfig, catalog: Optional[BlockCatalog] = None,
                   matrix: Optional[ProbabilityMatrix] = None,
                   guidance: Optional[Callable] = None) -> ModelGraph:
    """Grow a validated model of roughly ``block_count_target`` blocks.

    ``guidance`` maps the current model to the next ConstraintInfo (one
    call per round); None falls back to self-guidance from the model's own
    nets, which keeps generation usable without the HDL feedback loop.
    """
    catalog = catalog or default_catalog()
    matrix = matrix or default_matrix(catalog)
    rng = Rng(config.seed)
    grower = _Grower(config, catalog, matrix,
                     guidance if guidance is not None else lambda m: None, rng)
    model = grower.grow()
    count = metrics(model).node_count
    target = config.block_count_target
    assert abs(count - target) <= max(1, round(0.1 * target)), \
        f"node count {count} outside 10% of {target}"
    return model
