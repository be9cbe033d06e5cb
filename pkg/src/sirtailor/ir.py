"""SIR data model: modules, globals, functions, instructions and validation.

Every value in the model is immutable. Rewrites build new objects with
:func:`dataclasses.replace`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

EXPORT = "export"
PHP_TABLE = "script_table=php"
FUNCTION_ATTRS = frozenset({EXPORT})
GLOBAL_ATTRS = frozenset({EXPORT, PHP_TABLE})


# -- values and initializers -------------------------------------------------


@dataclass(frozen=True)
class Local:
    """An SSA value (``%name``)."""

    name: str


@dataclass(frozen=True)
class Int:
    value: int


@dataclass(frozen=True)
class FuncRef:
    """Address of a function or extern (``funcref @name``)."""

    name: str


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Null:
    pass


@dataclass(frozen=True)
class Aggregate:
    items: tuple[Initializer, ...]


@dataclass(frozen=True)
class Array:
    items: tuple[Initializer, ...]


Value = Union[Local, Int, FuncRef, Str]
Initializer = Union[Int, Null, FuncRef, Str, Aggregate, Array]


def iter_funcrefs(init: Initializer) -> Iterator[FuncRef]:
    """Yield every funcref inside an initializer, depth first."""
    if isinstance(init, FuncRef):
        yield init
    elif isinstance(init, (Aggregate, Array)):
        for item in init.items:
            yield from iter_funcrefs(item)


# -- instructions ------------------------------------------------------------


@dataclass(frozen=True)
class Instruction:
    result: str | None = field(default=None, kw_only=True)

    kind = ""
    terminator = False
    produces_value = False

    def operands(self) -> tuple[Value, ...]:
        """Value operands in textual order."""
        return ()


@dataclass(frozen=True)
class Call(Instruction):
    callee: str
    args: tuple[Value, ...] = ()

    kind = "call"
    produces_value = True

    def operands(self):
        return self.args


@dataclass(frozen=True)
class ICall(Instruction):
    callee: Value
    args: tuple[Value, ...] = ()

    kind = "icall"
    produces_value = True

    def operands(self):
        return (self.callee, *self.args)


@dataclass(frozen=True)
class Load(Instruction):
    glob: str

    kind = "load"
    produces_value = True


@dataclass(frozen=True)
class Store(Instruction):
    """Store ``value`` into a global (``dest`` is a str) or a memory slot."""

    value: Value
    dest: Union[str, Value]

    kind = "store"

    def operands(self):
        if isinstance(self.dest, str):
            return (self.value,)
        return (self.value, self.dest)


@dataclass(frozen=True)
class Select(Instruction):
    cond: Value
    if_true: Value
    if_false: Value

    kind = "select"
    produces_value = True

    def operands(self):
        return (self.cond, self.if_true, self.if_false)


@dataclass(frozen=True)
class Phi(Instruction):
    incoming: tuple[tuple[Value, str], ...]

    kind = "phi"
    produces_value = True

    def operands(self):
        return tuple(value for value, _ in self.incoming)


@dataclass(frozen=True)
class BinOp(Instruction):
    op: str  # add, sub or mul
    lhs: Value
    rhs: Value

    produces_value = True

    @property
    def kind(self):
        return self.op

    def operands(self):
        return (self.lhs, self.rhs)


@dataclass(frozen=True)
class Const(Instruction):
    value: Union[Int, FuncRef, Str]

    kind = "const"
    produces_value = True

    def operands(self):
        return (self.value,)


@dataclass(frozen=True)
class Ret(Instruction):
    value: Value | None = None

    kind = "ret"
    terminator = True

    def operands(self):
        return () if self.value is None else (self.value,)


@dataclass(frozen=True)
class Br(Instruction):
    label: str

    kind = "br"
    terminator = True


@dataclass(frozen=True)
class CondBr(Instruction):
    cond: Value
    if_true: str
    if_false: str

    kind = "condbr"
    terminator = True

    def operands(self):
        return (self.cond,)


@dataclass(frozen=True)
class Out(Instruction):
    value: Value

    kind = "out"

    def operands(self):
        return (self.value,)


@dataclass(frozen=True)
class Trap(Instruction):
    message: str

    kind = "trap"
    terminator = True


INSTRUCTION_KINDS = (
    "call", "icall", "store", "ret", "select", "phi", "load", "const",
    "add", "sub", "mul", "br", "condbr", "out", "trap",
)
BINOPS = ("add", "sub", "mul")


def successors(inst: Instruction) -> tuple[str, ...]:
    if isinstance(inst, Br):
        return (inst.label,)
    if isinstance(inst, CondBr):
        return (inst.if_true, inst.if_false)
    return ()


# -- declarations ------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    label: str
    instructions: tuple[Instruction, ...]


@dataclass(frozen=True)
class FunctionDef:
    name: str
    params: tuple[str, ...]
    attrs: frozenset[str]
    blocks: tuple[Block, ...]

    @property
    def exported(self) -> bool:
        return EXPORT in self.attrs

    def instructions(self) -> Iterator[tuple[str, int, Instruction]]:
        """Yield ``(label, index, instruction)`` for every instruction."""
        for block in self.blocks:
            for index, inst in enumerate(block.instructions):
                yield block.label, index, inst

    def instruction_count(self) -> int:
        return sum(len(b.instructions) for b in self.blocks)


@dataclass(frozen=True)
class GlobalDef:
    name: str
    attrs: frozenset[str]
    init: Initializer

    @property
    def is_php_table(self) -> bool:
        return PHP_TABLE in self.attrs


@dataclass(frozen=True)
class ModuleUnit:
    name: str
    globals: tuple[GlobalDef, ...] = ()
    functions: tuple[FunctionDef, ...] = ()
    externs: tuple[str, ...] = ()  # declaration order kept for printing

    def function(self, name: str) -> FunctionDef | None:
        for func in self.functions:
            if func.name == name:
                return func
        return None

    def function_map(self) -> dict[str, FunctionDef]:
        return {f.name: f for f in self.functions}

    @property
    def function_names(self) -> frozenset[str]:
        return frozenset(f.name for f in self.functions)

    @property
    def extern_names(self) -> frozenset[str]:
        return frozenset(self.externs)


# -- diagnostics -------------------------------------------------------------


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int

    def __str__(self):
        return f"{self.line}:{self.column}"


@dataclass(frozen=True)
class Location:
    symbol: str
    block: str | None = None
    index: int | None = None

    def __str__(self):
        parts = ["@" + self.symbol]
        if self.block is not None:
            parts.append(self.block)
        if self.index is not None:
            parts.append(str(self.index))
        return ":".join(parts)


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" or "warning"
    code: str
    message: str
    location: Location | None = None
    span: SourceSpan | None = None

    @property
    def is_error(self) -> bool:
        return self.severity == "error"

    def __str__(self):
        where = []
        if self.span is not None:
            where.append(str(self.span))
        if self.location is not None:
            where.append(str(self.location))
        prefix = " ".join(where)
        prefix = f"{prefix}: " if prefix else ""
        return f"{prefix}{self.severity}[{self.code}]: {self.message}"


def error(code, message, location=None, span=None) -> Diagnostic:
    return Diagnostic("error", code, message, location, span)


def warning(code, message, location=None, span=None) -> Diagnostic:
    return Diagnostic("warning", code, message, location, span)


class SirError(Exception):
    """Raised when an operation cannot produce a result.

    ``code`` is the short identifier of the first error; all diagnostics are
    kept in ``diagnostics``.
    """

    def __init__(self, diagnostics):
        if isinstance(diagnostics, Diagnostic):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        self.code = self.diagnostics[0].code if self.diagnostics else "error"
        super().__init__("\n".join(str(d) for d in self.diagnostics))


# -- validation --------------------------------------------------------------


def is_php_entry(init: Initializer) -> bool:
    return (
        isinstance(init, Aggregate)
        and len(init.items) == 3
        and isinstance(init.items[0], Str)
        and isinstance(init.items[1], (FuncRef, Null))
        and isinstance(init.items[2], Int)
    )


def _dominators(func: FunctionDef) -> dict[str, set[str]]:
    """Dominator sets for blocks reachable from the entry block."""
    labels = {b.label for b in func.blocks}
    succ = {
        b.label: [s for s in successors(b.instructions[-1]) if s in labels]
        if b.instructions else []
        for b in func.blocks
    }
    entry = func.blocks[0].label
    reachable = [entry]
    seen = {entry}
    for label in reachable:
        for s in succ[label]:
            if s not in seen:
                seen.add(s)
                reachable.append(s)
    preds: dict[str, list[str]] = {label: [] for label in reachable}
    for label in reachable:
        for s in succ[label]:
            preds[s].append(label)

    dom = {label: set(reachable) for label in reachable}
    dom[entry] = {entry}
    changed = True
    while changed:
        changed = False
        for label in reachable[1:]:
            new = set.intersection(*(dom[p] for p in preds[label])) if preds[label] else set()
            new = new | {label}
            if new != dom[label]:
                dom[label] = new
                changed = True
    return dom


def _validate_function(func: FunctionDef, symbols, globals_, diags):
    fname = func.name

    def loc(label=None, index=None):
        return Location(fname, label, index)

    bad_attrs = func.attrs - FUNCTION_ATTRS
    for attr in sorted(bad_attrs):
        diags.append(error("bad-attr", f"attribute '{attr}' is not allowed on functions", loc()))

    if not func.blocks:
        diags.append(error("no-blocks", f"function @{fname} has no blocks", loc()))
        return

    labels: set[str] = set()
    for block in func.blocks:
        if block.label in labels:
            diags.append(error("duplicate-label", f"block '{block.label}' defined twice", loc(block.label)))
        labels.add(block.label)

    # definition sites: param -> None, result -> (label, index)
    defs: dict[str, tuple[str, int] | None] = {}
    for param in func.params:
        if param in defs:
            diags.append(error("duplicate-def", f"parameter %{param} declared twice", loc()))
        defs[param] = None

    for label, index, inst in func.instructions():
        if inst.result is None:
            continue
        if not inst.produces_value:
            diags.append(error("bad-result", f"'{inst.kind}' does not produce a value", loc(label, index)))
        if inst.result in defs:
            diags.append(error("duplicate-def", f"%{inst.result} defined more than once", loc(label, index)))
            continue
        defs[inst.result] = (label, index)

    dom = _dominators(func)

    def check_value(value, label, index, use_block, use_index):
        if isinstance(value, FuncRef) and value.name not in symbols:
            diags.append(error("unresolved-symbol", f"funcref @{value.name} does not name a function or extern",
                               loc(label, index)))
        if not isinstance(value, Local):
            return
        if value.name not in defs:
            diags.append(error("undefined-value", f"%{value.name} is never defined", loc(label, index)))
            return
        site = defs[value.name]
        if site is None or use_block not in dom:
            return
        def_block, def_index = site
        if def_block == use_block:
            ok = use_index is None or def_index < use_index
        else:
            ok = def_block in dom[use_block]
        if not ok:
            diags.append(error("use-before-def", f"%{value.name} used before its definition",
                               loc(label, index)))

    for block in func.blocks:
        insts = block.instructions
        if not insts or not insts[-1].terminator:
            diags.append(error("missing-terminator", f"block '{block.label}' does not end in a terminator",
                               loc(block.label)))
        seen_non_phi = False
        for index, inst in enumerate(insts):
            label = block.label
            if inst.terminator and index != len(insts) - 1:
                diags.append(error("misplaced-terminator", f"'{inst.kind}' must end its block", loc(label, index)))
            if isinstance(inst, Phi):
                if seen_non_phi:
                    diags.append(error("misplaced-phi", "phi must appear at the start of a block", loc(label, index)))
                for value, pred in inst.incoming:
                    if pred not in labels:
                        diags.append(error("unknown-label", f"phi names unknown block '{pred}'", loc(label, index)))
                        check_value(value, label, index, label, index)
                    else:
                        check_value(value, label, index, pred, None)
            else:
                seen_non_phi = True
                for value in inst.operands():
                    check_value(value, label, index, label, index)
            for target in successors(inst):
                if target not in labels:
                    diags.append(error("unknown-label", f"branch to unknown block '{target}'", loc(label, index)))
            if isinstance(inst, Call) and inst.callee not in symbols:
                diags.append(error("unresolved-symbol", f"call to @{inst.callee} which is not a function or extern",
                                   loc(label, index)))
            glob = inst.glob if isinstance(inst, Load) else (
                inst.dest if isinstance(inst, Store) and isinstance(inst.dest, str) else None)
            if glob is not None and glob not in globals_:
                diags.append(error("unresolved-global", f"@{glob} is not a global", loc(label, index)))


def validate_module(m: ModuleUnit) -> list[Diagnostic]:
    """Return every structural violation in ``m``; empty iff ``m`` is valid."""
    diags: list[Diagnostic] = []

    seen: set[str] = set()
    names = [(e, "extern") for e in m.externs]
    names += [(g.name, "global") for g in m.globals]
    names += [(f.name, "function") for f in m.functions]
    for name, what in names:
        if name in seen:
            diags.append(error("duplicate-name", f"{what} @{name} reuses an existing name", Location(name)))
        seen.add(name)

    symbols = m.function_names | m.extern_names
    globals_ = {g.name for g in m.globals}

    for glob in m.globals:
        for attr in sorted(glob.attrs - GLOBAL_ATTRS):
            diags.append(error("bad-attr", f"attribute '{attr}' is not allowed on globals", Location(glob.name)))
        for ref in iter_funcrefs(glob.init):
            if ref.name not in symbols:
                diags.append(error("unresolved-symbol", f"funcref @{ref.name} does not name a function or extern",
                                   Location(glob.name)))
        if glob.is_php_table:
            if not isinstance(glob.init, Array):
                diags.append(error("malformed-table", "script table must be an array", Location(glob.name)))
            else:
                for i, entry in enumerate(glob.init.items):
                    if not is_php_entry(entry):
                        diags.append(error("malformed-table",
                                           f"entry {i} is not a (str, funcref-or-null, int) aggregate",
                                           Location(glob.name, None, i)))

    for func in m.functions:
        _validate_function(func, symbols, globals_, diags)
    return diags


def check_module(m: ModuleUnit) -> ModuleUnit:
    """Return ``m`` unchanged or raise :class:`SirError` with its errors."""
    errors = [d for d in validate_module(m) if d.is_error]
    if errors:
        raise SirError(errors)
    return m
