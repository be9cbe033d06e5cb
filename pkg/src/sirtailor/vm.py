"""Reference interpreter for SIR modules.

Runtime values are Python ints, :class:`~sirtailor.ir.FuncRef` and
:class:`~sirtailor.ir.Str`. Externs behave as stubs returning 0.

Two conventions give globals and script tables a runtime meaning:

* ``load @g`` on an aggregate or array global reads its first scalar field
  (``null`` and empty aggregates read as 0); ``store v, @g`` replaces it.
* ``icall`` on a string value dispatches through the PHP script tables,
  the way the interpreter resolves a script function name to its native
  handler. Unknown names and ``null`` handlers fault ``missing-function``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import (
    Aggregate, Array, BinOp, Block, Br, Call, CondBr, Const, FuncRef, FunctionDef, ICall, Int, Load, Local,
    ModuleUnit, Null, Out, Phi, Ret, Select, Store, Str, Trap, is_php_entry,
)

DEFAULT_STEP_LIMIT = 1_000_000

FAULT_KINDS = (
    "missing-function", "booby-trap", "bad-icall", "arity-mismatch", "step-limit", "invalid-op",
)


@dataclass(frozen=True)
class RunResult:
    status: str  # "ok" or "fault"
    fault_kind: str | None = None
    fault_detail: str = ""
    outputs: tuple[int, ...] = ()
    steps: int = 0
    called: tuple[str, ...] = ()  # functions entered, in first-entry order
    dispatched: tuple[str, ...] = ()  # script names dispatched, in first-use order

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class _Fault(Exception):
    def __init__(self, kind, detail=""):
        super().__init__(kind, detail)
        self.kind = kind
        self.detail = detail


def wrap64(x: int) -> int:
    x &= (1 << 64) - 1
    return x - (1 << 64) if x >= (1 << 63) else x


def _initial_value(init):
    if isinstance(init, Int):
        return init.value
    if isinstance(init, Null):
        return 0
    if isinstance(init, (FuncRef, Str)):
        return init
    if isinstance(init, (Aggregate, Array)):
        return _initial_value(init.items[0]) if init.items else 0
    raise TypeError(init)


@dataclass
class _Frame:
    func: FunctionDef
    blocks: dict[str, Block]
    block: Block
    env: dict = field(default_factory=dict)
    index: int = 0
    prev_label: str | None = None
    pending: str | None = None  # result name awaiting a callee's return


class _Machine:
    def __init__(self, m: ModuleUnit, step_limit: int):
        self.functions = m.function_map()
        self.externs = m.extern_names
        self.globals = {g.name: _initial_value(g.init) for g in m.globals}
        self.memory: dict = {}
        self.table: dict[str, FuncRef | None] = {}
        for g in m.globals:
            if g.is_php_table and isinstance(g.init, Array):
                for entry in g.init.items:
                    if is_php_entry(entry):
                        name, handler, _ = entry.items
                        self.table.setdefault(name.value, handler if isinstance(handler, FuncRef) else None)
        self.step_limit = step_limit
        self.steps = 0
        self.outputs: list[int] = []
        self.called: dict[str, None] = {}
        self.dispatched: dict[str, None] = {}
        self.stack: list[_Frame] = []

    def tick(self):
        self.steps += 1
        if self.steps > self.step_limit:
            raise _Fault("step-limit", str(self.step_limit))

    def value(self, frame, v):
        if isinstance(v, Local):
            try:
                return frame.env[v.name]
            except KeyError:
                raise _Fault("invalid-op", f"%{v.name} has no value in @{frame.func.name}") from None
        if isinstance(v, Int):
            return v.value
        return v

    def integer(self, frame, v):
        x = self.value(frame, v)
        if not isinstance(x, int):
            raise _Fault("invalid-op", f"expected an integer in @{frame.func.name}")
        return x

    def enter(self, func: FunctionDef, args):
        if len(args) != len(func.params):
            raise _Fault("arity-mismatch", f"@{func.name} takes {len(func.params)} arguments, got {len(args)}")
        self.called.setdefault(func.name, None)
        blocks = {b.label: b for b in func.blocks}
        self.stack.append(_Frame(func, blocks, func.blocks[0], dict(zip(func.params, args))))

    def call_symbol(self, frame, name, args, result):
        func = self.functions.get(name)
        if func is not None:
            frame.pending = result
            self.enter(func, args)
            return True
        if name in self.externs:
            if result is not None:
                frame.env[result] = 0
            return False
        raise _Fault("missing-function", name)

    def jump(self, frame, label):
        block = frame.blocks.get(label)
        if block is None:
            raise _Fault("invalid-op", f"no block '{label}' in @{frame.func.name}")
        frame.prev_label = frame.block.label
        frame.block = block
        frame.index = 0

    def finish(self, value):
        self.stack.pop()
        if not self.stack:
            return True
        caller = self.stack[-1]
        if caller.pending is not None:
            caller.env[caller.pending] = value
        caller.pending = None
        caller.index += 1
        return False

    def step(self) -> bool:
        """Execute one instruction (or one phi group); True when the entry returns."""
        frame = self.stack[-1]
        insts = frame.block.instructions
        if frame.index >= len(insts):
            raise _Fault("invalid-op", f"fell off block '{frame.block.label}' in @{frame.func.name}")
        inst = insts[frame.index]

        if isinstance(inst, Phi):
            group = []
            while frame.index < len(insts) and isinstance(insts[frame.index], Phi):
                group.append(insts[frame.index])
                frame.index += 1
            assigned = []
            for phi in group:
                self.tick()
                for v, label in phi.incoming:
                    if label == frame.prev_label:
                        assigned.append((phi.result, self.value(frame, v)))
                        break
                else:
                    raise _Fault("invalid-op", f"phi has no value for predecessor {frame.prev_label!r}")
            for name, x in assigned:
                if name is not None:
                    frame.env[name] = x
            return False

        self.tick()
        env = frame.env
        if isinstance(inst, Call):
            args = [self.value(frame, a) for a in inst.args]
            if self.call_symbol(frame, inst.callee, args, inst.result):
                return False
        elif isinstance(inst, ICall):
            target = self.value(frame, inst.callee)
            args = [self.value(frame, a) for a in inst.args]
            if isinstance(target, Str):
                self.dispatched.setdefault(target.value, None)
                handler = self.table.get(target.value)
                if handler is None:
                    raise _Fault("missing-function", target.value)
                target = handler
            if not isinstance(target, FuncRef):
                raise _Fault("bad-icall", f"icall through non-function value {target!r}")
            if self.call_symbol(frame, target.name, args, inst.result):
                return False
        elif isinstance(inst, Ret):
            return self.finish(0 if inst.value is None else self.value(frame, inst.value))
        elif isinstance(inst, Br):
            self.jump(frame, inst.label)
            return False
        elif isinstance(inst, CondBr):
            taken = inst.if_true if self.integer(frame, inst.cond) != 0 else inst.if_false
            self.jump(frame, taken)
            return False
        elif isinstance(inst, Trap):
            raise _Fault("booby-trap", inst.message)
        elif isinstance(inst, Const):
            env[inst.result] = self.value(frame, inst.value)
        elif isinstance(inst, BinOp):
            a = self.integer(frame, inst.lhs)
            b = self.integer(frame, inst.rhs)
            x = a + b if inst.op == "add" else a - b if inst.op == "sub" else a * b
            env[inst.result] = wrap64(x)
        elif isinstance(inst, Select):
            cond = self.integer(frame, inst.cond)
            env[inst.result] = self.value(frame, inst.if_true if cond != 0 else inst.if_false)
        elif isinstance(inst, Load):
            if inst.glob not in self.globals:
                raise _Fault("invalid-op", f"no global @{inst.glob}")
            env[inst.result] = self.globals[inst.glob]
        elif isinstance(inst, Store):
            x = self.value(frame, inst.value)
            if isinstance(inst.dest, str):
                if inst.dest not in self.globals:
                    raise _Fault("invalid-op", f"no global @{inst.dest}")
                self.globals[inst.dest] = x
            else:
                self.memory[self.value(frame, inst.dest)] = x
        elif isinstance(inst, Out):
            self.outputs.append(self.integer(frame, inst.value))
        else:
            raise _Fault("invalid-op", f"unsupported instruction {inst.kind}")
        frame.index += 1
        return False


def run(m: ModuleUnit, entry: str, args=(), step_limit: int = DEFAULT_STEP_LIMIT) -> RunResult:
    """Execute ``entry`` with integer ``args`` and collect its outputs."""
    if step_limit <= 0:
        raise ValueError("step_limit must be positive")
    machine = _Machine(m, step_limit)
    try:
        func = machine.functions.get(entry)
        if func is None:
            raise _Fault("invalid-op", f"no function @{entry}")
        if len(args) != len(func.params):
            raise _Fault("invalid-op", f"@{entry} takes {len(func.params)} arguments, got {len(args)}")
        machine.enter(func, [wrap64(int(a)) for a in args])
        while not machine.step():
            pass
    except _Fault as fault:
        status, kind, detail = "fault", fault.kind, fault.detail
    else:
        status, kind, detail = "ok", None, ""
    return RunResult(
        status=status,
        fault_kind=kind,
        fault_detail=detail,
        outputs=tuple(machine.outputs),
        steps=machine.steps,
        called=tuple(machine.called),
        dispatched=tuple(machine.dispatched),
    )
