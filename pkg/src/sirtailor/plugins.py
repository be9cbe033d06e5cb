"""Script-interpreter rewrites: PHP table edits, booby-trap stubs, Ruby registrations."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

from .ir import (
    Aggregate, Array, Block, Call, FuncRef, FunctionDef, Local, ModuleUnit, SirError, Trap, error,
    is_php_entry,
)

if TYPE_CHECKING:
    from .explorer import EditPlan

TRAP_PREFIX = "__trap_"


@dataclass(frozen=True)
class TrapStub:
    stub_name: str
    script_name: str
    arity: int = 0


def stub_base_name(script_name: str) -> str:
    return TRAP_PREFIX + re.sub(r"[^A-Za-z0-9_]", "_", script_name)


def unique_stub_name(script_name: str, existing) -> str:
    base = stub_base_name(script_name)
    if base not in existing:
        return base
    n = 1
    while f"{base}_{n}" in existing:
        n += 1
    return f"{base}_{n}"


def synthesize_trap(script_name: str, existing=frozenset(), arity: int = 0) -> FunctionDef:
    """Build a stub that halts with a booby-trap fault naming ``script_name``.

    ``arity`` sets the parameter count so dispatch with the handler's
    arguments reaches the trap instead of failing an arity check.
    """
    name = unique_stub_name(script_name, existing)
    return trap_function(TrapStub(name, script_name, arity))


def trap_function(stub: TrapStub) -> FunctionDef:
    params = tuple(f"a{i}" for i in range(stub.arity))
    return FunctionDef(stub.stub_name, params, frozenset(), (Block("entry", (Trap(stub.script_name),)),))


def is_trap_stub(func: FunctionDef) -> bool:
    return (
        len(func.blocks) == 1
        and len(func.blocks[0].instructions) == 1
        and isinstance(func.blocks[0].instructions[0], Trap)
    )


def php_tables(m: ModuleUnit):
    return [g for g in m.globals if g.is_php_table and isinstance(g.init, Array)]


def apply_php_edits(m: ModuleUnit, plan: EditPlan) -> ModuleUnit:
    """Remove or redirect PHP table entries and append the plan's trap stubs."""
    deletions: dict[str, set[int]] = {}
    redirects: dict[str, dict[int, str]] = {}
    for gname, index in plan.php_entry_deletions:
        deletions.setdefault(gname, set()).add(index)
    for gname, index, stub in plan.php_entry_redirects:
        redirects.setdefault(gname, {})[index] = stub

    globals_by_name = {g.name: g for g in m.globals}
    for gname in set(deletions) | set(redirects):
        g = globals_by_name.get(gname)
        if g is None or not g.is_php_table or not isinstance(g.init, Array):
            raise SirError(error("bad-edit", f"@{gname} is not a php script table"))
        size = len(g.init.items)
        for index in deletions.get(gname, set()) | set(redirects.get(gname, {})):
            if not 0 <= index < size or not is_php_entry(g.init.items[index]):
                raise SirError(error("bad-edit", f"@{gname} has no entry {index}"))

    new_globals = []
    for g in m.globals:
        dels = deletions.get(g.name)
        reds = redirects.get(g.name)
        if not dels and not reds:
            new_globals.append(g)
            continue
        items = []
        for index, entry in enumerate(g.init.items):
            if dels and index in dels:
                continue
            if reds and index in reds:
                name, _, arity = entry.items
                entry = Aggregate((name, FuncRef(reds[index]), arity))
            items.append(entry)
        new_globals.append(replace(g, init=Array(tuple(items))))

    taken = m.function_names | m.extern_names | set(globals_by_name)
    stubs = []
    for stub in plan.trap_stubs:
        if stub.stub_name in taken:
            raise SirError(error("bad-edit", f"trap stub @{stub.stub_name} collides with an existing symbol"))
        taken = taken | {stub.stub_name}
        stubs.append(trap_function(stub))
    return replace(m, globals=tuple(new_globals), functions=m.functions + tuple(stubs))


def _uses(func: FunctionDef, name: str) -> bool:
    for _, _, inst in func.instructions():
        if any(isinstance(v, Local) and v.name == name for v in inst.operands()):
            return True
    return False


def apply_ruby_edits(m: ModuleUnit, plan: EditPlan, register_functions=None) -> ModuleUnit:
    """Delete the registration calls listed in ``plan``.

    When ``register_functions`` is given, a listed call whose callee is not
    one of them is rejected as ``bad-edit``.
    """
    if not plan.ruby_call_deletions:
        return m
    by_func: dict[str, dict[str, set[int]]] = {}
    for fname, label, index in plan.ruby_call_deletions:
        by_func.setdefault(fname, {}).setdefault(label, set()).add(index)

    fmap = m.function_map()
    new_funcs = dict(fmap)
    for fname, per_block in by_func.items():
        func = fmap.get(fname)
        if func is None:
            raise SirError(error("bad-edit", f"no function @{fname}"))
        blocks = {b.label: b for b in func.blocks}
        for label, indices in per_block.items():
            block = blocks.get(label)
            if block is None:
                raise SirError(error("bad-edit", f"@{fname} has no block '{label}'"))
            for index in indices:
                if not 0 <= index < len(block.instructions):
                    raise SirError(error("bad-edit", f"@{fname}:{label} has no instruction {index}"))
                inst = block.instructions[index]
                if not isinstance(inst, Call):
                    raise SirError(error("bad-edit", f"@{fname}:{label}:{index} is not a call"))
                if register_functions is not None and inst.callee not in register_functions:
                    raise SirError(error("bad-edit", f"@{inst.callee} is not a register function"))
                if inst.result is not None and _uses(func, inst.result):
                    raise SirError(error("result-used",
                                         f"result %{inst.result} of the registration call is used"))
        new_blocks = tuple(
            replace(b, instructions=tuple(
                inst for i, inst in enumerate(b.instructions) if i not in per_block.get(b.label, ())))
            for b in func.blocks
        )
        new_funcs[fname] = replace(func, blocks=new_blocks)
    return replace(m, functions=tuple(new_funcs[f.name] for f in m.functions))
