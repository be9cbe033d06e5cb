"""Reachability analysis over a SIR module.

Global exploration scans every initializer (and PHP function tables) for
function pointers; function exploration then follows direct calls and every
funcref operand from the whitelisted functions until nothing new appears.
"""

from __future__ import annotations

import dataclasses
from collections import deque
from dataclasses import dataclass, field

from .config import RegisterFunctionSet, ScriptWhitelist
from .ir import (
    Array, Call, Diagnostic, FuncRef, FunctionDef, GlobalDef, Location, ModuleUnit, SirError, Str, error,
    is_php_entry, iter_funcrefs, warning,
)
from .plugins import TrapStub, unique_stub_name

SCRIPT_MODES = ("none", "php", "ruby")


@dataclass(frozen=True)
class AnalysisOptions:
    script_mode: str = "none"
    booby_trap: bool = False
    register_functions: RegisterFunctionSet = RegisterFunctionSet()
    # ablation hook; real runs always explore globals
    global_exploration: bool = True

    def __post_init__(self):
        if self.script_mode not in SCRIPT_MODES:
            raise ValueError(f"unknown script mode {self.script_mode!r}")
        if self.booby_trap and self.script_mode != "php":
            raise ValueError("booby traps are only supported in php mode")


@dataclass
class WhitelistState:
    functions: frozenset[str]
    externs: frozenset[str]
    whitelist: set[str] = field(default_factory=set)
    php_whitelist: frozenset[str] = frozenset()
    ruby_whitelist: frozenset[str] = frozenset()
    retained: set[str] = field(default_factory=set)
    externs_used: set[str] = field(default_factory=set)
    diagnostics: list[Diagnostic] = field(default_factory=list)
    taken_names: set[str] = field(default_factory=set)

    def insert(self, name: str) -> bool:
        """Whitelist ``name``; True if it is a function not seen before."""
        if name in self.functions:
            if name in self.whitelist:
                return False
            self.whitelist.add(name)
            return True
        if name in self.externs:
            self.externs_used.add(name)
        return False


@dataclass
class EditPlan:
    php_entry_deletions: list[tuple[str, int]] = field(default_factory=list)
    php_entry_redirects: list[tuple[str, int, str]] = field(default_factory=list)
    ruby_call_deletions: list[tuple[str, str, int]] = field(default_factory=list)
    trap_stubs: list[TrapStub] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (self.php_entry_deletions or self.php_entry_redirects
                    or self.ruby_call_deletions or self.trap_stubs)

    def stub_for(self, script_name: str, arity: int, taken: set[str]) -> str:
        for stub in self.trap_stubs:
            if stub.script_name == script_name and stub.arity == arity:
                return stub.stub_name
        name = unique_stub_name(script_name, taken)
        taken.add(name)
        self.trap_stubs.append(TrapStub(name, script_name, arity))
        return name

    def normalize(self) -> None:
        self.php_entry_deletions.sort()
        self.php_entry_redirects.sort()
        self.ruby_call_deletions.sort()


def _explore_php_table(g: GlobalDef, state, opts, plan):
    if not isinstance(g.init, Array):
        raise SirError(error("malformed-table", "script table must be an array", Location(g.name)))
    for index, entry in enumerate(g.init.items):
        if not is_php_entry(entry):
            raise SirError(error("malformed-table", f"entry {index} is not (str, funcref-or-null, int)",
                                 Location(g.name, None, index)))
        name, handler, arity = entry.items
        if name.value in state.php_whitelist:
            if isinstance(handler, FuncRef):
                state.insert(handler.name)
        elif opts.booby_trap:
            stub = plan.stub_for(name.value, max(arity.value, 0), state.taken_names)
            plan.php_entry_redirects.append((g.name, index, stub))
        else:
            plan.php_entry_deletions.append((g.name, index))


def explore_global(g: GlobalDef, state: WhitelistState, opts: AnalysisOptions, plan: EditPlan) -> None:
    """Whitelist function pointers held by ``g``; plan PHP table edits."""
    if opts.script_mode == "php" and g.is_php_table:
        _explore_php_table(g, state, opts, plan)
        return
    for ref in iter_funcrefs(g.init):
        state.insert(ref.name)


def explore_function(f: FunctionDef, state: WhitelistState, opts: AnalysisOptions, plan: EditPlan) -> set[str]:
    """Mark ``f`` retained and return every symbol it may transfer control to.

    In ruby mode, registration calls for names outside the ruby whitelist
    are planned for deletion and their handlers are not reported.
    """
    state.whitelist.add(f.name)
    state.retained.add(f.name)
    ruby = opts.script_mode == "ruby"
    register = opts.register_functions.names
    targets: set[str] = set()
    for label, index, inst in f.instructions():
        if isinstance(inst, Call):
            targets.add(inst.callee)
            if ruby and inst.callee in register:
                name = next((a for a in inst.args if isinstance(a, Str)), None)
                if name is None:
                    state.diagnostics.append(warning(
                        "dynamic-registration",
                        f"call to @{inst.callee} has no static name; keeping it and its handler",
                        Location(f.name, label, index)))
                elif name.value not in state.ruby_whitelist:
                    plan.ruby_call_deletions.append((f.name, label, index))
                    continue
        targets.update(v.name for v in inst.operands() if isinstance(v, FuncRef))
    return targets


def _script_names(script_wl, mode):
    if script_wl is None:
        return frozenset()
    if script_wl.mode != mode:
        raise ValueError(f"script whitelist is for {script_wl.mode}, analysis runs in {mode} mode")
    return script_wl.names


def _check_seeds(m, seeds):
    unknown = sorted(set(seeds) - m.function_names)
    if unknown:
        raise SirError([error("unknown-seed", f"seed @{s} is not a function of the module") for s in unknown])


def compute_retained(
    m: ModuleUnit,
    seeds,
    opts: AnalysisOptions = AnalysisOptions(),
    script_wl: ScriptWhitelist | None = None,
) -> tuple[WhitelistState, EditPlan]:
    """Least set of functions closed under exploration from ``seeds``."""
    _check_seeds(m, seeds)
    mode = opts.script_mode
    state = WhitelistState(
        functions=m.function_names,
        externs=m.extern_names,
        php_whitelist=_script_names(script_wl, "php") if mode == "php" else frozenset(),
        ruby_whitelist=_script_names(script_wl, "ruby") if mode == "ruby" else frozenset(),
        taken_names=set(m.function_names | m.extern_names | {g.name for g in m.globals}),
    )
    plan = EditPlan()
    for seed in seeds:
        state.insert(seed)

    if opts.global_exploration:
        for g in m.globals:
            explore_global(g, state, opts, plan)

    fmap = m.function_map()
    explored: set[str] = set()
    pending = deque(sorted(state.whitelist))
    while pending:
        name = pending.popleft()
        if name in explored:
            continue
        explored.add(name)
        for target in sorted(explore_function(fmap[name], state, opts, plan)):
            if state.insert(target):
                pending.append(target)

    state.retained = set(state.whitelist)
    plan.normalize()
    return state, plan


# -- independent oracle ------------------------------------------------------


def _walk_funcrefs(obj, out):
    if isinstance(obj, FuncRef):
        out.add(obj.name)
    elif isinstance(obj, (tuple, list)):
        for item in obj:
            _walk_funcrefs(item, out)
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            _walk_funcrefs(getattr(obj, f.name), out)


def naive_closure(
    m: ModuleUnit,
    seeds,
    opts: AnalysisOptions = AnalysisOptions(),
    script_wl: ScriptWhitelist | None = None,
) -> set[str]:
    """Retained set by repeated full rescans; a differential oracle only."""
    _check_seeds(m, seeds)
    functions = {f.name for f in m.functions}
    php_names = script_wl.names if (script_wl and opts.script_mode == "php") else frozenset()
    ruby_names = script_wl.names if (script_wl and opts.script_mode == "ruby") else frozenset()

    found = set(seeds)
    if opts.global_exploration:
        for g in m.globals:
            if opts.script_mode == "php" and g.is_php_table:
                for entry in g.init.items:
                    if not is_php_entry(entry):
                        raise SirError(error("malformed-table", f"bad entry in @{g.name}"))
                    name, handler, _ = entry.items
                    if name.value in php_names and isinstance(handler, FuncRef):
                        found.add(handler.name)
            else:
                _walk_funcrefs(g.init, found)
    retained = found & functions

    while True:
        found = set(retained)
        for func in m.functions:
            if func.name not in retained:
                continue
            for block in func.blocks:
                for inst in block.instructions:
                    if isinstance(inst, Call):
                        found.add(inst.callee)
                        if opts.script_mode == "ruby" and inst.callee in opts.register_functions.names:
                            names = [a.value for a in inst.args if isinstance(a, Str)]
                            if names and names[0] not in ruby_names:
                                continue
                    _walk_funcrefs(inst, found)
        found &= functions
        if found == retained:
            return retained
        retained = found
