"""Produce the tailored module from an analysis result."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .config import ScriptWhitelist
from .explorer import AnalysisOptions, EditPlan, compute_retained
from .ir import (
    Call, Diagnostic, FuncRef, ModuleUnit, SirError, Location, check_module, error, iter_funcrefs,
    validate_module,
)
from .plugins import apply_php_edits, apply_ruby_edits


@dataclass(frozen=True)
class DebloatResult:
    module: ModuleUnit
    retained: frozenset[str]  # includes trap stubs
    removed: frozenset[str]
    edits_applied: EditPlan
    diagnostics: tuple[Diagnostic, ...] = ()


def validate_closed(m: ModuleUnit) -> list[Diagnostic]:
    """Report every call target or funcref that does not resolve in ``m``."""
    symbols = m.function_names | m.extern_names
    diags = []
    for g in m.globals:
        for ref in iter_funcrefs(g.init):
            if ref.name not in symbols:
                diags.append(error("closure-violation", f"@{g.name} references missing function @{ref.name}",
                                   Location(g.name)))
    for func in m.functions:
        for label, index, inst in func.instructions():
            names = [v.name for v in inst.operands() if isinstance(v, FuncRef)]
            if isinstance(inst, Call):
                names.insert(0, inst.callee)
            for name in names:
                if name not in symbols:
                    diags.append(error("closure-violation", f"reference to missing function @{name}",
                                       Location(func.name, label, index)))
    return diags


def debloat(
    m: ModuleUnit,
    seeds,
    opts: AnalysisOptions = AnalysisOptions(),
    script_wl: ScriptWhitelist | None = None,
    *,
    verify: bool = True,
) -> DebloatResult:
    """Tailor ``m`` to the functions reachable from ``seeds``.

    With ``verify`` (the default) the output is re-validated and any dangling
    reference raises :class:`SirError` with code ``closure-violation``.
    """
    check_module(m)
    state, plan = compute_retained(m, seeds, opts, script_wl)

    tailored = apply_php_edits(m, plan)
    if opts.script_mode == "ruby":
        tailored = apply_ruby_edits(tailored, plan, opts.register_functions.names)

    stubs = {s.stub_name for s in plan.trap_stubs}
    keep = state.retained | stubs
    tailored = replace(tailored, functions=tuple(f for f in tailored.functions if f.name in keep))

    if verify:
        problems = validate_closed(tailored) or [d for d in validate_module(tailored) if d.is_error]
        if problems:
            raise SirError(problems)

    original = m.function_names
    return DebloatResult(
        module=tailored,
        retained=frozenset(keep),
        removed=frozenset(original - state.retained),
        edits_applied=plan,
        diagnostics=tuple(state.diagnostics),
    )
