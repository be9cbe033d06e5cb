"""Code-reduction metrics and remaining sensitive functions."""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .config import DEFAULT_REGISTER_FUNCTIONS, CategoryConfig
from .ir import Call, FuncRef, ModuleUnit, SirError, Str, error
from .plugins import is_trap_stub, php_tables

SENSITIVE_MODES = ("php", "ruby", "library")


def percent(after: int, before: int) -> float | None:
    """``100 * after / before`` rounded half-up to one decimal; None if before is 0."""
    if before == 0:
        return None
    ratio = Decimal(100 * after) / Decimal(before)
    return float(ratio.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class Metrics:
    funcs_before: int
    funcs_after: int
    funcs_pct: float | None
    size_before: int
    size_after: int
    size_pct: float | None
    removed_names: tuple[str, ...]


@dataclass(frozen=True)
class SensitiveReport:
    per_category: dict[str, tuple[int, tuple[str, ...]]]
    mode: str


def compute_metrics(before: ModuleUnit, after: ModuleUnit) -> Metrics:
    before_funcs = before.function_map()
    after_funcs = []
    for func in after.functions:
        if func.name in before_funcs:
            after_funcs.append(func)
        elif not is_trap_stub(func):
            raise SirError(error("mismatched-modules", f"@{func.name} does not exist in the original module"))
    size_before = sum(f.instruction_count() for f in before.functions)
    size_after = sum(f.instruction_count() for f in after_funcs)
    kept = {f.name for f in after_funcs}
    return Metrics(
        funcs_before=len(before_funcs),
        funcs_after=len(after_funcs),
        funcs_pct=percent(len(after_funcs), len(before_funcs)),
        size_before=size_before,
        size_after=size_after,
        size_pct=percent(size_after, size_before),
        removed_names=tuple(sorted(set(before_funcs) - kept)),
    )


def _php_present(m: ModuleUnit) -> set[str]:
    tables = php_tables(m)
    if not tables:
        raise SirError(error("mode-mismatch", f"module {m.name} has no php script table"))
    funcs = m.function_map()
    present = set()
    for table in tables:
        for entry in table.init.items:
            name, handler, _ = entry.items
            if not isinstance(handler, FuncRef):
                continue
            target = funcs.get(handler.name)
            if target is not None and is_trap_stub(target):
                continue
            present.add(name.value)
    return present


def _ruby_present(m: ModuleUnit, register_functions) -> set[str]:
    present = set()
    for func in m.functions:
        for _, _, inst in func.instructions():
            if isinstance(inst, Call) and inst.callee in register_functions:
                name = next((a for a in inst.args if isinstance(a, Str)), None)
                if name is not None:
                    present.add(name.value)
    return present


def sensitive_report(
    m: ModuleUnit,
    cats: CategoryConfig,
    mode: str,
    register_functions=DEFAULT_REGISTER_FUNCTIONS,
) -> SensitiveReport:
    """Count category members still reachable by scripts (or exported) in ``m``."""
    if mode == "php":
        present = _php_present(m)
    elif mode == "ruby":
        present = _ruby_present(m, register_functions)
    elif mode == "library":
        present = {f.name for f in m.functions if f.exported}
    else:
        raise SirError(error("mode-mismatch", f"unknown report mode {mode!r}"))
    per_category = {}
    for cat, members in cats.categories.items():
        names = tuple(sorted(members & present))
        per_category[cat] = (len(names), names)
    return SensitiveReport(per_category, mode)


def _pct(x):
    return "-" if x is None else x


def report_dict(metrics: Metrics, sensitive: SensitiveReport | None = None, app: str = "") -> dict:
    return {
        "app": app,
        "funcs": {"before": metrics.funcs_before, "after": metrics.funcs_after, "pct": _pct(metrics.funcs_pct)},
        "size": {"before": metrics.size_before, "after": metrics.size_after, "pct": _pct(metrics.size_pct)},
        "removed": sorted(metrics.removed_names),
        "sensitive": {} if sensitive is None else {
            cat: {"remaining": count, "names": sorted(names)}
            for cat, (count, names) in sensitive.per_category.items()
        },
    }


def render_report(
    metrics: Metrics,
    sensitive: SensitiveReport | None = None,
    fmt: str = "json",
    app: str = "",
) -> str:
    data = report_dict(metrics, sensitive, app)
    if fmt == "json":
        return json.dumps(data, sort_keys=True, separators=(",", ":")) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")

    def pct(x):
        return "-" if x is None else f"{x:.1f}%"

    rows = [
        ("app", app or "-"),
        ("functions", f"{metrics.funcs_after}/{metrics.funcs_before} ({pct(metrics.funcs_pct)})"),
        ("code size", f"{metrics.size_after}/{metrics.size_before} ({pct(metrics.size_pct)})"),
        ("removed", ", ".join(sorted(metrics.removed_names)) or "-"),
    ]
    if sensitive is not None:
        for cat in sorted(sensitive.per_category):
            count, names = sensitive.per_category[cat]
            rows.append((cat, f"{count}" + (f" ({', '.join(names)})" if names else "")))
    width = max(len(k) for k, _ in rows)
    return "".join(f"{k.ljust(width)}  {v}\n" for k, v in rows)
