"""Application-specific tailoring of SIR libraries and script interpreters."""

from .config import (
    CategoryConfig, ManualWhitelist, RegisterFunctionSet, ScriptWhitelist, SymbolManifest,
    build_initial_whitelist, load_categories, load_manifest,
)
from .explorer import AnalysisOptions, EditPlan, WhitelistState, compute_retained, naive_closure
from .ir import Diagnostic, ModuleUnit, SirError, validate_module
from .report import compute_metrics, render_report, sensitive_report
from .text import parse_module, print_module
from .transform import DebloatResult, debloat, validate_closed
from .vm import RunResult, run

__all__ = [
    "AnalysisOptions", "CategoryConfig", "DebloatResult", "Diagnostic", "EditPlan", "ManualWhitelist",
    "ModuleUnit", "RegisterFunctionSet", "RunResult", "ScriptWhitelist", "SirError", "SymbolManifest",
    "WhitelistState", "build_initial_whitelist", "compute_metrics", "compute_retained", "debloat",
    "load_categories", "load_manifest", "naive_closure", "parse_module", "print_module", "render_report",
    "run", "sensitive_report", "validate_closed", "validate_module",
]
