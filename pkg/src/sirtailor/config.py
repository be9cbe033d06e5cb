"""Analyst-provided inputs: manifests, whitelists, register functions, categories."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable

from .ir import EXPORT, Diagnostic, ModuleUnit, SirError, error, warning

IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")

DEFAULT_REGISTER_FUNCTIONS = frozenset({
    "rb_define_protected_method",
    "rb_define_private_method",
    "rb_define_singleton_method",
    "rb_define_method",
    "rb_define_method_id",
    "rb_define_module_function",
    "rb_define_global_function",
    "rb_define_alloc_func",
    "rb_define_virtual_variable",
    "rb_define_hooked_variable",
})

# RIPS sink categories for PHP
DEFAULT_CATEGORIES = {
    "Code Execution": frozenset({
        "assert", "create_function", "preg_filter", "preg_replace", "preg_replace_callback",
    }),
    "Command Execution": frozenset({
        "exec", "passthru", "popen", "proc_open", "shell_exec", "system", "mail",
    }),
}


@dataclass(frozen=True)
class SymbolManifest:
    app_name: str
    symbols: frozenset[str]


@dataclass(frozen=True)
class ManualWhitelist:
    symbols: frozenset[str] = frozenset()


@dataclass(frozen=True)
class ScriptWhitelist:
    mode: str  # "php" or "ruby"
    names: frozenset[str]


@dataclass(frozen=True)
class RegisterFunctionSet:
    names: frozenset[str] = DEFAULT_REGISTER_FUNCTIONS


@dataclass(frozen=True)
class CategoryConfig:
    categories: dict[str, frozenset[str]]

    @classmethod
    def default(cls) -> CategoryConfig:
        return cls(dict(DEFAULT_CATEGORIES))


class ConfigError(SirError):
    pass


def _lines(text: str):
    """Yield ``(lineno, content)`` for non-blank, non-comment lines."""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def load_manifest(text: str) -> SymbolManifest:
    """Read ``app <name>`` followed by one imported symbol per line."""
    lines = list(_lines(text))
    if not lines or not lines[0][1].startswith("app ") or not lines[0][1][4:].strip():
        raise ConfigError(error("bad-manifest", "manifest must start with an 'app <name>' line"))
    app = lines[0][1][4:].strip()
    symbols = set()
    for lineno, line in lines[1:]:
        if not IDENT_RE.match(line):
            raise ConfigError(error("bad-manifest", f"line {lineno}: {line!r} is not a valid symbol name"))
        symbols.add(line)
    if not symbols:
        raise ConfigError(error("bad-manifest", f"manifest for {app!r} lists no symbols"))
    return SymbolManifest(app, frozenset(symbols))


def load_whitelist(text: str) -> ManualWhitelist:
    symbols = set()
    for lineno, line in _lines(text):
        if not IDENT_RE.match(line):
            raise ConfigError(error("bad-whitelist", f"line {lineno}: {line!r} is not a valid symbol name"))
        symbols.add(line)
    return ManualWhitelist(frozenset(symbols))


def load_script_whitelist(text: str, mode: str) -> ScriptWhitelist:
    if mode not in ("php", "ruby"):
        raise ValueError(f"unknown script mode {mode!r}")
    return ScriptWhitelist(mode, frozenset(line for _, line in _lines(text)))


def load_register_functions(text: str) -> RegisterFunctionSet:
    names = load_whitelist(text).symbols
    if not names:
        raise ConfigError(error("bad-register-functions", "register function list is empty"))
    return RegisterFunctionSet(names)


def load_categories(text: str | None = None) -> CategoryConfig:
    """Parse a JSON ``{category: [name, ...]}`` object; ``None`` gives the defaults."""
    if text is None:
        return CategoryConfig.default()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(error("bad-categories", f"invalid JSON: {exc}")) from None
    if not isinstance(data, dict):
        raise ConfigError(error("bad-categories", "categories must be a JSON object"))
    categories = {}
    for name, members in data.items():
        if not isinstance(members, list) or not all(isinstance(x, str) for x in members):
            raise ConfigError(error("bad-categories", f"category {name!r} must map to an array of strings"))
        categories[name] = frozenset(members)
    return CategoryConfig(categories)


def build_initial_whitelist(
    m: ModuleUnit,
    manifests: Iterable[SymbolManifest],
    manual: ManualWhitelist = ManualWhitelist(),
) -> tuple[frozenset[str], list[Diagnostic]]:
    """Seed functions: imported exports of every manifest plus manual entries."""
    exported = {f.name for f in m.functions if f.exported}
    functions = m.function_names
    data_exports = {g.name for g in m.globals if EXPORT in g.attrs}
    seeds: set[str] = set()
    warnings: list[Diagnostic] = []

    for manifest in manifests:
        for sym in sorted(manifest.symbols):
            if sym in exported:
                seeds.add(sym)
            elif sym in data_exports:
                warnings.append(warning("data-symbol",
                                        f"{manifest.app_name}: @{sym} is a data symbol; only functions seed"))
            else:
                warnings.append(warning("not-exported",
                                        f"{manifest.app_name}: @{sym} is not an exported function of {m.name}"))
    for sym in sorted(manual.symbols):
        if sym in functions:
            seeds.add(sym)
        else:
            warnings.append(warning("unknown-whitelist-entry", f"manual whitelist names unknown function @{sym}"))
    return frozenset(seeds), warnings
