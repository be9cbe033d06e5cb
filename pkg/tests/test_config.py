import pytest

from sirtailor.config import (
    DEFAULT_REGISTER_FUNCTIONS, ConfigError, ManualWhitelist, SymbolManifest, build_initial_whitelist,
    load_categories, load_manifest, load_register_functions, load_script_whitelist, load_whitelist,
)
from sirtailor.ir import Block, FunctionDef, ModuleUnit, Ret


def module_with(exported, internal=()):
    funcs = [FunctionDef(n, (), frozenset({"export"}), (Block("entry", (Ret(),)),)) for n in exported]
    funcs += [FunctionDef(n, (), frozenset(), (Block("entry", (Ret(),)),)) for n in internal]
    return ModuleUnit("lib", functions=tuple(funcs))


def test_load_manifest():
    assert load_manifest("app nginx\nfwrite\nmalloc") == SymbolManifest("nginx", frozenset({"fwrite", "malloc"}))


def test_manifest_comments_and_duplicates():
    m = load_manifest("# generated by readelf\napp x\nfoo\nfoo  # again\n\n")
    assert m.symbols == frozenset({"foo"})


@pytest.mark.parametrize("text", ["app nginx\n", "", "fwrite\nmalloc", "app x\nnot a symbol"])
def test_bad_manifest(text):
    with pytest.raises(ConfigError) as info:
        load_manifest(text)
    assert info.value.code == "bad-manifest"


def test_seed_intersection_warns_on_unknown():
    seeds, warnings = build_initial_whitelist(module_with(["a", "b", "c"]), [SymbolManifest("app", frozenset("bd"))])
    assert seeds == {"b"}
    assert len(warnings) == 1 and "@d" in warnings[0].message


def test_multiple_manifests_union():
    m = module_with(["a", "b", "c"])
    seeds, _ = build_initial_whitelist(m, [SymbolManifest("web", frozenset("b")), SymbolManifest("php", frozenset("c"))])
    assert seeds == {"b", "c"}


def test_manual_entries():
    seeds, warnings = build_initial_whitelist(module_with(["a"], ["_start"]), [],
                                              ManualWhitelist(frozenset({"a", "_start", "ghost"})))
    assert seeds == {"a", "_start"}
    assert [w.code for w in warnings] == ["unknown-whitelist-entry"]


def test_manifest_cannot_seed_internal_function():
    seeds, warnings = build_initial_whitelist(module_with([], ["helper"]), [SymbolManifest("x", frozenset({"helper"}))])
    assert seeds == set() and warnings[0].code == "not-exported"


def test_seeding_is_monotone():
    m = module_with(["a", "b", "c", "d"], ["e"])
    small, _ = build_initial_whitelist(m, [SymbolManifest("x", frozenset("a"))])
    big, _ = build_initial_whitelist(m, [SymbolManifest("x", frozenset("ab"))], ManualWhitelist(frozenset("e")))
    assert small <= big <= m.function_names


def test_default_categories():
    cats = load_categories()
    sizes = {k: len(v) for k, v in cats.categories.items()}
    assert sizes == {"Code Execution": 5, "Command Execution": 7}
    assert "mail" in cats.categories["Command Execution"]


def test_custom_categories():
    assert load_categories('{"X":["f"]}').categories == {"X": frozenset({"f"})}


@pytest.mark.parametrize("text", ['{"X": "f"}', "[1]", "{not json", '{"X": [1]}'])
def test_bad_categories(text):
    with pytest.raises(ConfigError) as info:
        load_categories(text)
    assert info.value.code == "bad-categories"


def test_register_functions_default_has_ten_names():
    assert len(DEFAULT_REGISTER_FUNCTIONS) == 10
    assert "rb_define_global_function" in DEFAULT_REGISTER_FUNCTIONS
    assert load_register_functions("rb_define_method\n").names == {"rb_define_method"}


def test_script_whitelist_is_case_sensitive_text():
    wl = load_script_whitelist("A::read\nEcho\n# comment\n", "php")
    assert wl.names == {"A::read", "Echo"}
    assert load_whitelist("_start\n").symbols == {"_start"}
