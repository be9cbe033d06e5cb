import random
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from sirtailor.config import RegisterFunctionSet, ScriptWhitelist
from sirtailor.explorer import AnalysisOptions, compute_retained
from sirtailor.ir import Block, Call, Ret, SirError
from sirtailor.text import parse_module, print_module
from sirtailor.plugins import apply_php_edits
from sirtailor.transform import debloat, validate_closed

from conftest import load_fixture
from modgen import random_module, random_subset


def test_shapes_debloat():
    r = debloat(load_fixture("shapes.sir"), {"area_square"})
    assert r.removed == {"area_circle", "area_ellipse"}
    assert r.retained == {"area_square", "area_rectangle"}
    assert [f.name for f in r.module.functions] == ["area_rectangle", "area_square"]


def test_full_whitelist_is_identity():
    m = load_fixture("stdio.sir")
    r = debloat(m, m.function_names)
    assert r.removed == set()
    assert print_module(r.module) == print_module(m)


def test_ruby_io_debloat():
    m = load_fixture("ruby_io.sir")
    r = debloat(m, {"Init_IO"}, AnalysisOptions("ruby"), ScriptWhitelist("ruby", frozenset({"open"})))
    assert {"rb_f_syscall", "rb_f_printf"} <= r.removed
    assert "rb_f_open" in r.retained


def test_validate_closed_detects_dangling_call():
    r = debloat(load_fixture("shapes.sir"), {"area_square"})
    assert validate_closed(r.module) == []
    square = r.module.function("area_square")
    broken = replace(square, blocks=(Block("entry", (Call("area_circle", ()), Ret())),))
    m = replace(r.module, functions=(r.module.functions[0], broken))
    diags = validate_closed(m)
    assert [d.code for d in diags] == ["closure-violation"]


def test_dangling_ref_inside_deleted_entry_disappears():
    text = """module m
extern @ghost_impl
global @t [script_table=php] = [
  { str "keep", funcref @k, 1 },
  { str "drop", funcref @ghost_impl, 1 }
]
func @k(x) {
entry:
  ret %x
}
"""
    m = parse_module(text)
    # hand-remove the extern so the only dangling ref is the dropped entry
    m = replace(m, externs=())
    assert [d.code for d in validate_closed(m)] == ["closure-violation"]
    _, plan = compute_retained(m, set(), AnalysisOptions("php"), ScriptWhitelist("php", frozenset({"keep"})))
    assert validate_closed(apply_php_edits(m, plan)) == []


def test_closure_violation_raised_without_global_exploration():
    m = load_fixture("stdio.sir")
    with pytest.raises(SirError) as info:
        debloat(m, {"fwrite"}, AnalysisOptions(global_exploration=False))
    assert info.value.code == "closure-violation"
    assert info.value.diagnostics[0].location.symbol == "stdout"


def _random_case(seed, allow_traps=True):
    rng = random.Random(seed)
    gen = random_module(seed, max_funcs=20)
    wl = ScriptWhitelist(gen.mode, frozenset(random_subset(rng, gen.script_names))) if gen.mode != "none" else None
    booby = allow_traps and gen.mode == "php" and rng.random() < 0.5
    opts = AnalysisOptions(gen.mode, booby_trap=booby,
                           register_functions=RegisterFunctionSet(frozenset({"rb_define_method"})))
    return gen.module, random_subset(rng, gen.module.function_names, 0.2), opts, wl


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_debloat_output_is_closed_and_partitioned(seed):
    m, seeds, opts, wl = _random_case(seed)
    r = debloat(m, seeds, opts, wl)
    assert validate_closed(r.module) == []
    original = m.function_names
    assert (r.retained & original) | r.removed == original
    assert not (r.retained & r.removed)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_debloat_is_idempotent(seed):
    # trap stubs would be re-trapped under fresh names, so no booby mode here
    m, seeds, opts, wl = _random_case(seed, allow_traps=False)
    first = debloat(m, seeds, opts, wl)
    second = debloat(first.module, seeds, opts, wl)
    assert second.retained == first.retained
    assert print_module(second.module) == print_module(first.module)
