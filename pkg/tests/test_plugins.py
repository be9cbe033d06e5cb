import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from sirtailor.config import RegisterFunctionSet, ScriptWhitelist
from sirtailor.explorer import AnalysisOptions, EditPlan, compute_retained
from sirtailor.ir import Call, ModuleUnit, SirError, Str, Trap
from sirtailor.plugins import apply_php_edits, apply_ruby_edits, is_trap_stub, php_tables, synthesize_trap
from sirtailor.text import parse_module, print_module
from sirtailor.transform import debloat

from conftest import load_fixture
from modgen import random_module, random_subset


def test_trap_stub_shape():
    stub = synthesize_trap("exec")
    assert stub.name == "__trap_exec"
    assert [i for _, _, i in stub.instructions()] == [Trap("exec")]
    assert is_trap_stub(stub)


def test_trap_name_sanitized_message_kept():
    stub = synthesize_trap("A::read")
    assert stub.name == "__trap_A__read"
    again = parse_module(print_module(ModuleUnit("m", functions=(stub,))))
    assert again.functions[0].blocks[0].instructions[0].message == "A::read"


def test_trap_name_collision():
    assert synthesize_trap("exec", {"__trap_exec"}).name == "__trap_exec_1"
    assert synthesize_trap("exec", {"__trap_exec", "__trap_exec_1"}).name == "__trap_exec_2"


FIVE = """module m
global @t [script_table=php] = [
  { str "a", funcref @h0, 1 },
  { str "b", funcref @h1, 1 },
  { str "c", funcref @h2, 1 },
  { str "d", funcref @h3, 1 },
  { str "e", funcref @h4, 1 }
]
""" + "\n".join(f"func @h{i}(x) {{\nentry:\n  out {i}\n  ret %x\n}}" for i in range(5)) + """
func @direct(x) [export] {
entry:
  %r = call @h1(%x)
  ret %r
}
"""


def entry_names(m):
    return [e.items[0].value for t in php_tables(m) for e in t.init.items]


def test_deletions_keep_order():
    m = parse_module(FIVE)
    plan = EditPlan(php_entry_deletions=[("t", 1), ("t", 2), ("t", 4)])
    assert entry_names(apply_php_edits(m, plan)) == ["a", "d"]


def test_redirects_keep_entry_count():
    m = parse_module(FIVE)
    state, plan = compute_retained(m, set(), AnalysisOptions("php", booby_trap=True),
                                   ScriptWhitelist("php", frozenset({"a", "d"})))
    out = apply_php_edits(m, plan)
    assert entry_names(out) == ["a", "b", "c", "d", "e"]
    targets = [e.items[1].name for e in out.globals[0].init.items]
    assert targets == ["h0", "__trap_b", "__trap_c", "h3", "__trap_e"]
    assert sum(is_trap_stub(f) for f in out.functions) == 3


def test_deleted_entry_handler_reachable_elsewhere_survives():
    m = parse_module(FIVE)
    wl = ScriptWhitelist("php", frozenset({"a"}))
    state, plan = compute_retained(m, {"direct"}, AnalysisOptions("php"), wl)
    assert ("t", 1) in plan.php_entry_deletions
    assert "h1" in state.retained
    out = debloat(m, {"direct"}, AnalysisOptions("php"), wl).module
    assert out.function("h1") is not None
    assert entry_names(out) == ["a"]


def test_stale_php_index():
    with pytest.raises(SirError) as info:
        apply_php_edits(parse_module(FIVE), EditPlan(php_entry_deletions=[("t", 9)]))
    assert info.value.code == "bad-edit"


def registration_calls(func):
    return [i for _, _, i in func.instructions() if isinstance(i, Call) and i.callee == "rb_define_global_function"]


def test_ruby_io_edit():
    m = load_fixture("ruby_io.sir")
    _, plan = compute_retained(m, {"Init_IO"}, AnalysisOptions("ruby"), ScriptWhitelist("ruby", frozenset({"open"})))
    out = apply_ruby_edits(m, plan)
    assert len(registration_calls(m.function("Init_IO"))) == 3
    calls = registration_calls(out.function("Init_IO"))
    assert len(calls) == 1 and calls[0].args[0] == Str("open")


def test_empty_plan_is_identity():
    m = load_fixture("ruby_io.sir")
    assert print_module(apply_ruby_edits(m, EditPlan())) == print_module(m)
    assert print_module(apply_php_edits(m, EditPlan())) == print_module(m)


@pytest.mark.parametrize("deletion", [("Init_IO", "entry", 9), ("Init_IO", "nope", 0), ("ghost", "entry", 0),
                                      ("Init_IO", "entry", 3)])
def test_stale_ruby_edit(deletion):
    with pytest.raises(SirError) as info:
        apply_ruby_edits(load_fixture("ruby_io.sir"), EditPlan(ruby_call_deletions=[deletion]))
    assert info.value.code == "bad-edit"


def test_non_register_call_is_never_removed():
    m = load_fixture("ruby_io.sir")
    plan = EditPlan(ruby_call_deletions=[("rb_f_open", "entry", 0)])
    with pytest.raises(SirError) as info:
        apply_ruby_edits(m, plan, register_functions={"rb_define_global_function"})
    assert info.value.code == "bad-edit"


def test_used_registration_result_is_rejected():
    m = parse_module("""module m
extern @rb_define_method
func @h() {
entry:
  ret 0
}
func @init() [export] {
entry:
  %r = call @rb_define_method(str "x", funcref @h, 0)
  out %r
  ret
}""")
    _, plan = compute_retained(m, {"init"}, AnalysisOptions("ruby"), ScriptWhitelist("ruby", frozenset()))
    with pytest.raises(SirError) as info:
        apply_ruby_edits(m, plan)
    assert info.value.code == "result-used"


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.booleans())
def test_table_name_invariants(seed, booby):
    rng = random.Random(seed)
    gen = random_module(seed, max_funcs=15, php=True)
    m = gen.module
    wl = frozenset(random_subset(rng, gen.script_names))
    seeds = random_subset(rng, m.function_names, 0.2)
    out = debloat(m, seeds, AnalysisOptions("php", booby_trap=booby), ScriptWhitelist("php", wl)).module
    before = Counter(entry_names(m))
    after = Counter(entry_names(out))
    if booby:
        assert after == before
    else:
        assert set(after) == set(before) & wl
    assert parse_module(print_module(out)) == out


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_ruby_completeness(seed):
    rng = random.Random(seed)
    gen = random_module(seed, max_funcs=15, php=False, ruby=True)
    wl = frozenset(random_subset(rng, gen.script_names))
    opts = AnalysisOptions("ruby", register_functions=RegisterFunctionSet(frozenset({"rb_define_method"})))
    out = debloat(gen.module, random_subset(rng, gen.module.function_names, 0.3), opts,
                  ScriptWhitelist("ruby", wl)).module
    for func in out.functions:
        for _, _, inst in func.instructions():
            if isinstance(inst, Call) and inst.callee == "rb_define_method":
                assert inst.args[0].value in wl
