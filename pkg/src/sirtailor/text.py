"""Parser and printer for the ``.sir`` textual module format.

Example::

    module shapes

    extern @write

    global @table [script_table=php] = [
      { str "echo", funcref @zif_echo, 1 }
    ]

    func @main(x) [export] {
    entry:
      %y = call @helper(%x, 1)
      ret %y
    }
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .ir import (
    BINOPS, EXPORT, PHP_TABLE, Aggregate, Array, BinOp, Block, Br, Call, CondBr, Const, Diagnostic,
    FuncRef, FunctionDef, GlobalDef, ICall, Instruction, Int, Load, Local, ModuleUnit, Null, Out,
    Phi, Ret, Select, SirError, SourceSpan, Store, Str, Trap, error, validate_module,
)

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>;[^\n]*)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<int>-?[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<punct>[@%{}\[\](),=:])
    """,
    re.VERBOSE,
)

ATTR_NAMES = {EXPORT: EXPORT, "script_table": PHP_TABLE}


class ParseError(SirError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str  # ident, int, string, punct, eof
    text: str
    span: SourceSpan


def _unescape(raw: str, span: SourceSpan) -> str:
    out = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch == "\\":
            nxt = raw[i + 1]
            if nxt not in '"\\':
                raise ParseError(error("syntax-error", f"unknown escape '\\{nxt}' in string", span=span))
            out.append(nxt)
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def tokenize(text: str) -> list[Token]:
    text = text.replace("\r\n", "\n")
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        span = SourceSpan(line, pos - line_start + 1)
        if m is None:
            raise ParseError(error("syntax-error", f"unexpected character {text[pos]!r}", span=span))
        kind = m.lastgroup
        chunk = m.group()
        if kind == "string":
            tokens.append(Token("string", _unescape(chunk[1:-1], span), span))
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, chunk, span))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", SourceSpan(line, pos - line_start + 1)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0
        # (symbol, block, index) -> span, used to place validation errors
        self.spans: dict[tuple, SourceSpan] = {}

    # -- token helpers

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset=1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def fail(self, message, tok=None):
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise ParseError(error("syntax-error", f"{message}, found {found}", span=tok.span))

    def advance(self) -> Token:
        tok = self.tok
        self.pos += 1
        return tok

    def at(self, text) -> bool:
        return self.tok.kind in ("punct", "ident") and self.tok.text == text

    def expect(self, text) -> Token:
        if not self.at(text):
            self.fail(f"expected '{text}'")
        return self.advance()

    def ident(self, what="identifier") -> str:
        if self.tok.kind != "ident":
            self.fail(f"expected {what}")
        return self.advance().text

    def symbol(self) -> str:
        self.expect("@")
        return self.ident("symbol name")

    def integer(self) -> int:
        tok = self.tok
        if tok.kind != "int":
            self.fail("expected integer")
        value = int(tok.text)
        if not INT64_MIN <= value <= INT64_MAX:
            self.fail("integer literal out of 64-bit range")
        self.advance()
        return value

    def string(self) -> str:
        if self.tok.kind != "string":
            self.fail("expected string literal")
        return self.advance().text

    # -- grammar

    def module(self) -> ModuleUnit:
        self.expect("module")
        name = self.ident("module name")
        externs, globals_, functions = [], [], []
        while self.tok.kind != "eof":
            start = self.tok
            if self.at("extern"):
                self.advance()
                extern = self.symbol()
                self.spans.setdefault((extern,), start.span)
                externs.append(extern)
            elif self.at("global"):
                globals_.append(self.global_(start))
            elif self.at("func"):
                functions.append(self.function(start))
            else:
                self.fail("expected 'extern', 'global' or 'func'")
        return ModuleUnit(name, tuple(globals_), tuple(functions), tuple(externs))

    def attrs(self) -> frozenset[str]:
        attrs = set()
        if not self.at("["):
            return frozenset()
        self.advance()
        while True:
            tok = self.tok
            name = self.ident("attribute")
            if name == "script_table":
                self.expect("=")
                if self.ident("table kind") != "php":
                    self.fail("only 'script_table=php' is supported", tok)
                attrs.add(PHP_TABLE)
            elif name == EXPORT:
                attrs.add(EXPORT)
            else:
                self.fail("unknown attribute", tok)
            if self.at("]"):
                self.advance()
                return frozenset(attrs)
            self.expect(",")

    def global_(self, start: Token) -> GlobalDef:
        self.expect("global")
        name = self.symbol()
        self.spans.setdefault((name,), start.span)
        attrs = self.attrs()
        self.expect("=")
        init = self.initializer(name)
        return GlobalDef(name, attrs, init)

    def initializer(self, owner, depth=0):
        tok = self.tok
        if tok.kind == "int":
            return Int(self.integer())
        if self.at("null"):
            self.advance()
            return Null()
        if self.at("funcref"):
            self.advance()
            return FuncRef(self.symbol())
        if self.at("str"):
            self.advance()
            return Str(self.string())
        if self.at("{"):
            self.advance()
            items = [self.initializer(owner, depth + 1)]
            while self.at(","):
                self.advance()
                items.append(self.initializer(owner, depth + 1))
            self.expect("}")
            return Aggregate(tuple(items))
        if self.at("["):
            self.advance()
            items = []
            if not self.at("]"):
                while True:
                    if depth == 0:
                        self.spans.setdefault((owner, None, len(items)), self.tok.span)
                    items.append(self.initializer(owner, depth + 1))
                    if not self.at(","):
                        break
                    self.advance()
            self.expect("]")
            return Array(tuple(items))
        self.fail("expected initializer")

    def function(self, start: Token) -> FunctionDef:
        self.expect("func")
        name = self.symbol()
        self.spans.setdefault((name,), start.span)
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.ident("parameter name"))
            while self.at(","):
                self.advance()
                params.append(self.ident("parameter name"))
        self.expect(")")
        attrs = self.attrs()
        self.expect("{")
        blocks = []
        while not self.at("}"):
            blocks.append(self.block(name))
        self.expect("}")
        return FunctionDef(name, tuple(params), attrs, tuple(blocks))

    def block(self, fname) -> Block:
        tok = self.tok
        if tok.kind != "ident" or self.peek().text != ":":
            self.fail("expected block label")
        label = self.advance().text
        self.advance()
        self.spans.setdefault((fname, label), tok.span)
        insts = []
        while not self.at("}") and not (self.tok.kind == "ident" and self.peek().text == ":"):
            if self.tok.kind == "eof":
                self.fail("expected '}'")
            self.spans.setdefault((fname, label, len(insts)), self.tok.span)
            insts.append(self.instruction())
        return Block(label, tuple(insts))

    def value(self):
        if self.at("%"):
            self.advance()
            return Local(self.ident("value name"))
        if self.tok.kind == "int":
            return Int(self.integer())
        if self.at("funcref"):
            self.advance()
            return FuncRef(self.symbol())
        if self.at("str"):
            self.advance()
            return Str(self.string())
        self.fail("expected value")

    def starts_value(self) -> bool:
        # '%x =' opens the next instruction rather than continuing this one
        if self.at("%"):
            return not (self.peek(2).text == "=" and self.peek(2).kind == "punct")
        return self.tok.kind == "int" or self.at("funcref") or self.at("str")

    def args(self):
        self.expect("(")
        args = []
        if not self.at(")"):
            args.append(self.value())
            while self.at(","):
                self.advance()
                args.append(self.value())
        self.expect(")")
        return tuple(args)

    def instruction(self) -> Instruction:
        result = None
        if self.at("%"):
            self.advance()
            result = self.ident("value name")
            self.expect("=")
        tok = self.tok
        if tok.kind != "ident":
            self.fail("expected instruction")
        op = self.advance().text
        if op == "call":
            callee = self.symbol()
            return Call(callee, self.args(), result=result)
        if op == "icall":
            if self.at("@"):
                self.fail("icall takes a value callee, not a direct symbol")
            callee = self.value()
            return ICall(callee, self.args(), result=result)
        if op == "load":
            return Load(self.symbol(), result=result)
        if op == "store":
            value = self.value()
            self.expect(",")
            dest = self.symbol() if self.at("@") else self.value()
            return Store(value, dest, result=result)
        if op == "select":
            cond = self.value()
            self.expect(",")
            a = self.value()
            self.expect(",")
            return Select(cond, a, self.value(), result=result)
        if op == "phi":
            incoming = [self.phi_pair()]
            while self.at(","):
                self.advance()
                incoming.append(self.phi_pair())
            return Phi(tuple(incoming), result=result)
        if op in BINOPS:
            lhs = self.value()
            self.expect(",")
            return BinOp(op, lhs, self.value(), result=result)
        if op == "const":
            value = self.value()
            if isinstance(value, Local):
                self.fail("const takes a literal", tok)
            return Const(value, result=result)
        if op == "ret":
            return Ret(self.value() if self.starts_value() else None, result=result)
        if op == "br":
            return Br(self.ident("label"), result=result)
        if op == "condbr":
            cond = self.value()
            self.expect(",")
            a = self.ident("label")
            self.expect(",")
            return CondBr(cond, a, self.ident("label"), result=result)
        if op == "out":
            return Out(self.value(), result=result)
        if op == "trap":
            return Trap(self.string(), result=result)
        self.fail("unknown instruction", tok)

    def phi_pair(self):
        self.expect("[")
        value = self.value()
        self.expect(",")
        label = self.ident("label")
        self.expect("]")
        return value, label


def _span_for(diag: Diagnostic, spans) -> SourceSpan | None:
    loc = diag.location
    if loc is None:
        return None
    for key in ((loc.symbol, loc.block, loc.index), (loc.symbol, loc.block), (loc.symbol,)):
        if key in spans:
            return spans[key]
    return None


def parse_module(text: str) -> ModuleUnit:
    """Parse ``.sir`` text into a validated :class:`ModuleUnit`.

    Raises :class:`ParseError` carrying every diagnostic (each with a
    :class:`SourceSpan`) on syntax or validation errors.
    """
    parser = _Parser(text)
    module = parser.module()
    diags = validate_module(module)
    errors = [d for d in diags if d.is_error]
    if errors:
        raise ParseError([
            Diagnostic(d.severity, d.code, d.message, d.location, _span_for(d, parser.spans))
            for d in errors
        ])
    return module


# -- printing ----------------------------------------------------------------


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_value(v) -> str:
    if isinstance(v, Local):
        return "%" + v.name
    if isinstance(v, Int):
        return str(v.value)
    if isinstance(v, FuncRef):
        return "funcref @" + v.name
    if isinstance(v, Str):
        return "str " + _quote(v.value)
    raise TypeError(f"not a value: {v!r}")


def format_init(init) -> str:
    if isinstance(init, Null):
        return "null"
    if isinstance(init, Aggregate):
        return "{ " + ", ".join(format_init(i) for i in init.items) + " }"
    if isinstance(init, Array):
        if not init.items:
            return "[]"
        return "[ " + ", ".join(format_init(i) for i in init.items) + " ]"
    return format_value(init)


def _format_attrs(attrs) -> str:
    return " [" + ", ".join(sorted(attrs)) + "]" if attrs else ""


def format_instruction(inst: Instruction) -> str:
    v = format_value
    if isinstance(inst, Call):
        body = f"call @{inst.callee}(" + ", ".join(map(v, inst.args)) + ")"
    elif isinstance(inst, ICall):
        body = f"icall {v(inst.callee)}(" + ", ".join(map(v, inst.args)) + ")"
    elif isinstance(inst, Load):
        body = f"load @{inst.glob}"
    elif isinstance(inst, Store):
        dest = "@" + inst.dest if isinstance(inst.dest, str) else v(inst.dest)
        body = f"store {v(inst.value)}, {dest}"
    elif isinstance(inst, Select):
        body = f"select {v(inst.cond)}, {v(inst.if_true)}, {v(inst.if_false)}"
    elif isinstance(inst, Phi):
        body = "phi " + ", ".join(f"[{v(val)}, {label}]" for val, label in inst.incoming)
    elif isinstance(inst, BinOp):
        body = f"{inst.op} {v(inst.lhs)}, {v(inst.rhs)}"
    elif isinstance(inst, Const):
        body = f"const {v(inst.value)}"
    elif isinstance(inst, Ret):
        body = "ret" if inst.value is None else f"ret {v(inst.value)}"
    elif isinstance(inst, Br):
        body = f"br {inst.label}"
    elif isinstance(inst, CondBr):
        body = f"condbr {v(inst.cond)}, {inst.if_true}, {inst.if_false}"
    elif isinstance(inst, Out):
        body = f"out {v(inst.value)}"
    elif isinstance(inst, Trap):
        body = f"trap {_quote(inst.message)}"
    else:
        raise TypeError(f"unknown instruction {inst!r}")
    return body if inst.result is None else f"%{inst.result} = {body}"


def _format_global(g: GlobalDef) -> str:
    head = f"global @{g.name}{_format_attrs(g.attrs)} = "
    if isinstance(g.init, Array) and g.init.items:
        rows = ",\n".join("  " + format_init(i) for i in g.init.items)
        return head + "[\n" + rows + "\n]"
    return head + format_init(g.init)


def _format_function(f: FunctionDef) -> str:
    lines = [f"func @{f.name}(" + ", ".join(f.params) + f"){_format_attrs(f.attrs)} {{"]
    for block in f.blocks:
        lines.append(f"{block.label}:")
        lines.extend("  " + format_instruction(i) for i in block.instructions)
    lines.append("}")
    return "\n".join(lines)


def print_module(m: ModuleUnit) -> str:
    """Render ``m`` in canonical form (externs, globals, functions; LF endings)."""
    errors = [d for d in validate_module(m) if d.is_error]
    if errors:
        raise SirError([error("invalid-module", f"cannot print invalid module: {errors[0]}", errors[0].location)])
    groups = [f"module {m.name}"]
    if m.externs:
        groups.append("\n".join(f"extern @{e}" for e in m.externs))
    groups.extend(_format_global(g) for g in m.globals)
    groups.extend(_format_function(f) for f in m.functions)
    return "\n\n".join(groups) + "\n"
