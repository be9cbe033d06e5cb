"""Command line driver: ``sirtailor {debloat,report,run,validate}``.

Exit codes: 0 success, 1 diagnostics with errors (or a VM fault), 2 usage
error, 3 booby-trap fault from ``run``.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import (
    ConfigError, ManualWhitelist, RegisterFunctionSet, build_initial_whitelist, load_categories, load_manifest,
    load_register_functions, load_script_whitelist, load_whitelist,
)
from .explorer import AnalysisOptions
from .ir import SirError, error
from .report import compute_metrics, render_report, sensitive_report
from .text import parse_module, print_module
from .transform import debloat, validate_closed
from .vm import DEFAULT_STEP_LIMIT, run

EXIT_OK, EXIT_ERRORS, EXIT_USAGE, EXIT_TRAP = 0, 1, 2, 3


class _Abort(Exception):
    def __init__(self, diagnostics):
        self.diagnostics = diagnostics


def _emit(diags):
    for d in diags:
        print(str(d), file=sys.stderr)


def _read(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise _Abort([error("io-error", f"{path}: {exc}")]) from None


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise _Abort([error("io-error", f"{path}: {exc}")]) from None


def _load_module(path):
    text = _read(path)
    try:
        return parse_module(text)
    except SirError as exc:
        raise _Abort([_with_file(d, path) for d in exc.diagnostics]) from None


def _with_file(diag, path):
    return replace(diag, message=f"{path}: {diag.message}")


def _sensitive_mode(script_mode):
    return script_mode if script_mode in ("php", "ruby") else "library"


def cmd_debloat(args, parser) -> int:
    if args.booby_trap and args.script_mode != "php":
        parser.error("--booby-trap requires --script-mode php")
    if args.script_mode and not args.script_whitelist:
        parser.error("--script-mode requires --script-whitelist")
    if args.script_whitelist and not args.script_mode:
        parser.error("--script-whitelist requires --script-mode")
    if args.register_functions and args.script_mode != "ruby":
        parser.error("--register-functions requires --script-mode ruby")

    module = _load_module(args.input)
    manifests = [load_manifest(_read(p)) for p in args.manifest]
    manual = load_whitelist(_read(args.whitelist)) if args.whitelist else ManualWhitelist()
    script_wl = load_script_whitelist(_read(args.script_whitelist), args.script_mode) if args.script_mode else None
    register = (load_register_functions(_read(args.register_functions))
                if args.register_functions else RegisterFunctionSet())
    cats = load_categories(_read(args.categories) if args.categories else None)

    seeds, warnings = build_initial_whitelist(module, manifests, manual)
    opts = AnalysisOptions(script_mode=args.script_mode or "none", booby_trap=args.booby_trap,
                           register_functions=register)
    result = debloat(module, seeds, opts, script_wl)
    _emit(warnings + list(result.diagnostics))

    _write(args.output, print_module(result.module))
    metrics = compute_metrics(module, result.module)
    if args.report:
        sensitive = sensitive_report(result.module, cats, _sensitive_mode(args.script_mode), register.names)
        app = "+".join(sorted({m.app_name for m in manifests}))
        _write(args.report, render_report(metrics, sensitive, "json", app=app))
    pct = "-" if metrics.funcs_pct is None else f"{metrics.funcs_pct:.1f}%"
    print(f"retained {metrics.funcs_after}/{metrics.funcs_before} functions ({pct})")
    return EXIT_OK


def cmd_report(args, parser) -> int:
    before = _load_module(args.before)
    after = _load_module(args.after)
    cats = load_categories(_read(args.categories) if args.categories else None)
    register = (load_register_functions(_read(args.register_functions))
                if args.register_functions else RegisterFunctionSet())
    metrics = compute_metrics(before, after)
    sensitive = sensitive_report(after, cats, _sensitive_mode(args.script_mode), register.names)
    text = render_report(metrics, sensitive, args.format, app=args.app)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive(text):
    try:
        value = int(text)
    except ValueError:
        value = 0
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def cmd_run(args, parser) -> int:
    module = _load_module(args.input)
    if module.function(args.entry) is None:
        raise _Abort([error("unknown-entry", f"no function @{args.entry} in {args.input}")])
    result = run(module, args.entry, args.args, args.step_limit)
    for value in result.outputs:
        print(value)
    if result.ok:
        return EXIT_OK
    print(f"fault: {result.fault_kind} {result.fault_detail}".rstrip())
    return EXIT_TRAP if result.fault_kind == "booby-trap" else EXIT_ERRORS


def cmd_validate(args, parser) -> int:
    module = _load_module(args.input)
    diags = validate_closed(module)
    if diags:
        raise _Abort(diags)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sirtailor", description="Tailor SIR modules to their applications.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("debloat", help="remove functions the applications cannot reach")
    p.add_argument("--input", required=True)
    p.add_argument("--manifest", action="append", default=[])
    p.add_argument("--whitelist")
    p.add_argument("--script-mode", choices=("php", "ruby"))
    p.add_argument("--script-whitelist")
    p.add_argument("--booby-trap", action="store_true")
    p.add_argument("--register-functions")
    p.add_argument("--output", required=True)
    p.add_argument("--report")
    p.add_argument("--categories")
    p.set_defaults(handler=cmd_debloat, subparser=p)

    p = sub.add_parser("report", help="compare an original and a tailored module")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--categories")
    p.add_argument("--script-mode", choices=("php", "ruby"))
    p.add_argument("--register-functions")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--app", default="")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_report, subparser=p)

    p = sub.add_parser("run", help="execute a function in the reference VM")
    p.add_argument("--input", required=True)
    p.add_argument("--entry", required=True)
    p.add_argument("--args", type=_int_list, default=[])
    p.add_argument("--step-limit", type=_positive, default=DEFAULT_STEP_LIMIT)
    p.set_defaults(handler=cmd_run, subparser=p)

    p = sub.add_parser("validate", help="check a module parses and is closed")
    p.add_argument("--input", required=True)
    p.set_defaults(handler=cmd_validate, subparser=p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args, args.subparser)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except _Abort as exc:
        _emit(exc.diagnostics)
        return EXIT_ERRORS
    except (SirError, ConfigError) as exc:
        _emit(exc.diagnostics)
        return EXIT_ERRORS


if __name__ == "__main__":
    sys.exit(main())
