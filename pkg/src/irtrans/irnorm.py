"""Parse textual LLVM IR and normalize it into a uniform, minimal form.

The pipeline is line-structured on purpose: stripping, relabeling and
demangling never need a full IR grammar, and a line-level view stays
robust across frontend versions. `normalize` composes the passes
parse -> strip_noise -> demangle_symbols -> canonicalize -> serialize
and is deterministic and idempotent.
"""

from __future__ import annotations

import re
import shlex
import subprocess
from dataclasses import dataclass, field, replace

from . import demangle as _builtin_demangle
from .errors import DanglingLabel, MalformedIR

# attribute keywords dropped from define/declare lines (linkage/visibility
# noise, not instruction semantics)
SIGNATURE_STRIP_KEYWORDS = (
    "dso_local",
    "dso_preemptable",
    "local_unnamed_addr",
    "unnamed_addr",
    "noundef",
)

_HEADER_DIRECTIVES = ("target datalayout", "target triple", "source_filename")

_LABEL_RE = re.compile(r'^([A-Za-z$._][\w$.\-]*|\d+):(\s*(?:;.*)?)$')
_SYMBOL_RE = re.compile(r'@([A-Za-z$._][\w$.\-]*)')
_ATTR_REF_RE = re.compile(r' #\d+\b')
_METADATA_SUFFIX_RE = re.compile(r',?\s*![\w.$]+\s+(?:!\d+|!\{[^}]*\})')
_ALIGN_RE = re.compile(r'\balign \d+\b,?\s?')
_LOCAL_REF_RE = re.compile(r'%([\w$.\-]+)')


@dataclass
class NormalizationConfig:
    strip_comments: bool = True
    strip_debug: bool = True
    strip_attributes: bool = True
    canonicalize_blocks: bool = True
    canonicalize_temporaries: bool = True
    demangle: bool = True
    demangler_command: str | None = None


@dataclass
class IRFunction:
    symbol: str
    signature_line: str
    # (label, original label line, body lines); label None = unlabeled entry
    blocks: list[tuple[str | None, str | None, list[str]]]
    leading_lines: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = list(self.leading_lines)
        out.append(self.signature_line)
        for _label, label_line, body in self.blocks:
            if label_line is not None:
                out.append(label_line)
            out.extend(body)
        out.append("}")
        return out


@dataclass
class IRModule:
    header_lines: list[str]
    functions: list[IRFunction]
    footer_lines: list[str]
    demangle_failures: list[str] = field(default_factory=list)

    def serialize(self) -> str:
        lines = list(self.header_lines)
        for fn in self.functions:
            lines.extend(fn.lines())
        lines.extend(self.footer_lines)
        return "\n".join(lines)


def parse_ir(text: str) -> IRModule:
    """Partition IR text into header, functions (split into blocks), footer."""
    lines = text.split("\n")
    header: list[str] = []
    functions: list[IRFunction] = []
    pending: list[str] = []  # lines since the last function end
    footer: list[str] = []
    fn_lines: list[str] | None = None
    saw_function = False

    for line in lines:
        stripped = line.strip()
        if fn_lines is None:
            if stripped.startswith("define "):
                if not saw_function:
                    header = pending
                    pending = []
                fn_lines = [line]
                saw_function = True
            elif stripped == "}":
                raise MalformedIR("closing brace outside any function")
            else:
                pending.append(line)
        else:
            if stripped == "}":
                functions.append(_split_function(fn_lines, pending))
                pending = []
                fn_lines = None
            else:
                fn_lines.append(line)
    if fn_lines is not None:
        raise MalformedIR(f"no closing brace for: {fn_lines[0].strip()}")
    if saw_function:
        footer = pending
    else:
        header = pending
    return IRModule(header_lines=header, functions=functions, footer_lines=footer)


def _split_function(fn_lines: list[str], leading: list[str]) -> IRFunction:
    signature = fn_lines[0]
    m = re.search(r'@("[^"]*"|[A-Za-z$._][\w$.\-]*)', signature)
    symbol = m.group(1).strip('"') if m else ""
    blocks: list[tuple[str | None, str | None, list[str]]] = []
    label: str | None = None
    label_line: str | None = None
    body: list[str] = []
    for line in fn_lines[1:]:
        lm = _LABEL_RE.match(line.strip())
        if lm:
            if label is not None or body:
                blocks.append((label, label_line, body))
            label, label_line, body = lm.group(1), line, []
        else:
            body.append(line)
    blocks.append((label, label_line, body))
    return IRFunction(symbol=symbol, signature_line=signature, blocks=blocks,
                      leading_lines=leading)


def _strip_comment(line: str) -> str:
    out = []
    in_string = False
    for ch in line:
        if ch == '"':
            in_string = not in_string
        elif ch == ";" and not in_string:
            break
        out.append(ch)
    return "".join(out).rstrip()


def _outside_strings(line: str, transform) -> str:
    parts = re.split(r'("(?:[^"\\]|\\.)*")', line)
    return "".join(p if i % 2 else transform(p) for i, p in enumerate(parts))


def _clean_instruction(line: str, cfg: NormalizationConfig) -> str:
    if cfg.strip_comments:
        line = _strip_comment(line)
    if cfg.strip_debug:
        line = _outside_strings(line, lambda s: _METADATA_SUFFIX_RE.sub("", s))
    if cfg.strip_attributes:
        line = _outside_strings(line, lambda s: _ATTR_REF_RE.sub("", s))
    return line.rstrip()


def _clean_signature(line: str, cfg: NormalizationConfig) -> str:
    line = _clean_instruction(line, cfg)
    if cfg.strip_attributes:
        def drop(s: str) -> str:
            for kw in SIGNATURE_STRIP_KEYWORDS:
                s = re.sub(rf'\b{kw}\b ?', "", s)
            return _ALIGN_RE.sub("", s)
        line = _outside_strings(line, drop)
    return re.sub(r'\s+', " ", line).rstrip()


def _keep_toplevel(line: str, cfg: NormalizationConfig) -> bool:
    s = line.strip()
    if not s:
        return False
    if s.startswith(_HEADER_DIRECTIVES):
        return False
    if cfg.strip_attributes and s.startswith("attributes #"):
        return False
    if cfg.strip_debug and (s.startswith("!") or s.startswith("^")):
        return False
    return True


def strip_noise(m: IRModule, cfg: NormalizationConfig) -> IRModule:
    """Drop comments, debug metadata, attribute groups and module directives.

    Instruction text outside the removed spans is left untouched.
    """
    def clean_toplevel(lines: list[str]) -> list[str]:
        out = []
        for line in lines:
            if not _keep_toplevel(line, cfg):
                continue
            line = _clean_instruction(line, cfg)
            if line.strip():
                out.append(line)
        return out

    functions = []
    for fn in m.functions:
        blocks = []
        for label, label_line, body in fn.blocks:
            if label_line is not None:
                label_line = _clean_instruction(label_line, cfg).strip()
            cleaned = [_clean_instruction(l, cfg) for l in body]
            blocks.append((label, label_line, [l for l in cleaned if l.strip()]))
        functions.append(IRFunction(
            symbol=fn.symbol,
            signature_line=_clean_signature(fn.signature_line, cfg),
            blocks=blocks,
            leading_lines=clean_toplevel(fn.leading_lines),
        ))
    return IRModule(header_lines=clean_toplevel(m.header_lines),
                    functions=functions,
                    footer_lines=clean_toplevel(m.footer_lines),
                    demangle_failures=list(m.demangle_failures))


def _implicit_entry_slot(signature: str) -> str:
    # Unnamed values are numbered sequentially: parameters first, then the
    # unlabeled entry block takes the next slot.
    args = signature[signature.find("("):]
    unnamed = re.findall(r'%(\d+)\b', args)
    return str(len(unnamed))


def canonicalize(m: IRModule, cfg: NormalizationConfig) -> IRModule:
    """Rename block labels to bb0, bb1, ... in order of first appearance.

    When canonicalize_temporaries is set, unnamed `%N` value temporaries
    are renumbered sequentially per function as well. All references are
    rewritten consistently; an unlabeled entry block is given bb0.
    """
    functions = []
    for fn in m.functions:
        functions.append(_canonicalize_function(fn, cfg))
    return IRModule(header_lines=list(m.header_lines), functions=functions,
                    footer_lines=list(m.footer_lines),
                    demangle_failures=list(m.demangle_failures))


def _canonicalize_function(fn: IRFunction, cfg: NormalizationConfig) -> IRFunction:
    rename: dict[str, str] = {}
    defined: set[str] = set()
    if cfg.canonicalize_blocks:
        for k, (label, _line, _body) in enumerate(fn.blocks):
            old = label if label is not None else _implicit_entry_slot(fn.signature_line)
            rename[old] = f"bb{k}"
            defined.add(old)

        for _label, _line, body in fn.blocks:
            for line in body:
                for ref in re.findall(r'label %([\w$.\-]+)', line):
                    if ref not in defined:
                        raise DanglingLabel(
                            f"{fn.symbol}: branch target %{ref} is not a defined block")

    def sub_refs(line: str, table: dict[str, str]) -> str:
        return _outside_strings(
            line, lambda s: _LOCAL_REF_RE.sub(
                lambda mo: "%" + table.get(mo.group(1), mo.group(1)), s))

    signature = sub_refs(fn.signature_line, rename)
    blocks: list[tuple[str | None, str | None, list[str]]] = []
    for k, (label, label_line, body) in enumerate(fn.blocks):
        body = [sub_refs(l, rename) for l in body]
        if cfg.canonicalize_blocks:
            new_label = f"bb{k}"
            trailing = ""
            if label_line is not None:
                trailing = sub_refs(label_line, rename).split(":", 1)[1]
            blocks.append((new_label, f"{new_label}:{trailing}", body))
        else:
            blocks.append((label, label_line, body))

    fn = IRFunction(symbol=fn.symbol, signature_line=signature, blocks=blocks,
                    leading_lines=list(fn.leading_lines))

    if cfg.canonicalize_temporaries:
        temps: list[str] = []
        seen = set()
        args = fn.signature_line[fn.signature_line.find("("):]
        for tok in re.findall(r'%(\d+)\b', args):
            if tok not in seen:
                seen.add(tok)
                temps.append(tok)
        for _label, _line, body in fn.blocks:
            for line in body:
                mo = re.match(r'\s*%(\d+)\s*=', line)
                if mo and mo.group(1) not in seen:
                    seen.add(mo.group(1))
                    temps.append(mo.group(1))
        renumber = {old: str(i) for i, old in enumerate(temps)}
        fn = IRFunction(
            symbol=fn.symbol,
            signature_line=sub_refs(fn.signature_line, renumber),
            blocks=[(label, line if line is None else sub_refs(line, renumber),
                     [sub_refs(l, renumber) for l in body])
                    for label, line, body in fn.blocks],
            leading_lines=fn.leading_lines,
        )
    return fn


def _run_external_demangler(command: str, symbols: list[str]) -> dict[str, str | None]:
    """Resolve symbols through an external tool.

    A `{sym}` placeholder means one invocation per symbol; otherwise the
    command is run once with the symbols on stdin, one per line. A nonzero
    exit maps the affected symbols to None (failure, passed through).
    """
    results: dict[str, str | None] = {}
    if "{sym}" in command:
        for sym in symbols:
            argv = [a.replace("{sym}", sym) for a in shlex.split(command)]
            proc = subprocess.run(argv, capture_output=True, text=True)
            results[sym] = proc.stdout.strip() if proc.returncode == 0 else None
    else:
        proc = subprocess.run(shlex.split(command), input="\n".join(symbols) + "\n",
                              capture_output=True, text=True)
        if proc.returncode != 0:
            return {sym: None for sym in symbols}
        out = proc.stdout.splitlines()
        for sym, line in zip(symbols, out):
            results[sym] = line.strip()
    return results


def demangle_symbols(m: IRModule, cfg: NormalizationConfig) -> IRModule:
    """Replace mangled function symbols with their readable names.

    Symbols matching a mangling-scheme prefix that cannot be resolved are
    left unchanged and recorded in `demangle_failures`.
    """
    if not cfg.demangle:
        return m
    candidates: list[str] = []
    seen = set()

    def collect(lines: list[str]) -> None:
        for line in lines:
            for sym in _SYMBOL_RE.findall(line):
                if sym not in seen and sym.startswith(("_Z", "_R")):
                    seen.add(sym)
                    candidates.append(sym)

    collect(m.header_lines)
    for fn in m.functions:
        collect(fn.lines())
    collect(m.footer_lines)

    resolved: dict[str, str] = {}
    failures: list[str] = []
    external: dict[str, str | None] = {}
    if cfg.demangler_command and candidates:
        external = _run_external_demangler(cfg.demangler_command, candidates)
    for sym in candidates:
        if cfg.demangler_command:
            name = external.get(sym)
        else:
            name = _builtin_demangle.demangle(sym)
        if name and name != sym:
            resolved[sym] = name
        else:
            failures.append(sym)

    def rewrite(line: str) -> str:
        def repl(mo: re.Match) -> str:
            name = resolved.get(mo.group(1))
            if name is None:
                return mo.group(0)
            if re.fullmatch(r'[A-Za-z$._][\w$.\-]*', name):
                return "@" + name
            return f'@"{name}"'
        return _outside_strings(line, lambda s: _SYMBOL_RE.sub(repl, s))

    functions = []
    for fn in m.functions:
        functions.append(IRFunction(
            symbol=resolved.get(fn.symbol, fn.symbol),
            signature_line=rewrite(fn.signature_line),
            blocks=[(label, line if line is None else rewrite(line),
                     [rewrite(l) for l in body])
                    for label, line, body in fn.blocks],
            leading_lines=[rewrite(l) for l in fn.leading_lines],
        ))
    return IRModule(header_lines=[rewrite(l) for l in m.header_lines],
                    functions=functions,
                    footer_lines=[rewrite(l) for l in m.footer_lines],
                    demangle_failures=m.demangle_failures + failures)


def normalize(text: str, cfg: NormalizationConfig | None = None) -> str:
    """Full normalization: parse, strip, demangle, canonicalize, serialize."""
    if cfg is None:
        cfg = NormalizationConfig()
    m = parse_ir(text)
    m = strip_noise(m, cfg)
    m = demangle_symbols(m, cfg)
    m = canonicalize(m, cfg)
    out = m.serialize()
    if out and not out.endswith("\n"):
        out += "\n"
    return out
