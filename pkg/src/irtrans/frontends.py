"""Compiler-frontend integration and corpus construction.

Extracts standalone functions from source files, compiles each one to
size-optimized IR through a configurable per-language command template,
normalizes the IR, and emits monolingual + parallel corpus shards as
JSON lines. Functions that fail to compile stay in the monolingual
shard; only records with normalized IR enter the parallel shard.
"""

from __future__ import annotations

import hashlib
import json
import re
import shlex
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import MalformedIR, MissingFrontend
from .irnorm import NormalizationConfig, normalize

IR_TAG_PREFIX = "ir-"


def dialect_of(language: str) -> str:
    """IR-dialect tag paired with a source language tag."""
    if language.startswith(IR_TAG_PREFIX):
        raise ValueError(f"{language} is already an IR dialect tag")
    return IR_TAG_PREFIX + language


def is_dialect(tag: str) -> bool:
    return tag.startswith(IR_TAG_PREFIX)


def source_of(tag: str) -> str:
    """Source language paired with an IR-dialect tag."""
    if not is_dialect(tag):
        raise ValueError(f"{tag} is not an IR dialect tag")
    return tag[len(IR_TAG_PREFIX):]


def tag_set(languages: list[str]) -> list[str]:
    """Closed tag set: every source language plus its IR dialect."""
    return list(languages) + [dialect_of(l) for l in languages]


@dataclass
class CompileStatus:
    kind: str  # ok | compile_error | timeout | skipped_too_long | pending
    message: str = ""

    OK = "ok"
    ERROR = "compile_error"
    TIMEOUT = "timeout"
    SKIPPED = "skipped_too_long"
    PENDING = "pending"


@dataclass
class LanguageFrontend:
    command: str  # template with {in} and {out} placeholders
    source_suffix: str
    prelude: str = ""  # file header prepended before compilation only
    fn_prefix: str = ""  # text prepended immediately before the function

    def __post_init__(self):
        if "{in}" not in self.command or "{out}" not in self.command:
            raise ValueError("frontend command template needs {in} and {out}")


@dataclass
class FrontendConfig:
    languages: dict[str, LanguageFrontend] = field(default_factory=dict)
    timeout: float = 30.0
    jobs: int = 1
    max_source_tokens: int | None = None

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


@dataclass
class FunctionRecord:
    id: str
    language: str
    source: str
    raw_ir: str | None = None
    normalized_ir: str | None = None
    compile_status: CompileStatus = field(
        default_factory=lambda: CompileStatus(CompileStatus.PENDING))
    provenance: dict | None = None

    def to_json(self) -> str:
        d = {
            "id": self.id,
            "language": self.language,
            "source": self.source,
            "raw_ir": self.raw_ir,
            "normalized_ir": self.normalized_ir,
            "compile_status": {"kind": self.compile_status.kind,
                               "message": self.compile_status.message},
            "provenance": self.provenance,
        }
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "FunctionRecord":
        d = json.loads(line)
        return cls(id=d["id"], language=d["language"], source=d["source"],
                   raw_ir=d.get("raw_ir"), normalized_ir=d.get("normalized_ir"),
                   compile_status=CompileStatus(**d["compile_status"]),
                   provenance=d.get("provenance"))


def record_id(language: str, source: str) -> str:
    h = hashlib.sha256(f"{language}\x00{source}".encode()).hexdigest()
    return h[:16]


# ---------------------------------------------------------------------------
# function extraction

_CPP_HEAD = re.compile(
    r'(?m)^[ \t]*((?:(?:static|inline|constexpr|unsigned|signed|const|long|short)\s+)*'
    r'[A-Za-z_]\w*(?:\s*<[^<>]*>)?(?:\s*[*&]|\s)+)'
    r'([A-Za-z_]\w*)\s*\(')
_CPP_KEYWORDS = {"if", "for", "while", "switch", "return", "else", "do", "new",
                 "sizeof", "case", "catch"}
_RUST_HEAD = re.compile(r'(?m)^[ \t]*(?:pub\s+)?fn\s+([A-Za-z_]\w*)\s*[(<]')


def _depth_map(text: str) -> list[int]:
    """Brace depth per character, ignoring strings, chars and comments."""
    depth = [0] * len(text)
    d = 0
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "/" and i + 1 < n and text[i + 1] == "/":
            j = text.find("\n", i)
            j = n if j == -1 else j
            for k in range(i, j):
                depth[k] = d
            i = j
            continue
        if c == "/" and i + 1 < n and text[i + 1] == "*":
            j = text.find("*/", i + 2)
            j = n if j == -1 else j + 2
            for k in range(i, min(j, n)):
                depth[k] = d
            i = j
            continue
        if c == '"':
            depth[i] = d
            j = i + 1
            while j < n and text[j] != '"':
                if text[j] == "\\":
                    j += 1
                depth[j] = d
                j += 1
            if j < n:
                depth[j] = d
            i = j + 1
            continue
        if c == "'":
            # char literal when closed within a few chars, else a lifetime
            j = i + 1
            if j < n and text[j] == "\\":
                j += 2
            if j < n and j + 1 < n and text[j + 1] == "'":
                for k in range(i, j + 2):
                    depth[k] = d
                i = j + 2
                continue
            depth[i] = d
            i += 1
            continue
        if c == "{":
            depth[i] = d
            d += 1
        elif c == "}":
            d = max(d - 1, 0)
            depth[i] = d
        else:
            depth[i] = d
        i += 1
    return depth


def _match_braces(text: str, depth: list[int], open_at: int) -> int | None:
    """Index one past the brace closing the one at open_at, or None."""
    d0 = depth[open_at]
    for j in range(open_at + 1, len(text)):
        if text[j] == "}" and depth[j] == d0:
            return j + 1
    return None


def _find_body(text: str, depth: list[int], search_from: int) -> tuple[int, int] | None:
    """Locate `{...}` for a signature whose '(' is at search_from - 1."""
    # skip the parameter list
    j = search_from
    paren = 1
    while j < len(text) and paren:
        if text[j] == "(":
            paren += 1
        elif text[j] == ")":
            paren -= 1
        j += 1
    if paren:
        return None
    m = re.match(r'\s*(?:const\s*)?(?:noexcept\s*)?(?:->\s*[^{;]+)?', text[j:])
    j += m.end()
    if j >= len(text) or text[j] != "{":
        return None
    end = _match_braces(text, depth, j)
    if end is None:
        return None
    return j, end


def extract_functions(file_text: str, language: str, path: str = "<mem>"
                      ) -> list[FunctionRecord]:
    """Top-level function definitions via signature detection + brace matching.

    Class/impl methods sit at brace depth > 0 and are excluded. Fragments
    whose braces do not balance are skipped.
    """
    if is_dialect(language):
        raise ValueError("extract_functions needs a source language tag")
    depth = _depth_map(file_text)
    records = []
    if language == "rust":
        heads = [(m.start(), m.end() - 1) for m in _RUST_HEAD.finditer(file_text)]
    else:
        heads = []
        for m in _CPP_HEAD.finditer(file_text):
            name = m.group(2)
            rtype = m.group(1).strip()
            if name in _CPP_KEYWORDS or rtype.split()[0] in _CPP_KEYWORDS:
                continue
            if rtype.endswith("::") or "::" in name:
                continue
            heads.append((m.start(), m.end() - 1))
    for start, paren_at in heads:
        if depth[start] != 0:
            continue
        body = _find_body(file_text, depth, paren_at + 1)
        if body is None:
            continue
        _body_open, end = body
        source = file_text[start:end]
        records.append(FunctionRecord(
            id=record_id(language, source),
            language=language,
            source=source,
            provenance={"path": path, "start": start, "end": end},
        ))
    return records


# ---------------------------------------------------------------------------
# compilation

def _approx_token_count(source: str) -> int:
    return len(re.findall(r'\w+|[^\w\s]', source))


def compile_to_ir(fn: FunctionRecord, cfg: FrontendConfig) -> FunctionRecord:
    """Run the configured frontend on one function; failures are captured."""
    frontend = cfg.languages.get(fn.language)
    if frontend is None:
        raise MissingFrontend(f"no frontend configured for {fn.language}")
    if (cfg.max_source_tokens is not None
            and _approx_token_count(fn.source) > cfg.max_source_tokens):
        return replace(fn, compile_status=CompileStatus(CompileStatus.SKIPPED))

    with tempfile.TemporaryDirectory(prefix="irtrans-fe-") as tmp:
        src_path = Path(tmp) / ("input" + frontend.source_suffix)
        out_path = Path(tmp) / "output.ll"
        src_path.write_text(frontend.prelude + frontend.fn_prefix + fn.source + "\n")
        argv = [a.replace("{in}", str(src_path)).replace("{out}", str(out_path))
                for a in shlex.split(frontend.command)]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True,
                                  timeout=cfg.timeout, cwd=tmp)
        except subprocess.TimeoutExpired:
            return replace(fn, compile_status=CompileStatus(CompileStatus.TIMEOUT))
        if proc.returncode != 0 or not out_path.exists():
            msg = (proc.stderr or proc.stdout).strip()[-2000:]
            return replace(fn, compile_status=CompileStatus(CompileStatus.ERROR, msg))
        return replace(fn, raw_ir=out_path.read_text(),
                       compile_status=CompileStatus(CompileStatus.OK))


def _process_record(fn: FunctionRecord, cfg: FrontendConfig,
                    norm: NormalizationConfig) -> FunctionRecord:
    fn = compile_to_ir(fn, cfg)
    if fn.compile_status.kind == CompileStatus.OK and fn.raw_ir:
        try:
            fn = replace(fn, normalized_ir=normalize(fn.raw_ir, norm))
        except MalformedIR as e:
            fn = replace(fn, normalized_ir=None,
                         compile_status=CompileStatus(CompileStatus.ERROR,
                                                      f"malformed ir: {e}"))
    return fn


def build_corpus(inputs: list[tuple[str, str]], languages: list[str],
                 cfg: FrontendConfig, norm: NormalizationConfig,
                 out_dir: str) -> dict:
    """Compile every extracted function and emit per-language shards.

    inputs: (path, language) pairs. Writes mono.<lang>.jsonl with every
    record and para.<lang>.jsonl with the compiling subset. Returns a
    per-language summary of counts.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    extracted: list[FunctionRecord] = []
    for path, language in sorted(inputs):
        if language not in languages:
            continue
        text = Path(path).read_text()
        extracted.extend(extract_functions(text, language, path=path))

    with ThreadPoolExecutor(max_workers=max(cfg.jobs, 1)) as pool:
        processed = list(pool.map(lambda r: _process_record(r, cfg, norm), extracted))

    summary: dict[str, dict[str, int]] = {}
    for language in languages:
        recs = [r for r in processed if r.language == language]
        mono_path = out / f"mono.{language}.jsonl"
        para_path = out / f"para.{language}.jsonl"
        para = [r for r in recs
                if r.compile_status.kind == CompileStatus.OK and r.normalized_ir]
        mono_path.write_text("".join(r.to_json() + "\n" for r in recs))
        para_path.write_text("".join(r.to_json() + "\n" for r in para))
        counts = {"monolingual": len(recs), "parallel": len(para)}
        for kind in (CompileStatus.OK, CompileStatus.ERROR, CompileStatus.TIMEOUT,
                     CompileStatus.SKIPPED):
            counts[kind] = sum(1 for r in recs if r.compile_status.kind == kind)
        summary[language] = counts
    return summary


def load_shard(path: str) -> list[FunctionRecord]:
    with open(path) as f:
        return [FunctionRecord.from_json(line) for line in f if line.strip()]


def default_frontends(jobs: int = 1, timeout: float = 30.0) -> FrontendConfig:
    """Frontend setup for the toolchains this repo is tested against."""
    return FrontendConfig(
        languages={
            "cpp": LanguageFrontend(
                command="clang++ -S -emit-llvm -Oz -o {out} {in}",
                source_suffix=".cpp",
            ),
            "c": LanguageFrontend(
                command="clang -S -emit-llvm -Oz -o {out} {in}",
                source_suffix=".c",
            ),
            "rust": LanguageFrontend(
                command="rustc --crate-type=cdylib --emit=llvm-ir -C opt-level=z"
                        " -o {out} {in}",
                source_suffix=".rs",
                prelude="#![allow(dead_code)]\n#![allow(unused)]\n",
                fn_prefix="#[no_mangle]\n",
            ),
        },
        jobs=jobs,
        timeout=timeout,
    )
