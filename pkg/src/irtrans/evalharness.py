"""Unit-test evaluation: computational accuracy, BLEU, error taxonomy.

Every problem directory holds one reference function and one test
scaffold per language; a candidate is correct when the scaffold,
with the candidate substituted for {{CANDIDATE}}, compiles and exits 0.
Runs execute in fresh temp dirs under wall-clock timeouts and a memory
cap.
"""

from __future__ import annotations

import math
import re
import resource
import subprocess
import tempfile
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInput, ToolchainMissing, UnknownToken
from .model import ModelState
from .tokenizer import Vocab

CANDIDATE_MARK = "{{CANDIDATE}}"


@dataclass
class LanguageToolchain:
    compile_command: str  # template with {src} and {bin}
    source_suffix: str
    error_code_regex: str
    assert_exit_codes: tuple[int, ...]


@dataclass
class ToolchainConfig:
    languages: dict[str, LanguageToolchain] = field(default_factory=dict)
    compile_timeout: float = 10.0
    run_timeout: float = 5.0
    memory_limit_mb: int = 512
    jobs: int = 1


def default_toolchains(jobs: int = 1) -> ToolchainConfig:
    return ToolchainConfig(
        languages={
            "cpp": LanguageToolchain(
                compile_command="clang++ -O1 -o {bin} {src}",
                source_suffix=".cpp",
                error_code_regex=r"error: ([^\n]+)",
                assert_exit_codes=(-6, 134),
            ),
            "c": LanguageToolchain(
                compile_command="clang -O1 -o {bin} {src}",
                source_suffix=".c",
                error_code_regex=r"error: ([^\n]+)",
                assert_exit_codes=(-6, 134),
            ),
            "rust": LanguageToolchain(
                compile_command="rustc -O --edition=2021 -o {bin} {src}",
                source_suffix=".rs",
                error_code_regex=r"error\[(E\d{4})\]",
                assert_exit_codes=(101,),
            ),
        },
        jobs=jobs,
    )


@dataclass
class EvalCase:
    problem_id: str
    language: str
    reference: str
    test_template: str
    run_timeout: float | None = None  # overrides the toolchain default


@dataclass
class CaseStatus:
    kind: str  # pass | test_failure | compile_error | runtime_error | timeout
    error_codes: list[str] = field(default_factory=list)

    PASS = "pass"
    TEST_FAILURE = "test_failure"
    COMPILE_ERROR = "compile_error"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"


def _slug(text: str, limit: int = 48) -> str:
    s = re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")
    return s[:limit] or "unknown"


def _limit_memory(mb: int):
    def setter():
        bytes_ = mb * 1024 * 1024
        resource.setrlimit(resource.RLIMIT_AS, (bytes_, bytes_))
    return setter


def run_case(candidate: str, case: EvalCase, toolchain: ToolchainConfig
             ) -> CaseStatus:
    """Compile and run one candidate against the case's test scaffold."""
    lang = toolchain.languages.get(case.language)
    if lang is None:
        raise ToolchainMissing(f"no toolchain for {case.language}")
    program = case.test_template.replace(CANDIDATE_MARK, candidate)
    with tempfile.TemporaryDirectory(prefix="irtrans-judge-") as tmp:
        src = Path(tmp) / ("prog" + lang.source_suffix)
        bin_ = Path(tmp) / "prog"
        src.write_text(program)
        argv = [a.replace("{src}", str(src)).replace("{bin}", str(bin_))
                for a in lang.compile_command.split()]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True,
                                  timeout=toolchain.compile_timeout, cwd=tmp)
        except subprocess.TimeoutExpired:
            return CaseStatus(CaseStatus.TIMEOUT, ["compile-timeout"])
        if proc.returncode != 0 or not bin_.exists():
            codes = [_slug(c) for c in
                     re.findall(lang.error_code_regex, proc.stderr)]
            return CaseStatus(CaseStatus.COMPILE_ERROR, codes or ["unknown"])
        try:
            run = subprocess.run(
                [str(bin_)], capture_output=True, text=True,
                timeout=case.run_timeout or toolchain.run_timeout, cwd=tmp,
                preexec_fn=_limit_memory(toolchain.memory_limit_mb))
        except subprocess.TimeoutExpired:
            return CaseStatus(CaseStatus.TIMEOUT)
        if run.returncode == 0:
            return CaseStatus(CaseStatus.PASS)
        rc = run.returncode
        if rc in lang.assert_exit_codes or (rc < 0 and 128 - rc in
                                            lang.assert_exit_codes):
            return CaseStatus(CaseStatus.TEST_FAILURE)
        return CaseStatus(CaseStatus.RUNTIME_ERROR)


def compute_ca(statuses_per_case: list[list[CaseStatus]], k: int = 1) -> float:
    """CA@k: fraction of cases where one of the first k candidates passes."""
    assert statuses_per_case and all(s for s in statuses_per_case)
    hits = sum(1 for statuses in statuses_per_case
               if any(s.kind == CaseStatus.PASS for s in statuses[:k]))
    return hits / len(statuses_per_case)


def compute_bleu(candidate: list, reference: list) -> float:
    """Standard 4-gram BLEU with brevity penalty, in [0, 100]."""
    if not candidate or not reference:
        raise EmptyInput("BLEU needs nonempty token sequences")
    log_precisions = []
    for n in range(1, 5):
        cand_ngrams = Counter(tuple(candidate[i:i + n])
                              for i in range(len(candidate) - n + 1))
        ref_ngrams = Counter(tuple(reference[i:i + n])
                             for i in range(len(reference) - n + 1))
        total = sum(cand_ngrams.values())
        if total == 0:
            return 0.0
        clipped = sum(min(c, ref_ngrams[g]) for g, c in cand_ngrams.items())
        if clipped == 0:
            return 0.0
        log_precisions.append(math.log(clipped / total))
    bp = 1.0 if len(candidate) >= len(reference) else math.exp(
        1.0 - len(reference) / len(candidate))
    return 100.0 * bp * math.exp(sum(log_precisions) / 4.0)


def embedding_report(token_text: str, state: ModelState, vocab: Vocab,
                     k: int = 10) -> list[tuple[str, float]]:
    """Top-k vocabulary neighbors of a token by embedding cosine similarity."""
    wanted = token_text.encode("utf-8")
    tid = next((i for i, b in enumerate(vocab.token_bytes) if b == wanted), None)
    if tid is None:
        raise UnknownToken(f"{token_text!r} is not a vocabulary token")
    emb = state.params["tok_emb"].data.astype(np.float64)
    norms = np.linalg.norm(emb, axis=1)
    norms[norms == 0] = 1.0
    sims = (emb @ emb[tid]) / (norms * norms[tid])
    order = sorted(range(len(sims)), key=lambda i: (-sims[i], i))[:k]
    return [(vocab.token_text(i), float(sims[i])) for i in order]


# ---------------------------------------------------------------------------
# evaluation sets

def load_eval_set(root: str) -> dict[str, dict[str, EvalCase]]:
    """problems/<id>/<lang>.src + <lang>.test -> cases by problem and language."""
    base = Path(root)
    problems_dir = base / "problems" if (base / "problems").is_dir() else base
    out: dict[str, dict[str, EvalCase]] = {}
    for prob in sorted(p for p in problems_dir.iterdir() if p.is_dir()):
        cases = {}
        for src_file in sorted(prob.glob("*.src")):
            lang = src_file.stem
            test_file = prob / f"{lang}.test"
            if not test_file.exists():
                continue
            cases[lang] = EvalCase(problem_id=prob.name, language=lang,
                                   reference=src_file.read_text(),
                                   test_template=test_file.read_text())
        if cases:
            out[prob.name] = cases
    return out


def validate_references(eval_set: dict, toolchain: ToolchainConfig) -> list[str]:
    """Every reference must pass its own tests; returns failing case names."""
    jobs = []
    for pid, cases in sorted(eval_set.items()):
        for lang, case in sorted(cases.items()):
            jobs.append((f"{pid}/{lang}", case))
    with ThreadPoolExecutor(max_workers=max(toolchain.jobs, 1)) as pool:
        statuses = list(pool.map(
            lambda j: run_case(j[1].reference, j[1], toolchain), jobs))
    return [name for (name, _), st in zip(jobs, statuses)
            if st.kind != CaseStatus.PASS]


@dataclass
class EvalResult:
    directions: dict[str, dict]

    def aggregate(self) -> dict:
        scored = {d: m for d, m in self.directions.items() if not m.get("skipped")}
        langs = sorted({l for d in scored for l in d.split("-")})
        agg = {}
        for lang in langs:
            from_ = [m["ca1"] for d, m in scored.items() if d.startswith(lang + "-")]
            to_ = [m["ca1"] for d, m in scored.items() if d.endswith("-" + lang)]
            if from_:
                agg[f"from {lang}"] = sum(from_) / len(from_)
            if to_:
                agg[f"to {lang}"] = sum(to_) / len(to_)
        if scored:
            agg["avg"] = sum(m["ca1"] for m in scored.values()) / len(scored)
        return agg

    def table(self) -> str:
        header = f"{'direction':<14} {'n':>4} {'CA@1':>7} {'CA@k':>7} {'BLEU':>7}"
        rows = [header, "-" * len(header)]
        for d, m in sorted(self.directions.items()):
            if m.get("skipped"):
                rows.append(f"{d:<14} {'-':>4} {'skipped':>7}")
                continue
            rows.append(f"{d:<14} {m['n']:>4} {m['ca1']:>7.3f} "
                        f"{m['cak']:>7.3f} {m['bleu']:>7.2f}")
        for name, value in self.aggregate().items():
            rows.append(f"{name:<14} {'':>4} {value:>7.3f}")
        return "\n".join(rows)


def evaluate(eval_set: dict, directions: list[tuple[str, str]],
             toolchain: ToolchainConfig, translate_fn, k: int = 1,
             vocab: Vocab | None = None) -> EvalResult:
    """Grade translate_fn over every direction.

    translate_fn(text, src, tgt) -> list of candidate texts (>= 1). A
    direction whose target toolchain is missing is reported as skipped,
    never dropped.
    """
    out: dict[str, dict] = {}
    for src_lang, tgt_lang in directions:
        name = f"{src_lang}-{tgt_lang}"
        if tgt_lang not in toolchain.languages:
            out[name] = {"skipped": True, "reason": f"no toolchain for {tgt_lang}"}
            continue
        pairs = [(pid, cases) for pid, cases in sorted(eval_set.items())
                 if src_lang in cases and tgt_lang in cases]
        if not pairs:
            out[name] = {"skipped": True, "reason": "no problems for direction"}
            continue

        per_case: list[list[CaseStatus]] = []
        bleus = []
        histogram: Counter[str] = Counter()
        status_counts: Counter[str] = Counter()
        for pid, cases in pairs:
            try:
                candidates = translate_fn(cases[src_lang].reference,
                                          src_lang, tgt_lang)
            except Exception as e:  # grading must be total per case
                candidates = [f"/* generation failed: {type(e).__name__} */"]
            candidates = candidates[:max(k, 1)]
            statuses = [run_case(c, cases[tgt_lang], toolchain)
                        for c in candidates]
            per_case.append(statuses)
            status_counts[statuses[0].kind] += 1
            for st in statuses:
                if st.kind == CaseStatus.COMPILE_ERROR:
                    histogram.update(st.error_codes)
            if vocab is not None:
                cand_tok = vocab.encode_ids(candidates[0]) or [0]
                ref_tok = vocab.encode_ids(cases[tgt_lang].reference)
                bleus.append(compute_bleu(cand_tok, ref_tok))
            else:
                bleus.append(0.0)
        out[name] = {
            "n": len(pairs),
            "ca1": compute_ca(per_case, 1),
            "cak": compute_ca(per_case, k),
            "k": k,
            "bleu": sum(bleus) / len(bleus),
            "error_histogram": dict(sorted(histogram.items())),
            "statuses": dict(sorted(status_counts.items())),
        }
    return EvalResult(directions=out)
