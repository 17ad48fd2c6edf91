#!/usr/bin/env python3
"""Generate the desk evaluation set and the IR fixture corpus.

Outputs (committed to the repo):
  data/evalset/problems/<id>/{cpp.src,cpp.test,rust.src,rust.test}
  data/fixtures/ir/*.ll           raw frontend outputs for normalizer tests

Each problem implements the same integer function in C++ and Rust, with
assert-based test scaffolds whose expected values come from a Python
model of the semantics. Run from the repo root.
"""

from __future__ import annotations

import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))


def one_arg(name, cpp_body, rust_body, fn, inputs, ret="int", rret="i32"):
    return {
        "name": name, "arity": 1, "fn": fn, "inputs": inputs,
        "cpp": f"{ret} {name}(int x) {{ {cpp_body} }}",
        "rust": f"pub fn {name}(x: i32) -> {rret} {{ {rust_body} }}",
        "bool": ret == "bool",
    }


def two_arg(name, cpp_body, rust_body, fn, inputs, ret="int", rret="i32"):
    return {
        "name": name, "arity": 2, "fn": fn, "inputs": inputs,
        "cpp": f"{ret} {name}(int a, int b) {{ {cpp_body} }}",
        "rust": f"pub fn {name}(a: i32, b: i32) -> {rret} {{ {rust_body} }}",
        "bool": ret == "bool",
    }


def build_problems():
    probs = []
    in1 = (5, -4, 0, 3)
    in1_pos = (5, 0, 3, 12)
    in2 = ((7, 3), (3, 7), (4, 4), (-2, 5))

    for k in (2, 5, 9, 17, 14, 23):
        probs.append(one_arg(f"add_c{k}", f"return x + {k};", f"return x + {k};",
                             lambda x, k=k: x + k, in1))
    for k in (3, 8, 11, 20):
        probs.append(one_arg(f"sub_c{k}", f"return x - {k};", f"return x - {k};",
                             lambda x, k=k: x - k, in1))
    for k in (2, 4, 7, 3):
        probs.append(one_arg(f"mul_c{k}", f"return x * {k};", f"return x * {k};",
                             lambda x, k=k: x * k, in1))
    for k in (10, 16):
        probs.append(one_arg(f"rev_sub_c{k}", f"return {k} - x;",
                             f"return {k} - x;", lambda x, k=k: k - x, in1))
    for k in (6, 12, 21):
        probs.append(one_arg(f"xor_c{k}", f"return x ^ {k};", f"return x ^ {k};",
                             lambda x, k=k: x ^ k, in1_pos))
    for k in (5, 10):
        probs.append(one_arg(f"or_c{k}", f"return x | {k};", f"return x | {k};",
                             lambda x, k=k: x | k, in1_pos))
    for k in (6, 14):
        probs.append(one_arg(f"and_c{k}", f"return x & {k};", f"return x & {k};",
                             lambda x, k=k: x & k, in1_pos))
    for k in (1, 2, 3):
        probs.append(one_arg(f"shl_c{k}", f"return x << {k};", f"return x << {k};",
                             lambda x, k=k: x << k, in1_pos))
    for k in (1, 2):
        probs.append(one_arg(f"shr_c{k}", f"return x >> {k};", f"return x >> {k};",
                             lambda x, k=k: x >> k, in1_pos))
    for k in (3, 6, 10):
        probs.append(one_arg(
            f"clamp_hi_c{k}",
            f"if (x > {k}) {{ return {k}; }} return x;",
            f"if x > {k} {{ return {k}; }} return x;",
            lambda x, k=k: min(x, k), in1))
    for k in (1, 4, 9, 6, 12):
        probs.append(one_arg(
            f"lin_c{k}", f"return 2 * x + {k};", f"return 2 * x + {k};",
            lambda x, k=k: 2 * x + k, in1))
    probs.append(one_arg("abs_val", "if (x < 0) { return -x; } return x;",
                         "if x < 0 { return -x; } return x;", abs, in1))
    probs.append(one_arg("square_val", "return x * x;", "return x * x;",
                         lambda x: x * x, in1))
    probs.append(one_arg("cube_val", "return x * x * x;", "return x * x * x;",
                         lambda x: x ** 3, in1))
    probs.append(one_arg(
        "sign_val",
        "if (x > 0) { return 1; } if (x < 0) { return -1; } return 0;",
        "if x > 0 { return 1; } if x < 0 { return -1; } return 0;",
        lambda x: (x > 0) - (x < 0), in1))
    probs.append(one_arg("succ_val", "return x + 1;", "return x + 1;",
                         lambda x: x + 1, in1))
    probs.append(one_arg("pred_val", "return x - 1;", "return x - 1;",
                         lambda x: x - 1, in1))
    probs.append(one_arg("twice_val", "return x + x;", "return x + x;",
                         lambda x: x + x, in1))
    probs.append(one_arg("halve_val", "return x / 2;", "return x / 2;",
                         lambda x: int(x / 2), in1))
    probs.append(one_arg("not_bits", "return ~x;", "return !x;",
                         lambda x: ~x, in1))

    probs.append(two_arg("add_two", "return a + b;", "return a + b;",
                         lambda a, b: a + b, in2))
    probs.append(two_arg("sub_two", "return a - b;", "return a - b;",
                         lambda a, b: a - b, in2))
    probs.append(two_arg("mul_two", "return a * b;", "return a * b;",
                         lambda a, b: a * b, in2))
    probs.append(two_arg("xor_two", "return a ^ b;", "return a ^ b;",
                         lambda a, b: a ^ b, in2))
    probs.append(two_arg("and_two", "return a & b;", "return a & b;",
                         lambda a, b: a & b, in2))
    probs.append(two_arg("or_two", "return a | b;", "return a | b;",
                         lambda a, b: a | b, in2))
    probs.append(two_arg("max_two",
                         "if (a > b) { return a; } return b;",
                         "if a > b { return a; } return b;",
                         max, in2))
    probs.append(two_arg("min_two",
                         "if (a < b) { return a; } return b;",
                         "if a < b { return a; } return b;",
                         min, in2))
    probs.append(two_arg("diff_abs",
                         "if (a > b) { return a - b; } return b - a;",
                         "if a > b { return a - b; } return b - a;",
                         lambda a, b: abs(a - b), in2))
    probs.append(two_arg("sum_sq", "return a * a + b * b;",
                         "return a * a + b * b;",
                         lambda a, b: a * a + b * b, in2))
    probs.append(two_arg("mix_lin", "return 3 * a - b;", "return 3 * a - b;",
                         lambda a, b: 3 * a - b, in2))
    probs.append(two_arg("mean_two", "return (a + b) / 2;",
                         "return (a + b) / 2;",
                         lambda a, b: int((a + b) / 2), in2))
    for k in (2, 7):
        probs.append(two_arg(
            f"pick_gt_c{k}",
            f"if (a > {k}) {{ return a; }} return b;",
            f"if a > {k} {{ return a; }} return b;",
            lambda a, b, k=k: a if a > k else b, in2))

    probs.append(one_arg("is_even", "return x % 2 == 0;", "return x % 2 == 0;",
                         lambda x: x % 2 == 0, in1, ret="bool", rret="bool"))
    probs.append(one_arg("is_pos", "return x > 0;", "return x > 0;",
                         lambda x: x > 0, in1, ret="bool", rret="bool"))
    probs.append(one_arg("is_zero", "return x == 0;", "return x == 0;",
                         lambda x: x == 0, in1, ret="bool", rret="bool"))
    probs.append(two_arg("gt_two", "return a > b;", "return a > b;",
                         lambda a, b: a > b, in2, ret="bool", rret="bool"))
    probs.append(two_arg("same_sign", "return (a > 0) == (b > 0);",
                         "return (a > 0) == (b > 0);",
                         lambda a, b: (a > 0) == (b > 0), in2,
                         ret="bool", rret="bool"))

    names = [p["name"] for p in probs]
    assert len(names) == len(set(names))
    assert len(probs) >= 64, len(probs)
    return probs[:64]


def fmt_value(v, lang):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def write_problem(root: Path, p: dict) -> None:
    d = root / p["name"]
    d.mkdir(parents=True, exist_ok=True)
    (d / "cpp.src").write_text(p["cpp"] + "\n")
    (d / "rust.src").write_text(p["rust"] + "\n")

    asserts_cpp, asserts_rust = [], []
    for args in p["inputs"]:
        tup = args if isinstance(args, tuple) else (args,)
        expect = p["fn"](*tup)
        arglist = ", ".join(str(a) for a in tup)
        asserts_cpp.append(
            f"    assert({p['name']}({arglist}) == {fmt_value(expect, 'cpp')});")
        asserts_rust.append(
            f"    assert!({p['name']}({arglist}) == {fmt_value(expect, 'rust')});")

    (d / "cpp.test").write_text(
        "#include <cassert>\n\n{{CANDIDATE}}\n\nint main() {\n"
        + "\n".join(asserts_cpp) + "\n    return 0;\n}\n")
    (d / "rust.test").write_text(
        "#![allow(unused)]\n\n{{CANDIDATE}}\n\nfn main() {\n"
        + "\n".join(asserts_rust) + "\n}\n")


FIXTURE_EXTRAS_CPP = [
    "int loop_sum(int n) {\n  int s = 0;\n  for (int i = 1; i <= n; ++i) s += i;\n  return s;\n}",
    "int gcd_pair(int a, int b) {\n  while (b != 0) {\n    int t = b;\n    b = a % b;\n    a = t;\n  }\n  return a;\n}",
    "int fib_rec(int n) {\n  if (n < 2) return n;\n  return fib_rec(n - 1) + fib_rec(n - 2);\n}",
    "double scale_f(double x) { return x * 2.5 + 1.0; }",
    "float mix_f(float a, float b) { return a * 0.5f + b * 0.5f; }",
    "int deref_add(const int *p, int n) {\n  int s = 0;\n  for (int i = 0; i < n; ++i) s += p[i];\n  return s;\n}",
    "long pow2_count(long v) {\n  long c = 0;\n  while (v > 1) { v >>= 1; ++c; }\n  return c;\n}",
    "int collatz_steps(int n) {\n  int c = 0;\n  while (n != 1) {\n    if (n % 2 == 0) n /= 2; else n = 3 * n + 1;\n    ++c;\n  }\n  return c;\n}",
    "int select3(int a, int b, int c) {\n  return a > b ? (a > c ? a : c) : (b > c ? b : c);\n}",
    "unsigned popcount_ish(unsigned v) {\n  unsigned c = 0;\n  while (v) { c += v & 1u; v >>= 1; }\n  return c;\n}",
    "int str_len(const char *s) {\n  int n = 0;\n  while (s[n] != 0) ++n;\n  return n;\n}",
    "int table_pick(int i) {\n  static const int t[4] = {3, 1, 4, 1};\n  return t[i & 3];\n}",
    "bool any_neg(const int *p, int n) {\n  for (int i = 0; i < n; ++i) if (p[i] < 0) return true;\n  return false;\n}",
    "int div_round_up(int a, int b) { return (a + b - 1) / b; }",
    "int switch_map(int x) {\n  switch (x) {\n    case 0: return 10;\n    case 1: return 20;\n    case 2: return 30;\n    default: return -1;\n  }\n}",
    "long mul_shift(long n) { return (n << 3) - n; }",
]

FIXTURE_EXTRAS_RUST = [
    "pub fn loop_sum(n: i32) -> i32 {\n    let mut s = 0;\n    let mut i = 1;\n    while i <= n { s += i; i += 1; }\n    s\n}",
    "pub fn gcd_pair(a: i32, b: i32) -> i32 {\n    let mut a = a;\n    let mut b = b;\n    while b != 0 {\n        let t = b;\n        b = a % b;\n        a = t;\n    }\n    a\n}",
    "pub fn fib_iter(n: i32) -> i64 {\n    let mut a: i64 = 0;\n    let mut b: i64 = 1;\n    let mut i = 0;\n    while i < n { let t = a + b; a = b; b = t; i += 1; }\n    a\n}",
    "pub fn scale_f(x: f64) -> f64 { x * 2.5 + 1.0 }",
    "pub fn select3(a: i32, b: i32, c: i32) -> i32 {\n    if a > b { if a > c { a } else { c } } else if b > c { b } else { c }\n}",
    "pub fn count_down(n: i32) -> i32 {\n    let mut v = n;\n    let mut c = 0;\n    while v > 1 { v >>= 1; c += 1; }\n    c\n}",
    "pub fn wrap_add(a: i32, b: i32) -> i32 { a.wrapping_add(b) }",
    "pub fn rem_map(x: i32) -> i32 {\n    match x % 3 {\n        0 => 10,\n        1 => 20,\n        _ => 30,\n    }\n}",
]


def gen_fixtures(out_dir: Path, problems) -> int:
    from irtrans.frontends import (FunctionRecord, compile_to_ir,
                                   default_frontends, record_id)

    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = default_frontends(jobs=8)
    jobs = []
    for p in problems:
        jobs.append(("cpp", p["name"], p["cpp"]))
        jobs.append(("rust", p["name"], p["rust"]))
    for i, src in enumerate(FIXTURE_EXTRAS_CPP):
        jobs.append(("cpp", f"extra{i:02d}", src))
        jobs.append(("c", f"extra{i:02d}", src.replace("bool", "int")
                     .replace("true", "1").replace("false", "0")))
    for i, src in enumerate(FIXTURE_EXTRAS_RUST):
        jobs.append(("rust", f"rextra{i:02d}", src))
    # parameterized variants with loops and branches (multi-block IR)
    for k in range(2, 14):
        jobs.append(("cpp", f"steps{k}", (
            f"int steps_to_c{k}(int n) {{\n"
            f"  int c = 0;\n"
            f"  while (n > {k}) {{ n -= {k}; ++c; }}\n"
            f"  return c;\n}}")))
        jobs.append(("rust", f"steps{k}", (
            f"pub fn steps_to_c{k}(n: i32) -> i32 {{\n"
            f"    let mut n = n;\n    let mut c = 0;\n"
            f"    while n > {k} {{ n -= {k}; c += 1; }}\n"
            f"    c\n}}")))
        jobs.append(("cpp", f"fold{k}", (
            f"int fold_c{k}(int a, int b) {{\n"
            f"  if (a % {k} == 0) {{ return a + b; }}\n"
            f"  if (b % {k} == 0) {{ return a - b; }}\n"
            f"  return a * b;\n}}")))

    from concurrent.futures import ThreadPoolExecutor

    def work(job):
        lang, name, src = job
        rec = FunctionRecord(id=record_id(lang, src), language=lang, source=src)
        rec = compile_to_ir(rec, cfg)
        if rec.compile_status.kind != "ok":
            print(f"  fixture {lang}/{name}: {rec.compile_status.kind} "
                  f"{rec.compile_status.message[:120]}", file=sys.stderr)
            return None
        return (f"{lang}_{name}.ll", rec.raw_ir)

    with ThreadPoolExecutor(max_workers=8) as pool:
        results = [r for r in pool.map(work, jobs) if r]
    for fname, text in results:
        (out_dir / fname).write_text(text)
    return len(results)


def main():
    data = ROOT / "data"
    problems = build_problems()
    evalset = data / "evalset" / "problems"
    if evalset.exists():
        shutil.rmtree(evalset)
    for p in problems:
        write_problem(evalset, p)
    print(f"wrote {len(problems)} problems to {evalset}")

    fixtures = data / "fixtures" / "ir"
    if fixtures.exists():
        shutil.rmtree(fixtures)
    n = gen_fixtures(fixtures, problems)
    print(f"wrote {n} IR fixtures to {fixtures}")
    if n < 200:
        print("WARNING: fewer than 200 fixtures", file=sys.stderr)


if __name__ == "__main__":
    main()
