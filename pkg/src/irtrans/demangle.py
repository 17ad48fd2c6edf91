"""Built-in decoder for Itanium-mangled plain function names.

Covers free functions with primitive, pointer and reference parameter
types (the shapes compiler frontends emit for standalone functions).
Nested names, templates and operators are out of scope here: callers
fall back to an external demangler command or pass the symbol through.
Output formatting follows the GNU demangler (``max(int, int)``,
``foo(char const*)``) so an external oracle and the built-in decoder
agree where both apply.
"""

from __future__ import annotations

_BUILTIN_TYPES = {
    "v": "void",
    "w": "wchar_t",
    "b": "bool",
    "c": "char",
    "a": "signed char",
    "h": "unsigned char",
    "s": "short",
    "t": "unsigned short",
    "i": "int",
    "j": "unsigned int",
    "l": "long",
    "m": "unsigned long",
    "x": "long long",
    "y": "unsigned long long",
    "n": "__int128",
    "o": "unsigned __int128",
    "f": "float",
    "d": "double",
    "e": "long double",
    "g": "__float128",
    "z": "...",
}

# suffix appended when unwinding each qualifier/indirection
_QUALIFIERS = {"P": "*", "R": "&", "O": "&&", "K": " const", "V": " volatile"}


class _Parser:
    def __init__(self, s: str):
        self.s = s
        self.i = 0
        self.subs: list[str] = []

    def eof(self) -> bool:
        return self.i >= len(self.s)

    def peek(self) -> str:
        return self.s[self.i] if self.i < len(self.s) else ""

    def parse_source_name(self) -> str | None:
        start = self.i
        while not self.eof() and self.s[self.i].isdigit():
            self.i += 1
        if self.i == start:
            return None
        n = int(self.s[start : self.i])
        if n <= 0 or self.i + n > len(self.s):
            return None
        name = self.s[self.i : self.i + n]
        self.i += n
        return name

    def parse_substitution(self) -> str | None:
        assert self.peek() == "S"
        self.i += 1
        if self.peek() == "_":
            self.i += 1
            idx = 0
        else:
            start = self.i
            while not self.eof() and self.s[self.i] != "_":
                ch = self.s[self.i]
                if not (ch.isdigit() or ch.isupper()):
                    return None
                self.i += 1
            if self.eof():
                return None
            seq = self.s[start : self.i]
            self.i += 1  # consume '_'
            idx = int(seq, 36) + 1 if seq else 0
        if idx >= len(self.subs):
            return None
        return self.subs[idx]

    def parse_type(self) -> str | None:
        ch = self.peek()
        if ch in _QUALIFIERS:
            self.i += 1
            inner = self.parse_type()
            if inner is None:
                return None
            out = inner + _QUALIFIERS[ch]
            self.subs.append(out)
            return out
        if ch == "S":
            return self.parse_substitution()
        if ch in _BUILTIN_TYPES:
            self.i += 1
            return _BUILTIN_TYPES[ch]
        return None


def demangle(symbol: str) -> str | None:
    """Decode an Itanium-mangled plain function symbol.

    Returns the readable ``name(type, ...)`` form, or None when the
    symbol is not mangled or uses features outside the supported subset.
    """
    if not symbol.startswith("_Z"):
        return None
    p = _Parser(symbol[2:])
    if p.peek() == "L":  # internal-linkage marker
        p.i += 1
    name = p.parse_source_name()
    if name is None:
        return None
    if p.eof():
        return None  # data symbol, not a function
    params: list[str] = []
    while not p.eof():
        t = p.parse_type()
        if t is None:
            return None
        params.append(t)
    if params == ["void"]:
        params = []
    if "void" in params:
        return None  # void is only valid as the sole parameter
    return f"{name}({', '.join(params)})"
