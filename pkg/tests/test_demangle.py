import shutil
import subprocess

import pytest

from irtrans.demangle import demangle

CASES = [
    "_Z3maxii",
    "_Z6sum_toi",
    "_Z1fv",
    "_Z3fooPi",
    "_Z3fooPKc",
    "_Z3barRi",
    "_Z4quuxllx",
    "_Z5mixedifdb",
    "_Z3dupPiS_",
    "_Z4join PKcS0_".replace(" ", ""),
    "_ZL6staticii",
    "_Z5shiftmj",
]


def test_plain_function_with_ints():
    assert demangle("_Z3maxii") == "max(int, int)"


def test_no_params_is_void():
    assert demangle("_Z1fv") == "f()"


def test_unmangled_passthrough():
    assert demangle("max") is None
    assert demangle("add_7") is None


def test_invalid_mangled_returns_none():
    assert demangle("_Zzz_not_valid") is None
    assert demangle("_Z") is None
    assert demangle("_Z99") is None


def test_nested_names_out_of_scope():
    # nested/methods fall back to the external demangler
    assert demangle("_ZN4core3fmt9Arguments6new_v117h1x2yE") is None


@pytest.mark.skipif(not shutil.which("c++filt"), reason="c++filt not available")
@pytest.mark.parametrize("symbol", CASES)
def test_matches_external_demangler(symbol):
    oracle = subprocess.run(["c++filt", symbol], capture_output=True,
                            text=True).stdout.strip()
    ours = demangle(symbol)
    assert ours == oracle, f"{symbol}: {ours!r} != oracle {oracle!r}"
