from setuptools import setup, Extension

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [Extension("irtrans._bpe_fast", ["src/irtrans/_bpe_fast.pyx"])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # The package works without the compiled core (pure-python fallback).
    extensions = []

setup(ext_modules=extensions)
