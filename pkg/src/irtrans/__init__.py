"""IR-augmented unsupervised code translation toolkit."""

__version__ = "0.1.0"
