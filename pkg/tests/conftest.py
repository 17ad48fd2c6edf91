import glob
import shutil
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parent.parent
DATA = REPO / "data"
FIXTURE_IR = sorted(glob.glob(str(DATA / "fixtures" / "ir" / "*.ll")))


def has_toolchain(*names) -> bool:
    return all(shutil.which(n) for n in names)


requires_cpp = pytest.mark.skipif(not has_toolchain("clang++"),
                                  reason="clang++ not available")
requires_rust = pytest.mark.skipif(not has_toolchain("rustc"),
                                   reason="rustc not available")


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """Corpus shards built from the shipped eval-set sources (needs both
    frontends)."""
    if not has_toolchain("clang++", "rustc"):
        pytest.skip("toolchain missing")
    from irtrans import frontends as fe
    from irtrans.irnorm import NormalizationConfig

    out = tmp_path_factory.mktemp("corpus")
    inputs = []
    for lang in ("cpp", "rust"):
        for f in sorted(glob.glob(str(DATA / "evalset" / "problems" / "*" /
                                      f"{lang}.src"))):
            inputs.append((f, lang))
    cfg = fe.default_frontends(jobs=8)
    fe.build_corpus(inputs, ["cpp", "rust"], cfg, NormalizationConfig(), str(out))
    return out


@pytest.fixture(scope="session")
def toy_vocab(toy_corpus):
    from irtrans import frontends as fe
    from irtrans.tokenizer import train_vocab

    texts = []
    for shard in sorted(glob.glob(str(toy_corpus / "para.*.jsonl"))):
        for rec in fe.load_shard(shard):
            texts.append(rec.source)
            texts.append(rec.normalized_ir)
    return train_vocab(texts, 512)


@pytest.fixture(scope="session")
def toy_shards(toy_corpus):
    from irtrans import frontends as fe

    mono = {l: fe.load_shard(str(toy_corpus / f"mono.{l}.jsonl"))
            for l in ("cpp", "rust")}
    para = {l: fe.load_shard(str(toy_corpus / f"para.{l}.jsonl"))
            for l in ("cpp", "rust")}
    return mono, para


@pytest.fixture()
def tiny_state():
    """dim-16 float64 model over two toy languages, for exact-math tests."""
    from irtrans.frontends import tag_set
    from irtrans.model import ModelConfig, ModelState

    cfg = ModelConfig(vocab_size=32, tags=tag_set(["a", "b"]), enc_layers=1,
                      dec_layers=1, heads=2, dim=16, ff_dim=32, max_len=48,
                      seed=7, dtype="float64")
    return ModelState.init(cfg)
