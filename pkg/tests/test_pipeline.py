import dataclasses
import logging

import numpy as np
import pytest

from vatts import pipeline
from vatts.corpus.manifest import load_manifest
from vatts.corpus.synth import SyntheticSpec


def test_parallel_map_keeps_order(monkeypatch):
    monkeypatch.setenv("VATTS_THREADS", "3")
    assert pipeline.worker_count() == 3
    assert pipeline.parallel_map(lambda x: x * x, range(20)) == [x * x for x in range(20)]


def test_bad_thread_count(monkeypatch):
    monkeypatch.setenv("VATTS_THREADS", "many")
    with pytest.raises(ValueError, match="VATTS_THREADS"):
        pipeline.worker_count()


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    pipeline.write_synthetic_corpus(SyntheticSpec(n_utterances=3, seed=9), d, 1)
    return d


def test_extraction_is_thread_count_independent(corpus, monkeypatch):
    records = pipeline.checked_records(corpus / "manifest.jsonl")

    def run():
        return [pipeline.extract_record(pipeline.load_record(r)).to_dict() for r in records]

    monkeypatch.setenv("VATTS_THREADS", "1")
    one = pipeline.parallel_map(lambda r: pipeline.extract_record(pipeline.load_record(r)).to_dict(), records)
    monkeypatch.setenv("VATTS_THREADS", "4")
    many = pipeline.parallel_map(lambda r: pipeline.extract_record(pipeline.load_record(r)).to_dict(), records)
    assert one == many == run()


def test_missing_reference_falls_back(corpus, caplog):
    rec = dataclasses.replace(load_manifest(corpus / "manifest.jsonl")[0], ref_wav=None, ref_align_tsv=None)
    with caplog.at_level(logging.WARNING):
        data = pipeline.load_record(rec)
    assert "no ref_wav" in caplog.text
    assert np.array_equal(data.reference.samples, data.audio.samples)


def test_vocab_and_examples(corpus):
    records = pipeline.checked_records(corpus / "manifest.jsonl")
    loaded = [pipeline.load_record(r) for r in records]
    ex = [pipeline.extract_record(d) for d in loaded]
    vocab = pipeline.build_vocab(ex)
    assert vocab == sorted(set(vocab))
    e = pipeline.to_example(ex[0], loaded[0].stream, vocab)
    assert e.targets.shape == (len(ex[0].phonemes), 3) and e.speech.shape[1] == 80
