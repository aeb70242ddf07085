"""Text pipeline tests: TSV parsing, vocabulary, batching, masking soundness."""

import numpy as np
import pytest

from mixkit.errors import DataError, ParameterError
from mixkit.model import Model, ModelConfig
from mixkit.mixing import TokenMixingSpec
from mixkit.textdata import (
    PAD_ID,
    SEP_ID,
    UNK_ID,
    BatchIterator,
    Example,
    BatchIterator as _BI,  # noqa: F401  (alias exercised below)
    build_vocab,
    bundled_sentiment_path,
    load_tsv,
    num_classes,
    save_tsv,
    tokenize,
)


def write_tsv(path, rows, header="sentence\tlabel"):
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")
    return path


class TestLoadTsv:
    def test_header_plus_two_rows(self, tmp_path):
        path = write_tsv(tmp_path / "a.tsv", ["good film\t1", "bad film\t0"])
        examples = load_tsv(path)
        assert len(examples) == 2
        assert examples[0] == Example(texts=("good film",), label=1)

    def test_missing_column_names_line(self, tmp_path):
        path = write_tsv(tmp_path / "b.tsv", ["good film\t1", "broken row"])
        with pytest.raises(DataError, match="line 3"):
            load_tsv(path)

    def test_unknown_label(self, tmp_path):
        path = write_tsv(tmp_path / "c.tsv", ["good film\tpositive"])
        with pytest.raises(DataError, match="unknown label"):
            load_tsv(path)

    def test_pair_schema(self, tmp_path):
        path = write_tsv(tmp_path / "d.tsv", ["a premise\ta hypothesis\t2"],
                         header="sentence1\tsentence2\tlabel")
        examples = load_tsv(path, schema="pair")
        assert examples[0].texts == ("a premise", "a hypothesis")
        assert examples[0].label == 2

    def test_round_trip(self, tmp_path):
        path = write_tsv(tmp_path / "e.tsv", ["good film , truly\t1", "bad film !\t0"])
        examples = load_tsv(path)
        out = tmp_path / "f.tsv"
        save_tsv(out, examples)
        assert load_tsv(out) == examples
        # identical modulo header
        assert path.read_text().splitlines()[1:] == out.read_text().splitlines()[1:]


class TestTokenizeAndVocab:
    def test_tokenize_lowercases_and_splits_punctuation(self):
        assert tokenize("Good, film!") == ["good", ",", "film", "!"]

    def test_min_frequency(self):
        examples = [Example(("a a b",), 0)]
        vocab = build_vocab(examples, min_frequency=2)
        assert vocab.lookup("a") >= 3
        assert vocab.lookup("b") == UNK_ID

    def test_deterministic_across_builds(self):
        examples = [Example(("the cat sat on the mat",), 0), Example(("a cat ran",), 1)]
        v1 = build_vocab(examples)
        v2 = build_vocab(examples)
        assert v1.token_to_id == v2.token_to_id

    def test_id_assignment_matches_frequency_count(self):
        # oracle: independent frequency count, descending, ties lexicographic
        examples = [Example(("b b b a a c",), 0)]
        vocab = build_vocab(examples)
        assert vocab.lookup("b") == 3
        assert vocab.lookup("a") == 4
        assert vocab.lookup("c") == 5

    def test_pair_encoding_inserts_sep(self):
        vocab = build_vocab([Example(("x y", "z"), 0)])
        ids = vocab.encode_example(Example(("x y", "z"), 0))
        assert SEP_ID in ids
        assert ids.index(SEP_ID) == 2


class TestBatchIterator:
    def make_examples(self):
        return [Example(("a b c",), 0), Example(("d e f g h",), 1)]

    def test_padding_and_mask(self):
        examples = self.make_examples()
        vocab = build_vocab(examples)
        it = BatchIterator(examples, vocab, batch_size=2, seed=0)
        batch = next(it.eval_batches())
        assert batch.tokens.shape == (2, 5)
        np.testing.assert_array_equal(batch.mask[0], [1, 1, 1, 0, 0])
        np.testing.assert_array_equal(batch.mask[1], [1, 1, 1, 1, 1])
        assert (batch.tokens[0, 3:] == PAD_ID).all()

    def test_truncation_counter(self):
        examples = self.make_examples()
        vocab = build_vocab(examples)
        it = BatchIterator(examples, vocab, batch_size=2, n_cap=4, seed=0)
        batch = next(it.eval_batches())
        assert batch.tokens.shape[1] == 4
        assert it.truncated == 1

    def test_shuffle_deterministic_per_seed(self):
        examples = [Example((f"tok{i}",), i % 2) for i in range(37)]
        vocab = build_vocab(examples)

        def order(seed, epoch):
            it = BatchIterator(examples, vocab, batch_size=5, seed=seed)
            return [b.tokens[:, 0].tolist() for b in it.epoch(epoch)]

        assert order(3, 0) == order(3, 0)
        assert order(3, 0) != order(3, 1)
        assert order(3, 0) != order(4, 0)

    def test_invalid_n_cap(self):
        examples = self.make_examples()
        with pytest.raises(ParameterError):
            BatchIterator(examples, build_vocab(examples), batch_size=2, n_cap=0)

    def test_no_token_exceeds_vocab(self):
        examples = self.make_examples()
        vocab = build_vocab(examples, min_frequency=1)
        extra = examples + [Example(("zzz unseen words",), 0)]
        it = BatchIterator(extra, vocab, batch_size=3, seed=0)
        for batch in it.eval_batches():
            assert batch.tokens.max() < vocab.size


class TestPipelineMaskingSoundness:
    @pytest.mark.parametrize("kind", ["hypermixer_tied", "attention"])
    def test_logits_independent_of_batch_size(self, kind):
        rng = np.random.default_rng(0)
        examples = [
            Example((" ".join(rng.choice(list("abcdefgh"), size=rng.integers(2, 9))),), int(i % 2))
            for i in range(20)
        ]
        vocab = build_vocab(examples)
        spec = TokenMixingSpec(kind=kind, d=4, d_prime=6, heads=2)
        cfg = ModelConfig(num_layers=2, d=4, d_prime=6, token_mixing=spec,
                          vocab_size=vocab.size, dropout_p=0.0, head="classifier", num_classes=2)
        model = Model.build(cfg, seed=1)

        def all_logits(batch_size):
            it = BatchIterator(examples, vocab, batch_size=batch_size, seed=0)
            outs = [model.forward(b.tokens, mask=b.mask).data for b in it.eval_batches()]
            return np.vstack(outs)

        np.testing.assert_allclose(all_logits(4), all_logits(16), atol=1e-6)


class TestBundledFixture:
    def test_fixture_loads_and_is_balanced(self):
        examples = load_tsv(bundled_sentiment_path())
        assert len(examples) == 2000
        assert num_classes(examples) == 2
        labels = [ex.label for ex in examples]
        assert 900 < sum(labels) < 1100
