"""GLUE-style TSV ingestion, tokenization, vocabulary, and batching.

TSV files carry a header row; the ``single`` schema is (sentence, label) and
``pair`` is (sentence1, sentence2, label). Tokenization lowercases and splits
on whitespace and punctuation boundaries. Sentence pairs are joined at batch
time as ``tokens(s1) [SEP] tokens(s2)``. Batches left-align tokens and pad on
the right, so masks are prefix-of-valid per row.
"""

import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import DataError, ParameterError

PAD_ID = 0
UNK_ID = 1
SEP_ID = 2
NUM_SPECIALS = 3

_TOKEN_RE = re.compile(r"[\w']+|[^\w\s]")

SCHEMAS = {"single": ("sentence", "label"), "pair": ("sentence1", "sentence2", "label")}


@dataclass(frozen=True)
class Example:
    texts: tuple
    label: int


def tokenize(text):
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Vocabulary:
    token_to_id: dict
    min_frequency: int

    @property
    def size(self):
        return NUM_SPECIALS + len(self.token_to_id)

    def lookup(self, token):
        return self.token_to_id.get(token, UNK_ID)

    def encode_text(self, text):
        return [self.lookup(t) for t in tokenize(text)]

    def encode_example(self, example):
        ids = self.encode_text(example.texts[0])
        for extra in example.texts[1:]:
            ids.append(SEP_ID)
            ids.extend(self.encode_text(extra))
        return ids


def build_vocab(examples, min_frequency=1):
    """Frequency-ordered vocabulary (ties broken lexicographically)."""
    if min_frequency < 1:
        raise ParameterError(f"min_frequency must be >= 1, got {min_frequency}")
    counts = {}
    for ex in examples:
        for text in ex.texts:
            for token in tokenize(text):
                counts[token] = counts.get(token, 0) + 1
    kept = sorted((t for t, c in counts.items() if c >= min_frequency),
                  key=lambda t: (-counts[t], t))
    return Vocabulary({t: NUM_SPECIALS + i for i, t in enumerate(kept)}, min_frequency)


def load_tsv(path, schema="single"):
    """Parse a TSV with header; malformed rows raise DataError naming the line."""
    if schema not in SCHEMAS:
        raise ParameterError(f"unknown schema {schema!r}; expected one of {sorted(SCHEMAS)}")
    width = len(SCHEMAS[schema])
    examples = []
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty file, expected a header row")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != width:
            raise DataError(f"{path}: line {lineno}: expected {width} columns, found {len(cols)}")
        try:
            label = int(cols[-1])
        except ValueError:
            raise DataError(f"{path}: line {lineno}: unknown label {cols[-1]!r}, expected an integer")
        if label < 0:
            raise DataError(f"{path}: line {lineno}: labels must be nonnegative, got {label}")
        examples.append(Example(texts=tuple(cols[:-1]), label=label))
    return examples


def save_tsv(path, examples, schema="single"):
    header = "\t".join(SCHEMAS[schema])
    with open(path, "w", encoding="utf-8") as f:
        f.write(header + "\n")
        for ex in examples:
            f.write("\t".join([*ex.texts, str(ex.label)]) + "\n")
    return path


def num_classes(examples):
    return max(ex.label for ex in examples) + 1


@dataclass
class Batch:
    tokens: np.ndarray  # (B, N) int64
    mask: np.ndarray    # (B, N) float64, prefix-of-valid per row
    labels: np.ndarray  # (B,) int64


class BatchIterator:
    """Shuffled, padded batches; tracks how many sequences were truncated."""

    def __init__(self, examples, vocab, batch_size, n_cap=None, seed=0):
        if n_cap is not None and n_cap < 1:
            raise ParameterError(f"n_cap must be >= 1, got {n_cap}")
        self.examples = list(examples)
        self.vocab = vocab
        self.batch_size = batch_size
        self.n_cap = n_cap
        self.seed = seed
        self.truncated = 0
        self._encoded = [vocab.encode_example(ex) for ex in self.examples]
        self._labels = np.array([ex.label for ex in self.examples], dtype=np.int64)

    def _make_batch(self, indices):
        ids = []
        for i in indices:
            seq = self._encoded[i]
            if not seq:
                seq = [UNK_ID]
            if self.n_cap is not None and len(seq) > self.n_cap:
                seq = seq[: self.n_cap]
                self.truncated += 1
            ids.append(seq)
        width = max(len(s) for s in ids)
        tokens = np.full((len(ids), width), PAD_ID, dtype=np.int64)
        mask = np.zeros((len(ids), width))
        for row, seq in enumerate(ids):
            tokens[row, : len(seq)] = seq
            mask[row, : len(seq)] = 1.0
        return Batch(tokens=tokens, mask=mask, labels=self._labels[list(indices)])

    def epoch(self, epoch_index):
        """Yield batches in an order shuffled deterministically per (seed, epoch)."""
        order = np.random.default_rng([self.seed, epoch_index]).permutation(len(self.examples))
        for start in range(0, len(order), self.batch_size):
            yield self._make_batch(order[start: start + self.batch_size])

    def eval_batches(self):
        """Yield batches in dataset order (no shuffling)."""
        order = np.arange(len(self.examples))
        for start in range(0, len(order), self.batch_size):
            yield self._make_batch(order[start: start + self.batch_size])


def bundled_sentiment_path():
    """Path to the bundled 2,000-example sentiment fixture (single schema)."""
    return resources.files("mixkit").joinpath("data/sentiment_2k.tsv")
