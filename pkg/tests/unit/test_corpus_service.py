"""Unit tests for CorpusService and Vocabulary."""
import numpy as np
import pytest

from app.core.exceptions import DependencyError, IngestionError
from app.schemas.corpus import PAD_ID, PAD_TOKEN, Vocabulary
from app.services.corpus_service import CorpusService

pytestmark = pytest.mark.unit


@pytest.fixture
def corpus_service() -> CorpusService:
    return CorpusService()


def _write(tmp_path, data, name="corpus.txt"):
    path = tmp_path / name
    if isinstance(data, bytes):
        path.write_bytes(data)
    else:
        path.write_text(data, encoding="utf-8")
    return path


class TestVocabulary:
    """Tests for Vocabulary."""

    def test_first_appearance_order(self):
        """Test ids follow first appearance after padding."""
        vocab = Vocabulary.from_text("baab")

        assert vocab.tokens == [PAD_TOKEN, "b", "a"]
        assert vocab.encode("ab").tolist() == [2, 1]

    def test_decode_skips_padding(self):
        """Test padding ids decode to nothing."""
        vocab = Vocabulary.from_text("hi")

        assert vocab.decode([1, 2, PAD_ID, PAD_ID]) == "hi"

    def test_padding_must_come_first(self):
        """Test a vocabulary without the padding token is rejected."""
        with pytest.raises(ValueError):
            Vocabulary(tokens=["a", "b"])


class TestIngestCorpus:
    """Tests for ingest_corpus."""

    def test_two_characters(self, corpus_service, tmp_path):
        """Test "abab" gives {pad, a, b} and one chunk [1, 2, 1, 2]."""
        corpus = corpus_service.ingest_corpus(_write(tmp_path, "abab"), max_seq_len=64, validation_ratio=0.0)

        assert corpus.vocab.size == 3
        assert corpus.train.tolist() == [[1, 2, 1, 2]]
        assert corpus.validation.shape == (0, 4)

    def test_vocab_size_counts_padding(self, corpus_service, tmp_path):
        """Test ten distinct characters give eleven ids."""
        corpus = corpus_service.ingest_corpus(_write(tmp_path, "0123456789" * 3), max_seq_len=8, validation_ratio=0.0)

        assert corpus.vocab.size == 11

    def test_chunks_are_right_padded(self, corpus_service, tmp_path):
        """Test the text is cut into consecutive windows with a padded tail."""
        corpus = corpus_service.ingest_corpus(_write(tmp_path, "abcdefg"), max_seq_len=3, validation_ratio=0.0)

        assert corpus.train.tolist() == [[1, 2, 3], [4, 5, 6], [7, 0, 0]]
        assert corpus.seq_len == 3

    def test_validation_split(self, corpus_service, corpus_file):
        """Test the split holds out floor(ratio * n) chunks and keeps every chunk once."""
        corpus = corpus_service.ingest_corpus(corpus_file, max_seq_len=8, validation_ratio=0.2, seed=3)
        n = corpus.train.shape[0] + corpus.validation.shape[0]

        assert corpus.validation.shape[0] == int(0.2 * n)
        assert n == int(np.ceil(len(corpus_file.read_text()) / 8))

    def test_small_ratio_still_holds_out_one(self, corpus_service, tmp_path):
        """Test a positive ratio holds out at least one chunk when there are two."""
        corpus = corpus_service.ingest_corpus(_write(tmp_path, "abcdef"), max_seq_len=3, validation_ratio=0.01)

        assert corpus.validation.shape[0] == 1
        assert corpus.train.shape[0] == 1

    def test_deterministic(self, corpus_service, corpus_file):
        """Test the same seed gives the same split."""
        a = corpus_service.ingest_corpus(corpus_file, max_seq_len=8, validation_ratio=0.2, seed=5)
        b = corpus_service.ingest_corpus(corpus_file, max_seq_len=8, validation_ratio=0.2, seed=5)

        np.testing.assert_array_equal(a.train, b.train)
        np.testing.assert_array_equal(a.validation, b.validation)

    def test_existing_vocabulary(self, corpus_service, tmp_path):
        """Test a supplied vocabulary is used for encoding."""
        vocab = Vocabulary(tokens=[PAD_TOKEN, "x", "a", "b"])
        corpus = corpus_service.ingest_corpus(_write(tmp_path, "ab"), max_seq_len=4, validation_ratio=0.0, vocab=vocab)

        assert corpus.train.tolist() == [[2, 3]]

    def test_unknown_character(self, corpus_service, tmp_path):
        """Test a character outside the supplied vocabulary raises IngestionError."""
        vocab = Vocabulary(tokens=[PAD_TOKEN, "a"])
        with pytest.raises(IngestionError):
            corpus_service.ingest_corpus(_write(tmp_path, "ab"), max_seq_len=4, vocab=vocab)

    def test_empty_file(self, corpus_service, tmp_path):
        """Test an empty file raises IngestionError."""
        with pytest.raises(IngestionError) as exc_info:
            corpus_service.ingest_corpus(_write(tmp_path, ""), max_seq_len=4)

        assert exc_info.value.exit_code == 3

    def test_missing_file(self, corpus_service, tmp_path):
        """Test a missing file raises IngestionError."""
        with pytest.raises(IngestionError):
            corpus_service.ingest_corpus(tmp_path / "nope.txt", max_seq_len=4)

    def test_not_utf8(self, corpus_service, tmp_path):
        """Test invalid UTF-8 raises IngestionError with the byte offset."""
        with pytest.raises(IngestionError) as exc_info:
            corpus_service.ingest_corpus(_write(tmp_path, b"ab\xff\xfe"), max_seq_len=4)

        assert exc_info.value.details["offset"] == 2

    def test_bundled_toy_corpus(self, corpus_service, toy_corpus_path):
        """Test the bundled corpus ingests into full windows."""
        corpus = corpus_service.ingest_corpus(toy_corpus_path, max_seq_len=64)

        assert corpus.vocab.size > 20
        assert corpus.train.shape[1] == 64
        assert corpus.validation.shape[0] > 0


class TestVocabFiles:
    """Tests for save_vocab and load_vocab."""

    def test_round_trip(self, tmp_path):
        """Test a saved vocabulary loads back equal, non-ASCII included."""
        vocab = Vocabulary.from_text("héllo")
        path = CorpusService.save_vocab(vocab, tmp_path / "out" / "vocab.json")

        assert CorpusService.load_vocab(path) == vocab

    def test_missing(self, tmp_path):
        """Test a missing vocabulary raises DependencyError."""
        with pytest.raises(DependencyError):
            CorpusService.load_vocab(tmp_path / "vocab.json")
