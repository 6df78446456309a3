"""Character-level corpus ingestion."""
import json
import math
from pathlib import Path
from typing import Union

import numpy as np

from app.core.exceptions import IngestionError, raise_dependency_error
from app.schemas.corpus import PAD_ID, TokenizedCorpus, Vocabulary
from app.services.base_service import BaseService


class CorpusService(BaseService):
    """Reads a UTF-8 text file into fixed-width chunks with a seeded split."""

    def ingest_corpus(
        self,
        path: Union[str, Path],
        max_seq_len: int,
        validation_ratio: float = 0.05,
        seed: int = 0,
        vocab: Union[Vocabulary, None] = None,
    ) -> TokenizedCorpus:
        """
        Tokenize a corpus file.

        The whole text is encoded and cut into consecutive chunks of
        ``max_seq_len`` ids; the last chunk is right-padded with 0. A text
        shorter than the window yields one chunk of its own length.

        Args:
            path: UTF-8 text file.
            max_seq_len: Context window.
            validation_ratio: Fraction of chunks held out.
            seed: Seed of the split permutation.
            vocab: Existing vocabulary to encode with (e.g. the teacher's).

        Raises:
            IngestionError: If the file is missing, empty, not UTF-8, or
                contains characters outside ``vocab``.
        """
        text = self.read_text(path)
        self._log_operation("ingest_corpus", path=str(path), chars=len(text), max_seq_len=max_seq_len)
        if vocab is None:
            vocab = Vocabulary.from_text(text)
        try:
            ids = vocab.encode(text)
        except KeyError as e:
            raise IngestionError(
                message=f"Corpus contains a character outside the vocabulary: {e.args[0]!r}",
                details={"path": str(path)}
            )

        width = min(max_seq_len, ids.size)
        n_chunks = math.ceil(ids.size / width)
        chunks = np.full((n_chunks, width), PAD_ID, dtype=np.int64)
        chunks.reshape(-1)[: ids.size] = ids

        order = np.random.default_rng(seed).permutation(n_chunks)
        n_val = int(math.floor(validation_ratio * n_chunks))
        if validation_ratio > 0 and n_val == 0 and n_chunks >= 2:
            n_val = 1
        validation = chunks[np.sort(order[:n_val])]
        train = chunks[np.sort(order[n_val:])]
        self.logger.info(
            f"Ingested {path}: {len(text)} chars, vocab {vocab.size}, "
            f"{train.shape[0]} train / {validation.shape[0]} validation chunks"
        )
        return TokenizedCorpus(vocab=vocab, train=train, validation=validation)

    @staticmethod
    def read_text(path: Union[str, Path]) -> str:
        path = Path(path)
        if not path.is_file():
            raise IngestionError(message=f"Corpus file not found: {path}", details={"path": str(path)})
        raw = path.read_bytes()
        if not raw:
            raise IngestionError(message=f"Corpus file is empty: {path}", details={"path": str(path)})
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise IngestionError(
                message=f"Corpus file is not valid UTF-8: {path}",
                details={"path": str(path), "offset": e.start}
            )

    @staticmethod
    def save_vocab(vocab: Vocabulary, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(vocab.model_dump(), ensure_ascii=False, indent=2), encoding="utf-8")
        return path

    @staticmethod
    def load_vocab(path: Union[str, Path]) -> Vocabulary:
        path = Path(path)
        if not path.is_file():
            raise_dependency_error("vocabulary", str(path))
        return Vocabulary.model_validate_json(path.read_text(encoding="utf-8"))
