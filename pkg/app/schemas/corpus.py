"""Corpus schemas: character vocabulary and tokenized splits."""
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

PAD_ID = 0
PAD_TOKEN = "<pad>"


class Vocabulary(BaseModel):
    """Character vocabulary; id 0 is reserved for padding."""

    tokens: List[str] = Field(..., min_length=2, description="Id -> token, tokens[0] is padding")

    @model_validator(mode="after")
    def check_tokens(self):
        if self.tokens[0] != PAD_TOKEN:
            raise ValueError("tokens[0] must be the padding token")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("tokens must be distinct")
        return self

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        """Distinct characters in first-appearance order, after padding."""
        return cls(tokens=[PAD_TOKEN] + list(dict.fromkeys(text)))

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def index(self) -> Dict[str, int]:
        return {tok: i for i, tok in enumerate(self.tokens)}

    def encode(self, text: str) -> np.ndarray:
        lookup = self.index
        return np.array([lookup[ch] for ch in text], dtype=np.int64)

    def decode(self, ids: Sequence[int]) -> str:
        return "".join(self.tokens[i] for i in ids if i != PAD_ID)


@dataclass
class TokenizedCorpus:
    """Fixed-width chunks (right-padded with 0) split into train/validation."""

    vocab: Vocabulary
    train: np.ndarray
    validation: np.ndarray

    @property
    def seq_len(self) -> int:
        return int(self.train.shape[1])
