"""Model records: parameter sets and forward traces."""
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from app.core.autodiff import Tensor, as_tensor, parameter
from app.schemas.config import ModelConfig


@dataclass
class ParameterSet:
    """Named float64 arrays for one model, keyed by dotted parameter path."""

    config: ModelConfig
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def names(self) -> List[str]:
        return sorted(self.tensors)

    @property
    def count(self) -> int:
        return int(sum(arr.size for arr in self.tensors.values()))

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: self.tensors[name].shape for name in self.names}

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            config=self.config.model_copy(),
            tensors={name: arr.copy() for name, arr in self.tensors.items()},
        )

    def as_leaves(self, track_grad: bool) -> Dict[str, Tensor]:
        """Wrap every array as a graph leaf (trainable when ``track_grad``)."""
        if track_grad:
            return {name: parameter(arr, name=name) for name, arr in self.tensors.items()}
        return {name: as_tensor(arr) for name, arr in self.tensors.items()}

    def bitwise_equal(self, other: "ParameterSet") -> bool:
        if self.names != other.names:
            return False
        return all(
            self.tensors[n].shape == other.tensors[n].shape
            and self.tensors[n].tobytes() == other.tensors[n].tobytes()
            for n in self.names
        )


@dataclass
class ForwardTrace:
    """Outputs of one forward pass over a batch.

    Shapes: logits [B, S, V]; hidden[l] [B, S, d_model] (block outputs);
    attention[l] [B, H, S, S] (post-softmax, causal).
    """

    logits: Tensor
    hidden: List[Tensor]
    attention: List[Tensor]
    leaves: Dict[str, Tensor] = field(default_factory=dict)

    @property
    def n_layers(self) -> int:
        return len(self.hidden)
