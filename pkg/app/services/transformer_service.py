"""Decoder-only transformer used for both teacher and student.

Post-norm blocks: ``x = LN1(x + Attn(x))`` then ``x = LN2(x + FFN(x))``.
The hidden state exposed for each layer is the block output; the attention
map is the post-softmax causal map of every head.
"""
import math
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.core import autodiff as ad
from app.core.exceptions import ConfigError
from app.core.validators import validate_token_ids
from app.schemas.config import ModelConfig
from app.schemas.model import ForwardTrace, ParameterSet
from app.services.base_service import BaseService

INIT_STD = 0.02


def parameter_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Shape of every named parameter."""
    d, f, v = config.d_model, config.d_ff, config.vocab_size
    shapes: Dict[str, Tuple[int, ...]] = {
        "embed.tokens": (v, d),
        "embed.positions": (config.max_seq_len, d),
        "head.weight": (d, v),
        "head.bias": (v,),
    }
    for layer in range(config.n_layers):
        prefix = f"layers.{layer}"
        for proj in ("q", "k", "v", "o"):
            shapes[f"{prefix}.attn.{proj}"] = (d, d)
        for norm in ("ln1", "ln2"):
            shapes[f"{prefix}.{norm}.gain"] = (d,)
            shapes[f"{prefix}.{norm}.bias"] = (d,)
        shapes[f"{prefix}.ffn.w1"] = (d, f)
        shapes[f"{prefix}.ffn.b1"] = (f,)
        shapes[f"{prefix}.ffn.w2"] = (f, d)
        shapes[f"{prefix}.ffn.b2"] = (d,)
    return shapes


def parameter_count(config: ModelConfig) -> int:
    """Closed-form number of scalar parameters."""
    d, f, v = config.d_model, config.d_ff, config.vocab_size
    per_layer = 4 * d * d + 4 * d + d * f + f + f * d + d
    return v * d + config.max_seq_len * d + config.n_layers * per_layer + d * v + v


def midpoint_layer(config: ModelConfig) -> int:
    """Index of the distilled layer: floor(n_layers / 2)."""
    return config.n_layers // 2


def coerce_model_config(config: Union[ModelConfig, dict]) -> ModelConfig:
    """Accept a ModelConfig or a plain mapping; invalid input raises ConfigError."""
    if isinstance(config, ModelConfig):
        return config
    try:
        return ModelConfig.model_validate(config)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(p) for p in first["loc"]) or "model"
        raise ConfigError(
            message=f"Invalid model configuration at '{key}': {first['msg']}",
            details={"key": key, "reason": first["type"]}
        )


class TransformerService(BaseService):
    """Initialization, forward pass and greedy decoding."""

    def init_params(self, config: Union[ModelConfig, dict]) -> ParameterSet:
        """
        Draw a fresh ParameterSet.

        Weights are normal(0, 0.02) drawn in sorted-name order from a
        generator seeded with ``config.seed``; norm gains are 1, biases 0.

        Raises:
            ConfigError: If ``config`` is invalid.
        """
        config = coerce_model_config(config)
        self._log_operation("init_params", n_layers=config.n_layers, d_model=config.d_model, seed=config.seed)
        rng = np.random.default_rng(config.seed)
        tensors: Dict[str, np.ndarray] = {}
        for name, shape in sorted(parameter_shapes(config).items()):
            if name.endswith(".gain"):
                tensors[name] = np.ones(shape)
            elif name.endswith((".bias", ".b1", ".b2")):
                tensors[name] = np.zeros(shape)
            else:
                tensors[name] = rng.normal(0.0, INIT_STD, size=shape)
        return ParameterSet(config=config, tensors=tensors)

    def forward(
        self,
        params: ParameterSet,
        tokens: Union[np.ndarray, Sequence[int]],
        track_grad: bool = False,
    ) -> ForwardTrace:
        """
        Run the model over a sequence or batch of sequences.

        Args:
            params: Model parameters.
            tokens: Ids of shape [S] or [B, S]; a single sequence is
                treated as a batch of one.
            track_grad: Make parameters trainable leaves of the graph.

        Returns:
            ForwardTrace with batch-leading shapes.

        Raises:
            InputError: On out-of-range ids or over-long sequences.
        """
        config = params.config
        ids = validate_token_ids(tokens, config.vocab_size, config.max_seq_len)
        seq = ids.shape[1]
        p = params.as_leaves(track_grad)

        x = ad.add(
            ad.embedding(p["embed.tokens"], ids),
            ad.embedding(p["embed.positions"], np.arange(seq)),
        )
        future = np.triu(np.ones((seq, seq), dtype=bool), k=1)
        hidden: List[ad.Tensor] = []
        attention: List[ad.Tensor] = []
        for layer in range(config.n_layers):
            x, attn_map = self._block(p, f"layers.{layer}", x, future, config)
            hidden.append(x)
            attention.append(attn_map)

        logits = ad.add(ad.matmul(x, p["head.weight"]), p["head.bias"])
        return ForwardTrace(logits=logits, hidden=hidden, attention=attention, leaves=p)

    def _block(
        self,
        p: Dict[str, ad.Tensor],
        prefix: str,
        x: ad.Tensor,
        future: np.ndarray,
        config: ModelConfig,
    ) -> Tuple[ad.Tensor, ad.Tensor]:
        n_heads = config.n_heads
        scale = 1.0 / math.sqrt(config.d_model // n_heads)

        q_heads = ad.split(ad.matmul(x, p[f"{prefix}.attn.q"]), n_heads)
        k_heads = ad.split(ad.matmul(x, p[f"{prefix}.attn.k"]), n_heads)
        v_heads = ad.split(ad.matmul(x, p[f"{prefix}.attn.v"]), n_heads)

        maps, outputs = [], []
        for q, k, v in zip(q_heads, k_heads, v_heads):
            scores = ad.scale(ad.matmul(q, ad.transpose(k)), scale)
            weights = ad.softmax_rows(ad.masked_fill(scores, future))
            maps.append(weights)
            outputs.append(ad.matmul(weights, v))

        attn_out = ad.matmul(ad.concat(outputs, axis=-1), p[f"{prefix}.attn.o"])
        x = ad.layer_norm(ad.add(x, attn_out), p[f"{prefix}.ln1.gain"], p[f"{prefix}.ln1.bias"])

        activation = ad.gelu if config.activation == "gelu" else ad.relu
        h = activation(ad.add(ad.matmul(x, p[f"{prefix}.ffn.w1"]), p[f"{prefix}.ffn.b1"]))
        ffn_out = ad.add(ad.matmul(h, p[f"{prefix}.ffn.w2"]), p[f"{prefix}.ffn.b2"])
        x = ad.layer_norm(ad.add(x, ffn_out), p[f"{prefix}.ln2.gain"], p[f"{prefix}.ln2.bias"])
        return x, ad.stack(maps, axis=1)

    def generate_greedy(self, params: ParameterSet, prompt: Sequence[int], n_new: int) -> List[int]:
        """Argmax continuation of ``prompt`` by ``n_new`` tokens."""
        out = [int(t) for t in prompt]
        if not out:
            out = [0]
        window = params.config.max_seq_len
        for _ in range(n_new):
            trace = self.forward(params, np.array(out[-window:], dtype=np.int64))
            out.append(int(np.argmax(trace.logits.data[0, -1])))
        return out

    def logits(self, params: ParameterSet, tokens: np.ndarray) -> np.ndarray:
        """Logits array without building a gradient graph."""
        return self.forward(params, tokens).logits.data
