import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.config import EMBEDDING_INIT_RANGE, GAT_NEGATIVE_SLOPE
from core.exceptions import CheckpointError, NumericError, ShapeError
from core.logger import get_logger
from core.utils import make_rng
from data_ingestion.corpus_loader import Vocab
from data_ingestion.label_embedder import init_label_embeddings
from data_model.checkpoint_store import CheckpointHeader, CheckpointStore
from data_model.pydantic_models.config import ModelConfig
from data_model.pydantic_models.corpus import Document
from src.taxonomy import LabelVector, Taxonomy
from src.tensor_core import ops
from src.tensor_core.tensor import Tensor

logger = get_logger(__name__, log_file="model.log")


class ModelParams:
    """Named trainable tensors, iterated in creation order."""

    def __init__(self):
        self._tensors: Dict[str, Tensor] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        tensor = Tensor(data, requires_grad=True, name=name)
        self._tensors[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def to_arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        missing = set(self._tensors) - set(arrays)
        if missing:
            raise CheckpointError(f"checkpoint lacks parameters: {sorted(missing)}")
        for name, t in self._tensors.items():
            if arrays[name].shape != t.shape:
                raise ShapeError(f"load:{name}", arrays[name].shape, t.shape)
            t.data[...] = arrays[name]


@dataclass
class ForwardOutput:
    H: Tensor  # (m x d) token embeddings
    G: Tensor  # (n x d) label-aware embeddings
    Z: Tensor  # (n x d) fused embeddings fed to the contrastive losses
    S: Tensor  # (n x 1) logits


def _uniform(rng: np.random.Generator, rows: int, cols: int, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=(rows, cols))


def gat_adjacency(taxonomy: Taxonomy) -> np.ndarray:
    """Boolean (n x n) neighborhood: parent-child edges in both directions plus self-loops."""
    adj = np.eye(taxonomy.n, dtype=bool)
    for child, parent in enumerate(taxonomy.parent_index):
        if parent != -1:
            adj[child, parent] = True
            adj[parent, child] = True
    return adj


class HJCLModel:
    """
    Text encoder, label-hierarchy GAT, label-aware attention, fusion and the
    flat classifier head.

    Row-vector convention throughout: a projection W is applied as X @ W.
    """

    def __init__(self, config: ModelConfig, taxonomy: Taxonomy, params: ModelParams):
        self.config = config
        self.taxonomy = taxonomy
        self.params = params
        self.adjacency = gat_adjacency(taxonomy)

    @classmethod
    def create(
        cls,
        config: ModelConfig,
        taxonomy: Taxonomy,
        vocab: Vocab,
        descriptions: Optional[Dict[str, str]] = None,
    ) -> "HJCLModel":
        """
        Initialize every parameter from `config.seed`.

        Embeddings ~ U(-0.05, 0.05); projections ~ U(+-1/sqrt(fan_in)); biases 0.
        Label embeddings start as the mean token embedding of each label's description.
        """
        config = config.model_copy(update={"vocab_size": len(vocab)})
        d, h, n = config.d, config.h, taxonomy.n
        d_h = d // h
        rng = make_rng(config.seed, 100)
        params = ModelParams()

        token_embedding = _uniform(rng, config.vocab_size, d, EMBEDDING_INIT_RANGE)
        params.add("token_embedding", token_embedding)
        params.add("label_embedding", init_label_embeddings(vocab, token_embedding, taxonomy, descriptions))

        bound = 1.0 / math.sqrt(d)
        for layer in range(config.encoder_layers):
            for proj in ("w_q", "w_k", "w_v"):
                params.add(f"encoder.{layer}.{proj}", _uniform(rng, d, d, bound))
        for layer in range(config.gat_layers):
            params.add(f"gat.{layer}.weight", _uniform(rng, d, d, bound))
            params.add(f"gat.{layer}.att_src", _uniform(rng, d, 1, bound))
            params.add(f"gat.{layer}.att_dst", _uniform(rng, d, 1, bound))
        for head in range(h):
            for proj in ("w_q", "w_k", "w_v"):
                params.add(f"mha.{head}.{proj}", _uniform(rng, d, d_h, bound))
        params.add("mha.w_o", _uniform(rng, d, d, bound))
        if config.use_fusion:
            params.add("fusion.w_a", _uniform(rng, d, 2 * d, 1.0 / math.sqrt(2 * d)))
            params.add("fusion.b_a", np.zeros((1, d)))
        params.add("classifier.w_s", _uniform(rng, n, n * d, 1.0 / math.sqrt(n * d)))
        params.add("classifier.b_s", np.zeros((n, 1)))

        total = sum(t.data.size for _, t in params.items())
        logger.info(f"Initialized model: {len(params)} tensors, {total} parameters, config {config.model_dump()}")
        return cls(config, taxonomy, params)

    def encode_tokens(self, token_ids: Sequence[int]) -> Tensor:
        """Embedding lookup followed by `encoder_layers` residual self-attention blocks."""
        if len(token_ids) == 0:
            raise ShapeError("encode_tokens", (0,), (1,))
        vocab_size = self.params["token_embedding"].shape[0]
        if min(token_ids) < 0 or max(token_ids) >= vocab_size:
            raise ShapeError("encode_tokens", (max(token_ids) + 1,), (vocab_size,))

        H = ops.gather_rows(self.params["token_embedding"], token_ids)
        for layer in range(self.config.encoder_layers):
            q = ops.matmul(H, self.params[f"encoder.{layer}.w_q"])
            k = ops.matmul(H, self.params[f"encoder.{layer}.w_k"])
            v = ops.matmul(H, self.params[f"encoder.{layer}.w_v"])
            H = ops.add(H, ops.attention(q, k, v))
        return H

    def propagate_hierarchy(
        self, return_attention: bool = False
    ) -> Union[Tensor, Tuple[Tensor, List[Tensor]]]:
        """
        Run the single-head GAT layers over the taxonomy.

        e_ij = leaky_relu(a_dst . Wy_i + a_src . Wy_j) for j in N(i); alpha = masked
        row softmax of e; y_i <- sum_j alpha_ij W y_j. No output nonlinearity.
        """
        n = self.taxonomy.n
        Y = self.params["label_embedding"]
        coefficients = []
        for layer in range(self.config.gat_layers):
            P = ops.matmul(Y, self.params[f"gat.{layer}.weight"])
            src = ops.matmul(P, self.params[f"gat.{layer}.att_src"])
            dst = ops.matmul(P, self.params[f"gat.{layer}.att_dst"])
            scores = ops.add(
                ops.matmul(dst, ops.ones(1, n)),
                ops.matmul(ops.ones(n, 1), ops.transpose(src)),
            )
            alpha = ops.softmax_rows(ops.leaky_relu(scores, GAT_NEGATIVE_SLOPE), mask=self.adjacency)
            coefficients.append(alpha)
            Y = ops.matmul(alpha, P)
        if return_attention:
            return Y, coefficients
        return Y

    def label_aware_embeddings(
        self, H: Tensor, Y: Tensor, return_attention: bool = False
    ) -> Union[Tensor, Tuple[Tensor, List[Tensor]]]:
        """Multi-head attention with the labels as queries and the tokens as keys and values."""
        if H.shape[1] != Y.shape[1]:
            raise ShapeError("label_aware_embeddings", H.shape, Y.shape)
        heads = []
        weights = []
        for head in range(self.config.h):
            q = ops.matmul(Y, self.params[f"mha.{head}.w_q"])
            k = ops.matmul(H, self.params[f"mha.{head}.w_k"])
            v = ops.matmul(H, self.params[f"mha.{head}.w_v"])
            out, alpha = ops.attention(q, k, v, return_weights=True)
            heads.append(out)
            weights.append(alpha)
        G = ops.matmul(ops.concat_cols(heads), self.params["mha.w_o"])
        if return_attention:
            return G, weights
        return G

    def fuse_and_project(self, H: Tensor, G: Tensor, Y: Tensor) -> Tensor:
        """
        z_i = softmax(H (W_a [g_i || y_i] + b_a))^T H, batched over labels.

        Without fusion the label-aware embeddings are returned unchanged.
        """
        if not self.config.use_fusion:
            return G
        if G.shape != Y.shape or H.shape[1] != G.shape[1]:
            raise ShapeError("fuse_and_project", H.shape, G.shape, Y.shape)
        A = ops.concat_cols([G, Y])
        U = ops.add(
            ops.matmul(A, ops.transpose(self.params["fusion.w_a"])),
            ops.tile_rows(self.params["fusion.b_a"], self.taxonomy.n),
        )
        alpha = ops.softmax_rows(ops.matmul(U, ops.transpose(H)))
        return ops.matmul(alpha, H)

    def classify(self, G: Tensor) -> Tensor:
        """S = W_s [g_1 || ... || g_n] + b_s as an (n x 1) column."""
        n, d = self.taxonomy.n, self.config.d
        if G.shape != (n, d):
            raise ShapeError("classify", G.shape, (n, d))
        flat = ops.reshape(G, 1, n * d)
        return ops.add(
            ops.matmul(self.params["classifier.w_s"], ops.transpose(flat)),
            self.params["classifier.b_s"],
        )

    @staticmethod
    def predict(S: Union[Tensor, np.ndarray]) -> LabelVector:
        """Labels with a strictly positive logit; no ancestor closure is applied."""
        s = np.asarray(S.data if isinstance(S, Tensor) else S, dtype=np.float64).ravel()
        if not np.all(np.isfinite(s)):
            raise NumericError("non-finite logit in prediction", tensor_name="S")
        return (s > 0).astype(np.int8)

    def forward_document(self, token_ids: Sequence[int], Y: Tensor) -> ForwardOutput:
        H = self.encode_tokens(token_ids)
        G = self.label_aware_embeddings(H, Y)
        Z = self.fuse_and_project(H, G, Y)
        return ForwardOutput(H=H, G=G, Z=Z, S=self.classify(G))

    def forward(self, documents: Sequence[Document]) -> List[ForwardOutput]:
        """Forward a batch; the hierarchy propagation is shared by every document."""
        Y = self.propagate_hierarchy()
        return [self.forward_document(doc.token_ids, Y) for doc in documents]

    def predict_documents(self, documents: Sequence[Document]) -> List[LabelVector]:
        Y = self.propagate_hierarchy()
        predictions = []
        for doc in documents:
            H = self.encode_tokens(doc.token_ids)
            predictions.append(self.predict(self.classify(self.label_aware_embeddings(H, Y))))
        return predictions

    def save(self, path: str, vocab: Vocab, epoch: int, val_macro_f1: Optional[float] = None) -> str:
        header = CheckpointHeader(
            config=self.config.model_dump(),
            taxonomy_hash=self.taxonomy.content_hash,
            labels=list(self.taxonomy.labels),
            vocab=vocab.to_list(),
            epoch=epoch,
            val_macro_f1=val_macro_f1,
        )
        return CheckpointStore(path).write(header, self.params.to_arrays())

    @classmethod
    def load(cls, path: str, taxonomy: Taxonomy) -> Tuple["HJCLModel", Vocab, CheckpointHeader]:
        """
        Rebuild a model from a checkpoint written by `save`.

        :raises CheckpointError: On integrity failure or a taxonomy that differs from
            the one the checkpoint was trained on.
        """
        header, arrays = CheckpointStore(path).read()
        if header.taxonomy_hash != taxonomy.content_hash:
            logger.error(f"Taxonomy hash mismatch for {path}")
            raise CheckpointError(
                f"checkpoint was trained on taxonomy {header.taxonomy_hash[:12]}, "
                f"got {taxonomy.content_hash[:12]}"
            )
        config = ModelConfig(**header.config)
        vocab = Vocab.from_list(header.vocab)
        # Shapes only; values are overwritten from the checkpoint.
        model = cls.create(config, taxonomy, vocab)
        model.params.load_arrays(arrays)
        return model, vocab, header
