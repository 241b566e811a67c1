"""Text encoders behind one small interface: encode_batch(texts) -> (n, dim).

Two backends. The default loads a pre-trained transformer checkpoint by name
(local path or cache; nothing is ever fine-tuned). The `hash:` scheme is a
fully offline, deterministic stand-in built from per-token digests; it keeps
the pipeline and tests runnable on machines without model weights and honors
the same pooling contract.
"""

from __future__ import annotations

import hashlib

import numpy as np

POOLINGS = ("mean", "cls")


class EncoderUnavailableError(RuntimeError):
    """The requested encoder cannot be loaded in this environment."""


class HashedEncoder:
    """Deterministic offline encoder: sha256-seeded Gaussian token vectors.

    mean pooling averages per-token vectors; cls pooling derives one vector
    from the digest of the whole text. Identical inputs always produce
    bit-identical outputs, across processes and platforms.
    """

    def __init__(self, dim: int = 64, pooling: str = "mean"):
        if dim <= 0:
            raise ValueError("dim must be positive")
        if pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}")
        self.dim = dim
        self.pooling = pooling

    def _digest_vector(self, payload: bytes) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")
        return np.random.default_rng(seed).standard_normal(self.dim)

    def encode_batch(self, texts: list[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            if self.pooling == "cls":
                out[i] = self._digest_vector(b"cls\x00" + text.encode("utf-8"))
                continue
            tokens = text.split()
            if not tokens:
                tokens = [""]
            vecs = [self._digest_vector(b"tok\x00" + t.encode("utf-8")) for t in tokens]
            out[i] = np.mean(vecs, axis=0)
        return out


class TransformerEncoder:
    """Pre-trained transformer backend (no fine-tuning, CPU, eval mode)."""

    def __init__(self, model_name: str, revision: str | None = None, pooling: str = "mean"):
        if pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}")
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise EncoderUnavailableError(
                "transformers/torch are not installed; install the 'transformer' "
                "extra or use a 'hash:dim=<D>' model"
            ) from exc
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_name, revision=revision)
            self.model = AutoModel.from_pretrained(model_name, revision=revision)
        except Exception as exc:
            raise EncoderUnavailableError(
                f"cannot load encoder {model_name!r} (revision {revision or 'default'}): {exc}. "
                "Pre-download the checkpoint into the local cache or pass a filesystem path."
            ) from exc
        self._torch = torch
        self.model.eval()
        self.pooling = pooling
        self.dim = int(self.model.config.hidden_size)

    def encode_batch(self, texts: list[str]) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            batch = self.tokenizer(
                texts, padding=True, truncation=True, return_tensors="pt"
            )
            hidden = self.model(**batch).last_hidden_state  # (n, tokens, dim)
            if self.pooling == "cls":
                pooled = hidden[:, 0]
            else:
                mask = batch["attention_mask"].unsqueeze(-1).to(hidden.dtype)
                pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1)
        return pooled.cpu().numpy().astype(np.float64)


def make_encoder(model: str, revision: str | None = None, pooling: str = "mean"):
    """`hash:dim=<D>` selects the offline backend; anything else is treated
    as a transformer checkpoint name or path."""
    if model.startswith("hash:"):
        spec = model[len("hash:"):]
        dim = 64
        for part in spec.split("&"):
            if part.startswith("dim="):
                dim = int(part[4:])
            elif part:
                raise ValueError(f"unknown hash encoder option {part!r}")
        return HashedEncoder(dim=dim, pooling=pooling)
    return TransformerEncoder(model, revision=revision, pooling=pooling)
