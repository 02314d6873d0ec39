"""Deterministic stand-in encoders: a random-projection patch encoder and a
signed-hashing bag-of-words sentence encoder."""
import hashlib
import math

import numpy as np

from .errors import DimensionError
from .metrics import tokenize


class PatchEncoder:
    """Maps each ``patch_size x patch_size x channels`` patch to ``dim``
    features through a fixed Gaussian projection with std ``1/sqrt(in_dim)``."""

    def __init__(self, seed=0, dim=768, patch_size=16, channels=3):
        self.seed = seed
        self.dim = dim
        self.patch_size = patch_size
        self.channels = channels
        in_dim = patch_size * patch_size * channels
        rng = np.random.default_rng(seed)
        self.projection = rng.normal(0.0, 1.0 / math.sqrt(in_dim), (dim, in_dim))
        self.projection.setflags(write=False)

    def patches(self, image):
        """``(n_patches, ps*ps*C)`` with patches in row-major grid order."""
        img = np.asarray(image, dtype=np.float64)
        if img.ndim == 2:
            img = img[:, :, None]
        h, w, c = img.shape
        ps = self.patch_size
        if c != self.channels or h % ps or w % ps:
            raise DimensionError(f"image shape {img.shape} incompatible with {ps}px patches of {self.channels} channels")
        blocks = img.reshape(h // ps, ps, w // ps, ps, c).transpose(0, 2, 1, 3, 4)
        return blocks.reshape(-1, ps * ps * c)

    def encode_patches(self, image, indices=None):
        """Row ``p`` is ``projection @ flatten(patch_p)``.

        With ``indices`` only those rows are computed; the rest are zero,
        which is what a masked image with those patches kept would give.
        """
        flat = self.patches(image)
        if indices is None:
            return flat @ self.projection.T
        out = np.zeros((flat.shape[0], self.dim))
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size:
            out[idx] = flat[idx] @ self.projection.T
        return out


class SentenceEncoder:
    def __init__(self, dim=768, hash_seed=0):
        self.dim = dim
        self.hash_seed = hash_seed
        self._key = int(hash_seed).to_bytes(8, "little")

    def _slot(self, token):
        h = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=self._key).digest()
        v = int.from_bytes(h, "little")
        return v % self.dim, 1.0 if (v >> 63) & 1 else -1.0

    def encode_sentence(self, text):
        tokens = tokenize(text)
        if not tokens:
            raise ValueError("cannot encode an empty sentence")
        vec = np.zeros(self.dim)
        for tok in tokens:
            idx, sign = self._slot(tok)
            vec[idx] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # every token cancelled out through colliding slots of opposite sign
            idx, _ = self._slot(tokens[0])
            vec[idx] = 1.0
            return vec
        return vec / norm
