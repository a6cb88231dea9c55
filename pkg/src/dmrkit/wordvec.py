"""Plain-text word vectors (one token followed by values per line)."""

from __future__ import annotations

import numpy as np


class WordVectors:
    """Token -> vector lookup with a zero fallback for OOV tokens."""

    def __init__(self, vectors: dict[str, np.ndarray], dimension: int = 100):
        self.dimension = dimension
        self.vectors = {}
        for token, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (dimension,):
                raise ValueError(
                    f"vector for {token!r} has shape {arr.shape}, expected ({dimension},)"
                )
            self.vectors[token] = arr
        self._zero = np.zeros(dimension, dtype=np.float64)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def get(self, token: str) -> np.ndarray:
        return self.vectors.get(token, self._zero)

    def mean(self, tokens: list[str]) -> np.ndarray:
        """Mean over all tokens; OOV tokens contribute the zero vector."""
        if not tokens:
            return self._zero.copy()
        acc = np.zeros(self.dimension, dtype=np.float64)
        for t in tokens:
            acc += self.get(t)
        return acc / len(tokens)

    @classmethod
    def load(cls, path, dimension: int | None = None) -> "WordVectors":
        vectors: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 2:
                    continue
                token = parts[0]
                values = np.array([float(x) for x in parts[1:]], dtype=np.float64)
                if dimension is None:
                    dimension = len(values)
                if len(values) != dimension:
                    raise ValueError(
                        f"vector for {token!r} has {len(values)} values, expected {dimension}"
                    )
                vectors[token] = values
        if dimension is None:
            raise ValueError("empty word-vector file")
        return cls(vectors, dimension)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for token, vec in self.vectors.items():
                fh.write(token + " " + " ".join(f"{x:.6f}" for x in vec) + "\n")
