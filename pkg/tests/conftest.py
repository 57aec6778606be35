import numpy as np
import pytest


class FixedEncoder:
    """Test double: returns pre-assigned unit rows for known texts."""

    def __init__(self, table: dict[str, np.ndarray]):
        first = next(iter(table.values()))
        self.dim = int(first.shape[0])
        self.table = {}
        for text, vec in table.items():
            vec = np.asarray(vec, dtype=np.float64)
            norm = np.linalg.norm(vec)
            self.table[text] = vec / norm if norm else vec

    def encode(self, texts):
        return np.stack([self.table[t] for t in texts])

    def fingerprint(self):
        return f"fixed-encoder:n={len(self.table)}"


@pytest.fixture
def fixed_encoder_factory():
    return FixedEncoder
