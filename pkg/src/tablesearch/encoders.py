"""Question/passage encoders: deterministic hashing reference encoder plus an HTTP client."""

import re
from dataclasses import dataclass, field

import numpy as np
import requests

TOKEN_RE = re.compile(r"[a-z0-9]+")

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF


class EncoderError(Exception):
    pass


@dataclass
class EncoderSpec:
    dim: int = 768
    kind: str = "reference-hash"  # "reference-hash" | "external"
    endpoint: str = ""
    model: str = "default"
    timeout: float = 30.0
    max_batch: int = 64


def tokenize(text: str) -> list[str]:
    return TOKEN_RE.findall(text.lower())


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & MASK64
    return h


def _features(tokens: list[str]):
    for tok in tokens:
        yield tok
        for i in range(len(tok) - 2):
            yield tok[i:i + 3]


def _hash_encode(text: str, dim: int) -> np.ndarray:
    vec = np.zeros(dim, dtype=np.float64)
    seen: dict[str, int] = {}
    for feat in _features(tokenize(text)):
        occ = seen.get(feat, 0) + 1
        seen[feat] = occ
        h = fnv1a64(feat.encode())
        sign = 1.0 if (h >> 63) == 0 else -1.0
        vec[h % dim] += sign / np.sqrt(occ)
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


class ExternalEncoderClient:
    """Batched HTTP client: POST {model, texts} -> {vectors}."""

    def __init__(self, spec: EncoderSpec):
        if not spec.endpoint:
            raise EncoderError("external encoder requires an endpoint")
        self.spec = spec

    def encode(self, texts: list[str]) -> np.ndarray:
        out = []
        for start in range(0, len(texts), self.spec.max_batch):
            batch = texts[start:start + self.spec.max_batch]
            resp = requests.post(
                self.spec.endpoint,
                json={"model": self.spec.model, "texts": batch},
                timeout=self.spec.timeout,
            )
            resp.raise_for_status()
            vectors = resp.json()["vectors"]
            for v in vectors:
                if len(v) != self.spec.dim:
                    raise EncoderError(f"encoder returned dim {len(v)}, expected {self.spec.dim}")
            out.extend(vectors)
        return np.asarray(out, dtype=np.float64).reshape(len(texts), self.spec.dim)


def encode_passage(text: str, spec: EncoderSpec) -> np.ndarray:
    if spec.dim < 8:
        raise EncoderError("encoder dimension must be >= 8")
    if spec.kind == "reference-hash":
        return _hash_encode(text, spec.dim)
    if spec.kind == "external":
        return ExternalEncoderClient(spec).encode([text])[0]
    raise EncoderError(f"unknown encoder kind: {spec.kind}")


def encode_question(text: str, spec: EncoderSpec) -> np.ndarray:
    # The reference encoder is symmetric; the dual entry point exists so an
    # asymmetric external encoder can plug in.
    return encode_passage(text, spec)


def encode_batch(texts: list[str], spec: EncoderSpec) -> np.ndarray:
    if spec.kind == "external":
        return ExternalEncoderClient(spec).encode(texts)
    return np.stack([encode_passage(t, spec) for t in texts]) if texts else np.zeros((0, spec.dim))


def similarity(q: np.ndarray, p: np.ndarray) -> float:
    if q.shape != p.shape:
        raise EncoderError(f"dimension mismatch: {q.shape} vs {p.shape}")
    return float(np.dot(q, p))
