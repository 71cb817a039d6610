"""Caption retrieval for prompt augmentation.

Captions are embedded into unit vectors, stored in an exact cosine index
(about 40K rows at a few hundred dimensions needs no approximate search)
and queried for the most similar caption, whose STEP file is spliced into
the generation prompt in reserialized, annotated form.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyIndexError,
    EmptyTextError,
    MissingStepFileError,
    RemoteUnavailableError,
)
from .parser import parse_step, serialize_step
from .reserialize import ReserializeOptions, reserialize_dfs

INDEX_FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class LocalHashEmbedder:
    """Deterministic hashed bag-of-words embedder (the offline fallback).

    Lowercase word tokens are hashed into ``dimension`` buckets (stable md5
    hashing, identical across runs and platforms) and the counts, optionally
    idf-weighted, are L2-normalized.
    """

    dimension: int = 512
    idf: dict[str, float] | None = None

    def describe(self) -> dict:
        return {"kind": "local-hash", "dimension": self.dimension}

    def embed(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dimension))
        for row, text in enumerate(texts):
            if not text or not text.strip():
                raise EmptyTextError("cannot embed empty text")
            for token in _TOKEN_RE.findall(text.lower()):
                weight = 1.0 if self.idf is None else self.idf.get(token, 1.0)
                out[row, _bucket(token, self.dimension)] += weight
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


def _bucket(token: str, dimension: int) -> int:
    digest = hashlib.md5(token.encode()).digest()
    return int.from_bytes(digest[:8], "little") % dimension


@dataclass(frozen=True)
class RemoteEmbedder:
    """HTTP JSON embedding service: POST {"texts": [...]} returns
    {"vectors": [[...], ...]}. Never required by the test suite."""

    endpoint: str
    model: str = ""
    api_key: str | None = None
    dimension: int = 0
    timeout_s: float = 30.0
    retries: int = 3

    def describe(self) -> dict:
        return {"kind": "remote", "endpoint": self.endpoint, "model": self.model,
                "dimension": self.dimension}

    def embed(self, texts: list[str]) -> np.ndarray:
        import requests

        for text in texts:
            if not text or not text.strip():
                raise EmptyTextError("cannot embed empty text")
        payload: dict = {"texts": texts}
        if self.model:
            payload["model"] = self.model
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for _ in range(max(1, self.retries)):
            try:
                resp = requests.post(self.endpoint, json=payload, headers=headers,
                                     timeout=self.timeout_s)
                resp.raise_for_status()
                vectors = np.asarray(resp.json()["vectors"], dtype=np.float64)
                norms = np.linalg.norm(vectors, axis=1, keepdims=True)
                norms[norms == 0] = 1.0
                return vectors / norms
            except Exception as exc:  # noqa: BLE001 - any transport failure retries
                last_error = exc
        raise RemoteUnavailableError(f"embedding service failed: {last_error}")


Embedder = LocalHashEmbedder | RemoteEmbedder


def embed_caption(text: str, embedder: Embedder) -> np.ndarray:
    """Unit-normalized embedding of one caption."""
    return embedder.embed([text])[0]


@dataclass(frozen=True)
class CaptionEntry:
    caption: str
    step_ref: str
    embedding: np.ndarray


@dataclass(frozen=True)
class RetrievalHit:
    entry: CaptionEntry
    score: float


@dataclass
class RetrievalIndex:
    entries: list[CaptionEntry]
    matrix: np.ndarray  # (n, dimension), unit rows
    embedder: Embedder

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]

    def save(self, path: Path | str) -> None:
        """Write the versioned JSON-lines container; deterministic bytes for
        the local embedder."""
        lines = [json.dumps({"version": INDEX_FORMAT_VERSION,
                             "dimension": self.dimension,
                             "embedder": self.embedder.describe()},
                            separators=(",", ":"))]
        for entry in self.entries:
            lines.append(json.dumps({"caption": entry.caption,
                                     "step_ref": entry.step_ref,
                                     "embedding": entry.embedding.tolist()},
                                    separators=(",", ":")))
        Path(path).write_text("\n".join(lines) + "\n")

    @staticmethod
    def load(path: Path | str, embedder: Embedder | None = None) -> "RetrievalIndex":
        lines = Path(path).read_text().splitlines()
        if not lines:
            raise EmptyIndexError(f"{path} is empty")
        head = json.loads(lines[0])
        if head.get("version") != INDEX_FORMAT_VERSION:
            raise ValueError(f"unsupported index version {head.get('version')}")
        dimension = int(head["dimension"])
        if embedder is None:
            desc = head.get("embedder", {})
            if desc.get("kind") == "local-hash":
                embedder = LocalHashEmbedder(dimension=int(desc["dimension"]))
            elif desc.get("kind") == "remote":
                embedder = RemoteEmbedder(endpoint=desc.get("endpoint", ""),
                                          model=desc.get("model", ""),
                                          dimension=dimension)
            else:
                raise ValueError(f"unknown embedder descriptor {desc!r}")
        entries = []
        rows = []
        for line in lines[1:]:
            obj = json.loads(line)
            vec = np.asarray(obj["embedding"], dtype=np.float64)
            if vec.shape != (dimension,):
                raise DimensionMismatchError(
                    f"row has dimension {vec.shape}, index says {dimension}")
            entries.append(CaptionEntry(obj["caption"], obj["step_ref"], vec))
            rows.append(vec)
        if not entries:
            raise EmptyIndexError(f"{path} has a header but no rows")
        return RetrievalIndex(entries, np.vstack(rows), embedder)


def build_index(pairs: list[tuple[str, str]], embedder: Embedder) -> RetrievalIndex:
    """Embed (caption, step_ref) pairs into an index. Duplicate captions are
    kept and disambiguated by insertion order."""
    if not pairs:
        raise EmptyIndexError("cannot build an index from zero entries")
    captions = [caption for caption, _ in pairs]
    matrix = embedder.embed(captions)
    if getattr(embedder, "dimension", 0) and matrix.shape[1] != embedder.dimension:
        raise DimensionMismatchError(
            f"embedder produced dimension {matrix.shape[1]}, "
            f"expected {embedder.dimension}")
    entries = [CaptionEntry(caption, step_ref, matrix[i])
               for i, (caption, step_ref) in enumerate(pairs)]
    return RetrievalIndex(entries, matrix, embedder)


def query_nearest(index: RetrievalIndex, caption: str, k: int = 1,
                  *, exclude_caption: str | None = None) -> list[RetrievalHit]:
    """Top-k entries by cosine similarity, ties broken by insertion order.

    ``exclude_caption`` drops exact caption matches, the leave-one-out mode
    used when augmenting a dataset against itself.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.entries:
        raise EmptyIndexError("query against an empty index")
    query = embed_caption(caption, index.embedder)
    scores = index.matrix @ query
    order = np.argsort(-scores, kind="stable")
    hits: list[RetrievalHit] = []
    for i in order:
        entry = index.entries[int(i)]
        if exclude_caption is not None and entry.caption == exclude_caption:
            continue
        hits.append(RetrievalHit(entry, float(scores[int(i)])))
        if len(hits) == k:
            break
    return hits


DEFAULT_PROMPT_TEMPLATE = """{instruction}

Reference model:
{retrieved_step}

Description: {caption}
"""

DEFAULT_INSTRUCTION = (
    "Generate an ISO 10303-21 STEP file for the object described below."
)


def assemble_prompt(caption: str, hit: RetrievalHit | None,
                    template: str = DEFAULT_PROMPT_TEMPLATE,
                    instruction: str = DEFAULT_INSTRUCTION,
                    reserialize_opts: ReserializeOptions = ReserializeOptions()) -> str:
    """Render the generation prompt.

    The retrieved STEP file (a path or inline Part-21 text) is inserted in
    reserialized, annotated form. With ``hit=None`` the retrieved slot is
    elided and blank-line runs collapse, covering the no-retrieval mode.
    """
    if hit is None:
        retrieved = ""
    else:
        retrieved = _load_retrieved_step(hit.entry.step_ref, reserialize_opts)
    rendered = template.format(instruction=instruction,
                               retrieved_step=retrieved,
                               caption=caption)
    if hit is None:
        rendered = re.sub(r"\n{3,}", "\n\n", rendered)
    return rendered


def _load_retrieved_step(step_ref: str, opts: ReserializeOptions) -> str:
    if step_ref.lstrip().startswith("ISO-10303-21"):
        text = step_ref
    else:
        path = Path(step_ref)
        if not path.is_file():
            raise MissingStepFileError(f"retrieved STEP file not found: {step_ref}")
        text = path.read_text()
    return serialize_step(reserialize_dfs(parse_step(text), opts)).rstrip("\n")
