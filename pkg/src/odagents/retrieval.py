"""Multimodal knowledge-base agent.

Covers the whole retrieval stack: corpus ingestion (text chunks, tables with
a content-hash index, images with captions), dense + sparse hybrid search
with score fusion, lexical reranking, model-driven query decomposition, and
grounded answer generation with provenance.

Corpora are desk-scale, so dense scoring is exact brute-force cosine over the
index; there is deliberately no approximate-NN layer.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Protocol, Sequence

import numpy as np

from .conversation import image_attachment, table_attachment, user_message
from .gateway import ChatRequest, GatewayError, ModelGateway

INDEX_FORMAT_VERSION = 1
DEFAULT_DIMENSION = 512

TEXT_SUFFIXES = {".txt", ".md"}
TABLE_SUFFIXES = {".csv", ".tsv"}
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".gif", ".svg"}
DESCRIPTOR_SUFFIX = ".desc"
CAPTION_SUFFIX = ".caption"


class RetrievalError(Exception):
    pass


# ---------------------------------------------------------------------------
# Chunking


@dataclass(frozen=True)
class TextChunk:
    text: str
    start: int
    end: int
    token_count: int


@dataclass(frozen=True)
class ChunkParams:
    target_tokens: int = 300
    overlap_tokens: int = 50

    def __post_init__(self) -> None:
        if self.target_tokens <= 0 or self.overlap_tokens <= 0:
            raise ValueError("chunk params must be positive")
        if self.overlap_tokens >= self.target_tokens:
            raise ValueError("overlap must be smaller than target")


_WORD_RE = re.compile(r"[A-Za-z0-9]+|[^A-Za-z0-9\s]")
_PARA_RE = re.compile(r"\n\s*\n")
_SENT_RE = re.compile(r"(?<=[.!?])\s+")


def _token_spans(text: str) -> list[tuple[int, int]]:
    return [m.span() for m in _WORD_RE.finditer(text)]


def chunk_document(text: str, params: ChunkParams = ChunkParams()) -> list[TextChunk]:
    """Split a document into chunks of roughly ``target_tokens`` tokens.

    Boundaries prefer paragraph breaks, then sentence breaks; only a piece
    with no usable boundary is hard-split into token windows, and only those
    windows overlap (by ``overlap_tokens``). Chunks are exact substrings of
    the input: concatenating each chunk minus its overlap with the previous
    one reconstructs the document (see :func:`reassemble_chunks`).
    """
    if not text:
        return []
    if _count_tokens_between(text, 0, len(text)) <= params.target_tokens:
        return [TextChunk(text, 0, len(text), _count_tokens_between(text, 0, len(text)))]
    chunks: list[TextChunk] = []
    for a, b in _split_range(text, 0, len(text), params, level=0):
        chunks.extend(_window_piece(text, a, b, params))
    return chunks


def _split_range(text: str, start: int, end: int, params: ChunkParams, level: int) -> list[tuple[int, int]]:
    """Char ranges at most ``target_tokens`` long where a paragraph/sentence
    boundary allows it; level 0 = paragraphs, level 1 = sentences."""
    if _count_tokens_between(text, start, end) <= params.target_tokens or level > 1:
        return [(start, end)]
    splitter = _PARA_RE if level == 0 else _SENT_RE
    pieces = _pieces(text, start, end, splitter)
    if len(pieces) == 1:
        return _split_range(text, start, end, params, level + 1)
    out: list[tuple[int, int]] = []
    for a, b in _greedy_pack(text, pieces, params.target_tokens):
        if _count_tokens_between(text, a, b) > params.target_tokens:
            out.extend(_split_range(text, a, b, params, level + 1))
        else:
            out.append((a, b))
    return out


def _pieces(text: str, start: int, end: int, splitter: re.Pattern[str]) -> list[tuple[int, int]]:
    spans: list[tuple[int, int]] = []
    pos = start
    for m in splitter.finditer(text, start, end):
        if pos < m.end():
            spans.append((pos, m.end()))
            pos = m.end()
    if pos < end:
        spans.append((pos, end))
    return spans


def _count_tokens_between(text: str, a: int, b: int) -> int:
    return len(_WORD_RE.findall(text, a, b))


def _greedy_pack(text: str, pieces: list[tuple[int, int]], target: int) -> list[tuple[int, int]]:
    groups: list[tuple[int, int]] = []
    cur_start: int | None = None
    acc = 0
    for a, b in pieces:
        n = _count_tokens_between(text, a, b)
        if cur_start is None:
            cur_start, acc = a, n
        elif acc + n > target:
            groups.append((cur_start, a))
            cur_start, acc = a, n
        else:
            acc += n
    if cur_start is not None:
        groups.append((cur_start, pieces[-1][1]))
    return groups


def _window_piece(text: str, a: int, b: int, params: ChunkParams) -> list[TextChunk]:
    """Hard-split one piece into overlapping token windows if it exceeds the
    target; otherwise emit it as a single chunk."""
    spans = [(m.start(), m.end()) for m in _WORD_RE.finditer(text, a, b)]
    n = len(spans)
    if n <= params.target_tokens:
        return [TextChunk(text[a:b], a, b, n)]
    step = params.target_tokens - params.overlap_tokens
    chunks: list[TextChunk] = []
    i = 0
    while True:
        j = min(i + params.target_tokens, n)
        c_start = a if i == 0 else spans[i][0]
        c_end = b if j == n else spans[j - 1][1]
        chunks.append(TextChunk(text[c_start:c_end], c_start, c_end, j - i))
        if j == n:
            break
        i += step
    return chunks


def reassemble_chunks(chunks: Sequence[TextChunk]) -> str:
    """Inverse of :func:`chunk_document`: drop each chunk's overlap with its
    predecessor and concatenate."""
    out: list[str] = []
    prev_end = 0
    for c in chunks:
        out.append(c.text[max(0, prev_end - c.start):])
        prev_end = c.end
    return "".join(out)


# ---------------------------------------------------------------------------
# Embeddings


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def _terms(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


class HashEmbedder:
    """Deterministic test embedder: each term hashes to a seeded pseudo-random
    direction; a text embeds as the normalized sum of its term vectors."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION, seed: int = 0) -> None:
        self.dimension = dimension
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _term_vector(self, term: str) -> np.ndarray:
        found = self._cache.get(term)
        if found is not None:
            return found
        digest = hashlib.sha256(f"{self.seed}:{term}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        vec = rng.standard_normal(self.dimension)
        self._cache[term] = vec
        return vec

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dimension))
        for i, text in enumerate(texts):
            terms = _terms(text)
            if not terms:
                out[i, 0] = 1.0
                continue
            acc = np.zeros(self.dimension)
            for t in terms:
                acc += self._term_vector(t)
            norm = np.linalg.norm(acc)
            out[i] = acc / norm if norm > 0 else acc
        return out


class RemoteEmbedder:
    """Client for a hosted embeddings endpoint (standard embeddings wire
    shape: ``{"model", "input"}`` in, ``{"data": [{"embedding"}]}`` out)."""

    def __init__(self, endpoint: str, model_name: str, dimension: int = DEFAULT_DIMENSION) -> None:
        import httpx

        self.endpoint = endpoint
        self.model_name = model_name
        self.dimension = dimension
        self._client = httpx.Client(timeout=60.0)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        resp = self._client.post(self.endpoint, json={"model": self.model_name, "input": list(texts)})
        resp.raise_for_status()
        data = resp.json()["data"]
        return np.asarray([row["embedding"] for row in data], dtype=float)


# ---------------------------------------------------------------------------
# Index


@dataclass
class DocumentChunk:
    chunk_id: str
    source_doc: str
    modality: str  # text | table | image
    descriptor_text: str
    payload_ref: str = ""
    embedding: np.ndarray | None = None
    sparse_terms: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.descriptor_text:
            raise ValueError("descriptor_text must be non-empty")
        if self.modality in ("table", "image") and not self.payload_ref:
            raise ValueError(f"{self.modality} chunk requires a payload_ref")


def normalized_table_hash(columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """Digest of the trimmed cells, row-major, unit-separator joined (header
    row included). Whitespace-only cell differences do not change the hash;
    hash collisions are treated as identity."""
    cells = [str(c).strip() for c in columns]
    for row in rows:
        cells.extend(str(v).strip() for v in row)
    return hashlib.sha256("\x1f".join(cells).encode()).hexdigest()


@dataclass
class TableRecord:
    content_hash: str
    descriptor_text: str
    columns: list[str]
    rows: list[list[str]]


@dataclass
class ImageRecord:
    image_uri: str
    caption: str
    descriptor_text: str


@dataclass
class IndexStats:
    chunks: int = 0
    tables: int = 0
    images: int = 0
    skipped: list[str] = field(default_factory=list)


class VectorIndex:
    """Exact-cosine vector index with disjoint per-modality partitions."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION) -> None:
        self.dimension = dimension
        self._chunks: dict[str, DocumentChunk] = {}
        self.tables: dict[str, TableRecord] = {}
        self.images: dict[str, ImageRecord] = {}

    def add(self, chunk: DocumentChunk) -> None:
        if chunk.embedding is None or chunk.embedding.shape != (self.dimension,):
            raise RetrievalError(
                f"chunk {chunk.chunk_id}: embedding dimension mismatch (index dimension {self.dimension})"
            )
        self._chunks[chunk.chunk_id] = chunk

    def __len__(self) -> int:
        return len(self._chunks)

    def get(self, chunk_id: str) -> DocumentChunk:
        return self._chunks[chunk_id]

    def entries(self, modality: str | None = None) -> list[DocumentChunk]:
        chunks = sorted(self._chunks.values(), key=lambda c: c.chunk_id)
        if modality is None:
            return chunks
        return [c for c in chunks if c.modality == modality]

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": INDEX_FORMAT_VERSION,
            "dimension": self.dimension,
            "chunks": [
                {
                    "chunk_id": c.chunk_id,
                    "source_doc": c.source_doc,
                    "modality": c.modality,
                    "descriptor_text": c.descriptor_text,
                    "payload_ref": c.payload_ref,
                    "embedding": [round(float(x), 12) for x in c.embedding],
                    "sparse_terms": c.sparse_terms,
                }
                for c in self.entries()
            ],
            "tables": {
                h: {"descriptor_text": t.descriptor_text, "columns": t.columns, "rows": t.rows}
                for h, t in sorted(self.tables.items())
            },
            "images": {
                u: {"caption": i.caption, "descriptor_text": i.descriptor_text}
                for u, i in sorted(self.images.items())
            },
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if data.get("format_version") != INDEX_FORMAT_VERSION:
            raise RetrievalError(f"unsupported index format version {data.get('format_version')!r}")
        index = cls(dimension=data["dimension"])
        for c in data["chunks"]:
            index.add(
                DocumentChunk(
                    chunk_id=c["chunk_id"],
                    source_doc=c["source_doc"],
                    modality=c["modality"],
                    descriptor_text=c["descriptor_text"],
                    payload_ref=c.get("payload_ref", ""),
                    embedding=np.asarray(c["embedding"], dtype=float),
                    sparse_terms={k: int(v) for k, v in c.get("sparse_terms", {}).items()},
                )
            )
        for h, t in data.get("tables", {}).items():
            index.tables[h] = TableRecord(h, t["descriptor_text"], list(t["columns"]), [list(r) for r in t["rows"]])
        for u, i in data.get("images", {}).items():
            index.images[u] = ImageRecord(u, i["caption"], i["descriptor_text"])
        return index


# ---------------------------------------------------------------------------
# Search


@dataclass
class RetrievalResult:
    chunk: DocumentChunk
    dense_score: float
    sparse_score: float
    fused_score: float
    rerank_score: float = 0.0


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _sparse_score(query_terms: list[str], chunk: DocumentChunk, idf: dict[str, float]) -> float:
    return sum(chunk.sparse_terms.get(t, 0) * idf.get(t, 0.0) for t in query_terms)


def _idf(query_terms: Iterable[str], pool: Sequence[DocumentChunk]) -> dict[str, float]:
    n = len(pool)
    out: dict[str, float] = {}
    for t in set(query_terms):
        df = sum(1 for c in pool if t in c.sparse_terms)
        out[t] = math.log(n / df) if df else 0.0
    return out


def _minmax(values: list[float]) -> list[float]:
    if not values:
        return values
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def hybrid_search(
    index: VectorIndex,
    query: str,
    embedder: EmbeddingProvider,
    k: int,
    alpha: float = 0.5,
    modality: str | None = None,
) -> list[RetrievalResult]:
    """Fused dense+sparse ranking over the index (or one modality partition).

    Dense is cosine similarity against the query embedding; sparse is the sum
    of tf*idf weights of the query terms (idf = ln(pool/df), document = chunk).
    Both are min-max normalized over the candidate pool, fused as
    ``alpha*dense + (1-alpha)*sparse``, sorted descending with ties broken by
    chunk_id ascending.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not query:
        raise ValueError("query must be non-empty")
    pool = index.entries(modality)
    if not pool:
        return []
    qvec = embedder.embed([query])[0]
    qterms = _terms(query)
    idf = _idf(qterms, pool)
    dense = [_cosine(qvec, c.embedding) for c in pool]
    sparse = [_sparse_score(qterms, c, idf) for c in pool]
    ndense, nsparse = _minmax(dense), _minmax(sparse)
    results = [
        RetrievalResult(c, dense[i], sparse[i], alpha * ndense[i] + (1 - alpha) * nsparse[i])
        for i, c in enumerate(pool)
    ]
    results.sort(key=lambda r: (-r.fused_score, r.chunk.chunk_id))
    return results[:k]


def overlap_f1(query: str, descriptor: str) -> float:
    """Lexical-overlap F1 between the distinct terms of two texts."""
    q, d = set(_terms(query)), set(_terms(descriptor))
    if not q or not d:
        return 0.0
    overlap = len(q & d)
    if overlap == 0:
        return 0.0
    precision = overlap / len(d)
    recall = overlap / len(q)
    return 2 * precision * recall / (precision + recall)


def rerank(query: str, candidates: list[RetrievalResult], n: int) -> list[RetrievalResult]:
    """Score candidates by lexical-overlap F1 against the query (pluggable
    with a model-backed scorer) and keep the top ``n``. Ties fall back to
    fused score, then chunk id."""
    if n > len(candidates):
        raise ValueError("n must not exceed the number of candidates")
    scored = [
        RetrievalResult(r.chunk, r.dense_score, r.sparse_score, r.fused_score, overlap_f1(query, r.chunk.descriptor_text))
        for r in candidates
    ]
    scored.sort(key=lambda r: (-r.rerank_score, -r.fused_score, r.chunk.chunk_id))
    return scored[:n]


# ---------------------------------------------------------------------------
# Ingestion


def _read_table_file(path: Path) -> tuple[list[str], list[list[str]]]:
    import csv

    delimiter = "\t" if path.suffix == ".tsv" else ","
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError("empty table file")
    return rows[0], rows[1:]


def _sidecar(path: Path, suffix: str) -> str | None:
    candidate = path.with_name(path.name + suffix)
    if candidate.exists():
        return candidate.read_text(encoding="utf-8").strip()
    return None


class DescriptorProvider(Protocol):
    def describe(self, kind: str, content: str) -> str: ...


class ChatDescriptorProvider:
    """Generates table/image descriptors through the configured chat backend
    when no precomputed sidecar file is present."""

    def __init__(self, gateway: ModelGateway, backend_id: str, agent_tag: str = "ir.describe") -> None:
        self.gateway = gateway
        self.backend_id = backend_id
        self.agent_tag = agent_tag

    def describe(self, kind: str, content: str) -> str:
        req = ChatRequest(
            (user_message(f"Describe this {kind} for retrieval:\n{content}"),),
            agent=self.agent_tag,
        )
        resp = self.gateway.complete(self.backend_id, req)
        return resp.message.content.strip()


def ingest_corpus(
    corpus_dir: str | Path,
    embedder: EmbeddingProvider,
    descriptor_provider: DescriptorProvider | None = None,
    chunk_params: ChunkParams = ChunkParams(),
) -> tuple[VectorIndex, IndexStats]:
    """Build a fresh index from a corpus directory.

    Layout: plain text/markdown documents; tables as delimited files with a
    ``<name>.desc`` descriptor sidecar; images with a ``<name>.caption``
    sidecar. Identical tables (by content hash) are deduplicated. Unreadable
    files are skipped with a warning in the stats; embedding-dimension
    mismatches abort the ingestion.
    """
    corpus = Path(corpus_dir)
    index = VectorIndex(dimension=embedder.dimension)
    stats = IndexStats()

    for path in sorted(corpus.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(corpus).as_posix()
        suffix = path.suffix.lower()
        try:
            if suffix in TEXT_SUFFIXES:
                text = path.read_text(encoding="utf-8")
                for i, chunk in enumerate(chunk_document(text, chunk_params)):
                    _add_chunk(index, embedder, f"{rel}#{i}", rel, "text", chunk.text, "")
                    stats.chunks += 1
            elif suffix in TABLE_SUFFIXES:
                columns, rows = _read_table_file(path)
                content_hash = normalized_table_hash(columns, rows)
                descriptor = _sidecar(path, DESCRIPTOR_SUFFIX)
                if descriptor is None:
                    if descriptor_provider is None:
                        raise ValueError(f"no descriptor sidecar ({path.name}{DESCRIPTOR_SUFFIX}) and no provider")
                    preview = ", ".join(columns)
                    descriptor = descriptor_provider.describe("table", preview)
                if content_hash not in index.tables:
                    index.tables[content_hash] = TableRecord(content_hash, descriptor, columns, rows)
                    _add_chunk(index, embedder, f"table:{content_hash[:16]}", rel, "table", descriptor, content_hash)
                    stats.chunks += 1
                    stats.tables += 1
            elif suffix in IMAGE_SUFFIXES:
                caption = _sidecar(path, CAPTION_SUFFIX)
                if caption is None:
                    if descriptor_provider is None:
                        raise ValueError(f"no caption sidecar ({path.name}{CAPTION_SUFFIX}) and no provider")
                    caption = descriptor_provider.describe("image", rel)
                uri = rel
                index.images[uri] = ImageRecord(uri, caption, caption)
                _add_chunk(index, embedder, f"image:{rel}", rel, "image", caption, uri)
                stats.chunks += 1
                stats.images += 1
        except RetrievalError:
            raise
        except (OSError, ValueError, UnicodeDecodeError) as exc:
            stats.skipped.append(f"{rel}: {exc}")

    return index, stats


def _add_chunk(
    index: VectorIndex,
    embedder: EmbeddingProvider,
    chunk_id: str,
    source: str,
    modality: str,
    descriptor: str,
    payload_ref: str,
) -> None:
    embedding = embedder.embed([descriptor])[0]
    terms = _terms(descriptor)
    sparse: dict[str, int] = {}
    for t in terms:
        sparse[t] = sparse.get(t, 0) + 1
    index.add(
        DocumentChunk(
            chunk_id=chunk_id,
            source_doc=source,
            modality=modality,
            descriptor_text=descriptor,
            payload_ref=payload_ref,
            embedding=embedding,
            sparse_terms=sparse,
        )
    )


# ---------------------------------------------------------------------------
# Agent


NO_KNOWLEDGE_BASE_MESSAGE = "No knowledge base is loaded; ingest a corpus before asking retrieval questions."


class IRAgent:
    """Inference pipeline: decompose the query, retrieve per sub-query, union,
    rerank, then generate a grounded answer carrying table/image attachments
    and the provenance of every chunk placed in the prompt."""

    def __init__(
        self,
        index: VectorIndex,
        embedder: EmbeddingProvider,
        gateway: ModelGateway,
        backend_id: str,
        k: int = 8,
        n: int = 4,
        alpha: float = 0.5,
        instructions: str = "Answer the question using only the sources below. Cite source tags.",
    ) -> None:
        self.index = index
        self.embedder = embedder
        self.gateway = gateway
        self.backend_id = backend_id
        self.k = k
        self.n = n
        self.alpha = alpha
        self.instructions = instructions

    def decompose_query(self, query: str) -> list[str]:
        """on backend failure the original query is the sole sub-query."""
        prompt = (
            "Split the question into independent retrieval sub-queries, one per line. "
            f"Return the question unchanged if it is already simple.\n\nQuestion: {query}"
        )
        try:
            resp = self.gateway.complete(
                self.backend_id, ChatRequest((user_message(prompt),), agent="ir.decompose")
            )
        except GatewayError:
            return [query]
        subs = [ln.strip().lstrip("- ").strip() for ln in resp.message.content.splitlines()]
        subs = [s for s in subs if s]
        return subs or [query]

    def retrieve(self, query: str) -> list[RetrievalResult]:
        union: dict[str, RetrievalResult] = {}
        for sub in self.decompose_query(query):
            for r in hybrid_search(self.index, sub, self.embedder, self.k, self.alpha):
                prev = union.get(r.chunk.chunk_id)
                if prev is None or r.fused_score > prev.fused_score:
                    union[r.chunk.chunk_id] = r
        candidates = sorted(union.values(), key=lambda r: (-r.fused_score, r.chunk.chunk_id))
        return rerank(query, candidates, min(self.n, len(candidates)))

    def answer(self, question: str, context: str = "") -> dict[str, Any]:
        if len(self.index) == 0:
            return {"text": NO_KNOWLEDGE_BASE_MESSAGE, "attachments": [], "provenance": []}
        top = self.retrieve(question)
        blocks = []
        provenance = []
        attachments = []
        for r in top:
            blocks.append(f"[source: {r.chunk.chunk_id}]\n{r.chunk.descriptor_text}")
            provenance.append(r.chunk.chunk_id)
            if r.chunk.modality == "table":
                record = self.index.tables[r.chunk.payload_ref]
                attachments.append(table_attachment(record.columns, record.rows))
            elif r.chunk.modality == "image":
                record = self.index.images[r.chunk.payload_ref]
                attachments.append(image_attachment(record.image_uri, record.caption))
        prompt_parts = [self.instructions]
        if context:
            prompt_parts.append(f"Context: {context}")
        prompt_parts.append("\n\n".join(blocks))
        prompt_parts.append(f"Question: {question}")
        req = ChatRequest((user_message("\n\n".join(prompt_parts)),), agent="ir.generate")
        resp = self.gateway.complete(self.backend_id, req)
        return {
            "text": resp.message.content,
            "attachments": [a.to_dict() for a in attachments],
            "provenance": provenance,
        }
