"""
Multimodal knowledge retrieval
==============================

A corpus directory holds text documents, tables (with descriptor sidecars)
and images (with caption sidecars). Ingestion chunks, embeds, and indexes all
of them; search fuses dense cosine similarity with sparse tf-idf weights, and
a lexical reranker picks the chunks that enter the generation prompt. A table
that makes it into the prompt rides along as a typed attachment.
"""

import tempfile
from pathlib import Path

from odagents.gateway import BackendConfig, ModelGateway, ScriptedBackend, ScriptRule
from odagents.retrieval import HashEmbedder, IRAgent, hybrid_search, ingest_corpus

root = Path(tempfile.mkdtemp(prefix="retrieval-demo-"))
(root / "guide.md").write_text(
    "GPU nodes draw up to 560 W under load.\n\n"
    "Idle GPU power is about 75 W per device.\n\n"
    "Jobs are scheduled in batch queues with a 24 hour walltime limit.",
    encoding="utf-8",
)
(root / "power.csv").write_text("node,watts\nn1,410\nn2,395\n", encoding="utf-8")
(root / "power.csv.desc").write_text("Table of per-node power draw in watts", encoding="utf-8")
(root / "cooling.png").write_bytes(b"\x89PNG stub")
(root / "cooling.png.caption").write_text("Diagram of the liquid cooling loop", encoding="utf-8")

embedder = HashEmbedder()  # deterministic 512-dim test embedder
index, stats = ingest_corpus(root, embedder)
print(f"ingested: {stats.chunks} chunks, {stats.tables} tables, {stats.images} images")

print("\nhybrid search for 'per-node power draw':")
for r in hybrid_search(index, "per-node power draw", embedder, k=3):
    print(f"  fused={r.fused_score:.3f} dense={r.dense_score:.3f} sparse={r.sparse_score:.3f}"
          f"  [{r.chunk.modality}] {r.chunk.descriptor_text[:50]}")

# The generation step is driven by the scripted backend here, so the whole
# pipeline runs offline.
rules = [
    ScriptRule(agent="ir.decompose", text=""),
    ScriptRule(agent="ir.generate", contains=("power draw",), text="n1 draws 410 W, n2 draws 395 W."),
    ScriptRule(text="see the documentation"),
]
gateway = ModelGateway()
gateway.register(BackendConfig("demo", "scripted", script_path="inline"), impl=ScriptedBackend(rules))

agent = IRAgent(index, embedder, gateway, "demo", k=4, n=2)
envelope = agent.answer("What is the per-node power draw?")
print("\nanswer:", envelope["text"])
print("provenance:", envelope["provenance"])
for att in envelope["attachments"]:
    print("attachment:", att["kind"], att["body"].get("columns") or att["body"].get("uri"))
