"""Agent platform for operational data analytics.

A top-level query-processing loop delegates to three specialized agents
(knowledge retrieval, SQL analytics, telemetry prediction) and synthesizes
their results; a deterministic scripted model backend and a full metric
harness make every pipeline measurable offline.
"""

__version__ = "0.1.0"

from .conversation import (
    Attachment,
    AttachmentKind,
    Message,
    MessageHistory,
    Role,
    ToolCall,
    ToolResult,
    estimate_tokens,
    render_transcript,
)
from .gateway import (
    BackendConfig,
    ChatRequest,
    ChatResponse,
    ModelGateway,
    ScriptedBackend,
    UsageLedger,
    ledger_totals,
    load_script,
)
from .router import ROUTING_CLASSES, QueryProcessor, classify_delegations
from .runtime import AgentConfig, AgentTrace, ToolBinding, execute_tool, run_loop

__all__ = [
    "Attachment",
    "AttachmentKind",
    "AgentConfig",
    "AgentTrace",
    "BackendConfig",
    "ChatRequest",
    "ChatResponse",
    "Message",
    "MessageHistory",
    "ModelGateway",
    "QueryProcessor",
    "ROUTING_CLASSES",
    "Role",
    "ScriptedBackend",
    "ToolBinding",
    "ToolCall",
    "ToolResult",
    "UsageLedger",
    "classify_delegations",
    "estimate_tokens",
    "execute_tool",
    "ledger_totals",
    "load_script",
    "render_transcript",
    "run_loop",
]
