"""Descriptive-analytics agent: natural language to SQL with reflection.

The pipeline is prompt assembly (instructions + schema + question), SQL
generation through the model gateway, staged validation (parse, resolve
against the catalog, dry-run against the store), a bounded repair loop that
feeds validation errors back to the model, and execution against an embedded
analytical store.

Dialect: the engine is stdlib sqlite3 extended with DATE_TRUNC / EXTRACT
user functions, restricted to single SELECT statements over the analytical
subset (WHERE / JOIN / GROUP BY / ORDER BY / LIMIT / DISTINCT, aggregates,
CASE WHEN, arithmetic expressions). Write statements are rejected at the
parse stage.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import re
import sqlite3
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .conversation import (
    Message,
    assistant_message,
    sql_attachment,
    table_attachment,
    user_message,
)
from .gateway import ChatRequest, ModelGateway

COLUMN_TYPES = ("integer", "real", "text", "timestamp")

CATALOG_FORMAT_VERSION = 1


class AnalyticsError(Exception):
    pass


class SqlGenerationError(AnalyticsError):
    """All repair attempts produced invalid SQL."""

    def __init__(self, message: str, attempts: list["SqlCandidate"]) -> None:
        super().__init__(message)
        self.attempts = attempts


class SqlExecutionError(AnalyticsError):
    pass


# ---------------------------------------------------------------------------
# Schema catalog


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    type: str
    description: str = ""

    def __post_init__(self) -> None:
        if self.type not in COLUMN_TYPES:
            raise ValueError(f"column {self.name}: unknown type {self.type!r}")


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[ColumnSchema, ...]
    description: str = ""

    def column(self, name: str) -> ColumnSchema | None:
        for c in self.columns:
            if c.name.lower() == name.lower():
                return c
        return None


@dataclass(frozen=True)
class Relationship:
    from_table: str
    from_column: str
    to_table: str
    to_column: str


@dataclass(frozen=True)
class SchemaCatalog:
    tables: tuple[TableSchema, ...]
    relationships: tuple[Relationship, ...] = ()

    def __post_init__(self) -> None:
        names = [t.name.lower() for t in self.tables]
        if len(names) != len(set(names)):
            raise ValueError("table names must be unique")
        for t in self.tables:
            cols = [c.name.lower() for c in t.columns]
            if len(cols) != len(set(cols)):
                raise ValueError(f"table {t.name}: column names must be unique")
        for rel in self.relationships:
            src = self.table(rel.from_table)
            dst = self.table(rel.to_table)
            if src is None or dst is None:
                raise ValueError(f"relationship references unknown table: {rel}")
            src_col, dst_col = src.column(rel.from_column), dst.column(rel.to_column)
            if src_col is None or dst_col is None:
                raise ValueError(f"relationship references unknown column: {rel}")
            if src_col.type != dst_col.type:
                raise ValueError(
                    f"relationship type mismatch: {rel.from_table}.{rel.from_column} "
                    f"({src_col.type}) vs {rel.to_table}.{rel.to_column} ({dst_col.type})"
                )

    def table(self, name: str) -> TableSchema | None:
        for t in self.tables:
            if t.name.lower() == name.lower():
                return t
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": CATALOG_FORMAT_VERSION,
            "tables": [
                {
                    "name": t.name,
                    "description": t.description,
                    "columns": [{"name": c.name, "type": c.type, "description": c.description} for c in t.columns],
                }
                for t in self.tables
            ],
            "relationships": [
                {
                    "from_table": r.from_table,
                    "from_column": r.from_column,
                    "to_table": r.to_table,
                    "to_column": r.to_column,
                }
                for r in self.relationships
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SchemaCatalog":
        tables = tuple(
            TableSchema(
                name=t["name"],
                description=t.get("description", ""),
                columns=tuple(
                    ColumnSchema(c["name"], c["type"], c.get("description", "")) for c in t["columns"]
                ),
            )
            for t in data["tables"]
        )
        rels = tuple(
            Relationship(r["from_table"], r["from_column"], r["to_table"], r["to_column"])
            for r in data.get("relationships", [])
        )
        return cls(tables, rels)


# ---------------------------------------------------------------------------
# SQL tokenizer

SQL_KEYWORDS = {
    "SELECT", "FROM", "WHERE", "JOIN", "INNER", "LEFT", "RIGHT", "OUTER", "FULL", "CROSS",
    "ON", "AS", "AND", "OR", "NOT", "IN", "IS", "NULL", "LIKE", "BETWEEN", "CASE", "WHEN",
    "THEN", "ELSE", "END", "GROUP", "BY", "ORDER", "HAVING", "LIMIT", "OFFSET", "DISTINCT",
    "ASC", "DESC", "UNION", "ALL", "EXISTS", "EXTRACT", "TRUE", "FALSE",
}

SQL_FUNCTIONS = {
    "COUNT", "SUM", "AVG", "MIN", "MAX", "ABS", "ROUND", "COALESCE", "NULLIF", "CAST",
    "DATE_TRUNC", "EXTRACT_PART", "LOWER", "UPPER", "LENGTH", "SUBSTR",
}

AGGREGATE_FUNCTIONS = {"COUNT", "SUM", "AVG", "MIN", "MAX"}

_SQL_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
    | (?P<comment>--[^\n]*)
    | (?P<string>'(?:[^']|'')*')
    | (?P<badstring>'(?:[^']|'')*$)
    | (?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+)
    | (?P<qident>"[^"]*")
    | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<op><=|>=|<>|!=|\|\||[=<>+\-*/%(),.;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class SqlToken:
    kind: str  # ident | number | string | op
    value: str
    pos: int

    @property
    def upper(self) -> str:
        return self.value.upper()


def tokenize_sql(sql: str) -> list[SqlToken]:
    tokens: list[SqlToken] = []
    pos = 0
    while pos < len(sql):
        m = _SQL_TOKEN_RE.match(sql, pos)
        if m is None:
            raise SqlSyntaxError(f"unexpected character {sql[pos]!r}", pos)
        if m.lastgroup == "badstring":
            raise SqlSyntaxError("unterminated string literal", pos)
        if m.lastgroup not in ("ws", "comment"):
            kind = "ident" if m.lastgroup == "qident" else m.lastgroup
            value = m.group().strip('"') if m.lastgroup == "qident" else m.group()
            tokens.append(SqlToken(kind, value, pos))
        pos = m.end()
    return tokens


class SqlSyntaxError(AnalyticsError):
    def __init__(self, message: str, pos: int | None = None) -> None:
        super().__init__(message)
        self.pos = pos


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class ValidationIssue:
    stage: str  # parse | resolve | execute
    message: str
    location: int | None = None


@dataclass(frozen=True)
class ValidationReport:
    syntax_ok: bool
    schema_ok: bool
    errors: tuple[ValidationIssue, ...] = ()

    @property
    def ok(self) -> bool:
        return self.syntax_ok and self.schema_ok

    def error_lines(self) -> list[str]:
        return [f"[{e.stage}] {e.message}" for e in self.errors]


def _parse_stage(sql: str) -> tuple[list[SqlToken], list[ValidationIssue]]:
    try:
        tokens = tokenize_sql(sql)
    except SqlSyntaxError as exc:
        return [], [ValidationIssue("parse", str(exc), exc.pos)]
    # Drop a trailing semicolon; anything after it is a second statement.
    if tokens and tokens[-1].value == ";":
        tokens = tokens[:-1]
    if any(t.value == ";" for t in tokens):
        return tokens, [ValidationIssue("parse", "a single SELECT statement is required")]
    if not tokens:
        return tokens, [ValidationIssue("parse", "empty statement")]
    if tokens[0].upper != "SELECT":
        return tokens, [
            ValidationIssue(
                "parse",
                f"only SELECT statements are supported (got {tokens[0].value!r})",
                tokens[0].pos,
            )
        ]
    depth = 0
    for t in tokens:
        if t.value == "(":
            depth += 1
        elif t.value == ")":
            depth -= 1
            if depth < 0:
                return tokens, [ValidationIssue("parse", "unbalanced parentheses", t.pos)]
    if depth != 0:
        return tokens, [ValidationIssue("parse", "unbalanced parentheses")]
    return tokens, []


def _extract_part_positions(tokens: list[SqlToken]) -> tuple[set[int], set[int]]:
    """Indices of EXTRACT part names and of the FROM keywords inside
    EXTRACT(...), which must not be treated as columns / table clauses."""
    part_idx: set[int] = set()
    inner_from_idx: set[int] = set()
    for i, t in enumerate(tokens):
        if t.upper == "EXTRACT" and i + 1 < len(tokens) and tokens[i + 1].value == "(":
            if i + 2 < len(tokens) and tokens[i + 2].kind == "ident":
                part_idx.add(i + 2)
            depth = 0
            for j in range(i + 1, len(tokens)):
                if tokens[j].value == "(":
                    depth += 1
                elif tokens[j].value == ")":
                    depth -= 1
                    if depth == 0:
                        break
                elif tokens[j].upper == "FROM" and depth == 1:
                    inner_from_idx.add(j)
    return part_idx, inner_from_idx


def _table_references(
    tokens: list[SqlToken], skip_from: set[int]
) -> tuple[dict[str, str], list[tuple[str, int]]]:
    """Collect referenced tables and aliases from FROM/JOIN clauses.

    Returns (alias_or_name -> table_name, [(table_name, token_pos), ...]).
    """
    refs: list[tuple[str, int]] = []
    aliases: dict[str, str] = {}
    clause_enders = {
        "WHERE", "GROUP", "ORDER", "HAVING", "LIMIT", "SELECT", "ON", "JOIN",
        "INNER", "LEFT", "RIGHT", "OUTER", "FULL", "CROSS", "UNION",
    }
    i = 0
    in_from = False
    while i < len(tokens):
        t = tokens[i]
        if (t.upper == "FROM" and i not in skip_from) or t.upper == "JOIN":
            in_from = True
            i += 1
            continue
        if in_from:
            if t.kind == "ident" and t.upper not in SQL_KEYWORDS:
                name = t.value
                refs.append((name, t.pos))
                aliases.setdefault(name.lower(), name)
                j = i + 1
                if j < len(tokens) and tokens[j].upper == "AS":
                    j += 1
                if j < len(tokens) and tokens[j].kind == "ident" and tokens[j].upper not in SQL_KEYWORDS:
                    aliases[tokens[j].value.lower()] = name
                    i = j
                in_from = False
                # A comma continues the FROM list.
                if i + 1 < len(tokens) and tokens[i + 1].value == ",":
                    in_from = True
                    i += 1
            elif t.value == "(":
                in_from = False  # subquery: its own FROM is scanned in-stream
            elif t.upper in clause_enders:
                in_from = t.upper == "JOIN"
        i += 1
    return aliases, refs


def _resolve_stage(tokens: list[SqlToken], catalog: SchemaCatalog) -> list[ValidationIssue]:
    issues: list[ValidationIssue] = []
    part_idx, inner_from = _extract_part_positions(tokens)
    aliases, refs = _table_references(tokens, inner_from)

    table_of_alias: dict[str, TableSchema] = {}
    for name, pos in refs:
        table = catalog.table(name)
        if table is None:
            issues.append(ValidationIssue("resolve", f"unknown table '{name}'", pos))
    for alias, table_name in aliases.items():
        table = catalog.table(table_name)
        if table is not None:
            table_of_alias[alias] = table
    if issues:
        return issues

    known_columns = {c.name.lower() for t in table_of_alias.values() for c in t.columns}
    output_aliases: set[str] = set()
    for i, t in enumerate(tokens):
        if t.upper == "AS" and i + 1 < len(tokens) and tokens[i + 1].kind == "ident":
            output_aliases.add(tokens[i + 1].value.lower())

    i = 0
    while i < len(tokens):
        t = tokens[i]
        if t.kind != "ident" or t.upper in SQL_KEYWORDS or i in part_idx:
            i += 1
            continue
        nxt = tokens[i + 1] if i + 1 < len(tokens) else None
        prev = tokens[i - 1] if i > 0 else None
        if nxt is not None and nxt.value == "(":
            if t.upper not in SQL_FUNCTIONS:
                issues.append(ValidationIssue("resolve", f"unknown function '{t.value}'", t.pos))
            i += 1
            continue
        if prev is not None and prev.upper == "AS":
            i += 1
            continue
        if nxt is not None and nxt.value == ".":
            qualifier = t.value.lower()
            table = table_of_alias.get(qualifier)
            if table is None:
                issues.append(ValidationIssue("resolve", f"unknown table or alias '{t.value}'", t.pos))
                i += 3
                continue
            if i + 2 < len(tokens):
                col = tokens[i + 2]
                if col.value != "*" and table.column(col.value) is None:
                    issues.append(
                        ValidationIssue("resolve", f"unknown column '{col.value}' in table '{table.name}'", col.pos)
                    )
            i += 3
            continue
        if t.value.lower() in table_of_alias or t.value.lower() in aliases:
            i += 1
            continue
        if t.value.lower() not in known_columns and t.value.lower() not in output_aliases:
            issues.append(ValidationIssue("resolve", f"unknown column '{t.value}'", t.pos))
        i += 1
    return issues


def validate_sql(sql: str, catalog: SchemaCatalog, store: "TelemetryStore") -> ValidationReport:
    """Three-stage validation: well-formedness, identifier resolution against
    the catalog, then a dry-run of the plan against the store. Invalid SQL is
    always reported, never raised."""
    tokens, parse_issues = _parse_stage(sql)
    if parse_issues:
        return ValidationReport(False, False, tuple(parse_issues))
    resolve_issues = _resolve_stage(tokens, catalog)
    if resolve_issues:
        return ValidationReport(True, False, tuple(resolve_issues))
    execute_issues = store.dry_run(sql)
    if execute_issues:
        syntax_ok = all(e.stage != "parse" for e in execute_issues)
        return ValidationReport(syntax_ok, False, tuple(execute_issues))
    return ValidationReport(True, True, ())


# ---------------------------------------------------------------------------
# Store


@dataclass(frozen=True)
class ResultDataset:
    columns: tuple[str, ...]
    rows: tuple[tuple[Any, ...], ...]
    column_types: tuple[str, ...]
    truncated: bool = False

    def __post_init__(self) -> None:
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("row arity must equal the column count")


_ISO_TS_RE = re.compile(r"^\d{4}-\d{2}-\d{2}([ T]\d{2}:\d{2}(:\d{2})?)?$")


def _infer_column_types(columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> tuple[str, ...]:
    types: list[str] = []
    for idx in range(len(columns)):
        values = [row[idx] for row in rows if row[idx] is not None]
        if not values:
            types.append("text")
        elif all(isinstance(v, int) and not isinstance(v, bool) for v in values):
            types.append("integer")
        elif all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
            types.append("real")
        elif all(isinstance(v, str) and _ISO_TS_RE.match(v) for v in values):
            types.append("timestamp")
        else:
            types.append("text")
    return tuple(types)


def _parse_ts(value: str) -> dt.datetime:
    return dt.datetime.fromisoformat(str(value).replace("T", " "))


def _udf_date_trunc(part: str | None, value: str | None) -> str | None:
    if part is None or value is None:
        return None
    ts = _parse_ts(value)
    part = part.lower()
    if part == "year":
        ts = ts.replace(month=1, day=1, hour=0, minute=0, second=0, microsecond=0)
    elif part == "quarter":
        ts = ts.replace(month=3 * ((ts.month - 1) // 3) + 1, day=1, hour=0, minute=0, second=0, microsecond=0)
    elif part == "month":
        ts = ts.replace(day=1, hour=0, minute=0, second=0, microsecond=0)
    elif part == "week":
        ts = (ts - dt.timedelta(days=ts.weekday())).replace(hour=0, minute=0, second=0, microsecond=0)
    elif part == "day":
        ts = ts.replace(hour=0, minute=0, second=0, microsecond=0)
    elif part == "hour":
        ts = ts.replace(minute=0, second=0, microsecond=0)
    elif part == "minute":
        ts = ts.replace(second=0, microsecond=0)
    else:
        raise ValueError(f"unsupported date_trunc part {part!r}")
    return ts.isoformat(sep=" ")


def _udf_extract_part(part: str | None, value: str | None) -> int | None:
    if part is None or value is None:
        return None
    ts = _parse_ts(value)
    part = part.lower()
    if part == "year":
        return ts.year
    if part == "quarter":
        return (ts.month - 1) // 3 + 1
    if part == "month":
        return ts.month
    if part == "week":
        return int(ts.strftime("%W"))
    if part == "day":
        return ts.day
    if part == "hour":
        return ts.hour
    if part == "minute":
        return ts.minute
    if part == "second":
        return ts.second
    if part == "dow":
        return ts.weekday()
    raise ValueError(f"unsupported extract part {part!r}")


def rewrite_sql(sql: str) -> str:
    """Rewrite ``EXTRACT(part FROM expr)`` into the registered
    ``EXTRACT_PART('part', expr)`` user function; DATE_TRUNC already has
    function-call syntax and needs no rewriting."""
    tokens = tokenize_sql(sql)
    out: list[str] = []
    i = 0
    while i < len(tokens):
        t = tokens[i]
        if (
            t.upper == "EXTRACT"
            and i + 3 < len(tokens)
            and tokens[i + 1].value == "("
            and tokens[i + 2].kind == "ident"
            and tokens[i + 3].upper == "FROM"
        ):
            out.append(f"EXTRACT_PART('{tokens[i + 2].value.lower()}',")
            i += 4
            continue
        if t.kind == "string":
            out.append(t.value)
        else:
            out.append(t.value)
        i += 1
    return " ".join(out)


_SQLITE_TYPE = {"integer": "INTEGER", "real": "REAL", "text": "TEXT", "timestamp": "TEXT"}


class TelemetryStore:
    """Embedded analytical store over sqlite3 with the documented dialect.

    Supports concurrent read queries (each query opens its own cursor); the
    loaded data and catalog are immutable after construction.
    """

    def __init__(self, catalog: SchemaCatalog) -> None:
        self.catalog = catalog
        self._conn = sqlite3.connect(":memory:", check_same_thread=False)
        self._conn.create_function("DATE_TRUNC", 2, _udf_date_trunc, deterministic=True)
        self._conn.create_function("EXTRACT_PART", 2, _udf_extract_part, deterministic=True)
        for table in catalog.tables:
            cols = ", ".join(f'"{c.name}" {_SQLITE_TYPE[c.type]}' for c in table.columns)
            self._conn.execute(f'CREATE TABLE "{table.name}" ({cols})')

    def insert_rows(self, table_name: str, rows: Sequence[Sequence[Any]]) -> None:
        table = self.catalog.table(table_name)
        if table is None:
            raise AnalyticsError(f"unknown table {table_name!r}")
        placeholders = ", ".join("?" for _ in table.columns)
        self._conn.executemany(f'INSERT INTO "{table.name}" VALUES ({placeholders})', rows)
        self._conn.commit()

    @classmethod
    def from_manifest(cls, manifest_path: str | Path) -> "TelemetryStore":
        """Load delimited files per table as named by a catalog manifest."""
        manifest_path = Path(manifest_path)
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
        catalog = SchemaCatalog.from_dict(data)
        store = cls(catalog)
        base = manifest_path.parent
        for entry in data["tables"]:
            file_name = entry.get("file")
            if not file_name:
                continue
            table = catalog.table(entry["name"])
            rows = []
            with (base / file_name).open(newline="", encoding="utf-8") as fh:
                reader = csv.DictReader(fh)
                for record in reader:
                    rows.append(tuple(_coerce_cell(record.get(c.name, ""), c.type) for c in table.columns))
            store.insert_rows(entry["name"], rows)
        return store

    def dry_run(self, sql: str) -> list[ValidationIssue]:
        """Plan the query without materializing results."""
        try:
            rewritten = rewrite_sql(sql)
        except SqlSyntaxError as exc:
            return [ValidationIssue("parse", str(exc), exc.pos)]
        try:
            self._conn.execute(f"EXPLAIN {rewritten}")
        except sqlite3.Error as exc:
            message = str(exc)
            stage = "parse" if "syntax error" in message else "execute"
            return [ValidationIssue(stage, f"engine rejected the query: {message}")]
        return []

    def execute(self, sql: str, row_limit: int = 10000) -> ResultDataset:
        """Run a validated query; rows are capped at ``row_limit`` with a
        truncation flag. Runtime failures raise :class:`SqlExecutionError`."""
        rewritten = rewrite_sql(sql)
        try:
            cursor = self._conn.execute(rewritten)
            rows = cursor.fetchmany(row_limit)
            truncated = bool(cursor.fetchone())
        except sqlite3.Error as exc:
            raise SqlExecutionError(f"execution failed: {exc}") from exc
        except ValueError as exc:
            raise SqlExecutionError(f"execution failed: {exc}") from exc
        columns = tuple(d[0] for d in cursor.description)
        row_tuples = tuple(tuple(r) for r in rows)
        return ResultDataset(columns, row_tuples, _infer_column_types(columns, row_tuples), truncated)


def _coerce_cell(raw: str, col_type: str) -> Any:
    if raw is None or raw == "":
        return None
    if col_type == "integer":
        return int(raw)
    if col_type == "real":
        return float(raw)
    return str(raw)


# ---------------------------------------------------------------------------
# Prompt assembly and the generation/repair loop


def compose_prompt(question: str, catalog: SchemaCatalog, instructions: str) -> str:
    """Deterministic prompt: instructions, then the schema (tables, typed
    columns with descriptions, relationships), then the question."""
    lines = [instructions.strip(), "", "Schema:"]
    for table in catalog.tables:
        desc = f" -- {table.description}" if table.description else ""
        lines.append(f"table {table.name}{desc}")
        for col in table.columns:
            cdesc = f" -- {col.description}" if col.description else ""
            lines.append(f"  {col.name} {col.type}{cdesc}")
    if catalog.relationships:
        lines.append("relationships:")
        for rel in catalog.relationships:
            lines.append(f"  {rel.from_table}.{rel.from_column} references {rel.to_table}.{rel.to_column}")
    lines.extend(["", f"Question: {question}"])
    return "\n".join(lines)


@dataclass(frozen=True)
class SqlCandidate:
    sql_text: str
    attempt_index: int
    validation: ValidationReport


_SQL_FENCE_RE = re.compile(r"```(?:sql)?\s*(.*?)```", re.DOTALL | re.IGNORECASE)


def extract_sql(text: str) -> str:
    m = _SQL_FENCE_RE.search(text)
    if m:
        return m.group(1).strip()
    return text.strip()


DEFAULT_DA_INSTRUCTIONS = (
    "Translate the analytical question into a single SQL SELECT statement for the schema below. "
    "Use only listed tables and columns. Return only SQL."
)


def generate_and_repair(
    question: str,
    catalog: SchemaCatalog,
    store: TelemetryStore,
    gateway: ModelGateway,
    backend_id: str,
    max_repair_attempts: int = 3,
    instructions: str = DEFAULT_DA_INSTRUCTIONS,
    agent_tag: str = "da",
) -> tuple[str, list[SqlCandidate]]:
    """Generate SQL, validate, and regenerate with the validation errors
    appended to the conversation until valid or the budget is exhausted."""
    messages: list[Message] = [user_message(compose_prompt(question, catalog, instructions))]
    attempts: list[SqlCandidate] = []
    for attempt_index in range(max_repair_attempts):
        response = gateway.complete(backend_id, ChatRequest(tuple(messages), agent=agent_tag))
        sql = extract_sql(response.message.content)
        report = validate_sql(sql, catalog, store)
        attempts.append(SqlCandidate(sql, attempt_index, report))
        if report.ok:
            return sql, attempts
        error_block = "\n".join(f"- {line}" for line in report.error_lines())
        repair = (
            "The SQL failed validation with the following errors:\n"
            f"{error_block}\n"
            "Produce a corrected SQL query."
        )
        messages.append(assistant_message(response.message.content))
        messages.append(user_message(repair))
    summary = "; ".join(
        f"attempt {a.attempt_index}: {a.sql_text!r} -> {a.validation.error_lines()}" for a in attempts
    )
    raise SqlGenerationError(
        f"no valid SQL after {max_repair_attempts} attempts: {summary}", attempts
    )


class DAAgent:
    """Natural-language analytics over the telemetry store."""

    def __init__(
        self,
        store: TelemetryStore,
        gateway: ModelGateway,
        backend_id: str,
        max_repair_attempts: int = 3,
        row_limit: int = 10000,
        instructions: str = DEFAULT_DA_INSTRUCTIONS,
    ) -> None:
        self.store = store
        self.gateway = gateway
        self.backend_id = backend_id
        self.max_repair_attempts = max_repair_attempts
        self.row_limit = row_limit
        self.instructions = instructions

    @property
    def catalog(self) -> SchemaCatalog:
        return self.store.catalog

    def answer(self, question: str, context: str = "") -> dict[str, Any]:
        full_question = f"{question}\n(Context: {context})" if context else question
        sql, attempts = generate_and_repair(
            full_question,
            self.catalog,
            self.store,
            self.gateway,
            self.backend_id,
            self.max_repair_attempts,
            self.instructions,
        )
        dataset = self.store.execute(sql, self.row_limit)
        text = f"Returned {len(dataset.rows)} rows x {len(dataset.columns)} columns."
        if dataset.truncated:
            text += f" (truncated to {self.row_limit} rows)"
        return {
            "text": text,
            "attachments": [
                sql_attachment(sql).to_dict(),
                table_attachment(dataset.columns, dataset.rows).to_dict(),
            ],
            "dataset": {
                "columns": list(dataset.columns),
                "rows": [list(r) for r in dataset.rows],
                "column_types": list(dataset.column_types),
                "truncated": dataset.truncated,
            },
            "attempts": len(attempts),
        }


# ---------------------------------------------------------------------------
# Complexity profiling

PROFILE_KEYWORDS = (
    "SUM", "COUNT", "AVG", "MAX", "MIN", "DISTINCT", "WHERE", "JOIN", "GROUP BY",
    "ORDER BY", "LIMIT", "CASE WHEN", "EXTRACT", "DATE_TRUNC", "NEW COLUMN", "FRACTION",
)

# Keyword -> category mapping; shipped as data so deployments can override it.
# "NEW COLUMN" and "FRACTION" are expression-shape detectors (computed
# projection column, ratio of aggregates), not SQL keywords.
DEFAULT_CATEGORY_MAP: dict[str, str] = {
    "SUM": "aggregation functions",
    "COUNT": "aggregation functions",
    "AVG": "aggregation functions",
    "MAX": "aggregation functions",
    "MIN": "aggregation functions",
    "CASE WHEN": "conditional logic",
    "EXTRACT": "data manipulation",
    "DATE_TRUNC": "data manipulation",
    "NEW COLUMN": "data manipulation",
    "FRACTION": "data manipulation",
    "JOIN": "joining & grouping",
    "GROUP BY": "joining & grouping",
    "ORDER BY": "ordering",
    "LIMIT": "ordering",
    "WHERE": "selection & retrieval",
    "DISTINCT": "selection & retrieval",
    "SELECT": "selection & retrieval",
}

SQL_CATEGORIES = (
    "selection & retrieval",
    "aggregation functions",
    "data manipulation",
    "conditional logic",
    "joining & grouping",
    "ordering",
)


@dataclass(frozen=True)
class SqlProfile:
    keywords: frozenset[str]
    join_count: int
    categories: frozenset[str]


def _projection_items(tokens: list[SqlToken]) -> list[list[SqlToken]]:
    """Token runs of the top-level SELECT list (between SELECT and FROM)."""
    items: list[list[SqlToken]] = []
    current: list[SqlToken] = []
    depth = 0
    in_select = False
    for i, t in enumerate(tokens):
        if not in_select:
            if t.upper == "SELECT" and depth == 0:
                in_select = True
            if t.value == "(":
                depth += 1
            elif t.value == ")":
                depth -= 1
            continue
        if t.value == "(":
            depth += 1
        elif t.value == ")":
            depth -= 1
        if depth == 0 and t.upper == "FROM":
            break
        if depth == 0 and t.value == ",":
            items.append(current)
            current = []
        else:
            current.append(t)
    if current:
        items.append(current)
    return items


def sql_complexity_profile(
    sql: str, category_map: dict[str, str] | None = None
) -> SqlProfile:
    """Extract the keyword set, join count, and the six-category profile of a
    SELECT statement. Raises on unparseable SQL."""
    tokens, parse_issues = _parse_stage(sql)
    if parse_issues:
        raise SqlSyntaxError(parse_issues[0].message, parse_issues[0].location)
    mapping = category_map or DEFAULT_CATEGORY_MAP

    keywords: set[str] = set()
    join_count = 0
    for i, t in enumerate(tokens):
        u = t.upper
        nxt = tokens[i + 1] if i + 1 < len(tokens) else None
        if u in AGGREGATE_FUNCTIONS and nxt is not None and nxt.value == "(":
            keywords.add(u)
        elif u == "JOIN":
            keywords.add("JOIN")
            join_count += 1
        elif u == "GROUP" and nxt is not None and nxt.upper == "BY":
            keywords.add("GROUP BY")
        elif u == "ORDER" and nxt is not None and nxt.upper == "BY":
            keywords.add("ORDER BY")
        elif u == "CASE":
            keywords.add("CASE WHEN")
        elif u in ("DISTINCT", "WHERE", "LIMIT"):
            keywords.add(u)
        elif u == "EXTRACT":
            keywords.add("EXTRACT")
        elif u == "DATE_TRUNC" and nxt is not None and nxt.value == "(":
            keywords.add("DATE_TRUNC")

    arithmetic = {"+", "-", "*", "/"}
    for item in _projection_items(tokens):
        values = [t.value for t in item]
        uppers = [t.upper for t in item]
        has_divide = "/" in values
        has_aggregate = any(
            u in AGGREGATE_FUNCTIONS and k + 1 < len(item) and item[k + 1].value == "("
            for k, u in enumerate(uppers)
        )
        if has_divide and has_aggregate:
            keywords.add("FRACTION")
            continue
        is_lone_star = values == ["*"]
        has_arithmetic = any(
            v in arithmetic and not (v == "*" and _is_call_star(item, k)) for k, v in enumerate(values)
        )
        if not is_lone_star and (has_arithmetic or "CASE" in uppers):
            keywords.add("NEW COLUMN")

    categories = frozenset(mapping[k] for k in keywords if k in mapping)
    return SqlProfile(frozenset(keywords), join_count, categories)


def _is_call_star(item: list[SqlToken], k: int) -> bool:
    # COUNT(*) style: '*' directly inside a call's parentheses is not arithmetic.
    return 0 < k < len(item) - 1 and item[k - 1].value == "(" and item[k + 1].value == ")"
