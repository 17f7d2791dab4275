"""Table-name extraction from SQL text.

A keyword scanner, not a parser: it reads the identifier following each
``FROM``/``JOIN`` (including comma-separated ``FROM`` lists), drops aliases,
and ignores string literals, comments, CTE names and the ``FROM`` inside
calls such as ``EXTRACT(YEAR FROM ts)``.
"""

from __future__ import annotations

import re

from .errors import InvalidInput, NoTablesFound

_COMMENTS = re.compile(r"--[^\n]*|/\*.*?\*/", re.DOTALL)
_STRING = re.compile(r"'(?:[^']|'')*'?")

_PART = r'(?:"[^"]*"|`[^`]*`|\[[^\]]*\]|[A-Za-z_][\w$]*)'
_TOKEN = re.compile(rf"(?P<ident>{_PART}(?:\s*\.\s*{_PART})*)|(?P<num>\d[\w.]*)|(?P<punct>[(),;])|(?P<other>\S)")

_FROM_FUNCTIONS = {"extract", "trim", "substring", "position", "overlay"}
_STOP = {
    "where", "join", "left", "right", "inner", "outer", "full", "cross", "natural", "on", "using",
    "group", "order", "having", "limit", "union", "except", "intersect", "window", "qualify",
    "offset", "fetch", "lateral", "as", "with", "select", "from", "set", "returning",
    "tablesample", "straight_join", "values", "pivot", "unpivot", "for",
}


def _clean_ident(raw: str) -> str:
    parts = re.findall(_PART, raw)
    return ".".join(p.strip('"`[]') for p in parts).casefold()


def _tokens(sql: str) -> list[tuple[str, str]]:
    sql = _COMMENTS.sub(" ", sql)
    sql = _STRING.sub(" '' ", sql)
    out = []
    for m in _TOKEN.finditer(sql):
        kind = m.lastgroup
        text = m.group(kind)
        out.append((kind, _clean_ident(text) if kind == "ident" else text))
    return out


def _skip_parens(toks: list[tuple[str, str]], i: int) -> int:
    """Given toks[i] == '(', return the index just past its matching ')'."""
    depth = 0
    while i < len(toks):
        t = toks[i][1]
        if t == "(":
            depth += 1
        elif t == ")":
            depth -= 1
            if depth == 0:
                return i + 1
        i += 1
    return i


def _cte_names(toks: list[tuple[str, str]]) -> set[str]:
    names: set[str] = set()
    i = 0
    while i < len(toks):
        if toks[i] == ("ident", "with"):
            i += 1
            if i < len(toks) and toks[i] == ("ident", "recursive"):
                i += 1
            while i < len(toks) and toks[i][0] == "ident":
                names.add(toks[i][1])
                i += 1
                if i < len(toks) and toks[i][1] == "(":  # column list
                    i = _skip_parens(toks, i)
                if i < len(toks) and toks[i] == ("ident", "as"):
                    i += 1
                while i < len(toks) and toks[i][0] == "ident" and toks[i][1] in {"not", "materialized"}:
                    i += 1
                if i < len(toks) and toks[i][1] == "(":
                    i = _skip_parens(toks, i)
                if i < len(toks) and toks[i][1] == ",":
                    i += 1
                    continue
                break
        else:
            i += 1
    return names


def extract_sql_tables(sql: str) -> set[str]:
    """Case-folded names of the tables read by *sql*.

    >>> sorted(extract_sql_tables("SELECT * FROM rsvps r JOIN events e ON r.event_id = e.id"))
    ['events', 'rsvps']
    """
    if not sql or not sql.strip():
        raise InvalidInput("sql must be nonempty")
    toks = _tokens(sql)
    ctes = _cte_names(toks)
    tables: set[str] = set()
    # one entry per open paren: True when it opens a FROM-taking function call
    stack: list[bool] = []
    i = 0
    while i < len(toks):
        kind, text = toks[i]
        if text == "(":
            prev = toks[i - 1][1] if i else ""
            stack.append(prev in _FROM_FUNCTIONS)
        elif text == ")":
            if stack:
                stack.pop()
        elif kind == "ident" and text in {"from", "join"}:
            in_call = bool(stack) and stack[-1]
            after_distinct = text == "from" and i and toks[i - 1] == ("ident", "distinct")
            if not in_call and not after_distinct:
                i = _read_table_refs(toks, i + 1, tables, allow_list=text == "from")
                continue
        i += 1
    tables -= ctes
    if not tables:
        raise NoTablesFound(f"no FROM/JOIN table reference in: {sql.strip()[:80]!r}")
    return tables


def _read_table_refs(toks: list[tuple[str, str]], i: int, tables: set[str], *, allow_list: bool) -> int:
    while i < len(toks):
        if toks[i] == ("ident", "lateral"):
            i += 1
            continue
        if toks[i][1] == "(":
            # derived table: let the main loop descend into it
            return i
        if toks[i][0] != "ident" or toks[i][1] in _STOP:
            return i
        name = toks[i][1]
        i += 1
        if i < len(toks) and toks[i][1] == "(":
            # table-valued function call, not a stored table
            return i
        tables.add(name)
        if i < len(toks) and toks[i] == ("ident", "as"):
            i += 1
        if i < len(toks) and toks[i][0] == "ident" and toks[i][1] not in _STOP:
            i += 1  # alias
        if allow_list and i < len(toks) and toks[i][1] == ",":
            i += 1
            continue
        return i
    return i
