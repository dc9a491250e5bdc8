"""Reader/writer for the native line-oriented CSP format (version 1).

Grammar, one statement per line, ``#`` starts a comment::

    csp 1                                  optional version line
    name <instance-name>
    tag <key> <value>
    vars <n>
    var <name> <v1> <v2> ...
    con <name1> <name2> <op> [offset]      op: eq neq lt leq gt geq absdiff_eq absdiff_neq
    con <name1> <name2> forbidden (v,w) (v,w) ...
    con <name1> <name2> allowed (v,w) ...
    unary <name> <op> <constant>
    unary <name> forbidden (v) ... | allowed (v) ...
    alldifferent <name> <name> ...         expands to pairwise neq
"""
from __future__ import annotations

import re
from dataclasses import replace
from pathlib import Path

from .csp import OPERATORS, Constraint, CspInstance, Extensional, Intensional, alldifferent

FORMAT_VERSION = 1

_TUPLE = re.compile(r"\(([^()]*)\)")
_ALIASES = {"abs-diff-eq": "absdiff_eq", "abs-diff-neq": "absdiff_neq", "ne": "neq", "le": "leq", "ge": "geq"}


class CspFormatError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _parse_tuples(text, arity, lineno):
    body = text.strip()
    tuples = []
    for m in _TUPLE.finditer(body):
        parts = [p for p in re.split(r"[,\s]+", m.group(1).strip()) if p]
        if len(parts) != arity:
            raise CspFormatError(f"tuple ({m.group(1)}) has arity {len(parts)}, expected {arity}", lineno)
        try:
            tuples.append(tuple(int(p) for p in parts))
        except ValueError:
            raise CspFormatError(f"non-integer tuple ({m.group(1)})", lineno) from None
    if _TUPLE.sub("", body).strip():
        raise CspFormatError(f"unparseable tuple list {body!r}", lineno)
    return tuples


def _relation(tokens, rest, arity, lineno):
    head = tokens[0].lower()
    head = _ALIASES.get(head, head)
    if head in ("forbidden", "allowed"):
        tuples = _parse_tuples(rest.split(None, 1)[1] if len(rest.split(None, 1)) > 1 else "", arity, lineno)
        return Extensional(frozenset(tuples), allowed=head == "allowed")
    if head in OPERATORS:
        if len(tokens) > 2:
            raise CspFormatError(f"trailing tokens after relation: {tokens[2:]}", lineno)
        if arity == 1 and len(tokens) != 2:
            raise CspFormatError("unary relation needs a constant", lineno)
        try:
            offset = int(tokens[1]) if len(tokens) == 2 else 0
        except ValueError:
            raise CspFormatError(f"bad constant {tokens[1]!r}", lineno) from None
        return Intensional(head, offset)
    raise CspFormatError(f"unknown relation {tokens[0]!r}", lineno)


def loads(text: str) -> CspInstance:
    domains = []
    names = {}
    pending = []  # (lineno, kind, payload)
    declared = None
    name = ""
    tags = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword, _, rest = line.partition(" ")
        rest = rest.strip()
        tokens = rest.split()
        if keyword == "csp":
            if tokens != [str(FORMAT_VERSION)]:
                raise CspFormatError(f"unsupported format version {rest!r}", lineno)
        elif keyword == "name":
            name = rest
        elif keyword == "tag":
            if len(tokens) < 2:
                raise CspFormatError("tag needs a key and a value", lineno)
            tags[tokens[0]] = " ".join(tokens[1:])
        elif keyword == "vars":
            try:
                declared = int(rest)
            except ValueError:
                raise CspFormatError(f"bad variable count {rest!r}", lineno) from None
        elif keyword == "var":
            if len(tokens) < 2:
                raise CspFormatError("variable needs a name and at least one value", lineno)
            if tokens[0] in names:
                raise CspFormatError(f"duplicate variable {tokens[0]!r}", lineno)
            try:
                values = [int(t) for t in tokens[1:]]
            except ValueError:
                raise CspFormatError("non-integer domain value", lineno) from None
            names[tokens[0]] = len(domains)
            domains.append((tokens[0], sorted(set(values))))
        elif keyword in ("con", "unary", "alldifferent"):
            pending.append((lineno, keyword, tokens, rest))
        else:
            raise CspFormatError(f"unknown statement {keyword!r}", lineno)
    if declared is not None and declared != len(domains):
        raise CspFormatError(f"'vars {declared}' but {len(domains)} variables defined")

    def ref(token, lineno):
        if token not in names:
            raise CspFormatError(f"unknown variable {token!r}", lineno)
        return names[token]

    constraints = []
    for lineno, keyword, tokens, rest in pending:
        if keyword == "alldifferent":
            constraints.extend(alldifferent([ref(t, lineno) for t in tokens]))
            continue
        arity = 2 if keyword == "con" else 1
        if len(tokens) < arity + 1:
            raise CspFormatError(f"incomplete {keyword} statement", lineno)
        scope = tuple(ref(t, lineno) for t in tokens[:arity])
        rel_text = rest.split(None, arity)[arity]
        constraints.append(Constraint(scope, _relation(tokens[arity:], rel_text, arity, lineno)))
    try:
        return CspInstance.from_domains(domains, constraints, name=name, tags=tags)
    except ValueError as exc:
        raise CspFormatError(str(exc)) from None


def _format_relation(rel):
    if isinstance(rel, Extensional):
        body = " ".join("(" + ",".join(map(str, t)) + ")" for t in sorted(rel.tuples))
        return f"{rel.kind} {body}".rstrip()
    return f"{rel.op} {rel.offset}" if rel.offset else rel.op


def dumps(instance: CspInstance) -> str:
    lines = [f"csp {FORMAT_VERSION}"]
    if instance.name:
        lines.append(f"name {instance.name}")
    for key in sorted(instance.tags):
        lines.append(f"tag {key} {instance.tags[key]}")
    lines.append(f"vars {instance.n_vars}")
    for v in instance.variables:
        lines.append("var " + " ".join([v.name, *map(str, v.domain.values)]))
    for c in instance.constraints:
        names = " ".join(instance.variables[i].name for i in c.scope)
        rel = c.relation
        if c.arity == 1:
            if isinstance(rel, Intensional):
                lines.append(f"unary {names} {rel.op} {rel.offset}")
            else:
                lines.append(f"unary {names} {_format_relation(rel)}")
        else:
            lines.append(f"con {names} {_format_relation(rel)}")
    return "\n".join(lines) + "\n"


def load(path) -> CspInstance:
    inst = loads(Path(path).read_text())
    if not inst.name:
        inst = replace(inst, name=Path(path).stem)
    return inst


def dump(instance: CspInstance, path) -> None:
    Path(path).write_text(dumps(instance))
