"""Reader and writer for the BIF interchange format.

Supported subset::

    network <name> { ... }
    variable <name> { type discrete [ n ] { s1, ..., sn }; }
    probability ( <child> | <p1>, ... ) {
        table v1, ..., vk;              // or, per parent configuration:
        ( <state1>, ... ) v1, ..., vk;
    }

``property`` statements are ignored.  A conditional ``table`` lists the
child distribution of each parent configuration in turn, with the last
parent varying fastest.
"""

from __future__ import annotations

import gzip
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bn import BayesianNetwork, Cpt, NetworkError, Variable

log = logging.getLogger(__name__)

RENORMALIZE_TOLERANCE = 1e-6
_PUNCT = "{}()[]|,;"
_WORD = re.compile(r"[^\s{}()\[\]|,;]+")


class BIFSyntaxError(NetworkError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass
class _Token:
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    i, line, line_start = 0, 1, 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            line_start = i + 1
            i += 1
        elif c.isspace():
            i += 1
        elif text.startswith("//", i):
            j = text.find("\n", i)
            i = n if j < 0 else j
        elif text.startswith("/*", i):
            j = text.find("*/", i + 2)
            if j < 0:
                raise BIFSyntaxError("unterminated comment", line, i - line_start + 1)
            line += text.count("\n", i, j)
            k = text.rfind("\n", i, j)
            if k >= 0:
                line_start = k + 1
            i = j + 2
        elif c in _PUNCT:
            tokens.append(_Token(c, line, i - line_start + 1))
            i += 1
        else:
            m = _WORD.match(text, i)
            tokens.append(_Token(m.group(), line, i - line_start + 1))
            i = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.name = "unknown"
        self.variables: dict[str, Variable] = {}
        self.probabilities: list[tuple[_Token, str, list[str], list]] = []

    # -- token helpers -----------------------------------------------------

    def _peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _error(self, message: str, tok: _Token | None = None) -> BIFSyntaxError:
        tok = tok or self._peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else _Token("", 1, 1)
            return BIFSyntaxError(message + " (unexpected end of input)", last.line, last.column)
        return BIFSyntaxError(message, tok.line, tok.column)

    def _next(self) -> _Token:
        tok = self._peek()
        if tok is None:
            raise self._error("unexpected end of input")
        self.pos += 1
        return tok

    def _expect(self, text: str) -> _Token:
        tok = self._next()
        if tok.text != text:
            raise self._error(f"expected {text!r}, found {tok.text!r}", tok)
        return tok

    def _word(self, what: str) -> _Token:
        tok = self._next()
        if tok.text in _PUNCT:
            raise self._error(f"expected {what}, found {tok.text!r}", tok)
        return tok

    def _skip_statement(self) -> None:
        while self._next().text != ";":
            pass

    def _skip_block(self) -> None:
        self._expect("{")
        depth = 1
        while depth:
            t = self._next().text
            depth += (t == "{") - (t == "}")

    def _number(self) -> float:
        tok = self._word("a probability")
        try:
            return float(tok.text)
        except ValueError:
            raise self._error(f"expected a number, found {tok.text!r}", tok) from None

    def _numbers_until_semicolon(self) -> list[float]:
        values = [self._number()]
        while True:
            tok = self._next()
            if tok.text == ";":
                return values
            if tok.text != ",":
                raise self._error(f"expected ',' or ';', found {tok.text!r}", tok)
            values.append(self._number())

    def _names_until(self, closing: str) -> list[str]:
        names = [self._word("a name").text]
        while True:
            tok = self._next()
            if tok.text == closing:
                return names
            if tok.text != ",":
                raise self._error(f"expected ',' or {closing!r}, found {tok.text!r}", tok)
            names.append(self._word("a name").text)

    # -- grammar -----------------------------------------------------------

    def parse(self) -> BayesianNetwork:
        while (tok := self._peek()) is not None:
            if tok.text == "network":
                self._next()
                words = []
                while (t := self._peek()) is not None and t.text != "{":
                    words.append(self._next().text)
                self.name = " ".join(words) or "unknown"
                self._skip_block()
            elif tok.text == "variable":
                self._variable()
            elif tok.text == "probability":
                self._probability()
            else:
                raise self._error(f"unexpected {tok.text!r}; expected network, variable or probability")
        return self._build()

    def _variable(self) -> None:
        self._expect("variable")
        name_tok = self._word("a variable name")
        if name_tok.text in self.variables:
            raise self._error(f"variable {name_tok.text!r} declared twice", name_tok)
        self._expect("{")
        states = None
        while (tok := self._next()).text != "}":
            if tok.text == "type":
                kind = self._word("a variable type")
                if kind.text != "discrete":
                    raise self._error(f"unsupported variable type {kind.text!r}", kind)
                self._expect("[")
                count_tok = self._word("a state count")
                self._expect("]")
                self._expect("{")
                states = self._names_until("}")
                self._expect(";")
                if not count_tok.text.isdigit() or int(count_tok.text) != len(states):
                    raise self._error(f"declared {count_tok.text} states but listed {len(states)}", count_tok)
            elif tok.text == "property":
                self._skip_statement()
            else:
                raise self._error(f"unexpected {tok.text!r} in variable block", tok)
        if states is None:
            raise self._error(f"variable {name_tok.text!r} has no type declaration", name_tok)
        try:
            self.variables[name_tok.text] = Variable(name_tok.text, tuple(states))
        except NetworkError as exc:
            raise self._error(str(exc), name_tok) from None

    def _probability(self) -> None:
        head = self._expect("probability")
        self._expect("(")
        child = self._word("a variable name").text
        parents: list[str] = []
        tok = self._next()
        if tok.text == "|":
            parents = self._names_until(")")
        elif tok.text != ")":
            raise self._error(f"expected '|' or ')', found {tok.text!r}", tok)
        self._expect("{")
        entries: list = []
        while (tok := self._peek()) is not None and tok.text != "}":
            if tok.text == "table":
                self._next()
                entries.append(("table", tok, self._numbers_until_semicolon()))
            elif tok.text == "default":
                self._next()
                entries.append(("default", tok, self._numbers_until_semicolon()))
            elif tok.text == "property":
                self._skip_statement()
            elif tok.text == "(":
                self._next()
                states = self._names_until(")")
                entries.append(("row", tok, (states, self._numbers_until_semicolon())))
            else:
                raise self._error(f"unexpected {tok.text!r} in probability block")
        self._expect("}")
        self.probabilities.append((head, child, parents, entries))

    def _build(self) -> BayesianNetwork:
        cpts: dict[str, Cpt] = {}
        for head, child, parents, entries in self.probabilities:
            for name in (child, *parents):
                if name not in self.variables:
                    raise self._error(f"probability block references unknown variable {name!r}", head)
            if child in cpts:
                raise self._error(f"second probability block for {child!r}", head)
            cpts[child] = self._table(head, child, parents, entries)
        for name in self.variables:
            if name not in cpts:
                raise NetworkError(f"variable {name!r} has no probability block")
        return BayesianNetwork(tuple(self.variables.values()), cpts, self.name)

    def _table(self, head: _Token, child: str, parents: list[str], entries: list) -> Cpt:
        var = self.variables[child]
        pvars = [self.variables[p] for p in parents]
        pshape = tuple(p.cardinality for p in pvars)
        table = np.full((var.cardinality, *pshape), np.nan)
        for kind, tok, payload in entries:
            if kind == "table":
                if len(payload) != table.size:
                    raise self._error(f"table for {child!r} has {len(payload)} values, expected {table.size}", tok)
                # rows are parent configurations (last parent fastest), child states contiguous
                flat = np.asarray(payload).reshape((*pshape, var.cardinality))
                table = np.moveaxis(flat, -1, 0).copy()
            elif kind == "default":
                if len(payload) != var.cardinality:
                    raise self._error(f"default row for {child!r} needs {var.cardinality} values", tok)
                unset = np.isnan(table[0])
                table[:, unset] = np.asarray(payload)[:, None]
            else:
                states, values = payload
                if len(states) != len(pvars):
                    raise self._error(f"row for {child!r} names {len(states)} parent states, expected {len(pvars)}", tok)
                if len(values) != var.cardinality:
                    raise self._error(f"row for {child!r} has {len(values)} values, expected {var.cardinality}", tok)
                config = []
                for pvar, state in zip(pvars, states):
                    if state not in pvar.states:
                        raise self._error(f"{state!r} is not a state of {pvar.name!r}", tok)
                    config.append(pvar.states.index(state))
                table[(slice(None), *config)] = values
        if np.isnan(table).any():
            raise self._error(f"probability block for {child!r} does not cover every parent configuration", head)
        if np.any(table < 0) or np.any(table > 1):
            raise self._error(f"probability block for {child!r} has entries outside [0, 1]", head)
        sums = table.sum(axis=0)
        dev = float(np.max(np.abs(sums - 1.0)))
        if dev > RENORMALIZE_TOLERANCE:
            raise self._error(f"a row of {child!r} sums to {1 + dev:.9g}, not 1", head)
        if dev > 1e-9:
            log.warning("renormalizing rows of %r (max deviation %.2e)", child, dev)
            table = table / sums
        return Cpt(child, tuple(parents), table)


def parse_bif(text: str) -> BayesianNetwork:
    """Parse BIF text into a validated network."""
    return _Parser(text).parse()


def read_bif(path: str | Path) -> BayesianNetwork:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            return parse_bif(fh.read())
    return parse_bif(path.read_text(encoding="utf-8"))


def write_bif(bn: BayesianNetwork) -> str:
    """Serialize a network; floats use ``repr`` so a re-parse is bit-exact."""
    lines = [f"network {bn.name} {{", "}"]
    for var in bn.variables:
        lines.append(f"variable {var.name} {{")
        lines.append(f"  type discrete [ {var.cardinality} ] {{ {', '.join(var.states)} }};")
        lines.append("}")
    for cpt in bn.cpts.values():
        if cpt.parents:
            lines.append(f"probability ( {cpt.child} | {', '.join(cpt.parents)} ) {{")
            for config in cpt.parent_configs():
                states = ", ".join(bn.variable(p).states[j] for p, j in zip(cpt.parents, config))
                values = ", ".join(repr(float(v)) for v in cpt.row(config))
                lines.append(f"  ({states}) {values};")
        else:
            lines.append(f"probability ( {cpt.child} ) {{")
            lines.append(f"  table {', '.join(repr(float(v)) for v in cpt.table)};")
        lines.append("}")
    return "\n".join(lines) + "\n"
