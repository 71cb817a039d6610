"""Lexing, parsing and serialization of ISO 10303-21 exchange files.

The grammar covered is the DATA/HEADER subset used by B-rep CAD exports:
simple and complex entity instances, the full parameter union, and block
comments. ANCHOR/REFERENCE/SIGNATURE extension sections are rejected.
Parsing and serialization are pure functions; both are safe to call
concurrently.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import (
    DuplicateIdError,
    EntityLimitError,
    InvalidModelError,
    StepSyntaxError,
)
from .model import (
    ANNOTATION_BODY_RE,
    TERMINATOR_LINE,
    TYPE_NAME_RE,
    BranchAnnotation,
    ComplexPart,
    Derived,
    EntityInstance,
    EnumToken,
    HeaderRecord,
    Integer,
    ListOf,
    Omitted,
    ParamValue,
    Real,
    Reference,
    StepFile,
    Text,
    TypedValue,
    format_annotation_comment,
)

DEFAULT_MAX_ENTITIES = 100000

_UNSUPPORTED_SECTIONS = {"ANCHOR", "REFERENCE", "SIGNATURE"}


class TokenType(enum.Enum):
    KEYWORD = "keyword"
    HASH = "entity id"
    INTEGER = "integer"
    REAL = "real"
    STRING = "string"
    ENUM = "enumeration"
    LPAREN = "'('"
    RPAREN = "')'"
    COMMA = "','"
    SEMI = "';'"
    EQUALS = "'='"
    DOLLAR = "'$'"
    STAR = "'*'"
    EOF = "end of input"


@dataclass(frozen=True)
class Token:
    type: TokenType
    text: str
    line: int
    column: int
    # (children, depth, size) from an annotation comment preceding the token
    annotation: tuple[int, int, int] | None = None


_PUNCT = {
    "(": TokenType.LPAREN,
    ")": TokenType.RPAREN,
    ",": TokenType.COMMA,
    ";": TokenType.SEMI,
    "=": TokenType.EQUALS,
    "$": TokenType.DOLLAR,
    "*": TokenType.STAR,
}


def _is_keyword_start(ch: str) -> bool:
    return ch.isalpha() or ch == "_"


def _is_keyword_char(ch: str) -> bool:
    return ch.isalnum() or ch in "_-"


class _Lexer:
    """Produces tokens on demand so structural errors (like an unsupported
    section) are reported before a later lexical error is even reached."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1
        self._pending_annotation: tuple[int, int, int] | None = None

    def error(self, message: str, expected: str | None = None) -> StepSyntaxError:
        return StepSyntaxError(message, self.line, self.col, expected)

    def _advance(self, n: int = 1) -> None:
        for _ in range(n):
            if self.pos < len(self.text) and self.text[self.pos] == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
            self.pos += 1

    def _emit(self, ttype: TokenType, text: str, line: int, col: int) -> Token:
        ann = self._pending_annotation
        self._pending_annotation = None
        return Token(ttype, text, line, col, ann)

    def next_token(self) -> Token:
        text = self.text
        while self.pos < len(text):
            ch = text[self.pos]
            if ch in " \t\r\n":
                self._advance()
                continue
            if ch == "/" and text.startswith("/*", self.pos):
                self._comment()
                continue
            line, col = self.line, self.col
            if ch in _PUNCT:
                self._advance()
                return self._emit(_PUNCT[ch], ch, line, col)
            if ch == "#":
                return self._hash(line, col)
            if ch == "'":
                return self._string(line, col)
            if ch == ".":
                return self._enum(line, col)
            if ch.isdigit() or (ch in "+-" and self._peek_digit()):
                return self._number(line, col)
            if _is_keyword_start(ch):
                return self._keyword(line, col)
            raise self.error(f"unexpected character {ch!r}")
        return self._emit(TokenType.EOF, "", self.line, self.col)

    def _peek_digit(self) -> bool:
        nxt = self.pos + 1
        return nxt < len(self.text) and self.text[nxt].isdigit()

    def _comment(self) -> None:
        end = self.text.find("*/", self.pos + 2)
        if end < 0:
            raise self.error("unterminated comment")
        body = self.text[self.pos + 2:end]
        self._advance(end + 2 - self.pos)
        m = ANNOTATION_BODY_RE.fullmatch(body)
        if m:
            self._pending_annotation = (
                int(m.group(1)), int(m.group(2)), int(m.group(3)))

    def _hash(self, line: int, col: int) -> Token:
        start = self.pos + 1
        end = start
        while end < len(self.text) and self.text[end].isdigit():
            end += 1
        if end == start:
            raise self.error("'#' not followed by an entity number")
        tok = self._emit(TokenType.HASH, self.text[start:end], line, col)
        self._advance(end - self.pos)
        return tok

    def _string(self, line: int, col: int) -> Token:
        # '' inside a string is an escaped quote; content is kept verbatim.
        i = self.pos + 1
        text = self.text
        while True:
            if i >= len(text):
                raise self.error("unterminated string literal")
            if text[i] == "'":
                if i + 1 < len(text) and text[i + 1] == "'":
                    i += 2
                    continue
                break
            i += 1
        tok = self._emit(TokenType.STRING, text[self.pos + 1:i], line, col)
        self._advance(i + 1 - self.pos)
        return tok

    def _enum(self, line: int, col: int) -> Token:
        i = self.pos + 1
        text = self.text
        start = i
        while i < len(text) and (text[i].isalnum() or text[i] == "_"):
            i += 1
        if i == start or i >= len(text) or text[i] != ".":
            raise self.error("malformed enumeration token")
        tok = self._emit(TokenType.ENUM, text[start:i], line, col)
        self._advance(i + 1 - self.pos)
        return tok

    def _number(self, line: int, col: int) -> Token:
        text = self.text
        i = self.pos
        if text[i] in "+-":
            i += 1
        while i < len(text) and text[i].isdigit():
            i += 1
        is_real = False
        if i < len(text) and text[i] == ".":
            # A dot starts an enum only when no digits precede it, so this
            # is always the decimal point here.
            is_real = True
            i += 1
            while i < len(text) and text[i].isdigit():
                i += 1
        if i < len(text) and text[i] in "Ee":
            j = i + 1
            if j < len(text) and text[j] in "+-":
                j += 1
            if j < len(text) and text[j].isdigit():
                is_real = True
                i = j
                while i < len(text) and text[i].isdigit():
                    i += 1
        word = text[self.pos:i]
        tok = self._emit(TokenType.REAL if is_real else TokenType.INTEGER,
                         word, line, col)
        self._advance(i - self.pos)
        return tok

    def _keyword(self, line: int, col: int) -> Token:
        text = self.text
        i = self.pos
        while i < len(text) and _is_keyword_char(text[i]):
            i += 1
        tok = self._emit(TokenType.KEYWORD, text[self.pos:i], line, col)
        self._advance(i - self.pos)
        return tok


class _Parser:
    def __init__(self, lexer: _Lexer, max_entities: int):
        self.lexer = lexer
        self.max_entities = max_entities
        self._lookahead: Token | None = None

    def peek(self) -> Token:
        if self._lookahead is None:
            self._lookahead = self.lexer.next_token()
        return self._lookahead

    def advance(self) -> Token:
        tok = self.peek()
        if tok.type is not TokenType.EOF:
            self._lookahead = None
        return tok

    def error(self, message: str, expected: str | None = None) -> StepSyntaxError:
        tok = self.peek()
        return StepSyntaxError(message, tok.line, tok.column, expected)

    def expect(self, ttype: TokenType) -> Token:
        tok = self.peek()
        if tok.type is not ttype:
            raise self.error(f"unexpected {tok.type.value} {tok.text!r}", ttype.value)
        return self.advance()

    def expect_keyword(self, name: str) -> Token:
        tok = self.peek()
        if tok.type is not TokenType.KEYWORD or tok.text != name:
            raise self.error(f"unexpected {tok.type.value} {tok.text!r}", f"'{name}'")
        return self.advance()

    # --- document structure ---

    def parse_file(self) -> StepFile:
        self.expect_keyword("ISO-10303-21")
        self.expect(TokenType.SEMI)
        self.expect_keyword("HEADER")
        self.expect(TokenType.SEMI)
        header = self.parse_header_records()
        self._reject_extension_section()
        self.expect_keyword("DATA")
        if self.peek().type is TokenType.LPAREN:
            raise self.error("parameterized DATA sections are not supported")
        self.expect(TokenType.SEMI)
        entities = self.parse_entities()
        trailing_complete = False
        tok = self.peek()
        if tok.type is TokenType.KEYWORD and tok.text == "END-ISO-10303-21":
            self.advance()
            self.expect(TokenType.SEMI)
            trailing_complete = True
            if self.peek().type is not TokenType.EOF:
                raise self.error("content after the terminator line")
        elif tok.type is not TokenType.EOF:
            raise self.error(f"unexpected {tok.type.value} {tok.text!r}",
                             f"'{TERMINATOR_LINE}' or end of input")
        return StepFile(header=tuple(header), entities=tuple(entities),
                        trailing_complete=trailing_complete)

    def _reject_extension_section(self) -> None:
        tok = self.peek()
        if tok.type is TokenType.KEYWORD and tok.text in _UNSUPPORTED_SECTIONS:
            raise self.error(f"{tok.text} sections are not supported")

    def parse_header_records(self) -> list[HeaderRecord]:
        records: list[HeaderRecord] = []
        while True:
            tok = self.peek()
            if tok.type is TokenType.KEYWORD and tok.text == "ENDSEC":
                self.advance()
                self.expect(TokenType.SEMI)
                return records
            name = self.expect(TokenType.KEYWORD).text
            self.expect(TokenType.LPAREN)
            params = self.parse_param_list()
            self.expect(TokenType.SEMI)
            records.append(HeaderRecord(name, params))

    def parse_entities(self) -> list[EntityInstance]:
        entities: list[EntityInstance] = []
        seen: set[int] = set()
        while True:
            tok = self.peek()
            if tok.type is TokenType.KEYWORD and tok.text == "ENDSEC":
                self.advance()
                self.expect(TokenType.SEMI)
                return entities
            if tok.type is TokenType.KEYWORD and tok.text in _UNSUPPORTED_SECTIONS:
                raise self.error(f"{tok.text} sections are not supported")
            ann_values = tok.annotation
            entity = self.parse_entity()
            if entity.id in seen:
                raise DuplicateIdError(entity.id)
            seen.add(entity.id)
            if len(entities) >= self.max_entities:
                raise EntityLimitError(self.max_entities)
            if ann_values is not None:
                entity = EntityInstance(
                    entity.id, entity.type_name, entity.params, entity.complex_parts,
                    annotation=BranchAnnotation(entity.id, *ann_values))
            entities.append(entity)

    def parse_entity(self) -> EntityInstance:
        id_tok = self.expect(TokenType.HASH)
        entity_id = int(id_tok.text)
        if entity_id <= 0:
            raise StepSyntaxError("entity identifier must be positive",
                                  id_tok.line, id_tok.column)
        self.expect(TokenType.EQUALS)
        if self.peek().type is TokenType.LPAREN:
            self.advance()
            parts: list[ComplexPart] = []
            while self.peek().type is not TokenType.RPAREN:
                name = self._type_name()
                self.expect(TokenType.LPAREN)
                parts.append(ComplexPart(name, self.parse_param_list()))
            if not parts:
                raise self.error("complex instance has no parts")
            self.advance()  # RPAREN
            self.expect(TokenType.SEMI)
            return EntityInstance(entity_id, parts[0].type_name, (),
                                  complex_parts=tuple(parts))
        name = self._type_name()
        self.expect(TokenType.LPAREN)
        params = self.parse_param_list()
        self.expect(TokenType.SEMI)
        return EntityInstance(entity_id, name, params)

    def _type_name(self) -> str:
        tok = self.expect(TokenType.KEYWORD)
        if not TYPE_NAME_RE.match(tok.text):
            raise StepSyntaxError(f"invalid entity type name {tok.text!r}",
                                  tok.line, tok.column)
        return tok.text

    # --- parameters ---

    def parse_param_list(self) -> tuple[ParamValue, ...]:
        """Parse parameters up to and including the closing parenthesis."""
        if self.peek().type is TokenType.RPAREN:
            self.advance()
            return ()
        params = [self.parse_param()]
        while self.peek().type is TokenType.COMMA:
            self.advance()
            params.append(self.parse_param())
        self.expect(TokenType.RPAREN)
        return tuple(params)

    def parse_param(self) -> ParamValue:
        tok = self.peek()
        if tok.type is TokenType.HASH:
            self.advance()
            return Reference(int(tok.text))
        if tok.type is TokenType.INTEGER:
            self.advance()
            return Integer(int(tok.text))
        if tok.type is TokenType.REAL:
            self.advance()
            return Real.from_text(tok.text)
        if tok.type is TokenType.STRING:
            self.advance()
            return Text(tok.text)
        if tok.type is TokenType.ENUM:
            self.advance()
            return EnumToken(tok.text)
        if tok.type is TokenType.DOLLAR:
            self.advance()
            return Omitted()
        if tok.type is TokenType.STAR:
            self.advance()
            return Derived()
        if tok.type is TokenType.LPAREN:
            self.advance()
            return ListOf(self.parse_param_list())
        if tok.type is TokenType.KEYWORD:
            self.advance()
            self.expect(TokenType.LPAREN)
            value = self.parse_param()
            self.expect(TokenType.RPAREN)
            return TypedValue(tok.text, value)
        raise self.error(f"unexpected {tok.type.value} {tok.text!r}", "a parameter")


def parse_step(text: str, *, max_entities: int = DEFAULT_MAX_ENTITIES) -> StepFile:
    """Parse Part-21 text into a :class:`StepFile`.

    Comments are discarded, except reserializer branch annotations, which are
    attached to the entity they precede. Forward references are allowed; use
    :func:`stepkit.graph.build_graph` to check that references resolve.

    Raises :class:`StepSyntaxError`, :class:`DuplicateIdError` or
    :class:`EntityLimitError`.
    """
    return _Parser(_Lexer(text), max_entities).parse_file()


def serialize_step(file: StepFile) -> str:
    """Emit a Part-21 document, one entity per line, in list order.

    The output always carries the terminator line. Serializing and re-parsing
    yields a StepFile equal to the input. Raises :class:`InvalidModelError`
    when the file violates its invariants.
    """
    lines = ["ISO-10303-21;", "HEADER;"]
    for record in file.header:
        lines.append(f"{record.name}({_render_params(record.params)});")
    lines.append("ENDSEC;")
    lines.append("DATA;")
    seen: set[int] = set()
    for entity in file.entities:
        if entity.id <= 0:
            raise InvalidModelError(f"entity identifier #{entity.id} is not positive")
        if entity.id in seen:
            raise InvalidModelError(f"duplicate entity identifier #{entity.id}")
        seen.add(entity.id)
        if entity.annotation is not None:
            lines.append(format_annotation_comment(entity.annotation))
        lines.append(_render_entity(entity))
    lines.append("ENDSEC;")
    lines.append(TERMINATOR_LINE)
    return "\n".join(lines) + "\n"


def _render_entity(entity: EntityInstance) -> str:
    if entity.complex_parts is not None:
        if not entity.complex_parts:
            raise InvalidModelError(f"entity #{entity.id} has an empty complex body")
        body = "".join(
            f"{_checked_type_name(part.type_name)}({_render_params(part.params)})"
            for part in entity.complex_parts)
        return f"#{entity.id}=({body});"
    name = _checked_type_name(entity.type_name)
    return f"#{entity.id}={name}({_render_params(entity.params)});"


def _checked_type_name(name: str) -> str:
    if not TYPE_NAME_RE.match(name):
        raise InvalidModelError(f"invalid entity type name {name!r}")
    return name


def _render_params(params) -> str:
    return ",".join(_render_param(p) for p in params)


def _render_param(value: ParamValue) -> str:
    if isinstance(value, Real):
        return value.text
    if isinstance(value, Integer):
        return str(value.value)
    if isinstance(value, Text):
        return f"'{value.raw}'"
    if isinstance(value, EnumToken):
        return f".{value.name}."
    if isinstance(value, Reference):
        if value.target <= 0:
            raise InvalidModelError(f"reference to non-positive id #{value.target}")
        return f"#{value.target}"
    if isinstance(value, ListOf):
        return f"({_render_params(value.items)})"
    if isinstance(value, Omitted):
        return "$"
    if isinstance(value, Derived):
        return "*"
    if isinstance(value, TypedValue):
        return f"{value.keyword}({_render_param(value.value)})"
    raise InvalidModelError(f"unknown parameter value {value!r}")


def check_completion(text: str) -> bool:
    """True iff the text, ignoring trailing whitespace, ends with the
    standard terminator line. Pure string predicate; never parses."""
    return text.rstrip().endswith(TERMINATOR_LINE)
