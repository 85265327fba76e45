"""Action DSL: one tool call per step, keyword arguments only.

Grammar (whitespace-insensitive between tokens)::

    call   := IDENT '(' [ arg (',' arg)* ] ')'
    arg    := IDENT '=' value
    value  := STRING | NUMBER | ref
    ref    := '$step' INT ( '.' IDENT | '[' INT ']' )+

Strings are single- or double-quoted with backslash escapes.  A ref names
a field inside the observation of an earlier step, e.g.
``$step4.text`` or ``$step2.objects[0].box``; refs resolve at execution
time, not at parse time.

Parsing is two-staged so verification rules can tell failure modes apart:
``parse_call`` checks syntax only, ``validate_call`` checks the tool name
and argument schema, and ``parse_action`` does both.  Syntax errors carry
the byte offset of the offending character.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Union

# --------------------------------------------------------------------------
# errors
# --------------------------------------------------------------------------

SYNTAX = "syntax"
UNKNOWN_TOOL = "unknown-tool"
BAD_ARGS = "bad-args"


class ActionParseError(ValueError):
    """Raised for any rejected action code.

    ``code`` is one of "syntax", "unknown-tool", "bad-args"; ``offset`` is
    the byte offset into the source where the problem starts (0 when the
    problem is not tied to a position).
    """

    def __init__(self, message: str, code: str = SYNTAX, offset: int = 0) -> None:
        self.code = code
        self.offset = offset
        super().__init__(f"{message} (at byte {offset})" if code == SYNTAX else message)


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ObsRef:
    """Reference into the observation payload of step ``step``."""

    step: int
    path: tuple[Union[str, int], ...]

    def render(self) -> str:
        parts = [f"$step{self.step}"]
        for seg in self.path:
            parts.append(f"[{seg}]" if isinstance(seg, int) else f".{seg}")
        return "".join(parts)


ArgValue = Union[str, int, float, ObsRef]


@dataclass(frozen=True)
class ToolCall:
    tool: str
    args: dict[str, ArgValue] = field(default_factory=dict)


@dataclass(frozen=True)
class ActionProgram:
    """A validated single-call action with its source text."""

    call: ToolCall
    source: str


# --------------------------------------------------------------------------
# tool registry
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamSpec:
    kind: str  # "string" | "number" | "enum"
    required: bool = True
    choices: tuple[str, ...] = ()


@dataclass(frozen=True)
class ToolSpec:
    name: str
    params: dict[str, ParamSpec]
    description: str


DIRECTION_CHOICES = ("move_forward", "turn_left", "turn_right", "turn_around")


def normalize_direction(value: str) -> str:
    """Accept both "turn_left" and the spoken form "turn left"."""
    return value.strip().lower().replace(" ", "_")


TOOL_SPECS: dict[str, ToolSpec] = {
    spec.name: spec
    for spec in (
        ToolSpec(
            "GoNextPoint",
            {"direction": ParamSpec("enum", choices=DIRECTION_CHOICES)},
            "Rotate per the direction token, then advance one grid cell.",
        ),
        ToolSpec(
            "ObjectLocation2D",
            {"category": ParamSpec("string")},
            "2-D image boxes of currently visible objects of a category.",
        ),
        ToolSpec(
            "ObjectLocation3D",
            {"category": ParamSpec("string")},
            "World-space centers and extents of currently visible objects "
            "of a category, sorted by distance.",
        ),
        ToolSpec(
            "ObjectCrop",
            {"box": ParamSpec("string")},
            "Crop the current view to a 2-D box; the box is either a "
            "reference to an earlier box observation or an "
            "'x0,y0,x1,y1' string.",
        ),
        ToolSpec(
            "SegmentInstance",
            {},
            "Instance masks for every currently visible object.",
        ),
        ToolSpec(
            "VisualQA",
            {"question": ParamSpec("string"), "target": ParamSpec("string", required=False)},
            "Answer a free-form question about the current view.",
        ),
        ToolSpec(
            "FinalAnswer",
            {"answer": ParamSpec("string")},
            "Provide the final answer and end the episode.",
        ),
    )
}


# --------------------------------------------------------------------------
# lexer / parser
# --------------------------------------------------------------------------

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"-?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?")
_INT_RE = re.compile(r"\d+")
_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "'": "'", "\\": "\\"}


class _Cursor:
    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0

    def byte_offset(self, pos: int | None = None) -> int:
        p = self.pos if pos is None else pos
        return len(self.text[:p].encode("utf-8"))

    def fail(self, message: str, pos: int | None = None) -> ActionParseError:
        return ActionParseError(message, SYNTAX, self.byte_offset(pos))

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def at_end(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, char: str) -> None:
        if self.peek() != char:
            got = repr(self.peek()) if not self.at_end() else "end of input"
            raise self.fail(f"expected {char!r}, got {got}")
        self.pos += 1

    def ident(self, what: str) -> str:
        m = _IDENT_RE.match(self.text, self.pos)
        if not m:
            raise self.fail(f"expected {what}")
        self.pos = m.end()
        return m.group()

    def string(self) -> str:
        quote = self.peek()
        start = self.pos
        self.pos += 1
        out: list[str] = []
        while True:
            if self.at_end():
                raise self.fail("unterminated string literal", start)
            ch = self.text[self.pos]
            self.pos += 1
            if ch == quote:
                return "".join(out)
            if ch == "\\":
                if self.at_end():
                    raise self.fail("unterminated escape", self.pos - 1)
                esc = self.text[self.pos]
                self.pos += 1
                out.append(_ESCAPES.get(esc, esc))
            else:
                out.append(ch)

    def number(self) -> int | float:
        m = _NUMBER_RE.match(self.text, self.pos)
        if not m:
            raise self.fail("expected a number")
        self.pos = m.end()
        lit = m.group()
        if any(ch in lit for ch in ".eE"):
            return float(lit)
        return int(lit)

    def ref(self) -> ObsRef:
        start = self.pos
        self.pos += 1  # consume '$'
        m = _IDENT_RE.match(self.text, self.pos)
        if not m or not m.group().startswith("step"):
            raise self.fail("expected a $stepN reference", start)
        digits = m.group()[4:]
        if not digits.isdigit():
            raise self.fail("expected a step index after $step", start)
        self.pos = m.end()
        step = int(digits)
        path: list[Union[str, int]] = []
        while True:
            ch = self.peek()
            if ch == ".":
                self.pos += 1
                path.append(self.ident("a field name after '.'"))
            elif ch == "[":
                self.pos += 1
                im = _INT_RE.match(self.text, self.pos)
                if not im:
                    raise self.fail("expected an index inside '[]'")
                self.pos = im.end()
                self.expect("]")
                path.append(int(im.group()))
            else:
                break
        if not path:
            raise self.fail("a $stepN reference needs a field path", start)
        return ObsRef(step=step, path=tuple(path))

    def value(self) -> ArgValue:
        ch = self.peek()
        if ch in ("'", '"'):
            return self.string()
        if ch == "$":
            return self.ref()
        if ch == "-" or ch.isdigit() or ch == ".":
            return self.number()
        raise self.fail("expected a string, number, or $stepN reference")


def parse_call(text: str) -> ToolCall:
    """Parse the call syntax without consulting the tool registry."""
    cur = _Cursor(text)
    cur.skip_ws()
    if cur.at_end():
        raise cur.fail("empty action")
    tool = cur.ident("a tool name")
    cur.skip_ws()
    cur.expect("(")
    cur.skip_ws()
    args: dict[str, ArgValue] = {}
    if cur.peek() != ")":
        while True:
            name_pos = cur.pos
            name = cur.ident("an argument name")
            if name in args:
                raise cur.fail(f"duplicate argument {name!r}", name_pos)
            cur.skip_ws()
            cur.expect("=")
            cur.skip_ws()
            args[name] = cur.value()
            cur.skip_ws()
            if cur.peek() == ",":
                cur.pos += 1
                cur.skip_ws()
                continue
            break
    cur.expect(")")
    cur.skip_ws()
    if not cur.at_end():
        raise cur.fail("unexpected trailing input after the call")
    return ToolCall(tool=tool, args=args)


def validate_call(call: ToolCall) -> None:
    """Check the tool name and literal argument types against the registry."""
    spec = TOOL_SPECS.get(call.tool)
    if spec is None:
        raise ActionParseError(f"unknown tool {call.tool!r}", UNKNOWN_TOOL)
    for name in call.args:
        if name not in spec.params:
            raise ActionParseError(
                f"{call.tool} got an unexpected argument {name!r}", BAD_ARGS
            )
    for name, param in spec.params.items():
        if param.required and name not in call.args:
            raise ActionParseError(f"{call.tool} is missing argument {name!r}", BAD_ARGS)
        if name not in call.args:
            continue
        value = call.args[name]
        if isinstance(value, ObsRef):
            continue  # refs are type-checked when resolved
        if param.kind == "number":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ActionParseError(
                    f"{call.tool}.{name} expects a number, got {value!r}", BAD_ARGS
                )
            if isinstance(value, float) and not math.isfinite(value):
                raise ActionParseError(f"{call.tool}.{name} must be finite", BAD_ARGS)
        elif param.kind == "string":
            if not isinstance(value, str):
                raise ActionParseError(
                    f"{call.tool}.{name} expects a string, got {value!r}", BAD_ARGS
                )
        elif param.kind == "enum":
            if not isinstance(value, str) or normalize_direction(value) not in param.choices:
                raise ActionParseError(
                    f"{call.tool}.{name} expects one of {param.choices}, got {value!r}",
                    BAD_ARGS,
                )


def parse_action(text: str) -> ActionProgram:
    """Parse and validate one action; the single entry point for executors."""
    call = parse_call(text)
    validate_call(call)
    return ActionProgram(call=call, source=text)


def render_args(call: ToolCall) -> dict[str, Any]:
    """JSON-safe view of a call's arguments (refs rendered to their text)."""
    return {
        k: (v.render() if isinstance(v, ObsRef) else v) for k, v in call.args.items()
    }
