"""Wire adapters for out-of-process scorers, judges, planners and controllers.

Two transports carry the same newline-delimited JSON protocol: a
persistent subprocess speaking over its standard streams, and an HTTP
endpoint taking one POST per request.  A request times out after 30
seconds and is retried once (the subprocess is restarted first); a
malformed reply is a protocol violation and raises PortError with no
retry, since the peer is answering but speaking the wrong language.
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from typing import IO, Protocol, Sequence

from .controllers import HeuristicController, OracleController
from .metrics import JudgeScore
from .runtime import HistoryStep, Observation, Plan
from .trajectory import Trajectory

DEFAULT_TIMEOUT_S = 30.0

_EOF = object()


class PortError(RuntimeError):
    """A wire peer failed: transport trouble after the retry, or a
    protocol violation in an otherwise delivered reply."""


class _TransportFailure(Exception):
    """Internal: the attempt failed in a way a retry may fix."""


class Port(Protocol):
    def request(self, payload: dict) -> dict: ...

    def close(self) -> None: ...


def _decode_reply(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        raise PortError(f"protocol violation: reply is not JSON: {text[:80]!r}")
    if not isinstance(doc, dict):
        raise PortError(f"protocol violation: reply is not an object: {text[:80]!r}")
    return doc


class LineProcessPort:
    """One persistent subprocess; one JSON request line in, one reply line out.

    The child is spawned lazily on the first request and restarted if it
    dies or goes silent past the timeout.
    """

    def __init__(self, argv: Sequence[str], timeout_s: float = DEFAULT_TIMEOUT_S) -> None:
        if not argv:
            raise ValueError("argv must name a command")
        if timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        self._argv = [str(a) for a in argv]
        self._timeout_s = timeout_s
        self._proc: subprocess.Popen[str] | None = None
        self._lines: queue.Queue[object] = queue.Queue()

    def _ensure_process(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            return
        self._proc = subprocess.Popen(
            self._argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
        )
        self._lines = queue.Queue()

        def pump(stream: IO[str], sink: queue.Queue[object]) -> None:
            for line in stream:
                sink.put(line)
            sink.put(_EOF)

        threading.Thread(
            target=pump, args=(self._proc.stdout, self._lines), daemon=True
        ).start()

    def _drop_process(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()
        self._proc = None

    def request(self, payload: dict) -> dict:
        line = json.dumps(payload, sort_keys=True) + "\n"
        failure: _TransportFailure | None = None
        for _ in range(2):  # one retry
            try:
                self._ensure_process()
                proc, lines = self._proc, self._lines
                assert proc is not None and proc.stdin is not None
                try:
                    proc.stdin.write(line)
                    proc.stdin.flush()
                except (OSError, ValueError) as exc:
                    raise _TransportFailure(f"write failed: {exc}")
                try:
                    reply = lines.get(timeout=self._timeout_s)
                except queue.Empty:
                    raise _TransportFailure(f"no reply within {self._timeout_s:g}s")
                if reply is _EOF:
                    raise _TransportFailure("process closed its output")
                return _decode_reply(str(reply))
            except _TransportFailure as exc:
                failure = exc
                self._drop_process()
        raise PortError(f"{self._argv[0]} failed after retry: {failure}")

    def close(self) -> None:
        self._drop_process()

    def __enter__(self) -> "LineProcessPort":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


class HttpPort:
    """POSTs each request as a JSON body and decodes the JSON reply."""

    def __init__(self, url: str, timeout_s: float = DEFAULT_TIMEOUT_S) -> None:
        scheme = urllib.parse.urlparse(url).scheme
        if scheme not in ("http", "https"):
            raise ValueError(f"url must be http(s), got {url!r}")
        if timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        self._url = url
        self._timeout_s = timeout_s

    def request(self, payload: dict) -> dict:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        failure: Exception | None = None
        for _ in range(2):  # one retry
            req = urllib.request.Request(
                self._url,
                data=body,
                headers={"Content-Type": "application/json"},
                method="POST",
            )
            try:
                with urllib.request.urlopen(req, timeout=self._timeout_s) as resp:
                    text = resp.read().decode("utf-8")
                return _decode_reply(text)
            except (urllib.error.URLError, TimeoutError, OSError) as exc:
                failure = exc
        raise PortError(f"{self._url} failed after retry: {failure}")

    def close(self) -> None:
        pass

    def __enter__(self) -> "HttpPort":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


# --------------------------------------------------------------------------
# scorer and judge adapters
# --------------------------------------------------------------------------


def _unit_interval_score(reply: dict) -> float:
    value = reply.get("score")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise PortError(f"protocol violation: score missing or non-numeric: {reply!r}")
    if not 0.0 <= value <= 1.0:
        raise PortError(f"protocol violation: score outside [0,1]: {value!r}")
    return float(value)


class WireGroundingScorer:
    """Grounding scorer backed by a wire port."""

    kind = "grounding"

    def __init__(self, port: Port) -> None:
        self._port = port

    def score(self, question: str, descriptor: str, obj: dict) -> float:
        reply = self._port.request(
            {
                "kind": self.kind,
                "question": question,
                "descriptor": descriptor,
                "object": obj,
            }
        )
        return _unit_interval_score(reply)


class WireLlmScorer(WireGroundingScorer):
    """Plausibility judge backed by a wire port; same request shape."""

    kind = "judge"


class WireMatchJudge:
    """Answer-match judge: the gold answer rides in the question slot,
    the prediction in the descriptor slot, and the reply carries sigma."""

    def __init__(self, port: Port) -> None:
        self._port = port

    def judge(self, predicted: str, reference: str) -> JudgeScore:
        reply = self._port.request(
            {
                "kind": "match",
                "question": reference,
                "descriptor": predicted,
                "object": {},
            }
        )
        sigma = reply.get("sigma")
        if isinstance(sigma, bool) or not isinstance(sigma, int) or not 0 <= sigma <= 5:
            raise PortError(f"protocol violation: sigma must be an int in 0..5: {reply!r}")
        return JudgeScore(sigma=sigma)


# --------------------------------------------------------------------------
# controller and planner adapters
# --------------------------------------------------------------------------


def _observation_doc(observation: Observation) -> dict:
    return {"kind": observation.kind, "payload": observation.payload}


class WireController:
    """Controller living behind a wire port."""

    def __init__(self, port: Port) -> None:
        self._port = port

    def decide(
        self,
        question: str,
        plan: Plan,
        history: Sequence[HistoryStep],
        observation: Observation,
    ) -> tuple[str, str]:
        reply = self._port.request(
            {
                "role": "controller",
                "question": question,
                "plan": plan.text if plan is not None else None,
                "history": [
                    {
                        "thought": step.thought,
                        "code": step.code,
                        "observation": _observation_doc(step.observation),
                    }
                    for step in history
                ],
                "observation": _observation_doc(observation),
            }
        )
        thought, code = reply.get("thought"), reply.get("code")
        if not isinstance(thought, str) or not isinstance(code, str):
            raise PortError(
                f"protocol violation: controller reply needs thought and code strings: {reply!r}"
            )
        return thought, code

    def close(self) -> None:
        self._port.close()


class WirePlanner:
    """Planner living behind a wire port."""

    def __init__(self, port: Port) -> None:
        self._port = port

    def plan(self, question: str) -> Plan:
        reply = self._port.request(
            {
                "role": "planner",
                "question": question,
                "plan": None,
                "history": [],
                "observation": {},
            }
        )
        text, subgoals = reply.get("plan"), reply.get("subgoals")
        if (
            not isinstance(text, str)
            or not isinstance(subgoals, list)
            or not subgoals
            or not all(isinstance(s, str) for s in subgoals)
        ):
            raise PortError(
                f"protocol violation: planner reply needs a plan string and subgoal list: {reply!r}"
            )
        return Plan(text=text, subgoals=tuple(subgoals))

    def close(self) -> None:
        self._port.close()


# --------------------------------------------------------------------------
# controller specs
# --------------------------------------------------------------------------

BUILTIN_CONTROLLERS = ("oracle", "heuristic")


@dataclass(frozen=True)
class ControllerSpec:
    """Parsed form of a --controller flag value."""

    kind: str  # "builtin" | "exec" | "http"
    target: str  # builtin name, command line, or url
    argv: tuple[str, ...] = ()


def parse_controller_spec(spec: str) -> ControllerSpec:
    """Parse ``builtin:<name>``, ``exec:<argv>`` or ``http(s)://<url>``."""
    head, sep, tail = spec.partition(":")
    if not sep or not tail:
        raise ValueError(f"controller spec needs a scheme prefix, got {spec!r}")
    if head == "builtin":
        if tail not in BUILTIN_CONTROLLERS:
            raise ValueError(
                f"unknown builtin controller {tail!r}; choices: {', '.join(BUILTIN_CONTROLLERS)}"
            )
        return ControllerSpec(kind="builtin", target=tail)
    if head == "exec":
        argv = tuple(shlex.split(tail))
        if not argv:
            raise ValueError("exec controller spec needs a command line")
        return ControllerSpec(kind="exec", target=tail, argv=argv)
    if head in ("http", "https"):
        # "http://host/path" is the url itself; "http:http://host" unwraps
        url = spec if tail.startswith("//") else tail
        if urllib.parse.urlparse(url).scheme not in ("http", "https"):
            raise ValueError(f"http controller spec needs an http(s) url, got {spec!r}")
        return ControllerSpec(kind="http", target=url)
    raise ValueError(f"unknown controller scheme {head!r} in {spec!r}")


def make_controller(
    spec: ControllerSpec | str,
    trajectory: Trajectory | None = None,
    timeout_s: float = DEFAULT_TIMEOUT_S,
):
    """Instantiate the controller a spec names.

    ``builtin:oracle`` needs the trajectory to replay; wire controllers
    own their port, so call close() on them when the episode batch ends.
    """
    if isinstance(spec, str):
        spec = parse_controller_spec(spec)
    if spec.kind == "builtin":
        if spec.target == "heuristic":
            return HeuristicController()
        if trajectory is None:
            raise ValueError("builtin:oracle needs a trajectory to replay")
        return OracleController(trajectory)
    if spec.kind == "exec":
        return WireController(LineProcessPort(spec.argv, timeout_s=timeout_s))
    return WireController(HttpPort(spec.target, timeout_s=timeout_s))
