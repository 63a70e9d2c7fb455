"""Operating-system environment: commands run on an execution backend, and a
task passes iff its evaluation script exits 0 on the same instance."""

from __future__ import annotations

import re
import shlex
import stat as _stat
import uuid
from dataclasses import dataclass, field
from pathlib import PurePosixPath
from typing import Any, Protocol, Sequence

from ..agent.parsing import ActionKind, ParsedAction
from ..core import ChatHistory, EnvKind, Session, TaskInstance
from ..errors import ContractViolation, EnvironmentFailure
from .base import ChatHistoryFactory, Environment, InteractionResult
from .prompts import OS_OBSERVATION_PREFIX, os_preamble

DEFAULT_OBSERVATION_LIMIT = 8192


@dataclass(frozen=True)
class ExecResult:
    stdout: str
    exit_code: int


class ExecInstance(Protocol):
    def run(self, script: str) -> ExecResult: ...

    def destroy(self) -> None: ...


class ExecBackend(Protocol):
    def fresh(self) -> ExecInstance: ...


def truncate_output(text: str, limit: int = DEFAULT_OBSERVATION_LIMIT) -> str:
    """Keep the head and tail of ``text`` around an elision marker naming the omitted length."""
    if len(text) <= limit:
        return text
    head = limit // 2
    tail = limit - head
    omitted = len(text) - head - tail
    return f"{text[:head]}...{omitted} characters is omitted...{text[len(text) - tail:]}"


# -- mock backend --------------------------------------------------------------


@dataclass(frozen=True)
class Effect:
    """Declarative override: a simple command matching ``match`` produces this output.

    ``stdout`` is emitted ``stdout_repeat`` times; ``files`` are written into
    the instance's filesystem.
    """

    match: str
    stdout: str = ""
    stdout_repeat: int = 1
    exit_code: int = 0
    files: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_pattern", re.compile(self.match))

    def applies(self, command: str) -> bool:
        return self._pattern.search(command) is not None  # type: ignore[attr-defined]


class _Exit(Exception):
    def __init__(self, code: int):
        self.code = code


class MockInstance:
    """Recording executor over a tiny in-memory filesystem.

    Supports a handful of builtins, ``;``, ``&&``, ``||``, pipes, and ``>``/``>>``
    redirection. Anything else exits 127 unless an :class:`Effect` claims it.
    """

    def __init__(self, effects: Sequence[Effect] = ()):
        self.effects = list(effects)
        self.files: dict[str, str] = {}
        self.dirs: set[str] = {"/", "/tmp", "/root", "/home", "/etc", "/var", "/var/log"}
        self.modes: dict[str, int] = {}
        self.cwd = "/root"
        self.log: list[str] = []
        self.destroyed = False

    # public API

    def run(self, script: str) -> ExecResult:
        if self.destroyed:
            raise EnvironmentFailure("instance already destroyed")
        self.log.append(script)
        out: list[str] = []
        code = 0
        try:
            for line in script.splitlines():
                if line.strip() and not line.lstrip().startswith("#"):
                    code = self._run_line(line, out)
        except _Exit as stop:
            code = stop.code
        return ExecResult("".join(out), code)

    def destroy(self) -> None:
        self.destroyed = True
        self.files.clear()

    # interpreter

    def _path(self, p: str) -> str:
        path = PurePosixPath(p) if p.startswith("/") else PurePosixPath(self.cwd) / p
        parts: list[str] = []
        for part in path.parts[1:]:
            if part == "..":
                if parts:
                    parts.pop()
            elif part != ".":
                parts.append(part)
        return "/" + "/".join(parts)

    def _run_line(self, line: str, out: list[str]) -> int:
        lexer = shlex.shlex(line, posix=True, punctuation_chars=";&|<>")
        lexer.whitespace_split = True
        try:
            tokens = list(lexer)
        except ValueError:
            out.append(f"bash: syntax error: {line}\n")
            return 2
        code = 0
        connector = ";"
        pipeline: list[list[str]] = [[]]
        chunks: list[tuple[str, list[list[str]]]] = []
        for tok in tokens + [";"]:
            if tok in (";", "&&", "||"):
                chunks.append((connector, pipeline))
                connector, pipeline = tok, [[]]
            elif tok == "|":
                pipeline.append([])
            else:
                pipeline[-1].append(tok)
        for conn, pipe in chunks:
            if not any(pipe):
                continue
            if conn == "&&" and code != 0:
                continue
            if conn == "||" and code == 0:
                continue
            code = self._run_pipeline(pipe, out)
        return code

    def _run_pipeline(self, pipe: list[list[str]], out: list[str]) -> int:
        data = None
        code = 0
        for i, argv in enumerate(pipe):
            buf: list[str] = []
            code = self._run_simple(argv, data, buf)
            data = "".join(buf)
        out.append(data or "")
        return code

    def _run_simple(self, argv: list[str], stdin: str | None, out: list[str]) -> int:
        redirect, target = None, None
        args: list[str] = []
        it = iter(argv)
        for tok in it:
            if tok in (">", ">>"):
                redirect, target = tok, next(it, None)
            elif tok in ("<", "<<<"):
                nxt = next(it, "")
                stdin = (nxt + "\n") if tok == "<<<" else self.files.get(self._path(nxt), "")
            else:
                args.append(tok)
        if not args:
            return 0
        command_text = " ".join(args)
        buf: list[str] = []
        effect = next((e for e in self.effects if e.applies(command_text)), None)
        if effect is not None:
            buf.append(effect.stdout * effect.stdout_repeat)
            for path, content in effect.files.items():
                self.files[self._path(path)] = content
            code = effect.exit_code
        else:
            handler = getattr(self, "_cmd_" + args[0].replace("[", "test").replace("-", "_"), None)
            if handler is None:
                buf.append(f"bash: {args[0]}: command not found\n")
                code = 127
            else:
                code = handler(args[1:], stdin, buf)
        text = "".join(buf)
        if redirect and target:
            path = self._path(target)
            self.files[path] = (self.files.get(path, "") if redirect == ">>" else "") + text
        else:
            out.append(text)
        return code

    # builtins: each returns an exit code and appends stdout to ``out``

    def _cmd_true(self, args, stdin, out):
        return 0

    def _cmd_false(self, args, stdin, out):
        return 1

    def _cmd_exit(self, args, stdin, out):
        raise _Exit(int(args[0]) if args else 0)

    def _cmd_sleep(self, args, stdin, out):
        return 0

    def _cmd_cd(self, args, stdin, out):
        path = self._path(args[0] if args else "/root")
        if path not in self.dirs:
            out.append(f"bash: cd: {args[0]}: No such file or directory\n")
            return 1
        self.cwd = path
        return 0

    def _cmd_pwd(self, args, stdin, out):
        out.append(self.cwd + "\n")
        return 0

    def _cmd_echo(self, args, stdin, out):
        newline = True
        if args and args[0] == "-n":
            newline, args = False, args[1:]
        out.append(" ".join(args) + ("\n" if newline else ""))
        return 0

    def _cmd_touch(self, args, stdin, out):
        for a in args:
            path = self._path(a)
            if str(PurePosixPath(path).parent) not in self.dirs:
                out.append(f"touch: cannot touch '{a}': No such file or directory\n")
                return 1
            self.files.setdefault(path, "")
        return 0

    def _cmd_mkdir(self, args, stdin, out):
        parents = "-p" in args
        for a in (x for x in args if not x.startswith("-")):
            path = self._path(a)
            parent = str(PurePosixPath(path).parent)
            if parent not in self.dirs and not parents:
                out.append(f"mkdir: cannot create directory '{a}': No such file or directory\n")
                return 1
            p = PurePosixPath(path)
            for anc in [*reversed(p.parents), p]:
                self.dirs.add(str(anc))
        return 0

    def _cmd_rm(self, args, stdin, out):
        force = any(a.startswith("-") and "f" in a for a in args)
        recursive = any(a.startswith("-") and "r" in a for a in args)
        for a in (x for x in args if not x.startswith("-")):
            path = self._path(a)
            if path in self.files:
                del self.files[path]
            elif path in self.dirs and recursive:
                self.dirs = {d for d in self.dirs if d != path and not d.startswith(path + "/")}
                self.files = {f: c for f, c in self.files.items() if not f.startswith(path + "/")}
            elif not force:
                out.append(f"rm: cannot remove '{a}': No such file or directory\n")
                return 1
        return 0

    def _cmd_cat(self, args, stdin, out):
        if not args:
            out.append(stdin or "")
            return 0
        for a in args:
            path = self._path(a)
            if path not in self.files:
                out.append(f"cat: {a}: No such file or directory\n")
                return 1
            out.append(self.files[path])
        return 0

    def _cmd_tee(self, args, stdin, out):
        append = "-a" in args
        for a in (x for x in args if not x.startswith("-")):
            path = self._path(a)
            self.files[path] = (self.files.get(path, "") if append else "") + (stdin or "")
        out.append(stdin or "")
        return 0

    def _cmd_grep(self, args, stdin, out):
        quiet = "-q" in args
        rest = [a for a in args if not a.startswith("-")]
        if not rest:
            return 2
        pattern, files = rest[0], rest[1:]
        text = (stdin or "") if not files else "".join(self.files.get(self._path(f), "") for f in files)
        hits = [ln for ln in text.splitlines() if re.search(pattern, ln)]
        if not quiet:
            out.extend(h + "\n" for h in hits)
        return 0 if hits else 1

    def _cmd_wc(self, args, stdin, out):
        files = [a for a in args if not a.startswith("-")]
        text = (stdin or "") if not files else self.files.get(self._path(files[0]), "")
        count = text.count("\n")
        out.append(f"{count} {files[0]}\n" if files else f"{count}\n")
        return 0

    def _cmd_chmod(self, args, stdin, out):
        if len(args) < 2 or not re.fullmatch(r"[0-7]{3,4}", args[0]):
            out.append("chmod: invalid mode\n")
            return 1
        for a in args[1:]:
            path = self._path(a)
            if path not in self.files and path not in self.dirs:
                out.append(f"chmod: cannot access '{a}': No such file or directory\n")
                return 1
            self.modes[path] = int(args[0], 8)
        return 0

    def _cmd_stat(self, args, stdin, out):
        if len(args) == 3 and args[0] == "-c" and args[1] == "%a":
            path = self._path(args[2])
            if path not in self.files and path not in self.dirs:
                return 1
            default = 0o755 if path in self.dirs else 0o644
            out.append(f"{_stat.S_IMODE(self.modes.get(path, default)):o}\n")
            return 0
        return 1

    def _cmd_ls(self, args, stdin, out):
        target = self._path(next((a for a in args if not a.startswith("-")), self.cwd))
        if target in self.files:
            out.append(PurePosixPath(target).name + "\n")
            return 0
        if target not in self.dirs:
            return 2
        prefix = target.rstrip("/") + "/"
        names = {p[len(prefix):].split("/")[0] for p in [*self.files, *self.dirs] if p.startswith(prefix) and p != target}
        out.extend(n + "\n" for n in sorted(names))
        return 0

    def _cmd_test(self, args, stdin, out):
        if args and args[-1] == "]":
            args = args[:-1]
        negate = bool(args) and args[0] == "!"
        if negate:
            args = args[1:]
        if len(args) == 2:
            flag, path = args[0], self._path(args[1])
            checks = {
                "-f": path in self.files,
                "-d": path in self.dirs,
                "-e": path in self.files or path in self.dirs,
                "-s": bool(self.files.get(path)),
            }
            result = checks.get(flag)
            if result is None:
                return 2
        elif len(args) == 3 and args[1] in ("=", "==", "!="):
            result = (args[0] == args[2]) != (args[1] == "!=")
        elif len(args) == 1:
            result = bool(args[0])
        else:
            return 2
        return 0 if result != negate else 1


class MockExecBackend:
    """Hands out independent :class:`MockInstance` objects sharing one effect list."""

    def __init__(self, effects: Sequence[Effect | dict[str, Any]] = ()):
        self.effects = [e if isinstance(e, Effect) else Effect(**e) for e in effects]
        self.instances: list[MockInstance] = []

    def fresh(self) -> MockInstance:
        instance = MockInstance(self.effects)
        self.instances.append(instance)
        return instance


# -- container backend ---------------------------------------------------------


class DockerInstance:
    def __init__(self, client: Any, container_id: str, shell: str):
        self._client = client
        self.container_id = container_id
        self._shell = shell
        self._destroyed = False

    def run(self, script: str) -> ExecResult:
        c = self._client
        try:
            created = c.post(
                f"/containers/{self.container_id}/exec",
                json={"AttachStdout": True, "AttachStderr": True, "Tty": True, "Cmd": [self._shell, "-c", script]},
            )
            created.raise_for_status()
            exec_id = created.json()["Id"]
            started = c.post(f"/exec/{exec_id}/start", json={"Detach": False, "Tty": True})
            started.raise_for_status()
            inspect = c.get(f"/exec/{exec_id}/json")
            inspect.raise_for_status()
            code = inspect.json().get("ExitCode")
        except Exception as exc:
            raise EnvironmentFailure(f"container exec failed: {exc}") from exc
        return ExecResult(started.content.decode("utf-8", errors="replace"), int(code if code is not None else -1))

    def destroy(self) -> None:
        if self._destroyed:
            return
        self._destroyed = True
        try:
            self._client.delete(f"/containers/{self.container_id}", params={"force": "true"})
        except Exception:
            pass


class DockerExecBackend:
    """Fresh container per task through the Docker Engine HTTP API."""

    def __init__(
        self,
        image: str,
        *,
        socket_path: str = "/var/run/docker.sock",
        base_url: str = "http://docker",
        shell: str = "bash",
        transport: Any = None,
        timeout: float = 120.0,
    ):
        import httpx

        self.image = image
        self.shell = shell
        if transport is None:
            transport = httpx.HTTPTransport(uds=socket_path)
        self._client = httpx.Client(base_url=base_url, transport=transport, timeout=timeout)

    def fresh(self) -> DockerInstance:
        name = f"llh-{uuid.uuid4().hex[:12]}"
        try:
            created = self._client.post(
                "/containers/create",
                params={"name": name},
                json={"Image": self.image, "Cmd": ["sleep", "infinity"], "Tty": True},
            )
            created.raise_for_status()
            container_id = created.json()["Id"]
            self._client.post(f"/containers/{container_id}/start").raise_for_status()
        except Exception as exc:
            raise EnvironmentFailure(f"cannot start container from {self.image}: {exc}") from exc
        return DockerInstance(self._client, container_id, self.shell)

    def close(self) -> None:
        self._client.close()


# -- environment ---------------------------------------------------------------


class OSEnvironment(Environment):
    kind = EnvKind.OS

    def __init__(
        self,
        backend: ExecBackend | None = None,
        *,
        round_limit: int = 5,
        observation_limit: int = DEFAULT_OBSERVATION_LIMIT,
        factory: ChatHistoryFactory | None = None,
    ):
        super().__init__(factory)
        self.backend = backend or MockExecBackend()
        self.round_limit = round_limit
        self.observation_limit = observation_limit
        self._instance: ExecInstance | None = None

    def _reset(self, task: TaskInstance) -> ChatHistory:
        self._instance = self.backend.fresh()
        init = task.setup.get("init", "")
        if init:
            result = self._instance.run(init)
            if result.exit_code != 0:
                raise EnvironmentFailure(f"setup script exited {result.exit_code}: {result.stdout[:200]}")
        return self.factory.construct(os_preamble(self.round_limit), task.instruction)

    def _interact(self, action: ParsedAction) -> InteractionResult:
        assert self._instance is not None
        if action.kind is ActionKind.OS_BASH:
            result = self._instance.run(str(action.payload))
            return InteractionResult(OS_OBSERVATION_PREFIX + truncate_output(result.stdout, self.observation_limit))
        if action.kind is ActionKind.OS_FINISH:
            return InteractionResult("", finished=True)
        raise ContractViolation(f"OS environment cannot handle {action.kind.value}")

    def _complete(self, task: TaskInstance, session: Session) -> int:
        assert self._instance is not None
        return int(self._instance.run(task.ground_truth["evaluation"]).exit_code == 0)

    def _cleanup(self) -> None:
        if self._instance is not None:
            self._instance.destroy()
            self._instance = None

    def _release(self) -> None:
        close = getattr(self.backend, "close", None)
        if close is not None:
            close()
