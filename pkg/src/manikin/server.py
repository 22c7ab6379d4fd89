"""Live session server and command-log replay.

The simulation loop owns all mutable state and runs paced at dt (or faster
with ``speed``); clients talk JSON over a WebSocket. Inbound commands go
through a queue drained at step boundaries, so a command never lands
mid-step. Outbound frames use a latest-wins queue per client: a slow reader
drops frames, never stalls the simulation.

Commands that change the simulation (``set_target``, ``clear_target``,
``toggle_guide``) are recorded with the step index they were applied at;
replaying that log headlessly reproduces the live run's trace byte for byte.
``pause`` only affects pacing and is deliberately not recorded.
"""

from __future__ import annotations

import asyncio
import json
from collections import defaultdict, deque

from manikin.errors import ManikinError, SchemaError
from manikin.scenario import Scenario, load_scenario
from manikin.world import World

PROTOCOL_VERSION = 1

SIM_COMMANDS = frozenset({"set_target", "clear_target", "toggle_guide"})
SERVER_COMMANDS = frozenset({"pause", "reset"})


class _Client:
    """Outbound lane per connection: control messages are delivered reliably,
    frames are latest-wins (a laggard drops frames, never stalls the loop)."""

    def __init__(self):
        self.control: deque[str] = deque()
        self.frame: str | None = None
        self.wakeup = asyncio.Event()

    def put_frame(self, text: str):
        self.frame = text
        self.wakeup.set()

    def put_control(self, text: str):
        self.control.append(text)
        self.wakeup.set()


class LiveServer:
    def __init__(self, scenario: Scenario, host: str = "127.0.0.1", port: int = 0,
                 speed: float = 1.0, record: str | None = None,
                 trace_out: str | None = None):
        self.world = World(scenario)
        self.host = host
        self.requested_port = port
        self.port: int | None = None
        self.speed = speed
        self.record = record
        self.trace_out = trace_out
        self.paused = False
        self.started = asyncio.Event()
        self.commands: asyncio.Queue = asyncio.Queue()
        self.clients: dict = {}
        self.session_log: list[dict] = []

    # -- client plumbing ---------------------------------------------------

    async def _sender(self, ws, client: _Client):
        while True:
            await client.wakeup.wait()
            client.wakeup.clear()
            while client.control:
                await ws.send(client.control.popleft())
            if client.frame is not None:
                frame, client.frame = client.frame, None
                await ws.send(frame)

    def _broadcast(self, message: dict, control: bool = True):
        text = json.dumps(message)
        for client in self.clients.values():
            if control:
                client.put_control(text)
            else:
                client.put_frame(text)

    async def _handler(self, ws):
        client = _Client()
        self.clients[ws] = client
        client.put_control(json.dumps(self.world.hello_message()))
        sender = asyncio.create_task(self._sender(ws, client))
        try:
            async for raw in ws:
                try:
                    cmd = json.loads(raw)
                    if not isinstance(cmd, dict) or "type" not in cmd:
                        raise ValueError
                except ValueError:
                    client.put_control(json.dumps({
                        "type": "error",
                        "message": "malformed command: expected a JSON object with a 'type' field",
                    }))
                    continue
                await self.commands.put((ws, cmd))
        finally:
            self.clients.pop(ws, None)
            sender.cancel()

    # -- command application -------------------------------------------------

    async def _drain_commands(self):
        while not self.commands.empty():
            ws, cmd = self.commands.get_nowait()
            kind = cmd.get("type")
            try:
                if kind == "pause":
                    self.paused = bool(cmd.get("paused", not self.paused))
                    self._broadcast({"type": "status", "paused": self.paused})
                elif kind == "reset":
                    self.world.reset()
                    self.session_log.clear()
                    self.paused = False
                    self._broadcast({"type": "reset_done"})
                elif kind in SIM_COMMANDS:
                    self.world.apply_command(cmd)
                    self.session_log.append(
                        {"at_step": self.world.step_index, "command": cmd}
                    )
                else:
                    raise ManikinError(f"unknown command type {kind!r}")
            except ManikinError as err:
                client = self.clients.get(ws)
                if client is not None:
                    client.put_control(json.dumps({"type": "error", "message": str(err)}))

    # -- the loop --------------------------------------------------------------

    async def run(self) -> dict:
        from websockets.asyncio.server import serve

        async with serve(self._handler, self.host, self.requested_port) as server:
            self.port = server.sockets[0].getsockname()[1]
            self.started.set()
            loop = asyncio.get_running_loop()
            next_tick = loop.time()
            world = self.world
            while world.step_index < world.n_steps_total:
                await self._drain_commands()
                if self.paused:
                    await asyncio.sleep(0.02)
                    next_tick = loop.time()
                    continue
                world.step()
                self._broadcast(world.frame_message(), control=False)
                if self.speed > 0:
                    next_tick += world.dt / self.speed
                    delay = next_tick - loop.time()
                    if delay > 0:
                        await asyncio.sleep(delay)
                    else:
                        next_tick = loop.time()
                else:
                    await asyncio.sleep(0)
            self._broadcast({"type": "end", "step": world.step_index})
            await asyncio.sleep(0.05)  # let senders flush the last frames
        return self.finalize()

    def finalize(self) -> dict:
        if self.trace_out:
            with open(self.trace_out, "w") as fh:
                self.world.write_trace(fh)
        if self.record:
            with open(self.record, "w") as fh:
                fh.write(json.dumps({
                    "type": "session",
                    "version": PROTOCOL_VERSION,
                    "scenario": self.world.scenario.name,
                    "config": self.world.scenario.config_hash,
                    "seed": self.world.scenario.seed,
                }) + "\n")
                for entry in self.session_log:
                    fh.write(json.dumps(entry) + "\n")
        return self.world.summary()


def serve_scenario(path_or_scenario, overrides=(), host="127.0.0.1", port=8700,
                   speed=1.0, record=None, trace_out=None) -> dict:
    """Blocking entry point: serve a scenario until its horizon ends."""
    scenario = (path_or_scenario if isinstance(path_or_scenario, Scenario)
                else load_scenario(path_or_scenario, overrides))
    server = LiveServer(scenario, host, port, speed, record, trace_out)

    async def _main():
        task = asyncio.create_task(server.run())
        await server.started.wait()
        print(f"serving {scenario.name!r} on ws://{server.host}:{server.port} "
              f"(dt={scenario.dt}, speed={speed})")
        return await task

    try:
        return asyncio.run(_main())
    except KeyboardInterrupt:
        return server.finalize()


def replay(path_or_scenario, session_path, out=None, overrides=()) -> dict:
    """Re-run a recorded live session headlessly; same commands, same steps."""
    scenario = (path_or_scenario if isinstance(path_or_scenario, Scenario)
                else load_scenario(path_or_scenario, overrides))
    by_step: dict[int, list] = defaultdict(list)
    with open(session_path) as fh:
        header = json.loads(fh.readline())
        if header.get("type") != "session":
            raise SchemaError(f"{session_path}: not a session log")
        if header.get("config") != scenario.config_hash:
            raise SchemaError(
                "session was recorded against a different scenario configuration "
                f"({header.get('config')} != {scenario.config_hash})"
            )
        for line in fh:
            if not line.strip():
                continue
            entry = json.loads(line)
            by_step[int(entry["at_step"])].append(entry["command"])

    world = World(scenario)
    while world.step_index < world.n_steps_total:
        for cmd in by_step.get(world.step_index, ()):
            world.apply_command(cmd)
        world.step()
    if out is not None:
        with open(out, "w") as fh:
            world.write_trace(fh)
    summary = world.summary()
    summary["_world"] = world
    return summary
