"""Live servers around the scene tick loop.

Three sockets, per the wire contract: a line-oriented control socket
(text commands and bridged MIDI), a newline-delimited JSON mocap socket,
and a WebSocket console channel (snapshots decimated to ~30 Hz, cue_fired
events, and a one-shot show_info on connect). Everything runs on one
asyncio loop, so the scene is only ever touched between awaits; sockets
feed the command queue and the tick task drains it.
"""

from __future__ import annotations

import asyncio
import json
import logging

from websockets.asyncio.server import broadcast, serve

from .protocol import (ShowDocument, encode_snapshot, navmesh_to_json,
                       parse_console_message, parse_control_line,
                       parse_mocap_frame)
from .stage import Scene, build_scene

log = logging.getLogger("showrunner.server")

CONSOLE_RATE = 30.0  # Hz ceiling for snapshot broadcast


class ShowServer:
    def __init__(self, doc: ShowDocument, *, control_port: int = 7701,
                 mocap_port: int = 7702, ws_port: int = 7703,
                 fixed_step: float | None = None, host: str = "127.0.0.1"):
        self.scene: Scene = build_scene(doc, fixed_step)
        self.doc = doc
        self.host = host
        self.control_port = control_port
        self.mocap_port = mocap_port
        self.ws_port = ws_port
        self.decimate = max(1, round(1.0 / (self.scene.dt * CONSOLE_RATE)))
        self.connections = set()
        self.started = asyncio.Event()
        self._stopping = asyncio.Event()

    def stop(self) -> None:
        self._stopping.set()

    async def run(self) -> None:
        control = await asyncio.start_server(
            self._serve_control, self.host, self.control_port)
        mocap = await asyncio.start_server(
            self._serve_mocap, self.host, self.mocap_port)
        async with serve(self._serve_console, self.host, self.ws_port), \
                control, mocap:
            self.started.set()
            log.info("serving: control=%d mocap=%d console(ws)=%d dt=%.5f",
                     self.control_port, self.mocap_port, self.ws_port,
                     self.scene.dt)
            ticker = asyncio.create_task(self._tick_loop())
            await self._stopping.wait()
            ticker.cancel()

    async def _tick_loop(self) -> None:
        loop = asyncio.get_running_loop()
        next_at = loop.time()
        while True:
            state = self.scene.tick()
            if self.connections:
                for cue_id in state.cues_fired:
                    broadcast(self.connections, json.dumps(
                        {"type": "cue_fired", "id": cue_id},
                        separators=(",", ":")))
                if state.tick % self.decimate == 0:
                    broadcast(self.connections, encode_snapshot(state))
            next_at += self.scene.dt
            delay = next_at - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                next_at = loop.time()  # fell behind: resynchronize, no spiral
                await asyncio.sleep(0)

    # -- text control socket -------------------------------------------------

    async def _serve_control(self, reader: asyncio.StreamReader,
                             writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        log.info("control client %s connected", peer)
        try:
            while line := await reader.readline():
                text = line.decode("utf-8", errors="replace").strip()
                if not text:
                    continue
                try:
                    self.scene.post(parse_control_line(text))
                    writer.write(b"ok\n")
                except ValueError as e:
                    writer.write(f"error {e}\n".encode())
                await writer.drain()
        except ConnectionError:
            pass
        finally:
            writer.close()
            log.info("control client %s gone", peer)

    # -- mocap socket ---------------------------------------------------------

    async def _serve_mocap(self, reader: asyncio.StreamReader,
                           writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        log.info("mocap source %s connected", peer)
        seen = set()
        try:
            while line := await reader.readline():
                try:
                    frame = parse_mocap_frame(line)
                except ValueError as e:
                    log.warning("bad mocap record from %s: %s", peer, e)
                    continue
                seen.add(frame.avatar)
                self.scene.post_mocap(frame)
        except ConnectionError:
            pass
        finally:
            writer.close()
            for avatar in sorted(seen):
                self.scene.report(
                    f"mocap source for {avatar!r} disconnected; holding last pose")
            log.info("mocap source %s gone", peer)

    # -- console websocket ----------------------------------------------------

    async def _serve_console(self, connection) -> None:
        self.connections.add(connection)
        try:
            await connection.send(json.dumps(self._show_info(),
                                             separators=(",", ":")))
            async for message in connection:
                try:
                    self.scene.post(parse_console_message(message))
                    await connection.send(json.dumps(
                        {"type": "ack"}, separators=(",", ":")))
                except ValueError as e:
                    await connection.send(json.dumps(
                        {"type": "error", "message": str(e)},
                        separators=(",", ":")))
        finally:
            self.connections.discard(connection)

    def _show_info(self) -> dict:
        doc = self.doc
        return {
            "type": "show_info",
            "name": doc.name,
            "fixed_step": self.scene.dt,
            "cues": [c.id for c in doc.cues],
            "avatars": sorted(a.id for a in doc.avatars),
            "navmesh": navmesh_to_json(doc.navmesh) if doc.navmesh else None,
        }


async def serve_show(doc: ShowDocument, **kwargs) -> None:
    await ShowServer(doc, **kwargs).run()
