"""A minimal Ethereum JSON-RPC node for tests, served by http.server in a thread."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


@dataclass
class NodeState:
    block: int = 0x100
    code: dict[int, bytes] = field(default_factory=dict)
    storage: dict[tuple[int, int], int] = field(default_factory=dict)
    log: list[dict] = field(default_factory=list)
    fail_methods: set[str] = field(default_factory=set)
    delay: float = 0.0


def _handle(state: NodeState, req: dict) -> dict:
    state.log.append(req)
    method, params = req.get("method"), req.get("params", [])
    reply = {"jsonrpc": "2.0", "id": req.get("id")}
    if method in state.fail_methods:
        reply["error"] = {"code": -32000, "message": "induced failure"}
        return reply
    if method == "eth_blockNumber":
        reply["result"] = hex(state.block)
    elif method == "eth_getCode":
        reply["result"] = "0x" + state.code.get(int(params[0], 16), b"").hex()
    elif method == "eth_getStorageAt":
        value = state.storage.get((int(params[0], 16), int(params[1], 16)), 0)
        reply["result"] = "0x" + f"{value:064x}"
    else:
        reply["error"] = {"code": -32601, "message": "method not found"}
    return reply


class MockNode:
    """Context manager running the node on a free local port; ``url`` is its endpoint."""

    def __init__(self, state: NodeState | None = None) -> None:
        self.state = state or NodeState()
        node = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 (http.server naming)
                body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
                if node.state.delay:
                    threading.Event().wait(node.state.delay)
                out = json.dumps(_handle(node.state, json.loads(body))).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(out)))
                self.end_headers()
                self.wfile.write(out)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> "MockNode":
        self.thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.server.shutdown()
        self.server.server_close()
