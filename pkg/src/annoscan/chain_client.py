"""Fetching account code and storage from an Ethereum node over JSON-RPC.

All answers of one client come from a single block: the first query pins
the node's latest block number and every later request names it
explicitly. Results are cached, so repeated queries are answered
identically even if the node moves on.
"""

from __future__ import annotations

import itertools
import json
import logging
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable

log = logging.getLogger(__name__)

Transport = Callable[[str, dict, float], dict]


class Unresolvable(Exception):
    """The value could not be obtained (offline, network failure, timeout, bad reply)."""


def http_transport(url: str, payload: dict, timeout: float) -> dict:
    req = urllib.request.Request(url, data=json.dumps(payload).encode(),
                                 headers={"Content-Type": "application/json"}, method="POST")
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return json.loads(resp.read().decode())


@dataclass
class NodeEndpoint:
    url: str
    timeout_ms: int = 10_000


def _hex_address(addr: int) -> str:
    return "0x" + f"{addr:040x}"


class ChainClient:
    """JSON-RPC client for ``eth_getCode`` and ``eth_getStorageAt``.

    Without an endpoint the client is offline and every lookup raises
    :class:`Unresolvable`.
    """

    def __init__(self, endpoint: NodeEndpoint | str | None = None, *, block: int | None = None,
                 transport: Transport | None = None) -> None:
        if isinstance(endpoint, str):
            endpoint = NodeEndpoint(endpoint)
        self.endpoint = endpoint
        self.transport = transport or http_transport
        self._block = block
        self._cache: dict[tuple, object] = {}
        self._lock = threading.Lock()
        self._ids = itertools.count(1)
        self.requests = 0

    @property
    def offline(self) -> bool:
        return self.endpoint is None

    def _call(self, method: str, params: list):
        if self.endpoint is None:
            raise Unresolvable("no node endpoint configured")
        payload = {"jsonrpc": "2.0", "id": next(self._ids), "method": method, "params": params}
        self.requests += 1
        try:
            reply = self.transport(self.endpoint.url, payload, self.endpoint.timeout_ms / 1000)
        except (OSError, urllib.error.URLError, TimeoutError, ValueError) as e:
            raise Unresolvable(f"{method}: {e}") from e
        if not isinstance(reply, dict):
            raise Unresolvable(f"{method}: malformed reply")
        if reply.get("error") is not None:
            raise Unresolvable(f"{method}: {reply['error']}")
        if "result" not in reply:
            raise Unresolvable(f"{method}: reply without result")
        return reply["result"]

    @property
    def block(self) -> int:
        """The pinned block number (fetched once)."""
        with self._lock:
            if self._block is None:
                result = self._call("eth_blockNumber", [])
                try:
                    self._block = int(result, 16)
                except (TypeError, ValueError) as e:
                    raise Unresolvable(f"eth_blockNumber: bad result {result!r}") from e
            return self._block

    def _cached(self, key: tuple, fetch: Callable[[], object]):
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        value = fetch()
        with self._lock:
            # the first answer wins so that every reader sees the same value
            return self._cache.setdefault(key, value)

    def get_code(self, addr: int) -> bytes:
        def fetch() -> bytes:
            result = self._call("eth_getCode", [_hex_address(addr), hex(self.block)])
            try:
                return bytes.fromhex(result[2:] if result.startswith("0x") else result)
            except (AttributeError, ValueError) as e:
                raise Unresolvable(f"eth_getCode: bad result {result!r}") from e

        return self._cached(("code", addr), fetch)

    def get_storage_at(self, addr: int, slot: int) -> int:
        def fetch() -> int:
            result = self._call("eth_getStorageAt", [_hex_address(addr), hex(slot), hex(self.block)])
            try:
                return int(result, 16) if result not in ("0x", "") else 0
            except (TypeError, ValueError) as e:
                raise Unresolvable(f"eth_getStorageAt: bad result {result!r}") from e

        return self._cached(("storage", addr, slot), fetch)


@dataclass
class ChainResolver:
    """Adapter used by the symbolic machine: failures fall back to symbolic handling."""

    client: ChainClient
    failures: list[str] = field(default_factory=list)

    def get_code(self, address: int) -> bytes | None:
        if self.client.offline:
            return None
        try:
            return self.client.get_code(address)
        except Unresolvable as e:
            self.failures.append(str(e))
            log.info("code of %s unresolved: %s", _hex_address(address), e)
            return None

    def storage_loader(self, address: int) -> Callable[[int], int | None] | None:
        if self.client.offline:
            return None

        def load(slot: int) -> int | None:
            try:
                return self.client.get_storage_at(address, slot)
            except Unresolvable as e:
                self.failures.append(str(e))
                return None

        return load
