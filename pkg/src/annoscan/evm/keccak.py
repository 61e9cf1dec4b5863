from Crypto.Hash import keccak as _keccak


def keccak256(data: bytes) -> bytes:
    h = _keccak.new(digest_bits=256)
    h.update(data)
    return h.digest()


def keccak_int(data: bytes) -> int:
    return int.from_bytes(keccak256(data), "big")
