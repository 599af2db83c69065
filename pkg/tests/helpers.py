"""Small builders shared by the unit tests."""
import hashlib

from orphansim.txmodel import Transaction

ROOT = hashlib.sha256(b"confirmed-root").digest()


def txid(name: str) -> bytes:
    return hashlib.sha256(name.encode()).digest()


def tx(name, parents=(ROOT,), fee=1000, size=250, standard=True) -> Transaction:
    parents = tuple(p if isinstance(p, bytes) else txid(p) for p in parents)
    return Transaction(txid(name), size, fee, parents, standard)
