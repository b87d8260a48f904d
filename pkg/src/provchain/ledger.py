"""Single-process consortium ledger.

One in-process orderer: transactions are proposed into a pending queue,
validated there, and cut into hash-chained blocks by an explicit
``commit_block`` call. The world state is a key-value view keyed by product
id, rebuilt deterministically by replaying blocks.

Persistence is JSON lines, one object per block, digests/keys/signatures as
lowercase hex, followed by a head record carrying the block count and the
last block's header digest so that any bit-level damage to the file
(including the tail block) is detected on load.
"""

from __future__ import annotations

import json
import struct
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator

from . import crypto
from .errors import (
    BadSignature,
    CorruptLedger,
    DuplicateNonce,
    InvalidTransition,
    NotFound,
    UnknownProduct,
)

ZERO32 = b"\x00" * 32
LOGICAL_EPOCH_MS = 1_700_000_000_000


class TxType(Enum):
    REQ = "req"
    GEN = "gen"
    UPLOAD = "upload"
    EXCHANGE = "exchange"


_WIRE_BYTE = {TxType.REQ: 1, TxType.GEN: 2, TxType.UPLOAD: 3, TxType.EXCHANGE: 4}


class Status(Enum):
    PREPARED = "prepared"
    GENERATING = "generating"
    GENERATED = "generated"
    TRADED = "traded"


# Allowed forward steps; only the terminal state may repeat.
_NEXT_STATUS = {
    Status.PREPARED: Status.GENERATING,
    Status.GENERATING: Status.GENERATED,
    Status.GENERATED: Status.TRADED,
    Status.TRADED: Status.TRADED,
}


class Role(Enum):
    PRODUCER = "producer"
    PROVIDER = "provider"
    CONSUMER = "consumer"
    AUDITOR = "auditor"


class NodeClass(Enum):
    LIGHT = "light"
    FULL = "full"


@dataclass(frozen=True)
class Identity:
    role: Role
    node_class: NodeClass
    keypair: crypto.KeyPair
    cert_issued_at: int

    @property
    def public_key(self) -> bytes:
        return self.keypair.public_key


class SystemClock:
    def now_ms(self) -> int:
        return time.time_ns() // 1_000_000


class LogicalClock:
    """Deterministic millisecond counter; every call yields the next tick."""

    def __init__(self, next_ms: int = LOGICAL_EPOCH_MS):
        self._next = next_ms

    def now_ms(self) -> int:
        t = self._next
        self._next += 1
        return t

    @property
    def next_ms(self) -> int:
        return self._next


@dataclass
class Transaction:
    """One ledger record; txid and creator_sig cover the canonical body."""

    txid: bytes
    tx_type: TxType
    product_id: str
    args: str
    create_time: int
    nonce: int
    creator: bytes
    creator_sig: bytes
    writes: list[tuple[str, bytes]]

    def body(self) -> bytes:
        return canonical_body(
            self.tx_type, self.product_id, self.args, self.create_time,
            self.nonce, self.creator, self.writes,
        )


def canonical_body(
    tx_type: TxType,
    product_id: str,
    args: str,
    create_time: int,
    nonce: int,
    creator: bytes,
    writes: list[tuple[str, bytes]],
) -> bytes:
    """Bit-exact preimage for txid and creator_sig (excludes txid itself).

    Layout: type byte || len32+product_id || len32+args || be64(create_time)
    || be64(nonce) || creator key || write count || per write
    len32+name || len32+value, writes sorted by field name.
    """
    pid = product_id.encode("utf-8")
    arg = args.encode("utf-8")
    parts = [
        bytes([_WIRE_BYTE[tx_type]]),
        struct.pack(">I", len(pid)), pid,
        struct.pack(">I", len(arg)), arg,
        struct.pack(">QQ", create_time, nonce),
        creator,
    ]
    ordered = sorted(writes)
    parts.append(struct.pack(">I", len(ordered)))
    for name, value in ordered:
        nb = name.encode("utf-8")
        parts.append(struct.pack(">I", len(nb)))
        parts.append(nb)
        parts.append(struct.pack(">I", len(value)))
        parts.append(value)
    return b"".join(parts)


def make_transaction(
    tx_type: TxType,
    product_id: str,
    args: str,
    create_time: int,
    nonce: int,
    identity: Identity,
    writes: list[tuple[str, bytes]],
) -> Transaction:
    """Build, sign, and id a transaction for `identity`."""
    ordered = sorted(writes)
    body = canonical_body(tx_type, product_id, args, create_time, nonce,
                          identity.public_key, ordered)
    return Transaction(
        txid=crypto.digest(body),
        tx_type=tx_type,
        product_id=product_id,
        args=args,
        create_time=create_time,
        nonce=nonce,
        creator=identity.public_key,
        creator_sig=crypto.sign(identity.keypair.secret_key, body),
        writes=ordered,
    )


@dataclass
class Block:
    number: int
    prev_hash: bytes
    data_hash: bytes
    timestamp: int
    transactions: list[Transaction]

    def header_digest(self) -> bytes:
        return crypto.digest(
            struct.pack(">Q", self.number) + self.prev_hash + self.data_hash
            + struct.pack(">Q", self.timestamp)
        )


@dataclass
class ProductRecord:
    """World-state value for one product."""

    product_id: str
    model_id: str = ""
    description_hash: bytes | None = None
    product_hash: bytes | None = None
    producer_sign: bytes | None = None
    model_sign: bytes | None = None
    owner_sign: bytes | None = None
    bf: bytes = b""
    status: Status | None = None
    acl: list[bytes] = field(default_factory=list)

    def copy(self) -> "ProductRecord":
        return replace(self, acl=list(self.acl))


@dataclass(frozen=True)
class PendingReceipt:
    txid: bytes


_REQUIRED_AT_CREATION = {
    "model_id", "description_hash", "producer_sign", "owner_sign", "bf", "status",
}
_PERMANENT_FIELDS = ("producer_sign", "model_sign")


def _utf8(value: bytes, name: str) -> str:
    try:
        return value.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidTransition(f"{name} is not valid UTF-8") from exc


def _fixed(value: bytes, size: int, name: str) -> bytes:
    if len(value) != size:
        raise InvalidTransition(f"{name} must be {size} bytes, got {len(value)}")
    return value


def _check_transition(old: Status | None, new: Status) -> None:
    if old is None:
        if new is not Status.PREPARED:
            raise InvalidTransition(f"new products start prepared, not {new.value}")
    elif _NEXT_STATUS[old] is not new:
        raise InvalidTransition(f"status cannot move {old.value} -> {new.value}")


def _apply_writes(record: ProductRecord | None, tx: Transaction) -> ProductRecord:
    """Pure write-set application with invariant enforcement.

    Used identically by propose-time validation, commit, and replay-on-load,
    so all three agree on what a legal transaction is.
    """
    names = [name for name, _ in tx.writes]
    if len(set(names)) != len(names):
        raise InvalidTransition("duplicate field names in write set")
    if tx.tx_type is TxType.REQ:
        if record is not None:
            raise InvalidTransition(f"product {tx.product_id!r} already exists")
        missing = _REQUIRED_AT_CREATION - set(names)
        if missing:
            raise InvalidTransition(f"creation missing fields {sorted(missing)}")
        record = ProductRecord(product_id=tx.product_id)
    else:
        if record is None:
            raise UnknownProduct(tx.product_id)
        record = record.copy()

    for name, value in tx.writes:
        if name == "model_id":
            record.model_id = _utf8(value, name)
        elif name == "description_hash":
            record.description_hash = _fixed(value, crypto.DIGEST_SIZE, name)
        elif name == "product_hash":
            record.product_hash = _fixed(value, crypto.DIGEST_SIZE, name)
        elif name in _PERMANENT_FIELDS:
            if getattr(record, name) is not None:
                raise InvalidTransition(f"{name} is permanent once set")
            setattr(record, name, _fixed(value, crypto.SIGNATURE_SIZE, name))
        elif name == "owner_sign":
            record.owner_sign = _fixed(value, crypto.SIGNATURE_SIZE, name)
        elif name == "bf":
            if len(value) < 24 or value[:4] != b"IBF1":
                raise InvalidTransition("bf write is not a serialized filter")
            record.bf = value
        elif name == "status":
            new = _parse_status(value)
            _check_transition(record.status, new)
            record.status = new
        elif name == "acl":
            if len(value) % crypto.KEY_SIZE:
                raise InvalidTransition("acl must be packed 32-byte keys")
            record.acl = [value[i:i + crypto.KEY_SIZE]
                          for i in range(0, len(value), crypto.KEY_SIZE)]
        else:
            raise InvalidTransition(f"unknown world-state field {name!r}")

    if record.status is None:
        raise InvalidTransition("record has no status")
    prepared = record.status is Status.PREPARED
    if prepared != (record.product_hash is None and record.model_sign is None):
        raise InvalidTransition(
            "product_hash/model_sign presence inconsistent with status")
    return record


def _parse_status(value: bytes) -> Status:
    try:
        return Status(value.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise InvalidTransition(f"unknown status value {value!r}") from exc


def _order_key(tx: Transaction) -> tuple[int, bytes]:
    # Total order inside a block: create_time, ties broken by txid.
    return (tx.create_time, tx.txid)


class Ledger:
    """Pending queue, hash-chained blocks, and the latest-value world state.

    propose() may be called from any thread; commit and state writes are
    serialized behind one lock. Reads observe committed state only.
    """

    def __init__(self, clock: SystemClock | LogicalClock | None = None):
        self.clock = clock if clock is not None else SystemClock()
        self.blocks: list[Block] = []
        self._pending: list[Transaction] = []
        self._state: dict[str, ProductRecord] = {}
        self._tx_index: dict[bytes, Transaction] = {}
        self._nonces: dict[bytes, set[int]] = {}
        self._lock = threading.Lock()

    # -- clock / counters ---------------------------------------------------

    def now_ms(self) -> int:
        return self.clock.now_ms()

    @property
    def height(self) -> int:
        return len(self.blocks)

    def next_nonce(self, creator: bytes) -> int:
        """First unused nonce for a creator (committed plus pending)."""
        with self._lock:
            used = len(self._nonces.get(creator, ()))
            used += sum(1 for t in self._pending if t.creator == creator)
            return used

    # -- write path ---------------------------------------------------------

    def propose(self, tx: Transaction) -> PendingReceipt:
        body = tx.body()
        if crypto.digest(body) != tx.txid:
            raise BadSignature("txid does not match transaction body")
        if not crypto.verify(tx.creator, body, tx.creator_sig):
            raise BadSignature("creator signature does not verify")
        with self._lock:
            if tx.nonce in self._nonces.get(tx.creator, ()):
                raise DuplicateNonce(f"nonce {tx.nonce} already committed")
            if any(t.creator == tx.creator and t.nonce == tx.nonce
                   for t in self._pending):
                raise DuplicateNonce(f"nonce {tx.nonce} already pending")
            # Replay this product's pending writes in commit order with the
            # new transaction included; any invariant break rejects it now.
            queue = [t for t in self._pending if t.product_id == tx.product_id]
            queue.append(tx)
            queue.sort(key=_order_key)
            projected = self._state.get(tx.product_id)
            for queued in queue:
                projected = _apply_writes(projected, queued)
            self._pending.append(tx)
        return PendingReceipt(txid=tx.txid)

    def commit_block(self) -> Block | None:
        with self._lock:
            if not self._pending:
                return None
            txs = sorted(self._pending, key=_order_key)
            self._pending = []
            for tx in txs:
                self._state[tx.product_id] = _apply_writes(
                    self._state.get(tx.product_id), tx)
                self._nonces.setdefault(tx.creator, set()).add(tx.nonce)
                self._tx_index[tx.txid] = tx
            prev = self.blocks[-1].header_digest() if self.blocks else ZERO32
            data_hash = crypto.digest(b"".join(t.txid for t in txs))
            block = Block(
                number=len(self.blocks),
                prev_hash=prev,
                data_hash=data_hash,
                timestamp=self.clock.now_ms(),
                transactions=txs,
            )
            self.blocks.append(block)
            return block

    # -- read path ----------------------------------------------------------

    def get_transaction(self, txid: bytes) -> Transaction:
        try:
            return self._tx_index[txid]
        except KeyError:
            raise NotFound(f"no committed transaction {txid.hex()}") from None

    def product_exists(self, product_id: str) -> bool:
        """True if the product is committed or has a pending transaction."""
        with self._lock:
            return (product_id in self._state
                    or any(t.product_id == product_id for t in self._pending))

    def get_state(self, product_id: str, reader: bytes | None = None) -> ProductRecord:
        """Latest committed record.

        With a reader key given, the bf bytes are redacted unless the key is
        on the record's acl; passing None bypasses the (advisory) restriction.
        """
        record = self._state.get(product_id)
        if record is None:
            raise NotFound(f"no product {product_id!r}")
        view = record.copy()
        if reader is not None and reader not in record.acl:
            view.bf = b""
        return view

    def iter_transactions(self) -> Iterator[Transaction]:
        for block in self.blocks:
            yield from block.transactions

    def scan_transactions(self, predicate: Callable[[Transaction], bool]) -> list[Transaction]:
        """Full scan over every committed transaction, in chain order."""
        return [tx for tx in self.iter_transactions() if predicate(tx)]

    # -- integrity ----------------------------------------------------------

    def verify_chain(self) -> bool:
        prev = ZERO32
        for index, block in enumerate(self.blocks):
            if block.number != index or block.prev_hash != prev:
                return False
            joined = b"".join(t.txid for t in block.transactions)
            if block.data_hash != crypto.digest(joined):
                return False
            for tx in block.transactions:
                try:
                    body = tx.body()
                except Exception:
                    return False
                if crypto.digest(body) != tx.txid:
                    return False
                if not crypto.verify(tx.creator, body, tx.creator_sig):
                    return False
            prev = block.header_digest()
        return True

    def rebuild_state(self) -> dict[str, ProductRecord]:
        """Replay every block from genesis into a fresh world state."""
        state: dict[str, ProductRecord] = {}
        for tx in self.iter_transactions():
            state[tx.product_id] = _apply_writes(state.get(tx.product_id), tx)
        return state

    # -- persistence ----------------------------------------------------------

    def save(self, path: str | Path) -> None:
        lines = [json.dumps(_block_to_json(b), separators=(",", ":"))
                 for b in self.blocks]
        head_digest = self.blocks[-1].header_digest() if self.blocks else ZERO32
        head = {"blocks": len(self.blocks), "head": head_digest.hex()}
        lines.append(json.dumps(head, separators=(",", ":")))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path,
             clock: SystemClock | LogicalClock | None = None) -> "Ledger":
        raw = Path(path).read_bytes()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptLedger(f"not valid UTF-8: {exc}") from exc
        lines = [line for line in text.split("\n") if line]
        if not lines:
            raise CorruptLedger("empty ledger file")
        try:
            objects = [json.loads(line) for line in lines]
        except json.JSONDecodeError as exc:
            raise CorruptLedger(f"bad JSON: {exc}") from exc

        head = objects[-1]
        if not isinstance(head, dict) or set(head) != {"blocks", "head"}:
            raise CorruptLedger("missing head record")
        block_objects = objects[:-1]
        if _load_count(head["blocks"]) != len(block_objects):
            raise CorruptLedger("head block count mismatch")

        ledger = cls(clock=clock)
        for obj in block_objects:
            ledger.blocks.append(_block_from_json(obj))
        tail = ledger.blocks[-1].header_digest() if ledger.blocks else ZERO32
        if _load_hex(head["head"], 32) != tail:
            raise CorruptLedger("head digest mismatch")
        if not ledger.verify_chain():
            raise CorruptLedger("chain verification failed")
        try:
            for tx in ledger.iter_transactions():
                if tx.nonce in ledger._nonces.get(tx.creator, ()):
                    raise CorruptLedger(f"duplicate nonce {tx.nonce}")
                ledger._state[tx.product_id] = _apply_writes(
                    ledger._state.get(tx.product_id), tx)
                ledger._nonces.setdefault(tx.creator, set()).add(tx.nonce)
                ledger._tx_index[tx.txid] = tx
        except (InvalidTransition, UnknownProduct) as exc:
            raise CorruptLedger(f"replay failed: {exc}") from exc
        return ledger


# -- strict JSON codecs -------------------------------------------------------
#
# Loading is deliberately strict: lowercase hex only, exact key sets, plain
# ints. Anything else (including a case-flipped hex digit, which decodes to
# the same bytes) is treated as file damage.

def _load_hex(value: object, size: int | None = None) -> bytes:
    if not isinstance(value, str) or value != value.lower() or len(value) % 2:
        raise CorruptLedger(f"bad hex field {value!r}")
    try:
        raw = bytes.fromhex(value)
    except ValueError as exc:
        raise CorruptLedger(f"bad hex field {value!r}") from exc
    if size is not None and len(raw) != size:
        raise CorruptLedger(f"hex field has length {len(raw)}, wanted {size}")
    return raw


def _load_count(value: object) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value < 2 ** 64:
        raise CorruptLedger(f"bad integer field {value!r}")
    return value


def _load_str(value: object) -> str:
    if not isinstance(value, str):
        raise CorruptLedger(f"bad string field {value!r}")
    return value


_TX_KEYS = {"txid", "tx_type", "product_id", "args", "create_time", "nonce",
            "creator", "creator_sig", "writes"}
_BLOCK_KEYS = {"number", "prev_hash", "data_hash", "timestamp", "transactions"}


def _tx_to_json(tx: Transaction) -> dict:
    return {
        "txid": tx.txid.hex(),
        "tx_type": tx.tx_type.value,
        "product_id": tx.product_id,
        "args": tx.args,
        "create_time": tx.create_time,
        "nonce": tx.nonce,
        "creator": tx.creator.hex(),
        "creator_sig": tx.creator_sig.hex(),
        "writes": [[name, value.hex()] for name, value in tx.writes],
    }


def _tx_from_json(obj: object) -> Transaction:
    if not isinstance(obj, dict) or set(obj) != _TX_KEYS:
        raise CorruptLedger("transaction record has wrong fields")
    raw_type = _load_str(obj["tx_type"])
    try:
        tx_type = TxType(raw_type)
    except ValueError as exc:
        raise CorruptLedger(f"unknown tx type {raw_type!r}") from exc
    writes_obj = obj["writes"]
    if not isinstance(writes_obj, list):
        raise CorruptLedger("writes is not a list")
    writes: list[tuple[str, bytes]] = []
    for entry in writes_obj:
        if not isinstance(entry, list) or len(entry) != 2:
            raise CorruptLedger("write entry is not a [name, hex] pair")
        writes.append((_load_str(entry[0]), _load_hex(entry[1])))
    return Transaction(
        txid=_load_hex(obj["txid"], 32),
        tx_type=tx_type,
        product_id=_load_str(obj["product_id"]),
        args=_load_str(obj["args"]),
        create_time=_load_count(obj["create_time"]),
        nonce=_load_count(obj["nonce"]),
        creator=_load_hex(obj["creator"], crypto.KEY_SIZE),
        creator_sig=_load_hex(obj["creator_sig"], crypto.SIGNATURE_SIZE),
        writes=writes,
    )


def _block_to_json(block: Block) -> dict:
    return {
        "number": block.number,
        "prev_hash": block.prev_hash.hex(),
        "data_hash": block.data_hash.hex(),
        "timestamp": block.timestamp,
        "transactions": [_tx_to_json(tx) for tx in block.transactions],
    }


def _block_from_json(obj: object) -> Block:
    if not isinstance(obj, dict) or set(obj) != _BLOCK_KEYS:
        raise CorruptLedger("block record has wrong fields")
    txs_obj = obj["transactions"]
    if not isinstance(txs_obj, list):
        raise CorruptLedger("transactions is not a list")
    return Block(
        number=_load_count(obj["number"]),
        prev_hash=_load_hex(obj["prev_hash"], 32),
        data_hash=_load_hex(obj["data_hash"], 32),
        timestamp=_load_count(obj["timestamp"]),
        transactions=[_tx_from_json(t) for t in txs_obj],
    )
