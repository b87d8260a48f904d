import random

import pytest

from provchain import crypto, ibf
from provchain.errors import (
    BadSignature,
    CorruptLedger,
    DuplicateNonce,
    InvalidTransition,
    NotFound,
    UnknownProduct,
)
from provchain.ledger import (
    Identity,
    Ledger,
    LogicalClock,
    NodeClass,
    Role,
    Status,
    TxType,
    make_transaction,
)

SEED = b"ledger-test-seed-0001"


def make_identity(tag: bytes, role=Role.PRODUCER) -> Identity:
    return Identity(role=role, node_class=NodeClass.LIGHT,
                    keypair=crypto.keygen(tag.ljust(16, b"-")),
                    cert_issued_at=0)


def creation_writes(identity: Identity, args: str = "prompt") -> list[tuple[str, bytes]]:
    description_hash = crypto.digest(args.encode())
    sig = crypto.sign(identity.keypair.secret_key, description_hash)
    filt = ibf.setup(64, 3, SEED)
    return [
        ("model_id", b"model-1"),
        ("description_hash", description_hash),
        ("producer_sign", sig),
        ("owner_sign", sig),
        ("bf", filt.to_bytes()),
        ("status", b"prepared"),
    ]


def req_tx(ledger: Ledger, identity: Identity, product_id: str, args: str = "prompt",
           create_time: int | None = None):
    t = ledger.now_ms() if create_time is None else create_time
    return make_transaction(TxType.REQ, product_id, args, t,
                            ledger.next_nonce(identity.public_key),
                            identity, creation_writes(identity, args))


@pytest.fixture
def ledger():
    return Ledger(clock=LogicalClock())


@pytest.fixture
def alice():
    return make_identity(b"alice")


@pytest.fixture
def bob():
    return make_identity(b"bob")


class TestPropose:
    def test_receipt_txid_is_body_digest(self, ledger, alice):
        tx = req_tx(ledger, alice, "p1")
        receipt = ledger.propose(tx)
        assert receipt.txid == crypto.digest(tx.body())

    def test_tampered_body_rejected(self, ledger, alice):
        tx = req_tx(ledger, alice, "p1")
        tx.args = tx.args + "!"
        with pytest.raises(BadSignature):
            ledger.propose(tx)

    def test_duplicate_nonce_rejected(self, ledger, alice):
        tx1 = req_tx(ledger, alice, "p1")
        ledger.propose(tx1)
        ledger.commit_block()
        reused_pending = make_transaction(TxType.REQ, "p2", "prompt", ledger.now_ms(),
                                          tx1.nonce, alice, creation_writes(alice))
        with pytest.raises(DuplicateNonce):
            ledger.propose(reused_pending)

    def test_unknown_product_rejected(self, ledger, alice):
        tx = make_transaction(TxType.GEN, "ghost", "a", ledger.now_ms(), 0, alice,
                              [("status", b"generating")])
        with pytest.raises(UnknownProduct):
            ledger.propose(tx)

    def test_recreation_rejected(self, ledger, alice):
        ledger.propose(req_tx(ledger, alice, "p1"))
        ledger.commit_block()
        with pytest.raises(InvalidTransition):
            ledger.propose(req_tx(ledger, alice, "p1"))

    def test_skipping_status_rejected(self, ledger, alice):
        ledger.propose(req_tx(ledger, alice, "p1"))
        ledger.commit_block()
        tx = make_transaction(TxType.UPLOAD, "p1", "a", ledger.now_ms(),
                              ledger.next_nonce(alice.public_key), alice,
                              [("status", b"generated"),
                               ("product_hash", crypto.digest(b"p"))])
        with pytest.raises(InvalidTransition):
            ledger.propose(tx)

    def test_permanent_field_rewrite_rejected(self, ledger, alice):
        ledger.propose(req_tx(ledger, alice, "p1"))
        ledger.commit_block()
        sig = crypto.sign(alice.keypair.secret_key, b"x" * 32)
        tx = make_transaction(TxType.EXCHANGE, "p1", "a", ledger.now_ms(),
                              ledger.next_nonce(alice.public_key), alice,
                              [("producer_sign", sig)])
        with pytest.raises(InvalidTransition):
            ledger.propose(tx)


class TestCommit:
    def test_orders_by_create_time(self, ledger, alice):
        t = ledger.now_ms()
        tx_late = req_tx(ledger, alice, "p-late", create_time=t + 10)
        ledger.propose(tx_late)
        tx_early = req_tx(ledger, alice, "p-early", create_time=t)
        ledger.propose(tx_early)
        block = ledger.commit_block()
        assert [x.txid for x in block.transactions] == [tx_early.txid, tx_late.txid]

    def test_tie_broken_by_txid(self, ledger, alice, bob):
        t = ledger.now_ms()
        tx_a = req_tx(ledger, alice, "p-a", create_time=t)
        tx_b = make_transaction(TxType.REQ, "p-b", "prompt", t,
                                ledger.next_nonce(bob.public_key), bob,
                                creation_writes(bob))
        ledger.propose(tx_a)
        ledger.propose(tx_b)
        block = ledger.commit_block()
        assert [x.txid for x in block.transactions] == sorted(
            [tx_a.txid, tx_b.txid])

    def test_empty_commit_is_noop(self, ledger):
        assert ledger.commit_block() is None
        assert ledger.height == 0

    def test_writes_visible_only_after_commit(self, ledger, alice):
        ledger.propose(req_tx(ledger, alice, "p1"))
        with pytest.raises(NotFound):
            ledger.get_state("p1")
        ledger.commit_block()
        assert ledger.get_state("p1").status is Status.PREPARED


class TestReads:
    def test_get_transaction(self, ledger, alice):
        tx = req_tx(ledger, alice, "p1")
        ledger.propose(tx)
        with pytest.raises(NotFound):
            ledger.get_transaction(tx.txid)  # pending is invisible
        ledger.commit_block()
        assert ledger.get_transaction(tx.txid).txid == tx.txid
        with pytest.raises(NotFound):
            ledger.get_transaction(b"\x00" * 32)

    def test_get_state_unknown(self, ledger):
        with pytest.raises(NotFound):
            ledger.get_state("nope")

    def test_scan_transactions(self, ledger, alice):
        for i in range(10):
            ledger.propose(req_tx(ledger, alice, f"p{i}"))
        ledger.commit_block()
        assert len(ledger.scan_transactions(lambda tx: True)) == 10
        assert len(ledger.scan_transactions(lambda tx: tx.product_id == "p3")) == 1
        empty = Ledger(clock=LogicalClock())
        assert empty.scan_transactions(lambda tx: True) == []

    def test_acl_redaction(self, ledger, alice, bob):
        writes = creation_writes(alice) + [("acl", alice.public_key)]
        tx = make_transaction(TxType.REQ, "p1", "prompt", ledger.now_ms(),
                              0, alice, writes)
        ledger.propose(tx)
        ledger.commit_block()
        assert ledger.get_state("p1").bf != b""  # bypass
        assert ledger.get_state("p1", reader=alice.public_key).bf != b""
        assert ledger.get_state("p1", reader=bob.public_key).bf == b""

    def test_returned_record_is_a_copy(self, ledger, alice):
        ledger.propose(req_tx(ledger, alice, "p1"))
        ledger.commit_block()
        view = ledger.get_state("p1")
        view.model_id = "scribbled"
        view.acl.append(b"\x01" * 32)
        fresh = ledger.get_state("p1")
        assert fresh.model_id == "model-1"
        assert fresh.acl == []


class TestChainIntegrity:
    def build_chain(self, ledger, alice, blocks=5):
        for i in range(blocks):
            ledger.propose(req_tx(ledger, alice, f"p{i}"))
            ledger.commit_block()

    def test_verify_clean_chain(self, ledger, alice):
        self.build_chain(ledger, alice)
        assert ledger.verify_chain()

    def test_tampered_tx_detected(self, ledger, alice):
        self.build_chain(ledger, alice)
        ledger.blocks[2].transactions[0].args = "evil"
        assert not ledger.verify_chain()

    def test_tampered_prev_hash_detected(self, ledger, alice):
        self.build_chain(ledger, alice)
        header = bytearray(ledger.blocks[3].prev_hash)
        header[0] ^= 1
        ledger.blocks[3].prev_hash = bytes(header)
        assert not ledger.verify_chain()

    def test_append_only_under_operations(self, ledger, alice):
        self.build_chain(ledger, alice, blocks=3)
        prefix = [b.header_digest() for b in ledger.blocks]
        ledger.propose(req_tx(ledger, alice, "later"))
        ledger.commit_block()
        ledger.get_state("p0")
        ledger.scan_transactions(lambda tx: True)
        ledger.verify_chain()
        assert [b.header_digest() for b in ledger.blocks[:3]] == prefix

    def test_replay_equivalence(self, ledger, alice):
        self.build_chain(ledger, alice)
        assert ledger.rebuild_state() == ledger._state


class TestPersistence:
    def test_round_trip(self, tmp_path, ledger, alice):
        for i in range(4):
            ledger.propose(req_tx(ledger, alice, f"p{i}"))
            ledger.commit_block()
        path = tmp_path / "chain.jsonl"
        ledger.save(path)
        loaded = Ledger.load(path)
        assert loaded.verify_chain()
        assert loaded.rebuild_state() == ledger.rebuild_state()
        assert [b.header_digest() for b in loaded.blocks] == \
               [b.header_digest() for b in ledger.blocks]

    def test_truncated_file(self, tmp_path, ledger, alice):
        ledger.propose(req_tx(ledger, alice, "p1"))
        ledger.commit_block()
        path = tmp_path / "chain.jsonl"
        ledger.save(path)
        data = path.read_bytes()
        path.write_bytes(data[:len(data) // 2])
        with pytest.raises(CorruptLedger):
            Ledger.load(path)

    def test_truncated_at_line_boundary(self, tmp_path, ledger, alice):
        for i in range(3):
            ledger.propose(req_tx(ledger, alice, f"p{i}"))
            ledger.commit_block()
        path = tmp_path / "chain.jsonl"
        ledger.save(path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")  # drop the head record
        with pytest.raises(CorruptLedger):
            Ledger.load(path)

    def test_tampered_transaction_in_file(self, tmp_path, ledger, alice):
        ledger.propose(req_tx(ledger, alice, "p1", args="honest"))
        ledger.commit_block()
        path = tmp_path / "chain.jsonl"
        ledger.save(path)
        path.write_text(path.read_text().replace("honest", "hijack"))
        with pytest.raises(CorruptLedger):
            Ledger.load(path)

    def test_random_bit_flips_detected(self, tmp_path, ledger, alice):
        for i in range(5):
            ledger.propose(req_tx(ledger, alice, f"p{i}"))
            ledger.commit_block()
        path = tmp_path / "chain.jsonl"
        ledger.save(path)
        pristine = path.read_bytes()
        rng = random.Random(0xF11B)
        for _ in range(40):
            corrupted = bytearray(pristine)
            pos = rng.randrange(len(corrupted))
            corrupted[pos] ^= 1 << rng.randrange(8)
            path.write_bytes(bytes(corrupted))
            with pytest.raises(CorruptLedger):
                Ledger.load(path)

    def test_missing_file_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            Ledger.load(tmp_path / "absent.jsonl")
