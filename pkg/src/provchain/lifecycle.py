"""The five product-lifecycle procedures over crypto, the filter, and the ledger.

Registration issues keypairs through an in-process registry standing in for a
CA. Content generation, data uploading, and copyright trading run the
signature handshakes between the parties and commit one ledger transaction
per step; each step folds the updated membership filter into its own
write-set, binding (args, create_time) of the transaction into the product's
filter. Copyright management turns the submitted proofs into a
machine-checkable report.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable

from . import crypto, ibf
from .crypto import SystemRandomness
from .errors import (
    NotAuditor,
    NotFound,
    OwnerSignInvalid,
    ProductExists,
    RoleClassMismatch,
    SigmaVerifyFailed,
    UnknownProduct,
    WrongStatus,
)
from .ledger import (
    Identity,
    Ledger,
    NodeClass,
    Role,
    Status,
    TxType,
    make_transaction,
)

DEFAULT_IBF_M = 10_000
DEFAULT_IBF_K = 7
DEFAULT_PRODUCT_BYTES = 1024

# Producers and consumers run light nodes; providers and auditors run full ones.
ROLE_NODE_CLASS = {
    Role.PRODUCER: NodeClass.LIGHT,
    Role.CONSUMER: NodeClass.LIGHT,
    Role.PROVIDER: NodeClass.FULL,
    Role.AUDITOR: NodeClass.FULL,
}


@dataclass(frozen=True)
class GenerationMetadata:
    """Off-chain generation facts the provider signs and later presents."""

    steps: int
    seed: int
    created_date: int
    exec_log: list[str] = field(default_factory=list)

    def signing_bytes(self) -> bytes:
        return struct.pack(">QQQ", self.steps, self.seed, self.created_date)


@dataclass(frozen=True)
class ProducerProof:
    producer_pk: bytes
    txid_req: bytes
    txid_upload: bytes
    prompt: str


@dataclass(frozen=True)
class ProviderProof:
    provider_pk: bytes
    txid_gen: bytes
    metadata: GenerationMetadata


VERDICT_CONSISTENT = "Consistent"
VERDICT_INCONSISTENT = "Inconsistent"

CHECK_NAMES = (
    "producer_sign_ok",
    "model_sign_ok",
    "txid_req_ok",
    "txid_upload_ok",
    "txid_gen_ok",
    "prompt_hash_ok",
    "candidate_product_hash_ok",
)


@dataclass(frozen=True)
class AuditReport:
    product_id: str
    checks: dict[str, bool]
    verdict: str

    @property
    def consistent(self) -> bool:
        return self.verdict == VERDICT_CONSISTENT


def mock_generator(args: str, seed: int, length: int = DEFAULT_PRODUCT_BYTES) -> bytes:
    """Deterministic stand-in for a content model: digest-expanded bytes."""
    raw = args.encode("utf-8")
    material = struct.pack(">QQ", seed, len(raw)) + raw
    out = bytearray()
    counter = 0
    while len(out) < length:
        out += crypto.digest(material + struct.pack(">I", counter))
        counter += 1
    return bytes(out[:length])


class Registry:
    """In-process certificate authority: issues keypairs and role records."""

    def __init__(self):
        self.identities: list[Identity] = []

    def register(self, role: Role, node_class: NodeClass, *, rng, clock) -> Identity:
        if ROLE_NODE_CLASS[role] is not node_class:
            raise RoleClassMismatch(
                f"{role.value} must register as a {ROLE_NODE_CLASS[role].value} node")
        identity = Identity(
            role=role,
            node_class=node_class,
            keypair=crypto.keygen(rng.bytes(32)),
            cert_issued_at=clock.now_ms(),
        )
        self.identities.append(identity)
        return identity

    def add(self, identity: Identity) -> None:
        self.identities.append(identity)


@dataclass(frozen=True)
class UploadResult:
    product: bytes
    txid_gen: bytes
    txid_upload: bytes
    metadata: GenerationMetadata


class Consortium:
    """One deployment: a ledger, a registry, and the filter parameters."""

    def __init__(
        self,
        ledger: Ledger | None = None,
        ibf_m: int = DEFAULT_IBF_M,
        ibf_k: int = DEFAULT_IBF_K,
        rng=None,
        registry: Registry | None = None,
    ):
        self.ledger = ledger if ledger is not None else Ledger()
        self.ibf_m = ibf_m
        self.ibf_k = ibf_k
        self.rng = rng if rng is not None else SystemRandomness()
        self.registry = registry if registry is not None else Registry()
        self.events: list[str] = []

    # -- registration ---------------------------------------------------------

    def register(self, role: Role, node_class: NodeClass) -> Identity:
        return self.registry.register(role, node_class, rng=self.rng,
                                      clock=self.ledger.clock)

    # -- content generation -----------------------------------------------------

    def content_generation(
        self,
        producer: Identity,
        provider: Identity,
        args: str,
        product_id: str,
        model_id: str,
    ) -> bytes:
        """Run the request handshake and commit the product-creating transaction.

        Returns the txid of the request transaction. No transaction is
        proposed if either handshake signature fails to verify.
        """
        ledger = self.ledger
        if ledger.product_exists(product_id):
            raise ProductExists(product_id)

        raw_args = args.encode("utf-8")
        sigma1 = crypto.sign(producer.keypair.secret_key, raw_args)
        # Provider's check that the prompt really comes from this producer.
        if not crypto.verify(producer.public_key, raw_args, sigma1):
            raise SigmaVerifyFailed("sigma1")
        sigma2 = crypto.sign(provider.keypair.secret_key, raw_args)
        # Producer's check that the provider acknowledged the same prompt.
        if not crypto.verify(provider.public_key, raw_args, sigma2):
            raise SigmaVerifyFailed("sigma2")

        description_hash = crypto.digest(raw_args)
        owner_sign = crypto.sign(producer.keypair.secret_key, description_hash)
        producer_sign = crypto.sign(producer.keypair.secret_key, description_hash)

        filt = ibf.setup(self.ibf_m, self.ibf_k, self.rng.bytes(32))
        create_time = ledger.now_ms()
        filt = filt.insert(ibf.encode_member(args, create_time))

        writes = [
            ("model_id", model_id.encode("utf-8")),
            ("description_hash", description_hash),
            ("producer_sign", producer_sign),
            ("owner_sign", owner_sign),
            ("bf", filt.to_bytes()),
            ("status", Status.PREPARED.value.encode()),
            ("acl", producer.public_key + provider.public_key),
        ]
        tx = make_transaction(
            TxType.REQ, product_id, args, create_time,
            ledger.next_nonce(producer.public_key), producer, writes)
        ledger.propose(tx)
        ledger.commit_block()
        return tx.txid

    # -- data uploading -----------------------------------------------------------

    def data_uploading(
        self,
        producer: Identity,
        provider: Identity,
        product_id: str,
        args: str,
        generator: Callable[[str, int], bytes] = mock_generator,
        steps: int = 50,
        seed: int | None = None,
    ) -> UploadResult:
        """Generate the product, run the exchange handshake, commit Gen then Upload.

        The prompt is handed over off-chain by the producer; only derived
        hashes go into the world state.
        """
        ledger = self.ledger
        record = ledger.get_state(product_id)
        if record.status is not Status.PREPARED:
            raise WrongStatus(
                f"data uploading needs a prepared product, found {record.status.value}")

        if seed is None:
            seed = self.rng.u64()
        product = generator(args, seed)
        sigma3 = crypto.sign(provider.keypair.secret_key, product)
        # Producer accepts the product only under a valid provider signature.
        if not crypto.verify(provider.public_key, product, sigma3):
            raise SigmaVerifyFailed("sigma3")
        sigma4 = crypto.sign(producer.keypair.secret_key, product)
        if not crypto.verify(producer.public_key, product, sigma4):
            raise SigmaVerifyFailed("sigma4")

        created_date = ledger.now_ms()
        metadata = GenerationMetadata(
            steps=steps,
            seed=seed,
            created_date=created_date,
            exec_log=[
                f"generated {len(product)} bytes for {product_id}",
                f"steps={steps} seed={seed}",
            ],
        )
        model_sign = crypto.sign(provider.keypair.secret_key, metadata.signing_bytes())

        # Provider records the generation facts.
        gen_time = ledger.now_ms()
        gen_args = f"gen:{product_id}"
        filt = ibf.deserialize(record.bf).insert(ibf.encode_member(gen_args, gen_time))
        tx_gen = make_transaction(
            TxType.GEN, product_id, gen_args, gen_time,
            ledger.next_nonce(provider.public_key), provider,
            [
                ("model_sign", model_sign),
                ("status", Status.GENERATING.value.encode()),
                ("bf", filt.to_bytes()),
            ])
        ledger.propose(tx_gen)
        ledger.commit_block()

        # Producer anchors the finished product's hash.
        product_hash = crypto.digest(product)
        record = ledger.get_state(product_id)
        upload_time = ledger.now_ms()
        upload_args = f"upload:{product_hash.hex()}"
        filt = ibf.deserialize(record.bf).insert(
            ibf.encode_member(upload_args, upload_time))
        tx_upload = make_transaction(
            TxType.UPLOAD, product_id, upload_args, upload_time,
            ledger.next_nonce(producer.public_key), producer,
            [
                ("product_hash", product_hash),
                ("status", Status.GENERATED.value.encode()),
                ("bf", filt.to_bytes()),
            ])
        ledger.propose(tx_upload)
        ledger.commit_block()

        return UploadResult(product=product, txid_gen=tx_gen.txid,
                            txid_upload=tx_upload.txid, metadata=metadata)

    # -- copyright trading -----------------------------------------------------------

    def copyright_trading(self, consumer: Identity, product_id: str,
                          owner_pk: bytes) -> bytes:
        """Transfer ownership: verify the current owner, commit the exchange.

        Payment is not modeled; the transfer is recorded as a no-op event.
        """
        ledger = self.ledger
        try:
            record = ledger.get_state(product_id)
        except NotFound:
            raise UnknownProduct(product_id) from None
        if record.status in (Status.PREPARED, Status.GENERATING):
            raise WrongStatus(
                f"cannot trade a product that is {record.status.value}")
        if record.owner_sign is None or not crypto.verify(
                owner_pk, record.description_hash, record.owner_sign):
            raise OwnerSignInvalid("owner signature does not verify under the given key")

        new_owner_sign = crypto.sign(consumer.keypair.secret_key,
                                     record.description_hash)
        create_time = ledger.now_ms()
        args = f"exchange:{consumer.public_key.hex()}"
        filt = ibf.deserialize(record.bf).insert(ibf.encode_member(args, create_time))
        acl = list(record.acl)
        if consumer.public_key not in acl:
            acl.append(consumer.public_key)
        tx = make_transaction(
            TxType.EXCHANGE, product_id, args, create_time,
            ledger.next_nonce(consumer.public_key), consumer,
            [
                ("owner_sign", new_owner_sign),
                ("status", Status.TRADED.value.encode()),
                ("bf", filt.to_bytes()),
                ("acl", b"".join(acl)),
            ])
        ledger.propose(tx)
        ledger.commit_block()
        self.events.append(f"payment:none:{product_id}")
        return tx.txid

    # -- copyright management -----------------------------------------------------------

    def copyright_management(
        self,
        auditor: Identity,
        product_id: str,
        phi: ProducerProof,
        varphi: ProviderProof,
        candidate_product: bytes | None = None,
    ) -> AuditReport:
        """Check the submitted proofs against the chain and the product filter.

        Claimed txids are fetched and their (args, create_time) encoding is
        probed against the product's filter; a txid that is not on the chain
        counts as a failed check. The verdict is Consistent only when every
        check passes.
        """
        if auditor.role is not Role.AUDITOR:
            raise NotAuditor(f"{auditor.role.value} cannot audit")
        ledger = self.ledger
        try:
            record = ledger.get_state(product_id)
        except NotFound:
            raise UnknownProduct(product_id) from None

        checks: dict[str, bool] = {}
        checks["producer_sign_ok"] = (
            record.producer_sign is not None
            and crypto.verify(phi.producer_pk, record.description_hash,
                              record.producer_sign))
        checks["model_sign_ok"] = (
            record.model_sign is not None
            and crypto.verify(varphi.provider_pk,
                              varphi.metadata.signing_bytes(), record.model_sign))

        filt = ibf.deserialize(record.bf)
        claimed = (
            ("txid_req_ok", phi.txid_req),
            ("txid_upload_ok", phi.txid_upload),
            ("txid_gen_ok", varphi.txid_gen),
        )
        for name, txid in claimed:
            try:
                tx = ledger.get_transaction(txid)
            except NotFound:
                checks[name] = False
            else:
                checks[name] = filt.check(
                    ibf.encode_member(tx.args, tx.create_time))

        checks["prompt_hash_ok"] = (
            crypto.digest(phi.prompt.encode("utf-8")) == record.description_hash)
        if candidate_product is None:
            checks["candidate_product_hash_ok"] = True
        else:
            checks["candidate_product_hash_ok"] = (
                record.product_hash is not None
                and crypto.digest(candidate_product) == record.product_hash)

        verdict = VERDICT_CONSISTENT if all(checks.values()) else VERDICT_INCONSISTENT
        return AuditReport(product_id=product_id, checks=checks, verdict=verdict)
