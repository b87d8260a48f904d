"""Command-line front end: drives the lifecycle, audits, and benchmarks.

State lives in two files: the ledger itself (JSON lines) and a keystore
sidecar (<ledger path> + ".keys.json") holding issued identities, per-product
off-chain data (the prompt never goes on chain), and, in deterministic mode,
the resumable randomness counter and logical clock. Every mutating command
commits and saves immediately; reads never rewrite the files.

Exit codes: 0 success, 1 domain error (error name on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import contextlib
import fcntl
import json
import os
import sys
from pathlib import Path

from .crypto import KeyPair, SeededRandomness, SystemRandomness
from .errors import (
    InvalidParams,
    NotAuditor,
    NotFound,
    ProvChainError,
    UnknownProduct,
)
from .ledger import (
    LOGICAL_EPOCH_MS,
    Identity,
    Ledger,
    LogicalClock,
    NodeClass,
    Role,
    SystemClock,
)
from .lifecycle import (
    DEFAULT_IBF_K,
    DEFAULT_IBF_M,
    ROLE_NODE_CLASS,
    Consortium,
    GenerationMetadata,
    ProducerProof,
    ProviderProof,
    Registry,
)
from .tracing import Placement, emit_cost_csv, emit_csv, run_benchmark

DEFAULT_LEDGER = "ledger.jsonl"


@contextlib.contextmanager
def _locked(path: Path):
    """Exclusive advisory lock guarding one command's read-modify-write."""
    lock_path = Path(str(path) + ".lock")
    fd = os.open(lock_path, os.O_CREAT | os.O_RDWR, 0o644)
    try:
        fcntl.flock(fd, fcntl.LOCK_EX)
        yield
    finally:
        fcntl.flock(fd, fcntl.LOCK_UN)
        os.close(fd)


class Workspace:
    """Ledger file plus keystore sidecar, reassembled into a Consortium."""

    def __init__(self, ledger_path: Path):
        self.ledger_path = ledger_path
        self.keystore_path = Path(str(ledger_path) + ".keys.json")
        self.keystore: dict = {}
        self.consortium: Consortium | None = None
        self.ids: dict[str, Identity] = {}

    # -- creation / loading --------------------------------------------------

    def create(self, ibf_m: int, ibf_k: int, rng_seed_hex: str | None) -> None:
        if self.ledger_path.exists() or self.keystore_path.exists():
            raise FileExistsError(f"{self.ledger_path} already exists")
        if rng_seed_hex is not None:
            seed = _parse_hex(rng_seed_hex, "rng seed")
            if len(seed) < 16:
                raise InvalidParams("rng seed must be at least 16 bytes of hex")
        self.keystore = {
            "ibf_m": ibf_m,
            "ibf_k": ibf_k,
            "rng_seed": rng_seed_hex,
            "rng_counter": 0,
            "clock_ms": LOGICAL_EPOCH_MS if rng_seed_hex else None,
            "identities": [],
            "products": {},
        }
        ledger = Ledger(clock=self._clock())
        ledger.save(self.ledger_path)
        self._write_keystore(ledger)

    def load(self) -> Consortium:
        try:
            self.keystore = json.loads(self.keystore_path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise NotFound(
                f"no keystore at {self.keystore_path}; run `init` first") from None
        ledger = Ledger.load(self.ledger_path, clock=self._clock())
        registry = Registry()
        for entry in self.keystore["identities"]:
            identity = Identity(
                role=Role(entry["role"]),
                node_class=NodeClass(entry["node_class"]),
                keypair=KeyPair(public_key=bytes.fromhex(entry["public_key"]),
                                secret_key=bytes.fromhex(entry["secret_key"])),
                cert_issued_at=entry["cert_issued_at"],
            )
            registry.add(identity)
            self.ids[entry["id"]] = identity
        self.consortium = Consortium(
            ledger=ledger,
            ibf_m=self.keystore["ibf_m"],
            ibf_k=self.keystore["ibf_k"],
            rng=self._rng(),
            registry=registry,
        )
        return self.consortium

    def _clock(self):
        if self.keystore.get("rng_seed"):
            return LogicalClock(self.keystore.get("clock_ms") or LOGICAL_EPOCH_MS)
        return SystemClock()

    def _rng(self):
        seed_hex = self.keystore.get("rng_seed")
        if seed_hex:
            return SeededRandomness(bytes.fromhex(seed_hex),
                                    self.keystore.get("rng_counter", 0))
        return SystemRandomness()

    # -- identity bookkeeping --------------------------------------------------

    def record_identity(self, identity: Identity) -> str:
        count = sum(1 for entry in self.keystore["identities"]
                    if entry["role"] == identity.role.value)
        ident_id = f"{identity.role.value}-{count + 1}"
        self.keystore["identities"].append({
            "id": ident_id,
            "role": identity.role.value,
            "node_class": identity.node_class.value,
            "public_key": identity.public_key.hex(),
            "secret_key": identity.keypair.secret_key.hex(),
            "cert_issued_at": identity.cert_issued_at,
        })
        self.ids[ident_id] = identity
        return ident_id

    def resolve(self, ref: str) -> Identity:
        if ref in self.ids:
            return self.ids[ref]
        for identity in self.ids.values():
            if identity.public_key.hex() == ref.lower():
                return identity
        raise NotFound(f"no identity {ref!r} in the keystore")

    def first_auditor(self) -> Identity:
        for identity in self.ids.values():
            if identity.role is Role.AUDITOR:
                return identity
        raise NotAuditor("no auditor registered; `register --role auditor` first")

    # -- saving ------------------------------------------------------------------

    def save(self) -> None:
        ledger = self.consortium.ledger
        ledger.save(self.ledger_path)
        self._write_keystore(ledger)

    def _write_keystore(self, ledger: Ledger) -> None:
        if self.keystore.get("rng_seed"):
            rng = self.consortium.rng if self.consortium else None
            if isinstance(rng, SeededRandomness):
                self.keystore["rng_counter"] = rng.counter
            self.keystore["clock_ms"] = ledger.clock.next_ms
        self.keystore_path.write_text(
            json.dumps(self.keystore, indent=2) + "\n", encoding="utf-8")


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2))


def _parse_hex(value: str, what: str) -> bytes:
    try:
        return bytes.fromhex(value)
    except ValueError as exc:
        raise InvalidParams(f"{what} is not valid hex: {value!r}") from exc


# -- command handlers ---------------------------------------------------------

def cmd_init(args) -> int:
    ws = Workspace(Path(args.ledger))
    ws.create(args.ibf_m, args.ibf_k, args.rng_seed)
    _emit({
        "ledger": str(ws.ledger_path),
        "keystore": str(ws.keystore_path),
        "ibf_m": args.ibf_m,
        "ibf_k": args.ibf_k,
        "deterministic": args.rng_seed is not None,
    })
    return 0


def cmd_register(args) -> int:
    ws = Workspace(Path(args.ledger))
    with _locked(ws.ledger_path):
        consortium = ws.load()
        role = Role(args.role)
        identity = consortium.register(role, ROLE_NODE_CLASS[role])
        ident_id = ws.record_identity(identity)
        ws.save()
    _emit({
        "id": ident_id,
        "role": identity.role.value,
        "node_class": identity.node_class.value,
        "public_key": identity.public_key.hex(),
        "cert_issued_at": identity.cert_issued_at,
    })
    return 0


def cmd_generate(args) -> int:
    ws = Workspace(Path(args.ledger))
    with _locked(ws.ledger_path):
        consortium = ws.load()
        producer = ws.resolve(args.producer)
        provider = ws.resolve(args.provider)
        txid = consortium.content_generation(
            producer, provider, args.args, args.product_id, args.model_id)
        record = consortium.ledger.get_state(args.product_id)
        ws.keystore["products"][args.product_id] = {
            "prompt": args.args,
            "producer": args.producer,
            "provider": args.provider,
            "model_id": args.model_id,
            "txid_req": txid.hex(),
            "txid_gen": None,
            "txid_upload": None,
            "product_hash": None,
            "metadata": None,
        }
        ws.save()
    _emit({
        "product_id": args.product_id,
        "txid_req": txid.hex(),
        "description_hash": record.description_hash.hex(),
        "status": record.status.value,
    })
    return 0


def cmd_upload(args) -> int:
    ws = Workspace(Path(args.ledger))
    with _locked(ws.ledger_path):
        consortium = ws.load()
        meta = ws.keystore["products"].get(args.product_id)
        if meta is None:
            raise UnknownProduct(
                f"{args.product_id!r} has no off-chain record in this keystore")
        producer = ws.resolve(meta["producer"])
        provider = ws.resolve(meta["provider"])
        result = consortium.data_uploading(
            producer, provider, args.product_id, meta["prompt"],
            steps=args.steps, seed=args.seed)
        meta["txid_gen"] = result.txid_gen.hex()
        meta["txid_upload"] = result.txid_upload.hex()
        meta["product_hash"] = consortium.ledger.get_state(
            args.product_id).product_hash.hex()
        meta["metadata"] = {
            "steps": result.metadata.steps,
            "seed": result.metadata.seed,
            "created_date": result.metadata.created_date,
            "exec_log": result.metadata.exec_log,
        }
        if args.product_out:
            Path(args.product_out).write_bytes(result.product)
        ws.save()
    _emit({
        "product_id": args.product_id,
        "txid_gen": result.txid_gen.hex(),
        "txid_upload": result.txid_upload.hex(),
        "product_hash": meta["product_hash"],
        "metadata": meta["metadata"],
        "status": "generated",
    })
    return 0


def cmd_trade(args) -> int:
    ws = Workspace(Path(args.ledger))
    with _locked(ws.ledger_path):
        consortium = ws.load()
        consumer = ws.resolve(args.consumer)
        txid = consortium.copyright_trading(
            consumer, args.product_id, _parse_hex(args.owner_pk, "owner public key"))
        ws.save()
    _emit({
        "product_id": args.product_id,
        "txid_exchange": txid.hex(),
        "new_owner": args.consumer,
        "status": "traded",
    })
    return 0


def _load_proofs(phi_path: str, varphi_path: str) -> tuple[ProducerProof, ProviderProof]:
    try:
        phi_obj = json.loads(Path(phi_path).read_text(encoding="utf-8"))
        varphi_obj = json.loads(Path(varphi_path).read_text(encoding="utf-8"))
        phi = ProducerProof(
            producer_pk=bytes.fromhex(phi_obj["producer_pk"]),
            txid_req=bytes.fromhex(phi_obj["txid_req"]),
            txid_upload=bytes.fromhex(phi_obj["txid_upload"]),
            prompt=phi_obj["prompt"],
        )
        meta = varphi_obj["metadata"]
        varphi = ProviderProof(
            provider_pk=bytes.fromhex(varphi_obj["provider_pk"]),
            txid_gen=bytes.fromhex(varphi_obj["txid_gen"]),
            metadata=GenerationMetadata(
                steps=meta["steps"],
                seed=meta["seed"],
                created_date=meta["created_date"],
                exec_log=list(meta.get("exec_log", [])),
            ),
        )
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise InvalidParams(f"malformed proof file: {exc}") from exc
    return phi, varphi


def cmd_audit(args) -> int:
    ws = Workspace(Path(args.ledger))
    consortium = ws.load()
    phi, varphi = _load_proofs(args.phi, args.varphi)
    candidate = Path(args.candidate).read_bytes() if args.candidate else None
    auditor = ws.resolve(args.auditor) if args.auditor else ws.first_auditor()
    report = consortium.copyright_management(
        auditor, args.product_id, phi, varphi, candidate)
    _emit({
        "product_id": report.product_id,
        "checks": report.checks,
        "verdict": report.verdict,
    })
    print(f"verdict: {report.verdict}")
    return 0


def cmd_inspect(args) -> int:
    ws = Workspace(Path(args.ledger))
    consortium = ws.load()
    ledger = consortium.ledger
    if args.product_id:
        record = ledger.get_state(args.product_id)
        _emit({
            "product_id": record.product_id,
            "model_id": record.model_id,
            "description_hash": record.description_hash.hex(),
            "product_hash": record.product_hash.hex() if record.product_hash else None,
            "producer_sign": record.producer_sign.hex(),
            "model_sign": record.model_sign.hex() if record.model_sign else None,
            "owner_sign": record.owner_sign.hex(),
            "bf": record.bf.hex(),
            "status": record.status.value,
            "acl": [pk.hex() for pk in record.acl],
        })
    else:
        tx = ledger.get_transaction(_parse_hex(args.txid, "txid"))
        _emit({
            "txid": tx.txid.hex(),
            "tx_type": tx.tx_type.value,
            "product_id": tx.product_id,
            "args": tx.args,
            "create_time": tx.create_time,
            "nonce": tx.nonce,
            "creator": tx.creator.hex(),
            "creator_sig": tx.creator_sig.hex(),
            "writes": [[name, value.hex()] for name, value in tx.writes],
        })
    return 0


def cmd_bench(args) -> int:
    from .plots import render_benchmark_figures

    proportions = tuple(float(p) for p in args.proportions.split(","))
    placements = ([Placement.FIRST, Placement.LAST] if args.placement == "both"
                  else [Placement(args.placement)])
    reports = [
        run_benchmark(total_tx=args.total, proportions=proportions,
                      trials=args.trials, placement=placement,
                      ibf_m=args.ibf_m, ibf_k=args.ibf_k)
        for placement in placements
    ]
    out = Path(args.out)
    stem = out.with_suffix("")
    files = []
    emit_csv(reports[0].results, out)
    files.append(out)
    for report in reports[1:]:
        extra = stem.with_name(f"{stem.name}-{report.placement.value}.csv")
        emit_csv(report.results, extra)
        files.append(extra)
    cost_path = stem.with_name(stem.name + "-cost.csv")
    emit_cost_csv(reports[0].cost, cost_path)
    files.append(cost_path)
    files.extend(render_benchmark_figures(reports, stem))
    _emit({
        "total_tx": args.total,
        "proportions": list(proportions),
        "placements": [p.value for p in placements],
        "files": [str(f) for f in files],
    })
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="provchain",
        description="Copyright provenance ledger: lifecycle, audits, benchmarks.",
    )
    parser.add_argument("--ledger", default=DEFAULT_LEDGER,
                        help="ledger file path (default %(default)s)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a fresh ledger and keystore")
    p.add_argument("--ibf-m", type=int, default=DEFAULT_IBF_M)
    p.add_argument("--ibf-k", type=int, default=DEFAULT_IBF_K)
    p.add_argument("--rng-seed", help="hex seed (>= 32 hex chars) for deterministic mode")
    p.set_defaults(handler=cmd_init)

    p = sub.add_parser("register", help="issue an identity for a role")
    p.add_argument("--role", required=True,
                   choices=[r.value for r in Role])
    p.set_defaults(handler=cmd_register)

    p = sub.add_parser("generate", help="run the content-generation step")
    p.add_argument("--producer", required=True)
    p.add_argument("--provider", required=True)
    p.add_argument("--product-id", required=True)
    p.add_argument("--model-id", required=True)
    p.add_argument("--args", required=True, help="the generation prompt")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("upload", help="generate the product and anchor its hash")
    p.add_argument("--product-id", required=True)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--seed", type=int)
    p.add_argument("--product-out", help="write the generated bytes to this file")
    p.set_defaults(handler=cmd_upload)

    p = sub.add_parser("trade", help="transfer ownership to a consumer")
    p.add_argument("--consumer", required=True)
    p.add_argument("--product-id", required=True)
    p.add_argument("--owner-pk", required=True, help="current owner public key, hex")
    p.set_defaults(handler=cmd_trade)

    p = sub.add_parser("audit", help="check producer/provider proofs")
    p.add_argument("--product-id", required=True)
    p.add_argument("--phi", required=True, help="producer proof JSON file")
    p.add_argument("--varphi", required=True, help="provider proof JSON file")
    p.add_argument("--candidate", help="candidate product bytes to verify")
    p.add_argument("--auditor", help="auditor identity (default: first registered)")
    p.set_defaults(handler=cmd_audit)

    p = sub.add_parser("inspect", help="print a product record or transaction")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--product-id")
    group.add_argument("--txid")
    p.set_defaults(handler=cmd_inspect)

    p = sub.add_parser("bench", help="run the query benchmark and render reports")
    p.add_argument("--total", type=int, default=1000)
    p.add_argument("--proportions", default="0.1,0.3,0.5,0.7,0.9")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--placement", choices=["first", "last", "both"], default="first")
    p.add_argument("--ibf-m", type=int, default=DEFAULT_IBF_M)
    p.add_argument("--ibf-k", type=int, default=DEFAULT_IBF_K)
    p.add_argument("--out", default="bench.csv")
    p.set_defaults(handler=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ProvChainError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"IoError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
