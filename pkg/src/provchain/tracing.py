"""Transaction-membership query strategies and the probe/latency benchmark.

Three ways to answer "is this txid a recorded transaction of product P":

* normal: scan every committed transaction in chain order,
* fast: walk a locally built per-product txid list,
* ibft: one world-state read plus a filter check on the fetched transaction.

The primary reported metric is probe count (items touched), which is exact;
wall-clock medians come second. The benchmark builds fresh ledgers with a
controlled share of product-P transactions and times all strategies against
the same target.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple

from . import ibf
from .crypto import SeededRandomness
from .errors import InvalidParams, NotFound, StaleIndex, UnknownProduct
from .ledger import Ledger, LogicalClock, NodeClass, Role, Transaction, TxType, make_transaction
from .lifecycle import DEFAULT_IBF_K, DEFAULT_IBF_M, Consortium


class Strategy(Enum):
    NORMAL = "normal"
    FAST = "fast"
    IBFT = "ibft"


class Placement(Enum):
    """Where the query target sits: the product's first or last transaction."""

    FIRST = "first"
    LAST = "last"


class QueryResult(NamedTuple):
    found: bool
    probes: int


def normal_query(ledger: Ledger, product_id: str, txid: bytes) -> QueryResult:
    """Full chain scan; probes counts every transaction examined."""
    probes = 0
    for tx in ledger.iter_transactions():
        probes += 1
        if tx.txid == txid and tx.product_id == product_id:
            return QueryResult(True, probes)
    return QueryResult(False, probes)


@dataclass(frozen=True)
class FastIndex:
    """Per-product list of committed txids, valid only at its build height."""

    product_id: str
    txids: tuple[bytes, ...]
    height: int
    ledger: Ledger = field(repr=False, compare=False)


def build_fast_index(ledger: Ledger, product_id: str) -> FastIndex:
    txids = tuple(tx.txid for tx in ledger.iter_transactions()
                  if tx.product_id == product_id)
    return FastIndex(product_id=product_id, txids=txids,
                     height=ledger.height, ledger=ledger)


def fast_query(index: FastIndex, txid: bytes) -> QueryResult:
    """Walk the product's local list; probes counts the positions visited."""
    if index.height != index.ledger.height:
        raise StaleIndex(
            f"index built at height {index.height}, ledger is at {index.ledger.height}")
    probes = 0
    for candidate in index.txids:
        probes += 1
        if candidate == txid:
            return QueryResult(True, probes)
    return QueryResult(False, probes)


def ibft_query(ledger: Ledger, product_id: str, txid: bytes) -> QueryResult:
    """World-state read plus a filter check; probes are twin probes (<= k)."""
    try:
        record = ledger.get_state(product_id)
    except NotFound:
        raise UnknownProduct(product_id) from None
    try:
        tx = ledger.get_transaction(txid)
    except NotFound:
        return QueryResult(False, 0)
    filt = ibf.deserialize(record.bf)
    found, probes = filt.check_counting(ibf.encode_member(tx.args, tx.create_time))
    return QueryResult(found, probes)


# -- benchmark ----------------------------------------------------------------

@dataclass(frozen=True)
class BenchResult:
    strategy: Strategy
    proportion: float
    trial_median_ns: int
    probes: int
    total_tx: int
    placement: Placement


@dataclass(frozen=True)
class CostEntry:
    """Bytes written to the world state by one lifecycle transaction."""

    stage: str
    tx_type: str
    bytes_written: int


@dataclass(frozen=True)
class BenchReport:
    placement: Placement
    total_tx: int
    results: tuple[BenchResult, ...]
    cost: tuple[CostEntry, ...]


def written_bytes(tx: Transaction) -> int:
    return sum(len(name.encode("utf-8")) + len(value) for name, value in tx.writes)


def _append_history(consortium: Consortium, identity, product_id: str,
                    count: int, batch: int = 100) -> list[bytes]:
    """Append `count` filter-backed exchange events to an existing product.

    Each event binds its own (args, create_time) into the product filter, so
    the filter keeps indexing every transaction; commits happen in batches.
    """
    ledger = consortium.ledger
    filt = ibf.deserialize(ledger.get_state(product_id).bf)
    txids: list[bytes] = []
    since_commit = 0
    for i in range(count):
        create_time = ledger.now_ms()
        args = f"pad:{product_id}:{i}"
        filt = filt.insert(ibf.encode_member(args, create_time))
        tx = make_transaction(
            TxType.EXCHANGE, product_id, args, create_time,
            ledger.next_nonce(identity.public_key), identity,
            [("bf", filt.to_bytes())])
        ledger.propose(tx)
        txids.append(tx.txid)
        since_commit += 1
        if since_commit == batch:
            ledger.commit_block()
            since_commit = 0
    if since_commit:
        ledger.commit_block()
    return txids


def _build_product(consortium: Consortium, producer, provider,
                   product_id: str, tx_count: int) -> list[bytes]:
    """Give a product a history of exactly `tx_count` transactions."""
    prompt = f"benchmark prompt for {product_id}"
    txids = [consortium.content_generation(
        producer, provider, prompt, product_id, model_id="bench-model")]
    if tx_count >= 3:
        upload = consortium.data_uploading(
            producer, provider, product_id, prompt, steps=30)
        txids += [upload.txid_gen, upload.txid_upload]
    remaining = tx_count - len(txids)
    if remaining > 0:
        txids += _append_history(consortium, producer, product_id, remaining)
    return txids


def build_query_ledger(
    total_tx: int,
    product_tx_count: int,
    placement: Placement = Placement.FIRST,
    *,
    ibf_m: int = DEFAULT_IBF_M,
    ibf_k: int = DEFAULT_IBF_K,
    seed: bytes = b"query-benchmark-seed",
    filler_history: int = 100,
) -> tuple[Consortium, str, bytes]:
    """Fresh ledger with `total_tx` committed transactions, `product_tx_count`
    of them belonging to one product P.

    Filler transactions are spread over dummy products. With placement FIRST,
    P's block sits at the head of the chain and the target is P's first
    transaction; with LAST, P sits at the tail and the target is its last.
    Returns (consortium, product_id, target_txid).
    """
    if total_tx < 10:
        raise InvalidParams(f"total_tx must be >= 10, got {total_tx}")
    if not 1 <= product_tx_count <= total_tx:
        raise InvalidParams(
            f"product_tx_count must be in [1, {total_tx}], got {product_tx_count}")

    consortium = Consortium(ledger=Ledger(clock=LogicalClock()),
                            ibf_m=ibf_m, ibf_k=ibf_k,
                            rng=SeededRandomness(seed))
    producer = consortium.register(Role.PRODUCER, NodeClass.LIGHT)
    provider = consortium.register(Role.PROVIDER, NodeClass.FULL)

    def build_fillers(count: int) -> None:
        index = 0
        while count > 0:
            chunk = min(filler_history, count)
            _build_product(consortium, producer, provider,
                           f"filler-{index}", chunk)
            count -= chunk
            index += 1

    product_id = "product-p"
    if placement is Placement.FIRST:
        product_txids = _build_product(consortium, producer, provider,
                                       product_id, product_tx_count)
        build_fillers(total_tx - product_tx_count)
        target = product_txids[0]
    else:
        build_fillers(total_tx - product_tx_count)
        product_txids = _build_product(consortium, producer, provider,
                                       product_id, product_tx_count)
        target = product_txids[-1]
    return consortium, product_id, target


def lifecycle_cost_report(*, ibf_m: int = DEFAULT_IBF_M, ibf_k: int = DEFAULT_IBF_K,
                          seed: bytes = b"cost-report-seed") -> tuple[CostEntry, ...]:
    """Bytes written per stage by one honest lifecycle run."""
    consortium = Consortium(ledger=Ledger(clock=LogicalClock()),
                            ibf_m=ibf_m, ibf_k=ibf_k,
                            rng=SeededRandomness(seed))
    producer = consortium.register(Role.PRODUCER, NodeClass.LIGHT)
    provider = consortium.register(Role.PROVIDER, NodeClass.FULL)
    consumer = consortium.register(Role.CONSUMER, NodeClass.LIGHT)

    prompt = "cost probe prompt"
    txid_req = consortium.content_generation(
        producer, provider, prompt, "cost-product", model_id="cost-model")
    upload = consortium.data_uploading(producer, provider, "cost-product", prompt)
    txid_exchange = consortium.copyright_trading(
        consumer, "cost-product", producer.public_key)

    staged = (
        ("content_generation", txid_req),
        ("data_uploading", upload.txid_gen),
        ("data_uploading", upload.txid_upload),
        ("copyright_trading", txid_exchange),
    )
    ledger = consortium.ledger
    return tuple(
        CostEntry(stage=stage,
                  tx_type=ledger.get_transaction(txid).tx_type.value,
                  bytes_written=written_bytes(ledger.get_transaction(txid)))
        for stage, txid in staged
    )


def run_benchmark(
    total_tx: int = 1000,
    proportions: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9),
    trials: int = 3,
    placement: Placement = Placement.FIRST,
    *,
    ibf_m: int = DEFAULT_IBF_M,
    ibf_k: int = DEFAULT_IBF_K,
    seed: bytes = b"query-benchmark-seed",
) -> BenchReport:
    """Time and probe-count all three strategies across target proportions."""
    if total_tx < 10:
        raise InvalidParams(f"total_tx must be >= 10, got {total_tx}")
    if not proportions:
        raise InvalidParams("need at least one proportion")
    if any(not 0 < p <= 1 for p in proportions):
        raise InvalidParams(f"proportions must lie in (0, 1], got {proportions}")
    if trials < 1:
        raise InvalidParams(f"trials must be >= 1, got {trials}")

    results: list[BenchResult] = []
    for proportion in proportions:
        count = min(total_tx, max(1, round(proportion * total_tx)))
        consortium, product_id, target = build_query_ledger(
            total_tx, count, placement, ibf_m=ibf_m, ibf_k=ibf_k, seed=seed)
        ledger = consortium.ledger
        index = build_fast_index(ledger, product_id)
        runners = (
            (Strategy.NORMAL, lambda: normal_query(ledger, product_id, target)),
            (Strategy.FAST, lambda: fast_query(index, target)),
            (Strategy.IBFT, lambda: ibft_query(ledger, product_id, target)),
        )
        for strategy, run in runners:
            elapsed: list[int] = []
            probes = 0
            for _ in range(trials):
                start = time.perf_counter_ns()
                outcome = run()
                elapsed.append(time.perf_counter_ns() - start)
                probes = outcome.probes
            results.append(BenchResult(
                strategy=strategy,
                proportion=proportion,
                trial_median_ns=int(statistics.median(elapsed)),
                probes=probes,
                total_tx=total_tx,
                placement=placement,
            ))
    cost = lifecycle_cost_report(ibf_m=ibf_m, ibf_k=ibf_k, seed=seed)
    return BenchReport(placement=placement, total_tx=total_tx,
                       results=tuple(results), cost=cost)


def emit_csv(results, path: str | Path) -> None:
    """Write benchmark rows; header strategy,proportion,trial_median_ns,probes,total_tx."""
    lines = ["strategy,proportion,trial_median_ns,probes,total_tx"]
    for r in results:
        lines.append(f"{r.strategy.value},{r.proportion:g},"
                     f"{r.trial_median_ns},{r.probes},{r.total_tx}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_cost_csv(cost, path: str | Path) -> None:
    lines = ["stage,tx_type,bytes_written"]
    for entry in cost:
        lines.append(f"{entry.stage},{entry.tx_type},{entry.bytes_written}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
