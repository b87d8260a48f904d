"""Desk-scale copyright provenance ledger with filter-backed transaction tracing.

A simulated permissioned chain records the full lifecycle of generated
products (request, generation, upload, trading) together with a per-product
twin-cell bloom filter that lets auditors validate claimed transaction ids in
a constant number of probes.
"""

from .crypto import (
    KeyPair,
    SeededRandomness,
    SystemRandomness,
    derive_hash_family,
    digest,
    keygen,
    parity_hash,
    sign,
    verify,
)
from .errors import ProvChainError
from .ibf import IndistinguishableBloomFilter, encode_member, setup
from .ledger import (
    Block,
    Identity,
    Ledger,
    LogicalClock,
    NodeClass,
    ProductRecord,
    Role,
    Status,
    SystemClock,
    Transaction,
    TxType,
    make_transaction,
)
from .lifecycle import (
    AuditReport,
    Consortium,
    GenerationMetadata,
    ProducerProof,
    ProviderProof,
    Registry,
    UploadResult,
    mock_generator,
)
from .tracing import (
    BenchReport,
    BenchResult,
    FastIndex,
    Placement,
    Strategy,
    build_fast_index,
    emit_cost_csv,
    emit_csv,
    fast_query,
    ibft_query,
    normal_query,
    run_benchmark,
)

__version__ = "0.1.0"

__all__ = [
    "AuditReport",
    "BenchReport",
    "BenchResult",
    "Block",
    "Consortium",
    "FastIndex",
    "GenerationMetadata",
    "Identity",
    "IndistinguishableBloomFilter",
    "KeyPair",
    "Ledger",
    "LogicalClock",
    "NodeClass",
    "Placement",
    "ProducerProof",
    "ProductRecord",
    "ProviderProof",
    "ProvChainError",
    "Registry",
    "Role",
    "SeededRandomness",
    "Status",
    "Strategy",
    "SystemClock",
    "SystemRandomness",
    "Transaction",
    "TxType",
    "UploadResult",
    "build_fast_index",
    "derive_hash_family",
    "digest",
    "emit_cost_csv",
    "emit_csv",
    "encode_member",
    "fast_query",
    "ibft_query",
    "keygen",
    "make_transaction",
    "mock_generator",
    "normal_query",
    "parity_hash",
    "run_benchmark",
    "setup",
    "sign",
    "verify",
]
