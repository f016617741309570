"""Experiment driver: datasets, population simulation, baselines, benchmarks.

Reproduces the protocol's utility and cost measurements at desk scale:
loaders for a whitespace-tokenized corpus and attribute CSVs (plus synthetic
stand-ins with matching shapes), a full client-population simulation of the
sampling/encoding/dummy/decoding pipeline, central- and local-model
differential-privacy baselines, and timing/byte-count benchmarks.

All randomness flows from one experiment seed through named sub-streams
(participation, blinding, shares, dummies, delivery, baselines), so each
component is independently reproducible.  Identical (dataset, params, seed)
give identical results; wall-clock timings are kept out of the deterministic
result fields and only appear in benchmark output.

The error metric throughout is the sum-absolute difference between
normalized estimated and true frequencies, in [0, 2].  Estimated
frequencies normalize by the total *revealed* mass, since unrevealed values
are unknown to the aggregation side.
"""

from __future__ import annotations

import csv
import hashlib
import math
import random
import socket
import string
import struct
import subprocess
import sys
import time
from collections import Counter
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import aggregate, dummy, multidim, oprf, service, wire
from .encode import Submission, build_submission, participate, submission_wire_size
from .multidim import SuperSubmission, encode_multidim, geo_attributes, make_prefixes
from .params import DpParams, params_to_config

DEFAULT_SERVER_SEED = b"nebula-default-randomness-seed\x00\x00"

MAX_ONE_HOT_DOMAIN = 2**20


class SchemaError(ValueError):
    """The input file does not provide the requested columns."""


class CapacityError(ValueError):
    """The domain is too large for the chosen baseline mechanism."""


# --- seeded sub-streams -----------------------------------------------------


def substream_seed(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"nebula-substream:{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:16], "big")


def substream(seed: int, name: str) -> random.Random:
    return random.Random(substream_seed(seed, name))


def np_substream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(substream_seed(seed, name))


# --- datasets ---------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Records of equal arity; every value is a finite byte string."""

    records: tuple[tuple[bytes, ...], ...]
    schema: tuple[str, ...]
    source: str

    def __post_init__(self) -> None:
        arity = len(self.schema)
        if arity < 1:
            raise ValueError("schema must name at least one attribute")
        if any(len(r) != arity for r in self.records):
            raise ValueError("all records must have the same attribute count")

    @property
    def num_attributes(self) -> int:
        return len(self.schema)

    def __len__(self) -> int:
        return len(self.records)


def record_value(record: tuple[bytes, ...]) -> bytes:
    """Canonical single-value encoding of a whole record (collision-free)."""
    if len(record) == 1:
        return record[0]
    return make_prefixes(record).prefixes[-1]


_PUNCT = string.punctuation + "‘’“”–—…"


def normalize_token(token: str) -> str:
    """Lowercase and strip surrounding punctuation; may return ''."""
    return token.strip(_PUNCT).lower()


def load_corpus(path: str | Path, bin_bits: Optional[int] = None) -> Dataset:
    """One single-attribute record per whitespace token of a text file."""
    text = Path(path).read_text(encoding="utf-8", errors="replace")
    records = []
    for token in text.split():
        norm = normalize_token(token)
        if norm:
            records.append((norm.encode(),))
    ds = Dataset(records=tuple(records), schema=("token",), source=str(path))
    if bin_bits is not None:
        ds = hash_bin_dataset(ds, bin_bits)
    return ds


def hash_bin_dataset(dataset: Dataset, bits: int) -> Dataset:
    """Replace each value with the lower ``bits`` bits of its SHA-256 hash."""
    if dataset.num_attributes != 1:
        raise ValueError("hash binning applies to single-attribute datasets")
    if not 1 <= bits <= 32:
        raise ValueError("bits must lie in 1..32")
    mask = (1 << bits) - 1
    cache: dict[bytes, bytes] = {}
    records = []
    for (value,) in dataset.records:
        binned = cache.get(value)
        if binned is None:
            digest = hashlib.sha256(value).digest()
            binned = str(int.from_bytes(digest, "big") & mask).encode()
            cache[value] = binned
        records.append((binned,))
    return Dataset(
        records=tuple(records),
        schema=dataset.schema,
        source=f"{dataset.source}#bin{bits}",
    )


def load_csv_attributes(
    path: str | Path,
    columns: Sequence[str],
    geo_columns: Optional[tuple[str, str, str]] = None,
) -> Dataset:
    """One record per CSV row with the requested columns, in order.

    ``geo_columns`` (country, latitude, longitude) switches to the geographic
    coarse-graining encoding: 8 attributes per record.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            schema = tuple(columns) if geo_columns is None else _GEO_SCHEMA
            return Dataset(records=(), schema=schema, source=str(path))
        wanted = list(geo_columns) if geo_columns is not None else list(columns)
        missing = [c for c in wanted if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"columns not in {path}: {missing}")
        records = []
        if geo_columns is not None:
            country_col, lat_col, lon_col = geo_columns
            for row in reader:
                records.append(
                    tuple(
                        geo_attributes(
                            row[country_col],
                            float(row[lat_col]),
                            float(row[lon_col]),
                        )
                    )
                )
            return Dataset(records=tuple(records), schema=_GEO_SCHEMA, source=str(path))
        for row in reader:
            records.append(tuple(row[c].encode() for c in columns))
    return Dataset(records=tuple(records), schema=tuple(columns), source=str(path))


_GEO_SCHEMA = ("country", "g1", "g2", "g3", "g4", "g5", "g6", "g7")


# --- synthetic stand-ins ----------------------------------------------------


def synthetic_zipf(
    n_records: int, domain_size: int, skew: float = 1.0, seed: int = 0
) -> Dataset:
    """Single-attribute records with Zipf-distributed values (word-like)."""
    rng = np_substream(seed, "synthetic-zipf")
    ranks = np.arange(1, domain_size + 1, dtype=np.float64)
    probs = ranks ** (-skew)
    probs /= probs.sum()
    idx = rng.choice(domain_size, size=n_records, p=probs)
    width = len(str(domain_size))
    pool = [f"w{i:0{width}d}".encode() for i in range(domain_size)]
    records = tuple((pool[i],) for i in idx)
    return Dataset(
        records=records,
        schema=("value",),
        source=f"synthetic:zipf,n={n_records},domain={domain_size},skew={skew},seed={seed}",
    )


def synthetic_correlated(
    n_records: int,
    branching: Sequence[int],
    skew: float = 1.0,
    seed: int = 0,
) -> Dataset:
    """Multi-attribute records where each level's distribution depends on its
    prefix (a per-parent permutation of a Zipf law), so attributes correlate.
    """
    levels = len(branching)
    if levels < 1:
        raise ValueError("need at least one level")
    rng = np_substream(seed, "synthetic-chain")
    # Per-level Zipf index draws, permuted per parent path.
    draws = []
    for size in branching:
        ranks = np.arange(1, size + 1, dtype=np.float64)
        probs = ranks ** (-skew)
        probs /= probs.sum()
        draws.append(rng.choice(size, size=n_records, p=probs))
    perms: dict[tuple, np.ndarray] = {}
    records = []
    for row in range(n_records):
        path: tuple = ()
        attrs = []
        for level, size in enumerate(branching):
            perm = perms.get((level, path))
            if perm is None:
                perm_rng = substream(seed, f"perm:{level}:{path}")
                order = list(range(size))
                perm_rng.shuffle(order)
                perm = np.asarray(order)
                perms[(level, path)] = perm
            idx = int(perm[draws[level][row]])
            attrs.append(f"L{level}v{idx:03d}".encode())
            path = path + (idx,)
        records.append(tuple(attrs))
    return Dataset(
        records=tuple(records),
        schema=tuple(f"a{i}" for i in range(levels)),
        source=f"synthetic:chain,n={n_records},branching={'x'.join(map(str, branching))},skew={skew},seed={seed}",
    )


def parse_dataset_spec(spec: str) -> Dataset:
    """Build a synthetic dataset from a ``synthetic:...`` descriptor.

    Forms:
      synthetic:zipf,n=100000,domain=5000,skew=1.0,seed=0
      synthetic:chain,n=30000,branching=4x3x3x3x3,skew=1.0,seed=0
    """
    if not spec.startswith("synthetic:"):
        raise ValueError("not a synthetic dataset spec")
    body = spec[len("synthetic:") :]
    kind, _, rest = body.partition(",")
    kv = {}
    for part in rest.split(","):
        if part:
            key, _, value = part.partition("=")
            kv[key] = value
    if kind == "zipf":
        return synthetic_zipf(
            n_records=int(kv.get("n", "100000")),
            domain_size=int(kv.get("domain", "5000")),
            skew=float(kv.get("skew", "1.0")),
            seed=int(kv.get("seed", "0")),
        )
    if kind == "chain":
        branching = tuple(int(x) for x in kv.get("branching", "4x3x3x3x3").split("x"))
        return synthetic_correlated(
            n_records=int(kv.get("n", "30000")),
            branching=branching,
            skew=float(kv.get("skew", "1.0")),
            seed=int(kv.get("seed", "0")),
        )
    raise ValueError(f"unknown synthetic dataset kind {kind!r}")


def load_dataset(
    spec: str,
    columns: Optional[Sequence[str]] = None,
    geo_columns: Optional[tuple[str, str, str]] = None,
    bin_bits: Optional[int] = None,
) -> Dataset:
    """Dispatch on a CLI dataset argument: synthetic spec, .csv, or corpus."""
    if spec.startswith("synthetic:"):
        ds = parse_dataset_spec(spec)
        if bin_bits is not None:
            ds = hash_bin_dataset(ds, bin_bits)
        return ds
    if spec.endswith(".csv"):
        if columns is None and geo_columns is None:
            raise SchemaError("CSV datasets need --columns or --geo-columns")
        return load_csv_attributes(spec, columns or (), geo_columns)
    return load_corpus(spec, bin_bits)


# --- error metric -----------------------------------------------------------


def sum_abs_error(true_counts: Mapping, est_counts: Mapping) -> float:
    """L1 distance between normalized count vectors, in [0, 2]."""
    true_total = sum(true_counts.values())
    est_total = sum(est_counts.values())
    if true_total == 0 and est_total == 0:
        return 0.0
    err = 0.0
    for key in true_counts.keys() | est_counts.keys():
        p = true_counts.get(key, 0) / true_total if true_total else 0.0
        q = est_counts.get(key, 0) / est_total if est_total else 0.0
        err += abs(p - q)
    return err


# --- experiment results -----------------------------------------------------


@dataclass
class ExperimentResult:
    """Errors and measurements from one experiment run."""

    errors: dict[str, float] = dc_field(default_factory=dict)
    per_prefix_errors: list[float] = dc_field(default_factory=list)
    timings: dict[str, float] = dc_field(default_factory=dict)
    byte_counts: dict[str, int] = dc_field(default_factory=dict)
    seed: int = 0
    params: Optional[DpParams] = None
    report_csv: str = ""

    def __post_init__(self) -> None:
        for name, err in self.errors.items():
            if not -1e-9 <= err <= 2 + 1e-9:
                raise ValueError(f"{name} error {err} outside [0, 2]")

    def fingerprint(self) -> bytes:
        """Digest of the deterministic fields (timings excluded)."""
        h = hashlib.sha256()
        for name in sorted(self.errors):
            h.update(f"{name}={self.errors[name]!r};".encode())
        h.update(repr(self.per_prefix_errors).encode())
        for name in sorted(self.byte_counts):
            h.update(f"{name}={self.byte_counts[name]!r};".encode())
        h.update(str(self.seed).encode())
        h.update(self.report_csv.encode())
        return h.digest()


# --- oblivious randomness with per-value caching ----------------------------

_RANDOMNESS_CACHE: dict[tuple[bytes, bytes], bytes] = {}


def value_randomness(value: bytes, keypair: oprf.ServerKeypair) -> bytes:
    """Randomness for a value under a fixed server key, cached per value.

    Every client holding ``value`` receives these exact bytes from the
    interactive protocol (the blinding exponent cancels), so the simulation
    computes them once per distinct value.  The interactive path itself is
    exercised by the daemons transport and the protocol tests.
    """
    key = (keypair.mpk.encode(), value)
    r = _RANDOMNESS_CACHE.get(key)
    if r is None:
        r = oprf.evaluate_directly(value, keypair)
        _RANDOMNESS_CACHE[key] = r
    return r


def wire_randomness(
    values: Sequence[bytes], client: service.ServiceClient, rng
) -> list[bytes]:
    """Interactive randomness for distinct values, batched over the wire."""
    out = []
    for start in range(0, len(values), wire.MAX_BATCH):
        chunk = list(values[start : start + wire.MAX_BATCH])
        out.extend(client.oblivious_randomness(chunk, rng))
    return out


# --- the main simulation ----------------------------------------------------


def run_nebula(
    dataset: Dataset,
    params: DpParams,
    seed: int,
    mode: str = "single",
    transport: str = "in_process",
    include_dummies: bool = True,
    server_seed: bytes = DEFAULT_SERVER_SEED,
    workdir: Optional[Path] = None,
) -> ExperimentResult:
    """Simulate the full population once and decode.

    mode="single" treats each record as one value (multi-attribute records
    are canonically flattened); mode="multidim" uses the chained-prefix
    encoding and reports per-prefix errors.  transport="daemons" runs the
    two servers as separate processes and moves everything over the wire.
    """
    if mode not in ("single", "multidim"):
        raise ValueError("mode must be 'single' or 'multidim'")
    if transport not in ("in_process", "daemons"):
        raise ValueError("transport must be 'in_process' or 'daemons'")

    part_rng = substream(seed, "participation")
    shares_rng = substream(seed, "shares")
    dummy_rng = substream(seed, "dummies")
    delivery_rng = substream(seed, "delivery")

    sampled = [
        record
        for record in dataset.records
        if participate(params.sampling_rate, part_rng)
    ]

    if transport == "daemons":
        return _run_via_daemons(
            dataset, sampled, params, seed, mode, include_dummies,
            server_seed, workdir,
        )

    keypair = oprf.keygen(server_seed)
    if mode == "single":
        submissions: list[Submission] = []
        for record in sampled:
            value = record_value(record)
            r = value_randomness(value, keypair)
            submissions.append(build_submission(value, r, params, shares_rng))
        if include_dummies and params.threshold >= 2:
            submissions.extend(dummy.create_dummy_batch(params, dummy_rng).submissions)
        delivery_rng.shuffle(submissions)
        report = aggregate.decode_submissions(submissions, params.threshold, params)
        true_counts = Counter(record_value(r) for r in dataset.records)
        err = sum_abs_error(true_counts, report.revealed)
        return ExperimentResult(
            errors={"nebula": err},
            seed=seed,
            params=params,
            report_csv=aggregate.report_to_csv(report),
        )

    # multidim
    supers: list[SuperSubmission] = []
    for record in sampled:
        chain = make_prefixes(record)
        rs = [value_randomness(p, keypair) for p in chain.prefixes]
        supers.append(encode_multidim(record, rs, params, shares_rng))
    if include_dummies and params.threshold >= 2:
        supers.extend(
            SuperSubmission(layer1=s, wrapped_layers=())
            for s in dummy.create_dummy_batch(params, dummy_rng).submissions
        )
    delivery_rng.shuffle(supers)
    reports = multidim.decode_multidim(supers, params.threshold, params)
    per_prefix = _per_prefix_errors(dataset, reports)
    return ExperimentResult(
        errors={"nebula": per_prefix[-1]},
        per_prefix_errors=per_prefix,
        seed=seed,
        params=params,
        report_csv=multidim.layered_reports_to_csv(reports),
    )


def _per_prefix_errors(
    dataset: Dataset, reports: Sequence[aggregate.HistogramReport]
) -> list[float]:
    errors = []
    for depth in range(1, dataset.num_attributes + 1):
        true_counts = Counter(rec[:depth] for rec in dataset.records)
        revealed = reports[depth - 1].revealed if depth <= len(reports) else {}
        errors.append(sum_abs_error(true_counts, revealed))
    return errors


def _run_via_daemons(
    dataset: Dataset,
    sampled: list[tuple[bytes, ...]],
    params: DpParams,
    seed: int,
    mode: str,
    include_dummies: bool,
    server_seed: bytes,
    workdir: Optional[Path],
) -> ExperimentResult:
    import tempfile

    shares_rng = substream(seed, "shares")
    blind_rng = substream(seed, "blinding")
    dummy_rng = substream(seed, "dummies")
    delivery_rng = substream(seed, "delivery")

    with tempfile.TemporaryDirectory() as tmp:
        base = Path(workdir) if workdir is not None else Path(tmp)
        base.mkdir(parents=True, exist_ok=True)
        with DaemonPair(params, server_seed, base) as pair:
            with service.ServiceClient("127.0.0.1", pair.randomness_port) as rc:
                if mode == "single":
                    values = sorted({record_value(r) for r in sampled})
                    rand = dict(zip(values, wire_randomness(values, rc, blind_rng)))
                    payloads = [
                        build_submission(
                            record_value(r), rand[record_value(r)], params, shares_rng
                        ).to_bytes()
                        for r in sampled
                    ]
                    msg_type = wire.MSG_SUBMISSION
                else:
                    prefixes = sorted(
                        {p for r in sampled for p in make_prefixes(r).prefixes}
                    )
                    rand = dict(zip(prefixes, wire_randomness(prefixes, rc, blind_rng)))
                    payloads = []
                    for r in sampled:
                        chain = make_prefixes(r)
                        rs = [rand[p] for p in chain.prefixes]
                        payloads.append(
                            encode_multidim(r, rs, params, shares_rng).to_bytes()
                        )
                    msg_type = wire.MSG_SUPER_SUBMISSION
            if include_dummies and params.threshold >= 2:
                batch = dummy.create_dummy_batch(params, dummy_rng)
                dummy_type = (
                    wire.MSG_SUBMISSION if mode == "single" else wire.MSG_SUPER_SUBMISSION
                )
                for s in batch.submissions:
                    if mode == "single":
                        payloads.append(s.to_bytes())
                    else:
                        payloads.append(
                            SuperSubmission(layer1=s, wrapped_layers=()).to_bytes()
                        )
            delivery_rng.shuffle(payloads)
            frames = [wire.encode_frame(msg_type, p) for p in payloads]
            with service.ServiceClient("127.0.0.1", pair.aggregation_port) as ac:
                acked, errors = ac.submit_stream(frames)
                if errors:
                    raise RuntimeError(f"{errors} submissions rejected")
                ac.seal_and_decode()
            csv_text = pair.report_path.read_text()

    if mode == "single":
        report = aggregate.report_from_csv(csv_text)
        true_counts = Counter(record_value(r) for r in dataset.records)
        err = sum_abs_error(true_counts, report.revealed)
        return ExperimentResult(
            errors={"nebula": err}, seed=seed, params=params, report_csv=csv_text
        )
    reports = multidim.layered_reports_from_csv(csv_text)
    per_prefix = _per_prefix_errors(dataset, reports)
    return ExperimentResult(
        errors={"nebula": per_prefix[-1]},
        per_prefix_errors=per_prefix,
        seed=seed,
        params=params,
        report_csv=csv_text,
    )


# --- DP baselines -----------------------------------------------------------


def run_baseline_central(dataset: Dataset, eps: float, seed: int) -> ExperimentResult:
    """Trusted-server baseline: true histogram plus per-bin Laplace(1/eps)."""
    rng = np_substream(seed, "baseline-central")
    true_counts = Counter(record_value(r) for r in dataset.records)
    domain = sorted(true_counts)
    counts = np.array([true_counts[v] for v in domain], dtype=np.float64)
    noisy = counts + rng.laplace(0.0, 1.0 / eps, size=len(domain))
    est = np.maximum(noisy, 0.0)
    err = _vector_error(counts, est)
    return ExperimentResult(errors={"central": err}, seed=seed)


def run_baseline_local(dataset: Dataset, eps: float, seed: int) -> ExperimentResult:
    """Local-model baseline: every client submits a one-hot vector with
    per-coordinate Laplace(2/eps); the server sums, clamps, normalizes.

    The summed noise per coordinate is sampled exactly as a difference of two
    Gamma(n, 2/eps) draws (a sum of n independent Laplace variables), which
    keeps the cost linear in the domain instead of n * domain.
    """
    rng = np_substream(seed, "baseline-local")
    true_counts = Counter(record_value(r) for r in dataset.records)
    domain = sorted(true_counts)
    if len(domain) > MAX_ONE_HOT_DOMAIN:
        raise CapacityError(
            f"one-hot domain {len(domain)} exceeds {MAX_ONE_HOT_DOMAIN}"
        )
    n = len(dataset.records)
    counts = np.array([true_counts[v] for v in domain], dtype=np.float64)
    if n == 0:
        return ExperimentResult(errors={"local": 0.0}, seed=seed)
    scale = 2.0 / eps
    noise = rng.gamma(n, scale, size=len(domain)) - rng.gamma(n, scale, size=len(domain))
    est = np.maximum(counts + noise, 0.0)
    err = _vector_error(counts, est)
    return ExperimentResult(errors={"local": err}, seed=seed)


def _vector_error(true_counts: np.ndarray, est_counts: np.ndarray) -> float:
    tt = float(true_counts.sum())
    te = float(est_counts.sum())
    if tt == 0 and te == 0:
        return 0.0
    p = true_counts / tt if tt else np.zeros_like(true_counts)
    q = est_counts / te if te else np.zeros_like(est_counts)
    return float(np.abs(p - q).sum())


# --- benchmarks -------------------------------------------------------------


def benchmark(
    params: DpParams,
    attribute_counts: Sequence[int] = tuple(range(1, 9)),
    reps: int = 50,
    server_seed: bytes = DEFAULT_SERVER_SEED,
) -> list[dict]:
    """Per-attribute-count timing and byte measurements.

    Covers client encode time, client randomness time (with and without
    proof verification), server evaluation time, decode throughput, and the
    serialized sizes of every interaction.
    """
    keypair = oprf.keygen(server_seed)
    rng = random.Random(20240101)
    rows = []
    for n_attrs in attribute_counts:
        attrs = [f"attr{i:02d}-payload".encode() for i in range(n_attrs)]
        chain = make_prefixes(attrs)
        rs = [oprf.evaluate_directly(p, keypair) for p in chain.prefixes]

        t0 = time.perf_counter()
        for _ in range(reps):
            super_sub = encode_multidim(attrs, rs, params, rng)
        encode_ms = (time.perf_counter() - t0) / reps * 1e3

        blinded_states = []
        t0 = time.perf_counter()
        for _ in range(reps):
            blinded_states = [oprf.blind(p, rng) for p in chain.prefixes]
        blind_ms = (time.perf_counter() - t0) / reps * 1e3

        blinded = [b for b, _ in blinded_states]
        states = [st for _, st in blinded_states]
        t0 = time.perf_counter()
        for _ in range(reps):
            ev = oprf.evaluate_batch(blinded, keypair)
        server_eval_ms = (time.perf_counter() - t0) / reps * 1e3

        t0 = time.perf_counter()
        for _ in range(reps):
            oprf.finalize_batch(list(chain.prefixes), states, ev, keypair.mpk)
        finalize_verify_ms = (time.perf_counter() - t0) / reps * 1e3

        from .group import scalar_inverse

        t0 = time.perf_counter()
        for _ in range(reps):
            for p, st, z in zip(chain.prefixes, states, ev.elements):
                oprf._randomness(z * scalar_inverse(st.blind_scalar), p)
        finalize_noverify_ms = (time.perf_counter() - t0) / reps * 1e3

        payload = super_sub.to_bytes()
        rows.append(
            {
                "attributes": n_attrs,
                "encode_ms": round(encode_ms, 4),
                "randomness_client_ms": round(blind_ms + finalize_verify_ms, 4),
                "randomness_client_noverify_ms": round(
                    blind_ms + finalize_noverify_ms, 4
                ),
                "server_eval_ms": round(server_eval_ms, 4),
                "randomness_request_bytes": 1 + 32 * n_attrs,
                "randomness_request_element_bytes": 32 * n_attrs,
                "randomness_response_element_bytes": 32 * n_attrs,
                "randomness_response_bytes": 32 * n_attrs + 64,
                "submission_bytes": len(payload),
            }
        )
    return rows


def decode_throughput(
    n_submissions: int,
    n_values: int,
    params: DpParams,
    seed: int = 0,
    server_seed: bytes = DEFAULT_SERVER_SEED,
) -> dict:
    """Build a synthetic submission batch and time the decode path."""
    frames = build_submission_payloads(n_submissions, n_values, params, seed, server_seed)
    subs = [Submission.from_bytes(p) for p in frames]
    t0 = time.perf_counter()
    report = aggregate.decode_submissions(subs, params.threshold, params)
    decode_s = time.perf_counter() - t0
    return {
        "submissions": n_submissions,
        "decode_seconds": decode_s,
        "revealed": len(report.revealed),
    }


def build_submission_payloads(
    n_submissions: int,
    n_values: int,
    params: DpParams,
    seed: int = 0,
    server_seed: bytes = DEFAULT_SERVER_SEED,
) -> list[bytes]:
    """Serialized submissions over a Zipf-ish value mix, built at bulk speed.

    Per-value derived material (randomness, polynomial, ciphertext) is
    cached, matching what identical-value clients would produce anyway; only
    the share point differs per submission.
    """
    from . import sharing
    from .encode import encrypt_value, parse_randomness

    keypair = oprf.keygen(server_seed)
    rng = substream(seed, "bulk-shares")
    pick_rng = np_substream(seed, "bulk-values")
    ranks = np.arange(1, n_values + 1, dtype=np.float64)
    probs = ranks**-1.0
    probs /= probs.sum()
    choices = pick_rng.choice(n_values, size=n_submissions, p=probs)

    per_value = []
    for v in range(n_values):
        value = f"value{v:06d}".encode()
        r = value_randomness(value, keypair)
        sub = parse_randomness(r)
        coeffs = sharing.polynomial_from_seeds(sub.r1, sub.r2, params.threshold)
        ct = encrypt_value(sub.r1, value)
        per_value.append((sub.r3, coeffs, ct))

    prime = sharing.FIELD_PRIME
    payloads = []
    pack = struct.Struct("<I").pack
    for c in choices:
        tag, coeffs, ct = per_value[c]
        x = sharing.random_nonzero_element(rng)
        acc = 0
        for coef in reversed(coeffs):
            acc = (acc * x + coef) % prime
        payloads.append(
            tag
            + x.to_bytes(16, "big")
            + acc.to_bytes(16, "big")
            + pack(len(ct))
            + ct
        )
    return payloads


# --- daemon management ------------------------------------------------------


def _free_port() -> int:
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


def _wait_listening(port: int, timeout: float = 10.0) -> None:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=0.5):
                return
        except OSError:
            time.sleep(0.05)
    raise TimeoutError(f"daemon on port {port} did not come up")


class DaemonPair:
    """Both daemons as separate OS processes sharing nothing."""

    def __init__(self, params: DpParams, server_seed: bytes, workdir: Path):
        self.workdir = Path(workdir)
        self.params = params
        self.server_seed = server_seed
        self.randomness_port = _free_port()
        self.aggregation_port = _free_port()
        self.log_path = self.workdir / "submissions.log"
        self.report_path = self.workdir / "report.csv"
        self._procs: list[subprocess.Popen] = []

    def __enter__(self) -> "DaemonPair":
        self.workdir.mkdir(parents=True, exist_ok=True)
        seed_file = self.workdir / "key-seed.bin"
        seed_file.write_bytes(self.server_seed)
        params_file = self.workdir / "params.cfg"
        params_file.write_text(params_to_config(self.params))
        env = None
        self._procs.append(
            subprocess.Popen(
                [
                    sys.executable, "-m", "nebula.cli", "randomness-server",
                    "--listen", f"127.0.0.1:{self.randomness_port}",
                    "--key-seed-file", str(seed_file),
                ],
                env=env,
            )
        )
        self._procs.append(
            subprocess.Popen(
                [
                    sys.executable, "-m", "nebula.cli", "aggregation-server",
                    "--listen", f"127.0.0.1:{self.aggregation_port}",
                    "--log", str(self.log_path),
                    "--params", str(params_file),
                    "--report", str(self.report_path),
                ],
                env=env,
            )
        )
        _wait_listening(self.randomness_port)
        _wait_listening(self.aggregation_port)
        return self

    def __exit__(self, *exc) -> None:
        for proc in self._procs:
            proc.terminate()
        for proc in self._procs:
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                proc.kill()


# --- CSV / plot-data emitters -----------------------------------------------


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def write_errors_csv(path: str | Path, results: Sequence[ExperimentResult]) -> None:
    rows = []
    for res in results:
        for mechanism in sorted(res.errors):
            rows.append([mechanism, res.seed, repr(res.errors[mechanism])])
    write_csv(path, ["mechanism", "seed", "error"], rows)


def write_bench_csv(path: str | Path, rows: Sequence[dict]) -> None:
    if not rows:
        write_csv(path, ["attributes"], [])
        return
    header = list(rows[0].keys())
    write_csv(path, header, [[row[k] for k in header] for row in rows])


def write_plot_data(path: str | Path, series_rows: Sequence[tuple[str, float, float]]) -> None:
    """Generic x/y plot data: one (series, x, y) row per point."""
    write_csv(
        path,
        ["series", "x", "y"],
        [[s, repr(x), repr(y)] for s, x, y in series_rows],
    )


def linear_fit_r2(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Coefficient of determination of the least-squares line through (x, y)."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0:
        return 1.0
    return 1.0 - ss_res / ss_tot
