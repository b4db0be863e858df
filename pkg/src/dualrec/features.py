"""Feature schemas, encoding, dataset ingestion, fold splits, synthetic data.

Raw user/item attributes are described by a FeatureSchema and encoded into
fixed-length float vectors: one-hot and multi-hot blocks for categorical
fields, min-max scaled scalars for numeric and date fields. Every one-hot
block with an explicit vocabulary carries one extra reserved slot at the end
for out-of-vocabulary values, so real-world open vocabularies never abort an
encode. High-cardinality fields can instead be hash-bucketed (crc32 modulo a
fixed bucket count), in which case no reserved slot is needed.

Datasets are three CSV files per domain:

    interactions: header ``user_id,item_id,rating,timestamp``; ratings are
        decimals in [0, 1]; timestamp is integer seconds, may be empty.
    features:     header ``entity_id,field,value``; multi-hot fields repeat
        one row per active value.
    schema:       one ``name,kind,spec`` line per field, see parse_schema.

The synthetic generator produces a pair of domains whose per-user latents are
correlated through a ground-truth orthogonal matrix, which makes
mapping-recovery and transfer-benefit experiments possible.
"""

from __future__ import annotations

import csv
import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np

from dualrec.mapping import init_map
from dualrec.numeric import make_rng, sigmoid

KINDS = ("one_hot", "multi_hot", "numeric", "date")

# rng stream labels, arbitrary but fixed
_L_KFOLD = 0x06F0
_L_SYNTH_USERS = 1
_L_SYNTH_Q = 2
_L_SYNTH_ITEMS = 3
_L_SYNTH_EPS = 4
_L_SYNTH_MASK = 5
_L_SYNTH_NOISE = 6
_L_SYNTH_PROJ = 7


@dataclass(frozen=True)
class FieldSpec:
    """One schema field.

    Categorical kinds carry either an explicit ordered vocabulary in
    ``values`` or a hash bucket count in ``buckets`` (exactly one of the
    two). Numeric and date kinds carry the inclusive range [lo, hi].
    """

    name: str
    kind: str
    values: tuple[str, ...] | None = None
    buckets: int | None = None
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if not self.name:
            raise ValueError("field name must be non-empty")
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}, expected one of {KINDS}")
        if self.kind in ("one_hot", "multi_hot"):
            if (self.values is None) == (self.buckets is None):
                raise ValueError(f"field {self.name!r}: give exactly one of values/buckets")
            if self.values is not None:
                if len(self.values) < 1:
                    raise ValueError(f"field {self.name!r}: cardinality must be >= 1")
                if len(set(self.values)) != len(self.values):
                    raise ValueError(f"field {self.name!r}: duplicate category values")
            if self.buckets is not None and self.buckets < 1:
                raise ValueError(f"field {self.name!r}: bucket count must be >= 1")
        else:
            if self.lo is None or self.hi is None:
                raise ValueError(f"field {self.name!r}: numeric/date fields need lo and hi")
            if not self.lo < self.hi:
                raise ValueError(f"field {self.name!r}: lo must be < hi")

    @property
    def cardinality(self) -> int:
        if self.values is not None:
            return len(self.values)
        if self.buckets is not None:
            return self.buckets
        raise ValueError(f"field {self.name!r} is not categorical")

    @property
    def width(self) -> int:
        """Encoded block length."""
        if self.kind == "one_hot":
            # explicit vocabularies reserve a trailing out-of-vocabulary slot
            return self.cardinality + (1 if self.values is not None else 0)
        if self.kind == "multi_hot":
            return self.cardinality
        return 1


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered list of fields; block order in encoded vectors follows it."""

    fields: tuple[FieldSpec, ...]

    def __post_init__(self):
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise ValueError("field names must be unique")

    @property
    def encoded_length(self) -> int:
        return sum(f.width for f in self.fields)

    def field_named(self, name: str) -> FieldSpec:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(f"schema has no field named {name!r}")


def _bucket(value: str, buckets: int) -> int:
    return zlib.crc32(value.encode("utf-8")) % buckets


def _categorical_index(spec: FieldSpec, value) -> int:
    """Slot index within the block; explicit vocab maps unknowns to the last slot."""
    if not isinstance(value, str):
        raise TypeError(f"field {spec.name!r}: categorical value must be a string, got {type(value).__name__}")
    if spec.buckets is not None:
        return _bucket(value, spec.buckets)
    assert spec.values is not None
    try:
        return spec.values.index(value)
    except ValueError:
        return len(spec.values)  # reserved "other" slot


def _scale_scalar(spec: FieldSpec, value) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ValueError(f"field {spec.name!r}: cannot interpret {value!r} as a number") from None
    if x < spec.lo or x > spec.hi:
        warnings.warn(
            f"field {spec.name!r}: value {x} outside [{spec.lo}, {spec.hi}], clamped",
            stacklevel=3,
        )
        x = min(max(x, spec.lo), spec.hi)
    return (x - spec.lo) / (spec.hi - spec.lo)


def encode(schema: FeatureSchema, raw: dict) -> np.ndarray:
    """Encode raw field values into one fixed-length float vector.

    Missing one-hot fields land in the reserved slot (hash-bucketed fields
    have none and must be present); missing multi-hot fields encode as all
    zeros; missing numeric/date fields are an error. Multi-hot values may be
    a single string or an iterable of strings; values not in an explicit
    multi-hot vocabulary are ignored.
    """
    out = np.zeros(schema.encoded_length)
    pos = 0
    for spec in schema.fields:
        block = out[pos : pos + spec.width]
        present = spec.name in raw
        if spec.kind == "one_hot":
            if present:
                block[_categorical_index(spec, raw[spec.name])] = 1.0
            elif spec.values is not None:
                block[len(spec.values)] = 1.0
            else:
                raise ValueError(f"field {spec.name!r}: hash-bucketed field missing from raw values")
        elif spec.kind == "multi_hot":
            vals = raw.get(spec.name, [])
            if isinstance(vals, str):
                vals = [vals]
            for v in vals:
                if spec.values is not None and v not in spec.values:
                    continue
                block[_categorical_index(spec, v)] = 1.0
        else:
            if not present:
                raise ValueError(f"field {spec.name!r}: numeric/date field missing from raw values")
            block[0] = _scale_scalar(spec, raw[spec.name])
        pos += spec.width
    return out


# ---------------------------------------------------------------------------
# schema text format


def schema_to_text(schema: FeatureSchema) -> str:
    """One ``name,kind,spec`` line per field.

    spec column: ``a|b|c`` (explicit vocabulary), ``hash:64`` (bucketed), or
    ``lo:hi`` (numeric/date range).
    """
    lines = []
    for f in schema.fields:
        if f.kind in ("one_hot", "multi_hot"):
            spec = f"hash:{f.buckets}" if f.buckets is not None else "|".join(f.values)
        else:
            spec = f"{f.lo!r}:{f.hi!r}"
        lines.append(f"{f.name},{f.kind},{spec}")
    return "\n".join(lines) + "\n"


def parse_schema(text: str) -> FeatureSchema:
    fields = []
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",", 2)
        if len(parts) != 3:
            raise ValueError(f"schema line {ln}: expected 'name,kind,spec', got {line!r}")
        name, kind, spec = (p.strip() for p in parts)
        if kind in ("one_hot", "multi_hot"):
            if spec.startswith("hash:"):
                fields.append(FieldSpec(name, kind, buckets=int(spec[5:])))
            else:
                vals = tuple(v for v in spec.split("|") if v)
                if not vals:
                    raise ValueError(f"schema line {ln}: empty vocabulary for field {name!r}")
                fields.append(FieldSpec(name, kind, values=vals))
        elif kind in ("numeric", "date"):
            lo, _, hi = spec.partition(":")
            try:
                fields.append(FieldSpec(name, kind, lo=float(lo), hi=float(hi)))
            except ValueError:
                raise ValueError(f"schema line {ln}: bad range {spec!r} for field {name!r}") from None
        else:
            raise ValueError(f"schema line {ln}: unknown kind {kind!r}")
    if not fields:
        raise ValueError("schema text contains no fields")
    return FeatureSchema(tuple(fields))


def save_schema(schema: FeatureSchema, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(schema_to_text(schema))


def load_schema(path) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return parse_schema(fh.read())


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class InteractionRecord:
    user_id: str
    item_id: str
    rating: float
    timestamp: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.rating <= 1.0:
            raise ValueError(f"rating {self.rating} outside [0, 1]")


@dataclass
class DomainDataset:
    domain_name: str
    interactions: tuple[InteractionRecord, ...]
    user_features: dict
    item_features: dict
    user_schema: FeatureSchema
    item_schema: FeatureSchema

    def __post_init__(self):
        for rec in self.interactions:
            if rec.user_id not in self.user_features:
                raise ValueError(f"domain {self.domain_name!r}: no features for user {rec.user_id!r}")
            if rec.item_id not in self.item_features:
                raise ValueError(f"domain {self.domain_name!r}: no features for item {rec.item_id!r}")

    @property
    def user_ids(self) -> set:
        return set(self.user_features)

    @property
    def item_ids(self) -> set:
        return set(self.item_features)


def require_disjoint_items(a: DomainDataset, b: DomainDataset) -> None:
    """Item catalogs of a domain pair must not overlap; user sets may."""
    shared = a.item_ids & b.item_ids
    if shared:
        some = sorted(shared)[:5]
        raise ValueError(
            f"domains {a.domain_name!r} and {b.domain_name!r} share {len(shared)} item ids, e.g. {some}"
        )


def _read_csv_rows(path, expected_header: list[str]):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}:1: missing header, expected {','.join(expected_header)}") from None
        if header != expected_header:
            raise ValueError(f"{path}:1: bad header {header!r}, expected {expected_header!r}")
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise ValueError(f"{path}:{ln}: expected {len(expected_header)} columns, got {len(row)}")
            yield ln, row


def _read_interactions(path) -> tuple[InteractionRecord, ...]:
    records = []
    for ln, (user_id, item_id, rating_s, ts_s) in _read_csv_rows(
        path, ["user_id", "item_id", "rating", "timestamp"]
    ):
        try:
            rating = float(rating_s)
        except ValueError:
            raise ValueError(f"{path}:{ln}: rating {rating_s!r} is not a number") from None
        if not 0.0 <= rating <= 1.0:
            raise ValueError(f"{path}:{ln}: rating {rating} outside [0, 1]")
        ts: int | None = None
        if ts_s != "":
            try:
                ts = int(ts_s)
            except ValueError:
                raise ValueError(f"{path}:{ln}: timestamp {ts_s!r} is not an integer") from None
        records.append(InteractionRecord(user_id, item_id, rating, ts))
    return tuple(records)


def _read_features(path, schema: FeatureSchema) -> dict:
    multi = {f.name for f in schema.fields if f.kind == "multi_hot"}
    known = {f.name for f in schema.fields}
    table: dict = {}
    for ln, (entity_id, fname, value) in _read_csv_rows(path, ["entity_id", "field", "value"]):
        if fname not in known:
            raise ValueError(f"{path}:{ln}: field {fname!r} not in schema")
        raw = table.setdefault(entity_id, {})
        if fname in multi:
            raw.setdefault(fname, []).append(value)
        elif fname in raw:
            raise ValueError(f"{path}:{ln}: duplicate value for field {fname!r} of entity {entity_id!r}")
        else:
            raw[fname] = value
    return table


def load_domain(
    interactions_path,
    user_features_path,
    item_features_path,
    user_schema: FeatureSchema,
    item_schema: FeatureSchema,
    domain_name: str = "domain",
) -> DomainDataset:
    """Assemble and validate one domain from its three CSV files.

    Every referenced user and item must have a feature row; malformed rows
    fail with the offending file and line number.
    """
    interactions = _read_interactions(interactions_path)
    user_features = _read_features(user_features_path, user_schema)
    item_features = _read_features(item_features_path, item_schema)
    return DomainDataset(domain_name, interactions, user_features, item_features, user_schema, item_schema)


# ---------------------------------------------------------------------------
# fold splitting


@dataclass(frozen=True)
class FoldSplit:
    k: int
    assignments: np.ndarray  # per-interaction fold index

    def fold_indices(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train record indices, test record indices) for one held-out fold."""
        if not 0 <= fold < self.k:
            raise ValueError(f"fold {fold} outside [0, {self.k})")
        test = np.flatnonzero(self.assignments == fold)
        train = np.flatnonzero(self.assignments != fold)
        return train, test


def kfold(dataset: DomainDataset, k: int, seed: int) -> FoldSplit:
    """Record-stratified split: permute interactions, deal round-robin."""
    n = len(dataset.interactions)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds record count {n}")
    rng = make_rng(seed, _L_KFOLD)
    perm = rng.permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[perm] = np.arange(n) % k
    return FoldSplit(k, assignments)


# ---------------------------------------------------------------------------
# synthetic cross-domain pair


@dataclass(frozen=True)
class GroundTruth:
    """Latents behind a synthetic pair, for instrumentation and oracles."""

    q: np.ndarray  # orthogonal map between the user-latent spaces
    user_latents_a: np.ndarray
    user_latents_b: np.ndarray
    item_latents_a: np.ndarray
    item_latents_b: np.ndarray
    user_ids: tuple[str, ...]
    item_ids_a: tuple[str, ...]
    item_ids_b: tuple[str, ...]


def _entity_schema(prefix: str, dim: int) -> FeatureSchema:
    scores = tuple(FieldSpec(f"s{i}", "numeric", lo=0.0, hi=100.0) for i in range(dim))
    return FeatureSchema(
        (
            FieldSpec("group", "one_hot", values=(f"{prefix}1", f"{prefix}2", f"{prefix}3", f"{prefix}4")),
            FieldSpec("trait", "numeric", lo=0.0, hi=100.0),
            FieldSpec("tags", "multi_hot", values=("t0", "t1", "t2", "t3", "t4", "t5")),
        )
        + scores
    )


def _latent_raw_features(
    latents: np.ndarray,
    proj_rng: np.random.Generator,
    prefix: str,
    frame: np.ndarray | None = None,
) -> list[dict]:
    """Project latents through fixed random directions into schema-shaped raw values.

    The s-fields hold sigmoid scores along an orthonormal basis, so together
    they pin down the latent; group/trait/tags are coarser redundant views.
    `frame` rotates every projection direction. Passing the pair's ground-truth
    rotation makes a domain measure latents in its own frame: coordinates stay
    internally consistent within the domain, and a shared user's scores line up
    across domains (damped by the cross correlation).
    """
    d = latents.shape[1]
    p_group = proj_rng.normal(size=d)
    p_trait = proj_rng.normal(size=d)
    p_tags = proj_rng.normal(size=(6, d))
    basis, r = np.linalg.qr(proj_rng.normal(size=(d, d)))
    basis = basis * np.sign(np.diag(r))  # fix QR sign ambiguity
    if frame is not None:
        p_group = frame @ p_group
        p_trait = frame @ p_trait
        p_tags = p_tags @ frame.T
        basis = frame @ basis
    group_scores = sigmoid(latents @ p_group)
    trait_scores = 100.0 * sigmoid(latents @ p_trait)
    tag_scores = sigmoid(latents @ p_tags.T)
    coord_scores = 100.0 * sigmoid(latents @ basis)
    out = []
    for i in range(latents.shape[0]):
        g = min(int(group_scores[i] * 4), 3)  # quartile bins of sigmoid score
        raw = {
            "group": f"{prefix}{g + 1}",
            "trait": float(trait_scores[i]),
            "tags": [f"t{j}" for j in range(6) if tag_scores[i, j] > 0.6],
        }
        for j in range(d):
            raw[f"s{j}"] = float(coord_scores[i, j])
        out.append(raw)
    return out


def _domain_interactions(
    users: np.ndarray,
    items: np.ndarray,
    user_ids,
    item_ids,
    density: float,
    mask_rng,
    noise_rng,
    sigma: float,
) -> tuple[InteractionRecord, ...]:
    scores = sigmoid(users @ items.T)
    if sigma > 0:
        scores = scores + noise_rng.normal(scale=sigma, size=scores.shape)
    ratings = np.clip(scores, 0.0, 1.0)
    mask = mask_rng.random(scores.shape) < density
    records = []
    for i, j in np.argwhere(mask):
        records.append(InteractionRecord(user_ids[i], item_ids[j], float(ratings[i, j])))
    return tuple(records)


def synth_pair(
    n_users: int = 500,
    n_items_per_domain: int = 200,
    latent_dim: int = 8,
    cross_correlation: float = 0.8,
    noise: float = 0.05,
    density: float = 0.05,
    seed: int = 0,
) -> tuple[DomainDataset, DomainDataset, GroundTruth]:
    """Generate a correlated two-domain dataset with known latents.

    Per-user latent u drives domain a; the domain-b latent is
    rho*(Q u) + (1-rho)*eps for a fixed random orthogonal Q and fresh
    Gaussian eps, so rho=1 transfers perfectly and rho=0 makes the domains
    unrelated. Ratings are sigmoid(<user, item>) plus Gaussian noise, clipped
    to [0, 1]; observation of each (user, item) pair is an independent
    Bernoulli(density) draw. Raw features are quantized random projections
    of the latents, so encoded features genuinely carry preference signal.
    """
    rho = float(cross_correlation)
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"cross_correlation {rho} outside [0, 1]")
    if not 0.0 < density <= 1.0:
        raise ValueError(f"density {density} outside (0, 1]")
    if noise < 0:
        raise ValueError(f"noise {noise} must be >= 0")
    if min(n_users, n_items_per_domain, latent_dim) < 1:
        raise ValueError("n_users, n_items_per_domain, latent_dim must be >= 1")

    u_a = make_rng(seed, _L_SYNTH_USERS).normal(size=(n_users, latent_dim))
    q = init_map(latent_dim, seed, domain_pair=("a", "b")).x
    eps = make_rng(seed, _L_SYNTH_EPS).normal(size=(n_users, latent_dim))
    u_b = rho * (u_a @ q.T) + (1.0 - rho) * eps

    item_scale = 1.0 / np.sqrt(latent_dim)  # keeps <user, item> roughly unit variance
    v_a = make_rng(seed, _L_SYNTH_ITEMS, 0).normal(scale=item_scale, size=(n_items_per_domain, latent_dim))
    v_b = make_rng(seed, _L_SYNTH_ITEMS, 1).normal(scale=item_scale, size=(n_items_per_domain, latent_dim))

    user_ids = tuple(f"u{i:04d}" for i in range(n_users))
    item_ids_a = tuple(f"ai{j:04d}" for j in range(n_items_per_domain))
    item_ids_b = tuple(f"bi{j:04d}" for j in range(n_items_per_domain))

    user_schema = _entity_schema("q", latent_dim)
    item_schema = _entity_schema("c", latent_dim)
    raw_u_a = _latent_raw_features(u_a, make_rng(seed, _L_SYNTH_PROJ, 0), "q")
    raw_u_b = _latent_raw_features(u_b, make_rng(seed, _L_SYNTH_PROJ, 0), "q", frame=q)
    raw_v_a = _latent_raw_features(v_a, make_rng(seed, _L_SYNTH_PROJ, 1), "c")
    raw_v_b = _latent_raw_features(v_b, make_rng(seed, _L_SYNTH_PROJ, 1), "c", frame=q)

    ds = []
    for name, users, items, iids, raw_users, raw_items, sub in (
        ("a", u_a, v_a, item_ids_a, raw_u_a, raw_v_a, 0),
        ("b", u_b, v_b, item_ids_b, raw_u_b, raw_v_b, 1),
    ):
        interactions = _domain_interactions(
            users,
            items,
            user_ids,
            iids,
            density,
            make_rng(seed, _L_SYNTH_MASK, sub),
            make_rng(seed, _L_SYNTH_NOISE, sub),
            noise,
        )
        ds.append(
            DomainDataset(
                name,
                interactions,
                {uid: raw_users[i] for i, uid in enumerate(user_ids)},
                {iid: raw_items[j] for j, iid in enumerate(iids)},
                user_schema,
                item_schema,
            )
        )

    truth = GroundTruth(q, u_a, u_b, v_a, v_b, user_ids, item_ids_a, item_ids_b)
    return ds[0], ds[1], truth


# ---------------------------------------------------------------------------
# CSV emission (inverse of load_domain, used by the synthetic pipeline)


def write_domain(dataset: DomainDataset, interactions_path, user_features_path, item_features_path) -> None:
    """Write a domain back out under the same CSV contracts load_domain reads."""
    with open(interactions_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "item_id", "rating", "timestamp"])
        for rec in dataset.interactions:
            ts = "" if rec.timestamp is None else str(rec.timestamp)
            w.writerow([rec.user_id, rec.item_id, repr(rec.rating), ts])
    for path, table, schema in (
        (user_features_path, dataset.user_features, dataset.user_schema),
        (item_features_path, dataset.item_features, dataset.item_schema),
    ):
        multi = {f.name for f in schema.fields if f.kind == "multi_hot"}
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["entity_id", "field", "value"])
            for eid in sorted(table):
                raw = table[eid]
                for spec in schema.fields:
                    if spec.name not in raw:
                        continue
                    val = raw[spec.name]
                    if spec.name in multi:
                        vals = [val] if isinstance(val, str) else list(val)
                        for v in vals:
                            w.writerow([eid, spec.name, v])
                    elif spec.kind in ("numeric", "date"):
                        w.writerow([eid, spec.name, repr(float(val))])
                    else:
                        w.writerow([eid, spec.name, val])
