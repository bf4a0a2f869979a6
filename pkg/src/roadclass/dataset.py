"""Manifests: JSONL persistence, balancing, binarization, weights, splits."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from ._rng import keyed_rng

SPLITS = ("train", "val", "test", "unassigned")
RECORD_KEYS = ("sample_id", "image_uri", "mask_uri", "label", "domain", "split")
BINARY_LABELS = ("isolated", "other")


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    image_uri: str
    mask_uri: str | None
    label: str
    domain: str
    split: str = "unassigned"

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise ValueError(f"{self.sample_id}: unknown split {self.split!r}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in RECORD_KEYS}


@dataclass(frozen=True)
class Manifest:
    records: tuple[SampleRecord, ...]
    label_set: tuple[str, ...]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "label_set", tuple(self.label_set))
        seen = set()
        for r in self.records:
            if r.sample_id in seen:
                raise ValueError(f"duplicate sample_id {r.sample_id!r}")
            seen.add(r.sample_id)
            if r.label not in self.label_set:
                raise ValueError(f"{r.sample_id}: label {r.label!r} not in label set {self.label_set}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def derive(self, records: Iterable[SampleRecord], label_set=None, **provenance) -> "Manifest":
        """New manifest from ``records``, with ``provenance`` entries appended."""
        prov = dict(self.provenance)
        if provenance:
            prov.setdefault("steps", [])
            prov["steps"] = list(prov["steps"]) + [provenance]
        return Manifest(tuple(records), self.label_set if label_set is None else label_set, prov)

    def by_label(self) -> dict[str, list[SampleRecord]]:
        groups: dict[str, list[SampleRecord]] = {lab: [] for lab in self.label_set}
        for r in self.records:
            groups[r.label].append(r)
        return groups

    def counts(self) -> dict[str, int]:
        return {lab: len(rs) for lab, rs in self.by_label().items()}

    def in_split(self, split: str) -> "Manifest":
        return Manifest(tuple(r for r in self.records if r.split == split), self.label_set, self.provenance)

    def domains(self) -> list[str]:
        return sorted({r.domain for r in self.records})


def dumps_manifest(m: Manifest) -> str:
    lines = [json.dumps({"provenance": m.provenance, "label_set": list(m.label_set)}, sort_keys=True)]
    lines += [json.dumps(r.to_dict()) for r in m.records]
    return "\n".join(lines) + "\n"


def loads_manifest(text: str) -> Manifest:
    header = None
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValueError(f"manifest line {lineno}: {e.msg}") from e
        if header is None and "provenance" in obj:
            header = obj
            continue
        missing = [k for k in ("sample_id", "image_uri", "label", "domain") if k not in obj]
        if missing:
            raise ValueError(f"manifest line {lineno}: missing keys {missing}")
        records.append(SampleRecord(**{k: obj.get(k) for k in RECORD_KEYS if k in obj}))
    if header is None:
        header = {"provenance": {}}
    label_set = header.get("label_set")
    if label_set is None:
        label_set = sorted({r.label for r in records})
    return Manifest(tuple(records), tuple(label_set), header.get("provenance") or {})


def write_manifest(path, m: Manifest) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_manifest(m), encoding="utf-8")


def read_manifest(path) -> Manifest:
    return loads_manifest(Path(path).read_text(encoding="utf-8"))


def resolve_uri(manifest_path, uri: str | None) -> Path | None:
    """URIs in a manifest are relative to the manifest's directory."""
    if uri is None:
        return None
    p = Path(uri)
    return p if p.is_absolute() else Path(manifest_path).parent / p


def balance_subset(m: Manifest, per_class: int, seed: int) -> Manifest:
    groups = m.by_label()
    short = {lab: per_class - len(rs) for lab, rs in groups.items() if len(rs) < per_class}
    if short:
        detail = ", ".join(f"{lab} short by {n}" for lab, n in short.items())
        raise ValueError(f"insufficient class population for per_class={per_class}: {detail}")
    chosen = set()
    for lab, rs in groups.items():
        idx = keyed_rng(seed, "balance", lab).choice(len(rs), size=per_class, replace=False)
        chosen.update(rs[int(i)].sample_id for i in idx)
    return m.derive(
        (r for r in m.records if r.sample_id in chosen), balance_per_class=per_class, seed=seed
    )


def binarize_labels(m: Manifest, isolated: str, alternates: Iterable[str]) -> Manifest:
    """Relabel to ``isolated`` vs ``other``; classes in neither group are dropped."""
    alternates = set(alternates)
    if not alternates:
        raise ValueError("alternates must name at least one class")
    if isolated in alternates:
        raise ValueError(f"{isolated!r} cannot be both isolated and alternate")
    unknown = ({isolated} | alternates) - set(m.label_set)
    if unknown:
        raise ValueError(f"unknown classes {sorted(unknown)}")
    out = []
    for r in m.records:
        if r.label == isolated:
            out.append(replace(r, label="isolated"))
        elif r.label in alternates:
            out.append(replace(r, label="other"))
    return m.derive(out, label_set=BINARY_LABELS, isolated=isolated, alternates=sorted(alternates))


def class_weights(m: Manifest) -> dict[str, float]:
    """Inverse-frequency weights ``N / (C * N_c)``; all 1.0 on balanced data."""
    counts = m.counts()
    empty = [lab for lab, n in counts.items() if n == 0]
    if empty:
        raise ValueError(f"cannot weight empty classes: {empty}")
    total = sum(counts.values())
    c = len(counts)
    return {lab: total / (c * n) for lab, n in counts.items()}


def split(m: Manifest, fractions: Sequence[float] = (0.8, 0.2, 0.0), seed: int = 0) -> Manifest:
    """Stratified train/val/test assignment."""
    if len(fractions) != 3 or any(f < 0 or not math.isfinite(f) for f in fractions):
        raise ValueError("fractions must be three nonnegative numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    f_train, f_val, _ = fractions
    assignment: dict[str, str] = {}
    for lab, rs in m.by_label().items():
        n = len(rs)
        b1 = min(n, math.floor(f_train * n + 0.5))
        b2 = min(n, max(b1, math.floor((f_train + f_val) * n + 0.5)))
        order = keyed_rng(seed, "split", lab).permutation(n)
        for rank, i in enumerate(order):
            assignment[rs[int(i)].sample_id] = "train" if rank < b1 else "val" if rank < b2 else "test"
    return m.derive(
        (replace(r, split=assignment[r.sample_id]) for r in m.records),
        split_fractions=list(fractions),
        seed=seed,
    )


def filter_domain(m: Manifest, domain: str) -> Manifest:
    return m.derive((r for r in m.records if r.domain == domain), domain_filter=domain)
