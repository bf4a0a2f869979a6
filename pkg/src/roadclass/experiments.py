"""Experiment harnesses: baseline, masking, binarization, cross-domain.

Each harness takes a manifest, a :class:`~roadclass.pipeline.FeatureCache`
over some sample source, and a training config, and returns a JSON-ready
report. Manifests without a train split are split 80/20 first.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

from ._rng import keyed_rng
from .baseline_model import TrainConfig, evaluate_arrays, train_arrays
from .dataset import Manifest, binarize_labels, class_weights, filter_domain, split
from .pipeline import FeatureCache

logger = logging.getLogger(__name__)

MASKING_MODES = ("none", "context_occluded", "road_occluded", "channel_replace")


@dataclass(frozen=True)
class BinarizeRow:
    isolated: str
    alternates: tuple[str, ...]
    # N as a multiple of the per-class size of the balanced input
    n_multiple: int


# 15000 / 10000 rows on a 5000-per-class balanced manifest
BINARIZE_ROWS = (
    BinarizeRow("minor", ("major", "two_track"), 3),
    BinarizeRow("minor", ("two_track",), 2),
    BinarizeRow("minor", ("major",), 2),
    BinarizeRow("major", ("minor", "two_track"), 2),
    BinarizeRow("major", ("two_track",), 2),
)


def ensure_split(m: Manifest, seed: int) -> Manifest:
    if any(r.split == "train" for r in m.records):
        return m
    return split(m, (0.8, 0.2, 0.0), seed)


def heldout_split(m: Manifest) -> str:
    for name in ("val", "test"):
        if any(r.split == name for r in m.records):
            return name
    raise ValueError("manifest has no held-out (val or test) samples")


def train_eval(
    m: Manifest,
    cache: FeatureCache,
    config: TrainConfig,
    mode: str = "none",
    eval_manifest: Manifest | None = None,
) -> dict:
    """Train on ``m``'s train split, evaluate on the held-out split of ``eval_manifest`` (default ``m``)."""
    tr = [r for r in m.records if r.split == "train"]
    ev_m = m if eval_manifest is None else eval_manifest
    ev_split = heldout_split(ev_m)
    ev = [r for r in ev_m.records if r.split == ev_split]
    params = train_arrays(cache.features(tr, mode), [r.label for r in tr], m.label_set, config)
    cm, rep = evaluate_arrays(params, cache.features(ev, mode), [r.label for r in ev])
    rep["n_train"] = len(tr)
    rep["n_eval"] = len(ev)
    rep["eval_split"] = ev_split
    rep["final_train_loss"] = params.final_train_loss
    return rep


def run_baseline(m: Manifest, cache: FeatureCache, config: TrainConfig, mode: str = "none") -> dict:
    m = ensure_split(m, config.seed)
    rep = train_eval(m, cache, config, mode)
    return {"experiment": "baseline", "occlusion": mode, **rep}


def run_masking(m: Manifest, cache: FeatureCache, config: TrainConfig, modes: Sequence[str] = MASKING_MODES) -> dict:
    m = ensure_split(m, config.seed)
    cache.prefetch(m.records, modes)
    rows = []
    for mode in modes:
        rep = train_eval(m, cache, config, mode)
        rows.append(
            {
                "masking": mode,
                "unweighted_accuracy": rep["unweighted_accuracy"],
                "macro_f1": rep["macro_f1"],
                "report": rep,
            }
        )
    return {"experiment": "masking", "rows": rows}


def per_class_size(m: Manifest) -> int:
    counts = set(m.counts().values())
    if len(counts) != 1:
        raise ValueError(f"binarize experiment needs a balanced manifest, got counts {m.counts()}")
    return counts.pop()


def _take_stratified(records, alternates: Sequence[str], original: dict[str, str], n: int, seed: int):
    """Pick ``n`` records spread as evenly as possible over the original classes."""
    groups = {a: [r for r in records if original[r.sample_id] == a] for a in alternates}
    base, extra = divmod(n, len(alternates))
    chosen = set()
    for i, a in enumerate(alternates):
        k = base + (1 if i < extra else 0)
        if k > len(groups[a]):
            raise ValueError(f"not enough {a} samples to draw {k}")
        idx = keyed_rng(seed, "binarize", a).choice(len(groups[a]), size=k, replace=False)
        chosen.update(groups[a][int(j)].sample_id for j in idx)
    return chosen


def binarize_plan(m: Manifest, row: BinarizeRow, seed: int) -> Manifest:
    """Binarized manifest for one row, subsampled to the row's N.

    The isolated class is kept whole; when the alternates hold more than
    ``N - n_isolated`` samples they are subsampled evenly across the
    alternate classes.
    """
    per_class = per_class_size(m)
    n_target = row.n_multiple * per_class
    original = {r.sample_id: r.label for r in m.records}
    b = binarize_labels(m, row.isolated, row.alternates)
    iso = [r for r in b.records if r.label == "isolated"]
    other = [r for r in b.records if r.label == "other"]
    n_other = n_target - len(iso)
    if n_other > len(other) or n_other < 1:
        raise ValueError(f"row {row} cannot reach N={n_target} from {len(b)} samples")
    if n_other < len(other):
        keep = _take_stratified(other, row.alternates, original, n_other, seed)
        b = b.derive((r for r in b.records if r.label == "isolated" or r.sample_id in keep), subsample_to=n_target)
    return b


def run_binarize(
    m: Manifest,
    cache: FeatureCache | None,
    config: TrainConfig,
    rows: Sequence[BinarizeRow] = BINARIZE_ROWS,
    weighted: bool = False,
    execute: bool = True,
) -> dict:
    """One report row per binarization; ``execute=False`` only plans (no training)."""
    out = []
    for row in rows:
        b = binarize_plan(m, row, config.seed)
        entry = {
            "isolated_class": row.isolated,
            "alternate_classes": list(row.alternates),
            "n": len(b),
            "counts": b.counts(),
        }
        if execute:
            b = ensure_split(b, config.seed)
            cfg = config
            if weighted:
                cfg = replace(config, class_weights=class_weights(b.in_split("train")))
            rep = train_eval(b, cache, cfg)
            entry.update(accuracy=rep["unweighted_accuracy"], macro_f1=rep["macro_f1"], report=rep)
        out.append(entry)
    return {"experiment": "binarize", "weighted": weighted, "rows": out}


def run_cross_domain(m: Manifest, cache: FeatureCache, config: TrainConfig, domain_a: str, domain_b: str) -> dict:
    present = set(m.domains())
    for d in (domain_a, domain_b):
        if d not in present:
            raise ValueError(f"domain {d!r} absent from manifest (have {sorted(present)})")
    parts = {d: ensure_split(filter_domain(m, d), config.seed) for d in (domain_a, domain_b)}
    rows = []
    for train_d, test_d in ((domain_a, domain_a), (domain_a, domain_b), (domain_b, domain_b), (domain_b, domain_a)):
        rep = train_eval(parts[train_d], cache, config, eval_manifest=parts[test_d])
        rows.append(
            {
                "training_domain": train_d,
                "test_domain": test_d,
                "balanced_accuracy": rep["balanced_accuracy"],
                "confusion_matrix": {"class_names": rep["class_names"], "counts": rep["counts"]},
                "report": rep,
            }
        )
    return {"experiment": "cross_domain", "rows": rows}
