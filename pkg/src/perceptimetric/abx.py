"""Triplet item tables, batch delta evaluation, and ABX score aggregation."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .dtw import dtw_cost
from .errors import ItemTableError, UnknownStimulusError
from .featio import FeatureArchive

ITEM_COLUMNS = [
    "triplet_id",
    "target_id",
    "other_id",
    "x_id",
    "phone_target",
    "phone_other",
    "language",
    "subset",
    "target_is_A",
]

VALID_SUBSETS = {"zerospeech", "worldvowels", "pilot_july", "pilot_august", "cogsci2019"}

GROUPINGS = ("contrast", "subset", "subset_language")


@dataclass(frozen=True)
class TripletItem:
    triplet_id: str
    target_id: str
    other_id: str
    x_id: str
    phone_target: str
    phone_other: str
    language: str
    subset_id: str
    target_is_A: bool

    def __post_init__(self):
        if self.phone_target == self.phone_other:
            raise ItemTableError(
                f"triplet {self.triplet_id!r}: target and other phones are both "
                f"{self.phone_target!r}"
            )
        for name in ("triplet_id", "target_id", "other_id", "x_id"):
            if not getattr(self, name):
                raise ItemTableError(f"triplet {self.triplet_id!r}: empty {name}")
        if self.subset_id not in VALID_SUBSETS:
            raise ItemTableError(
                f"triplet {self.triplet_id!r}: unknown subset {self.subset_id!r} "
                f"(expected one of {sorted(VALID_SUBSETS)})"
            )

    @property
    def contrast(self) -> str:
        """Canonical unordered phone pair, lexicographically sorted."""
        p1, p2 = sorted((self.phone_target, self.phone_other))
        return f"{p1}:{p2}"

    @property
    def contrast_key(self) -> str:
        """Contrast paired with the stimulus language, the aggregation unit."""
        return f"{self.language}/{self.contrast}"


@dataclass(frozen=True)
class DeltaRecord:
    model_id: str
    triplet_id: str
    delta: float


@dataclass(frozen=True)
class ContrastScore:
    group: str
    n_triplets: int
    abx_accuracy: float
    mean_delta: float


@dataclass(frozen=True)
class GroupDifference:
    group: str
    native: float
    nonnative: float
    difference: float


def _parse_bool(text, where):
    value = text.strip().lower()
    if value in ("true", "1"):
        return True
    if value in ("false", "0"):
        return False
    raise ItemTableError(f"{where}: cannot parse boolean from {text!r}")


def load_items(path) -> list[TripletItem]:
    """Read the item table CSV, canonicalizing contrasts and checking ids."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise ItemTableError(f"{path}: empty file")
        missing = [c for c in ITEM_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ItemTableError(f"{path}: missing columns {missing}")
        items = []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            triplet_id = row["triplet_id"].strip()
            if triplet_id in seen:
                raise ItemTableError(f"{path}:{lineno}: duplicate triplet_id {triplet_id!r}")
            seen.add(triplet_id)
            items.append(
                TripletItem(
                    triplet_id=triplet_id,
                    target_id=row["target_id"].strip(),
                    other_id=row["other_id"].strip(),
                    x_id=row["x_id"].strip(),
                    phone_target=row["phone_target"].strip(),
                    phone_other=row["phone_other"].strip(),
                    language=row["language"].strip(),
                    subset_id=row["subset"].strip(),
                    target_is_A=_parse_bool(row["target_is_A"], f"{path}:{lineno}"),
                )
            )
    if not items:
        raise ItemTableError(f"{path}: no item rows")
    return items


def evaluate_deltas(archive: FeatureArchive, items, model_id: str = "",
                    threads: int = 1) -> list[DeltaRecord]:
    """Delta value for every item, in item order.

    DTW costs are computed once per unordered stimulus pair (the cost is
    symmetric), so the output does not depend on the thread count.
    """
    items = list(items)
    for item in items:
        for sid in (item.target_id, item.other_id, item.x_id):
            if sid not in archive:
                raise UnknownStimulusError(
                    f"triplet {item.triplet_id!r} references stimulus {sid!r} "
                    f"which is missing from the archive"
                )

    pairs = []
    seen = set()
    for item in items:
        for pair in (
            tuple(sorted((item.other_id, item.x_id))),
            tuple(sorted((item.target_id, item.x_id))),
        ):
            if pair not in seen:
                seen.add(pair)
                pairs.append(pair)

    def pair_cost(pair):
        a, b = pair
        return dtw_cost(archive.get_entry(a), archive.get_entry(b)).value

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            costs = dict(zip(pairs, pool.map(pair_cost, pairs)))
    else:
        costs = {pair: pair_cost(pair) for pair in pairs}

    records = []
    for item in items:
        d_other = costs[tuple(sorted((item.other_id, item.x_id)))]
        d_target = costs[tuple(sorted((item.target_id, item.x_id)))]
        records.append(
            DeltaRecord(model_id=model_id, triplet_id=item.triplet_id,
                        delta=d_other - d_target)
        )
    return records


def _group_key(item: TripletItem, group_by: str) -> str:
    if group_by == "contrast":
        return item.contrast_key
    if group_by == "subset":
        return item.subset_id
    if group_by == "subset_language":
        return f"{item.subset_id}/{item.language}"
    raise ValueError(f"unknown grouping {group_by!r}; expected one of {GROUPINGS}")


def abx_scores(deltas, items, group_by: str = "contrast") -> list[ContrastScore]:
    """Per-group ABX accuracy: the fraction of deltas strictly above zero.

    A delta of exactly zero counts as incorrect.
    """
    items = list(items)
    deltas = list(deltas)
    by_id = {item.triplet_id: item for item in items}
    delta_ids = {d.triplet_id for d in deltas}
    if len(delta_ids) != len(deltas):
        raise ItemTableError("duplicate triplet_id among delta records")
    if delta_ids != set(by_id):
        missing = sorted(delta_ids - set(by_id))[:3] + sorted(set(by_id) - delta_ids)[:3]
        raise ItemTableError(
            f"deltas and items are not aligned by triplet_id (examples: {missing})"
        )

    groups: dict[str, list[tuple[str, float]]] = {}
    for record in deltas:
        key = _group_key(by_id[record.triplet_id], group_by)
        groups.setdefault(key, []).append((record.triplet_id, record.delta))

    scores = []
    for key in sorted(groups):
        # canonical triplet order makes the sums independent of input order
        values = [v for _, v in sorted(groups[key])]
        n = len(values)
        correct = sum(1 for v in values if v > 0.0)
        scores.append(
            ContrastScore(
                group=key,
                n_triplets=n,
                abx_accuracy=correct / n,
                mean_delta=sum(values) / n,
            )
        )
    return scores


def native_nonnative_abx_diff(scores_native, scores_nonnative) -> list[GroupDifference]:
    """Native minus non-native accuracy per group; keys must match exactly."""
    native = {s.group: s for s in scores_native}
    nonnative = {s.group: s for s in scores_nonnative}
    if set(native) != set(nonnative):
        only_nat = sorted(set(native) - set(nonnative))
        only_non = sorted(set(nonnative) - set(native))
        raise ItemTableError(
            f"score tables keyed differently (native-only: {only_nat[:3]}, "
            f"non-native-only: {only_non[:3]})"
        )
    return [
        GroupDifference(
            group=key,
            native=native[key].abx_accuracy,
            nonnative=nonnative[key].abx_accuracy,
            difference=native[key].abx_accuracy - nonnative[key].abx_accuracy,
        )
        for key in sorted(native)
    ]


def deltas_csv_text(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["triplet_id", "delta"])
    for record in records:
        writer.writerow([record.triplet_id, format(record.delta, ".12g")])
    return buf.getvalue()


def write_deltas_csv(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(deltas_csv_text(records))


def scores_csv_text(scores, model_label: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["model", "group", "n_triplets", "abx_accuracy", "mean_delta"])
    for score in scores:
        writer.writerow([model_label, score.group, score.n_triplets,
                         format(score.abx_accuracy, ".12g"),
                         format(score.mean_delta, ".12g")])
    return buf.getvalue()


def read_scores_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        needed = {"model", "group", "n_triplets", "abx_accuracy", "mean_delta"}
        if reader.fieldnames is None or not needed <= set(reader.fieldnames):
            raise ItemTableError(f"{path}: expected an abx scores table")
        rows = []
        for row in reader:
            rows.append({
                "model": row["model"],
                "group": row["group"],
                "n_triplets": int(row["n_triplets"]),
                "abx_accuracy": float(row["abx_accuracy"]),
                "mean_delta": float(row["mean_delta"]),
            })
    return rows


def read_deltas_csv(path, model_id: str = "") -> list[DeltaRecord]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"triplet_id", "delta"} <= set(reader.fieldnames):
            raise ItemTableError(f"{path}: expected header triplet_id,delta")
        records = []
        for lineno, row in enumerate(reader, start=2):
            try:
                value = float(row["delta"])
            except ValueError as exc:
                raise ItemTableError(f"{path}:{lineno}: bad delta {row['delta']!r}") from exc
            records.append(DeltaRecord(model_id=model_id,
                                       triplet_id=row["triplet_id"].strip(), delta=value))
    if not records:
        raise ItemTableError(f"{path}: no delta rows")
    return records
