"""Label universes, prediction tables, and ground-truth constraint derivation.

A prediction table holds, per sample, the ground-truth label at every
granularity plus the assignments of every prediction source: the required
multiclass "main" source, an optional multiclass "secondary" source, and
optional per-label binary sources.

CSV format (UTF-8, header row; lines starting with '#' are ignored):
    sample_id, gt.<granularity>..., pred.<source>.<granularity>..., bin.<label>...
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import TableError
from .masks import SampleMask

MAIN = "main"
SECONDARY = "secondary"

_GT_PREFIX = "gt."
_PRED_PREFIX = "pred."
_BIN_PREFIX = "bin."


@dataclass(frozen=True)
class GranularitySpec:
    """Ordered granularities and the ordered label set of each.

    Labels are globally unique across granularities and are interned to dense
    integer ids in spec order (granularity order, then label order within).
    """

    granularities: tuple[str, ...]
    labels_of: Mapping[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        object.__setattr__(self, "granularities", tuple(self.granularities))
        object.__setattr__(
            self, "labels_of", {g: tuple(ls) for g, ls in self.labels_of.items()}
        )
        if len(self.granularities) < 2:
            raise TableError("need at least two granularities")
        if len(set(self.granularities)) != len(self.granularities):
            raise TableError("duplicate granularity names")
        if set(self.labels_of) != set(self.granularities):
            raise TableError("labels_of keys must match the granularity list")
        granularity_of: dict[str, str] = {}
        label_ids: dict[str, int] = {}
        all_labels: list[str] = []
        for g in self.granularities:
            for y in self.labels_of[g]:
                if y in granularity_of:
                    raise TableError(f"label {y!r} appears in more than one granularity")
                granularity_of[y] = g
                label_ids[y] = len(all_labels)
                all_labels.append(y)
        object.__setattr__(self, "_granularity_of", granularity_of)
        object.__setattr__(self, "_label_ids", label_ids)
        object.__setattr__(self, "_all_labels", tuple(all_labels))

    @property
    def all_labels(self) -> tuple[str, ...]:
        return self._all_labels  # type: ignore[attr-defined]

    def labels(self, granularity: str) -> tuple[str, ...]:
        try:
            return self.labels_of[granularity]
        except KeyError:
            raise TableError(f"unknown granularity {granularity!r}") from None

    def granularity_of(self, label: str) -> str:
        try:
            return self._granularity_of[label]  # type: ignore[attr-defined]
        except KeyError:
            raise TableError(f"unknown label {label!r}") from None

    def label_id(self, label: str) -> int:
        try:
            return self._label_ids[label]  # type: ignore[attr-defined]
        except KeyError:
            raise TableError(f"unknown label {label!r}") from None

    def has_label(self, label: str) -> bool:
        return label in self._label_ids  # type: ignore[attr-defined]

    def check_learnable(self) -> None:
        """Reject degenerate universes (parsed empty/tiny files are allowed to
        exist, but rule learning needs at least two labels per granularity)."""
        for g in self.granularities:
            if len(self.labels_of[g]) < 2:
                raise TableError(
                    f"granularity {g!r} has {len(self.labels_of[g])} label(s); "
                    "need at least 2 to learn rules"
                )

    def to_json_obj(self) -> dict:
        return {
            "granularities": list(self.granularities),
            "labels": {g: list(self.labels_of[g]) for g in self.granularities},
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "GranularitySpec":
        try:
            granularities = tuple(obj["granularities"])
            labels = {g: tuple(obj["labels"][g]) for g in granularities}
        except (KeyError, TypeError) as exc:
            raise TableError(f"malformed granularity spec: {exc}") from exc
        return cls(granularities, labels)


class PredictionTable:
    """Immutable per-sample ground truth plus assignments from every source.

    ``predictions`` maps (source, granularity) -> one label per sample for the
    multiclass sources; ``binary`` maps label -> one 0/1 value per sample.
    Sample order is fixed at construction and all masks index into it.
    """

    def __init__(
        self,
        spec: GranularitySpec,
        sample_ids: Sequence[str],
        gt: Mapping[str, Sequence[str]],
        predictions: Mapping[tuple[str, str], Sequence[str]],
        binary: Mapping[str, Sequence[int]] | None = None,
    ) -> None:
        self._spec = spec
        self._sample_ids = tuple(sample_ids)
        n = len(self._sample_ids)
        if len(set(self._sample_ids)) != n:
            dupes = sorted({s for s in self._sample_ids if self._sample_ids.count(s) > 1})
            raise TableError(f"duplicate sample_id: {dupes[0]!r}")

        self._gt = {g: tuple(col) for g, col in gt.items()}
        if set(self._gt) != set(spec.granularities):
            raise TableError("ground truth must cover every granularity exactly")
        for g, col in self._gt.items():
            self._check_column(col, n, spec.labels(g), f"gt.{g}")

        self._predictions = {key: tuple(col) for key, col in predictions.items()}
        sources = {src for src, _ in self._predictions}
        if not sources <= {MAIN, SECONDARY}:
            bad = sorted(sources - {MAIN, SECONDARY})
            raise TableError(f"unknown prediction source {bad[0]!r}")
        for src in sorted(sources):
            covered = {g for s, g in self._predictions if s == src}
            if covered != set(spec.granularities):
                raise TableError(
                    f"source {src!r} must provide exactly one label per granularity"
                )
        if MAIN not in sources:
            raise TableError("main prediction source is required")
        for (src, g), col in self._predictions.items():
            self._check_column(col, n, spec.labels(g), f"pred.{src}.{g}")

        self._binary = {y: tuple(int(v) for v in col) for y, col in (binary or {}).items()}
        for y, col in self._binary.items():
            if not spec.has_label(y):
                raise TableError(f"binary column for unknown label {y!r}")
            if len(col) != n:
                raise TableError(f"column bin.{y} has {len(col)} values, expected {n}")
            if any(v not in (0, 1) for v in col):
                raise TableError(f"column bin.{y} must contain only 0/1 values")

        self._gt_bits = {
            g: self._column_bits(col, spec.labels(g)) for g, col in self._gt.items()
        }
        self._assign_bits = {
            key: self._column_bits(col, spec.labels(key[1]))
            for key, col in self._predictions.items()
        }
        self._binary_bits = {
            y: sum(1 << i for i, v in enumerate(col) if v)
            for y, col in self._binary.items()
        }

    @staticmethod
    def _check_column(col, n: int, allowed: tuple[str, ...], name: str) -> None:
        if len(col) != n:
            raise TableError(f"column {name} has {len(col)} values, expected {n}")
        allowed_set = set(allowed)
        for v in col:
            if v not in allowed_set:
                raise TableError(f"unknown label {v!r} in column {name}")

    @staticmethod
    def _column_bits(col: tuple[str, ...], labels: tuple[str, ...]) -> dict[str, int]:
        bits = {y: 0 for y in labels}
        for i, v in enumerate(col):
            bits[v] |= 1 << i
        return bits

    @property
    def spec(self) -> GranularitySpec:
        return self._spec

    @property
    def n_samples(self) -> int:
        return len(self._sample_ids)

    @property
    def sample_ids(self) -> tuple[str, ...]:
        return self._sample_ids

    @property
    def has_secondary(self) -> bool:
        return any(src == SECONDARY for src, _ in self._predictions)

    @property
    def binary_labels(self) -> tuple[str, ...]:
        return tuple(sorted(self._binary, key=self._spec.label_id))

    def gt_column(self, granularity: str) -> tuple[str, ...]:
        try:
            return self._gt[granularity]
        except KeyError:
            raise TableError(f"unknown granularity {granularity!r}") from None

    def pred_column(self, source: str, granularity: str) -> tuple[str, ...]:
        try:
            return self._predictions[(source, granularity)]
        except KeyError:
            raise TableError(
                f"no predictions for source {source!r} at granularity {granularity!r}"
            ) from None

    def binary_column(self, label: str) -> tuple[int, ...]:
        try:
            return self._binary[label]
        except KeyError:
            raise TableError(f"no binary column for label {label!r}") from None

    def gt_mask(self, granularity: str, label: str) -> SampleMask:
        try:
            return SampleMask(self._gt_bits[granularity][label], self.n_samples)
        except KeyError:
            raise TableError(
                f"no ground truth label {label!r} at granularity {granularity!r}"
            ) from None

    def assign_mask(self, source: str, granularity: str, label: str) -> SampleMask:
        try:
            per_label = self._assign_bits[(source, granularity)]
        except KeyError:
            raise TableError(
                f"no predictions for source {source!r} at granularity {granularity!r}"
            ) from None
        try:
            return SampleMask(per_label[label], self.n_samples)
        except KeyError:
            raise TableError(
                f"label {label!r} does not belong to granularity {granularity!r}"
            ) from None

    def binary_mask(self, label: str) -> SampleMask:
        try:
            return SampleMask(self._binary_bits[label], self.n_samples)
        except KeyError:
            raise TableError(f"no binary column for label {label!r}") from None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PredictionTable):
            return NotImplemented
        return (
            self._spec == other._spec
            and self._sample_ids == other._sample_ids
            and self._gt == other._gt
            and self._predictions == other._predictions
            and self._binary == other._binary
        )

    def __repr__(self) -> str:
        return (
            f"PredictionTable(n_samples={self.n_samples}, "
            f"granularities={self._spec.granularities})"
        )

    def to_csv_text(self, header_comments: Sequence[str] = ()) -> str:
        """Serialize in the canonical column order; re-parsing reproduces the
        table contents exactly."""
        spec = self._spec
        columns = ["sample_id"]
        columns += [f"gt.{g}" for g in spec.granularities]
        columns += [f"pred.{MAIN}.{g}" for g in spec.granularities]
        if self.has_secondary:
            columns += [f"pred.{SECONDARY}.{g}" for g in spec.granularities]
        bin_labels = self.binary_labels
        columns += [f"bin.{y}" for y in bin_labels]

        buf = io.StringIO()
        for line in header_comments:
            buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for i, sid in enumerate(self._sample_ids):
            row = [sid]
            row += [self._gt[g][i] for g in spec.granularities]
            row += [self._predictions[(MAIN, g)][i] for g in spec.granularities]
            if self.has_secondary:
                row += [self._predictions[(SECONDARY, g)][i] for g in spec.granularities]
            row += [str(self._binary[y][i]) for y in bin_labels]
            writer.writerow(row)
        return buf.getvalue()

    def write_csv(self, path: str | Path, header_comments: Sequence[str] = ()) -> None:
        Path(path).write_text(self.to_csv_text(header_comments), encoding="utf-8")


def parse_prediction_table(
    path: str | Path, spec: GranularitySpec | None = None
) -> PredictionTable:
    """Parse a prediction-table CSV file.

    With an explicit ``spec`` every label is validated against it; without
    one the label universe is inferred from the data (labels sorted per
    granularity, granularity order taken from the gt.* column order).
    """
    text = Path(path).read_text(encoding="utf-8")
    return parse_prediction_table_text(text, spec)


def parse_prediction_table_text(
    text: str, spec: GranularitySpec | None = None
) -> PredictionTable:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise TableError("empty file: missing header row")
    rows = list(csv.reader(lines))
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise TableError(f"duplicate column {dupes[0]!r}")

    granularities: list[str] = []
    pred_cols: list[tuple[str, str]] = []
    bin_cols: list[str] = []
    col_kind: list[tuple[str, object]] = []
    saw_sample_id = False
    for name in header:
        if name == "sample_id":
            saw_sample_id = True
            col_kind.append(("sample_id", None))
        elif name.startswith(_GT_PREFIX):
            g = name[len(_GT_PREFIX):]
            granularities.append(g)
            col_kind.append(("gt", g))
        elif name.startswith(_PRED_PREFIX):
            rest = name[len(_PRED_PREFIX):]
            source, sep, g = rest.partition(".")
            if not sep or not source or not g:
                raise TableError(f"malformed prediction column {name!r}")
            if source not in (MAIN, SECONDARY):
                raise TableError(f"unknown prediction source {source!r} in column {name!r}")
            pred_cols.append((source, g))
            col_kind.append(("pred", (source, g)))
        elif name.startswith(_BIN_PREFIX):
            y = name[len(_BIN_PREFIX):]
            bin_cols.append(y)
            col_kind.append(("bin", y))
        else:
            raise TableError(f"unrecognized column {name!r}")
    if not saw_sample_id:
        raise TableError("missing required column 'sample_id'")
    if not granularities:
        raise TableError("missing gt.<granularity> columns")
    for source, g in pred_cols:
        if g not in granularities:
            raise TableError(f"prediction column pred.{source}.{g} has no matching gt.{g}")
    for g in granularities:
        if (MAIN, g) not in pred_cols:
            raise TableError(f"missing required column pred.{MAIN}.{g}")

    sample_ids: list[str] = []
    gt: dict[str, list[str]] = {g: [] for g in granularities}
    preds: dict[tuple[str, str], list[str]] = {key: [] for key in pred_cols}
    binary: dict[str, list[int]] = {y: [] for y in bin_cols}
    for row_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise TableError(f"row {row_no}: expected {len(header)} fields, got {len(row)}")
        for (kind, key), raw in zip(col_kind, row):
            value = raw.strip()
            if kind == "sample_id":
                sample_ids.append(value)
            elif kind == "gt":
                gt[key].append(value)  # type: ignore[index]
            elif kind == "pred":
                preds[key].append(value)  # type: ignore[index]
            else:
                if value not in ("0", "1"):
                    raise TableError(
                        f"row {row_no}: column bin.{key} must be 0 or 1, got {value!r}"
                    )
                binary[key].append(int(value))  # type: ignore[index]

    if spec is None:
        spec = _infer_spec(granularities, gt, preds, bin_cols)
    else:
        if tuple(granularities) != spec.granularities:
            raise TableError(
                f"file granularities {tuple(granularities)} do not match "
                f"spec granularities {spec.granularities}"
            )
        _validate_against_spec(spec, gt, preds, sample_ids)
        for y in bin_cols:
            if not spec.has_label(y):
                raise TableError(f"unknown label {y!r} in column bin.{y}")

    seen: set[str] = set()
    for row_no, sid in enumerate(sample_ids, start=2):
        if sid in seen:
            raise TableError(f"row {row_no}: duplicate sample_id {sid!r}")
        seen.add(sid)

    return PredictionTable(spec, sample_ids, gt, preds, binary)


def _infer_spec(
    granularities: list[str],
    gt: dict[str, list[str]],
    preds: dict[tuple[str, str], list[str]],
    bin_cols: list[str],
) -> GranularitySpec:
    labels: dict[str, tuple[str, ...]] = {}
    for g in granularities:
        values = set(gt[g])
        for (src, pg), col in preds.items():
            if pg == g:
                values |= set(col)
        labels[g] = tuple(sorted(values))
    spec = GranularitySpec(tuple(granularities), labels)
    for y in bin_cols:
        if not spec.has_label(y):
            raise TableError(f"unknown label {y!r} in column bin.{y}")
    return spec


def _validate_against_spec(
    spec: GranularitySpec,
    gt: dict[str, list[str]],
    preds: dict[tuple[str, str], list[str]],
    sample_ids: list[str],
) -> None:
    def check(col: list[str], g: str, name: str) -> None:
        allowed = set(spec.labels(g))
        for i, v in enumerate(col):
            if v not in allowed:
                sid = sample_ids[i] if i < len(sample_ids) else "?"
                raise TableError(
                    f"unknown label {v!r} in column {name} (row {i + 2}, sample {sid!r})"
                )

    for g, col in gt.items():
        check(col, g, f"gt.{g}")
    for (src, g), col in preds.items():
        check(col, g, f"pred.{src}.{g}")


@dataclass(frozen=True)
class ConstraintSet:
    """Directed violating pairs (target label, violating label).

    A pair (y, y') means: assigning y together with y' (at another
    granularity) is inconsistent. The canonical representation is the
    lexicographically sorted pair list, so serialization is byte-stable.
    """

    pairs: frozenset[tuple[str, str]]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "pairs", frozenset((str(a), str(b)) for a, b in self.pairs)
        )

    @property
    def sorted_pairs(self) -> tuple[tuple[str, str], ...]:
        return tuple(sorted(self.pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair: tuple[str, str]) -> bool:
        return pair in self.pairs

    def __iter__(self):
        return iter(self.sorted_pairs)

    def violating_set(self, label: str) -> tuple[str, ...]:
        return tuple(sorted(b for a, b in self.pairs if a == label))

    def symmetric_closure(self) -> "ConstraintSet":
        closed = set(self.pairs)
        closed.update((b, a) for a, b in self.pairs)
        return ConstraintSet(frozenset(closed))

    def validate_for(self, spec: GranularitySpec) -> None:
        for a, b in self.sorted_pairs:
            ga, gb = spec.granularity_of(a), spec.granularity_of(b)
            if ga == gb:
                raise TableError(
                    f"constraint pair ({a!r}, {b!r}) lies within one granularity"
                )

    def to_json_obj(self) -> dict:
        return {"pairs": [[a, b] for a, b in self.sorted_pairs]}

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "ConstraintSet":
        try:
            pairs = frozenset((str(a), str(b)) for a, b in obj["pairs"])
        except (KeyError, TypeError, ValueError) as exc:
            raise TableError(f"malformed constraint set: {exc}") from exc
        return cls(pairs)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ConstraintSet":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise TableError(f"malformed constraint file {path}: {exc}") from exc
        return cls.from_json_obj(obj)


def derive_gt_constraints(table: PredictionTable) -> ConstraintSet:
    """Pairs (y, y') across granularities that never co-occur in the ground
    truth of any sample."""
    if table.n_samples < 1:
        raise TableError("cannot derive constraints from an empty table")
    spec = table.spec
    observed: dict[tuple[str, str], set[tuple[str, str]]] = {}
    for g in spec.granularities:
        for g2 in spec.granularities:
            if g == g2:
                continue
            col, col2 = table.gt_column(g), table.gt_column(g2)
            observed[(g, g2)] = set(zip(col, col2))
    pairs = set()
    for (g, g2), seen in observed.items():
        for y in spec.labels(g):
            for y2 in spec.labels(g2):
                if (y, y2) not in seen:
                    pairs.add((y, y2))
    return ConstraintSet(frozenset(pairs))
