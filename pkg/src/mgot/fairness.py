"""Group fairness metrics over prediction records.

Classes whose min/max ratio is 0/0 are left out of the class average and
listed in the report instead of being imputed.
"""

from collections import Counter
from dataclasses import dataclass, field


class FairnessError(ValueError):
    """A metric is undefined for the given records."""


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    group: str
    true_label: str
    pred_label: str

    def __post_init__(self):
        for name in ("sample_id", "group", "true_label", "pred_label"):
            if not getattr(self, name):
                raise ValueError(f"empty {name} in prediction record")

    @property
    def correct(self):
        return self.true_label == self.pred_label


@dataclass
class FairnessReport:
    per_group_accuracy: dict
    pqd: float
    dpm: float
    eom: float
    dpm_skipped_classes: list
    eom_skipped_classes: list
    n_records: int
    eom_degenerate: bool = field(default=False, compare=False)


def _nonempty(records):
    records = list(records)
    if not records:
        raise FairnessError("no prediction records")
    return records


def group_accuracies(records):
    records = _nonempty(records)
    total = Counter(r.group for r in records)
    correct = Counter(r.group for r in records if r.correct)
    return {g: correct[g] / total[g] for g in sorted(total)}


def _min_over_max(rates):
    hi = max(rates)
    return min(rates) / hi if hi > 0 else None


def pqd(records):
    """Lowest over highest per-group accuracy."""
    acc = group_accuracies(records)
    hi = max(acc.values())
    if hi == 0:
        raise FairnessError("every group has zero accuracy; PQD is undefined")
    return min(acc.values()) / hi


def class_set(records):
    return sorted({r.true_label for r in records} | {r.pred_label for r in records})


def dpm(records, classes=None):
    """Mean over classes of min/max per-group positive-prediction rate.

    Returns ``(value, skipped)``; classes never predicted in any group are
    skipped.
    """
    records = _nonempty(records)
    classes = class_set(records) if classes is None else sorted(classes)
    if not classes:
        raise FairnessError("empty class set")
    size = Counter(r.group for r in records)
    predicted = Counter((r.group, r.pred_label) for r in records)
    ratios, skipped = [], []
    for c in classes:
        r = _min_over_max([predicted[g, c] / size[g] for g in sorted(size)])
        if r is None:
            skipped.append(c)
        else:
            ratios.append(r)
    if not ratios:
        raise FairnessError("DPM undefined: every class was skipped")
    return sum(ratios) / len(ratios), skipped


def eom(records, classes=None):
    """Mean over classes of min/max per-group true-positive rate.

    A class counts only if at least two groups contain it as a true label
    and some group has a nonzero TPR. Returns ``(value, skipped)``.
    """
    records = _nonempty(records)
    classes = class_set(records) if classes is None else sorted(classes)
    if not classes:
        raise FairnessError("empty class set")
    positives = Counter((r.group, r.true_label) for r in records)
    hits = Counter((r.group, r.true_label) for r in records if r.correct)
    groups = sorted({r.group for r in records})
    ratios, skipped = [], []
    for c in classes:
        eligible = [g for g in groups if positives[g, c] > 0]
        r = None
        if len(eligible) >= 2:
            r = _min_over_max([hits[g, c] / positives[g, c] for g in eligible])
        if r is None:
            skipped.append(c)
        else:
            ratios.append(r)
    if not ratios:
        raise FairnessError("EOM undefined: every class was skipped")
    return sum(ratios) / len(ratios), skipped


def fairness_report(records):
    """All metrics at once over the union of true and predicted labels.

    When no class is eligible for EOM (for instance a single group) the
    report carries ``eom=1.0``, lists every class as skipped and sets
    ``eom_degenerate``.
    """
    records = _nonempty(records)
    classes = class_set(records)
    dpm_value, dpm_skipped = dpm(records, classes)
    try:
        eom_value, eom_skipped = eom(records, classes)
        degenerate = False
    except FairnessError:
        eom_value, eom_skipped, degenerate = 1.0, list(classes), True
    return FairnessReport(
        per_group_accuracy=group_accuracies(records),
        pqd=pqd(records),
        dpm=dpm_value,
        eom=eom_value,
        dpm_skipped_classes=dpm_skipped,
        eom_skipped_classes=eom_skipped,
        n_records=len(records),
        eom_degenerate=degenerate,
    )
