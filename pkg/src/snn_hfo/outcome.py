"""Residual-HFO outcome prediction and cohort accuracy metrics."""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from scipy import stats

from .errors import HfoError, InvalidCount

log = logging.getLogger(__name__)

RESIDUAL_THRESHOLD = 1.0  # HFO/min
CI_METHODS = ("clopper-pearson", "wilson", "normal")


class Prediction(str, enum.Enum):
    SEIZURE_FREE = "SeizureFree"
    RECURRENCE = "Recurrence"


class OutcomeClass(str, enum.Enum):
    TP = "TP"
    TN = "TN"
    FP = "FP"
    FN = "FN"


class InvalidRate(HfoError, ValueError):
    pass


class EmptyCohort(HfoError, ValueError):
    pass


@dataclass(frozen=True)
class PatientOutcome:
    patient_id: str
    ilae: int
    followup_months: int

    def __post_init__(self):
        if not 1 <= int(self.ilae) <= 6:
            raise ValueError(f"ILAE class must be in 1..6, got {self.ilae}")

    @property
    def actual(self) -> Prediction:
        return Prediction.RECURRENCE if self.ilae > 1 else Prediction.SEIZURE_FREE


@dataclass(frozen=True)
class OutcomePrediction:
    patient_id: str
    max_post_rate: float
    residual_hfo: bool
    predicted: Prediction
    actual: Prediction
    outcome_class: OutcomeClass

    def as_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "max_post_rate": self.max_post_rate,
            "residual_hfo": self.residual_hfo,
            "predicted": self.predicted.value,
            "actual": self.actual.value,
            "class": self.outcome_class.value,
        }


@dataclass(frozen=True)
class CohortMetrics:
    tp: int
    tn: int
    fp: int
    fn: int
    ppv: Optional[float]
    npv: Optional[float]
    sensitivity: Optional[float]
    specificity: Optional[float]
    accuracy: float
    accuracy_ci: Tuple[float, float]

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn,
            "ppv": self.ppv, "npv": self.npv,
            "sensitivity": self.sensitivity, "specificity": self.specificity,
            "accuracy": self.accuracy,
            "accuracy_ci": [self.accuracy_ci[0], self.accuracy_ci[1]],
        }


def predict(max_post_rate: float) -> Prediction:
    """Recurrence when the highest post-resection channel rate is at least 1 HFO/min."""
    r = float(max_post_rate)
    if not r >= 0.0:
        raise InvalidRate(f"rate must be non-negative, got {max_post_rate}")
    return Prediction.RECURRENCE if r >= RESIDUAL_THRESHOLD else Prediction.SEIZURE_FREE


def classify(predicted: Prediction, actual) -> OutcomeClass:
    """Confusion-matrix cell for one patient.

    ``actual`` may be a :class:`Prediction` or an ILAE class (1 is seizure
    free, anything higher is recurrence).
    """
    if not isinstance(actual, Prediction):
        actual = PatientOutcome("", int(actual), 0).actual
    positive = predicted is Prediction.RECURRENCE
    correct = predicted is actual
    if positive:
        return OutcomeClass.TP if correct else OutcomeClass.FP
    return OutcomeClass.TN if correct else OutcomeClass.FN


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def binomial_ci(successes: int, trials: int, level: float = 0.95,
                method: str = "clopper-pearson") -> Tuple[float, float]:
    """Two-sided binomial confidence interval.

    Parameters
    ----------
    successes, trials:
        Observed counts, ``0 <= successes <= trials`` and ``trials >= 1``.
    level:
        Coverage, e.g. 0.95.
    method:
        ``"clopper-pearson"`` (exact, Beta quantiles), ``"wilson"`` or
        ``"normal"`` (Wald). The approximate methods are clipped to [0, 1].
    """
    if isinstance(successes, bool) or isinstance(trials, bool):
        raise InvalidCount("counts must be integers")
    if int(successes) != successes or int(trials) != trials:
        raise InvalidCount("counts must be integers")
    k, n = int(successes), int(trials)
    if n < 1 or k < 0 or k > n:
        raise InvalidCount(f"need 0 <= successes <= trials and trials >= 1, got {k}/{n}")
    if not 0.0 < level < 1.0:
        raise InvalidCount(f"level must lie in (0, 1), got {level}")
    alpha = 1.0 - level
    if method == "clopper-pearson":
        low = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
        high = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
        return low, high
    z = float(stats.norm.ppf(1 - alpha / 2))
    p = k / n
    if method == "wilson":
        den = 1 + z * z / n
        centre = (p + z * z / (2 * n)) / den
        half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    elif method == "normal":
        centre, half = p, z * math.sqrt(p * (1 - p) / n)
    else:
        raise ValueError(f"unknown CI method {method!r}; choose from {CI_METHODS}")
    return max(0.0, centre - half), min(1.0, centre + half)


def cohort_metrics(classes: Iterable[OutcomeClass], level: float = 0.95,
                   ci_method: str = "clopper-pearson") -> CohortMetrics:
    classes = [OutcomeClass(c) for c in classes]
    if not classes:
        raise EmptyCohort("cohort_metrics needs at least one patient")
    tp = classes.count(OutcomeClass.TP)
    tn = classes.count(OutcomeClass.TN)
    fp = classes.count(OutcomeClass.FP)
    fn = classes.count(OutcomeClass.FN)
    n = len(classes)
    return CohortMetrics(
        tp=tp, tn=tn, fp=fp, fn=fn,
        ppv=_ratio(tp, tp + fp),
        npv=_ratio(tn, tn + fn),
        sensitivity=_ratio(tp, tp + fn),
        specificity=_ratio(tn, tn + fp),
        accuracy=(tp + tn) / n,
        accuracy_ci=binomial_ci(tp + tn, n, level, ci_method),
    )


def evaluate_patient(patient: PatientOutcome, post_rates: Sequence[float],
                     post_duration_min: Optional[float] = None) -> OutcomePrediction:
    """Apply the residual-HFO rule to one patient's post-resection channel rates.

    A patient without any analyzable post-resection channel has a max rate of 0.
    """
    if post_duration_min is not None and post_duration_min < 1.0:
        log.warning("patient %s: post-resection recording covers only %.2f min",
                    patient.patient_id, post_duration_min)
    rates = [float(r) for r in post_rates]
    for r in rates:
        if not r >= 0.0:
            raise InvalidRate(f"patient {patient.patient_id}: negative rate {r}")
    max_rate = max(rates, default=0.0)
    pred = predict(max_rate)
    return OutcomePrediction(
        patient_id=patient.patient_id,
        max_post_rate=max_rate,
        residual_hfo=pred is Prediction.RECURRENCE,
        predicted=pred,
        actual=patient.actual,
        outcome_class=classify(pred, patient.actual),
    )


def cohort_report(predictions: Sequence[OutcomePrediction], level: float = 0.95,
                  ci_method: str = "clopper-pearson") -> dict:
    metrics = cohort_metrics([p.outcome_class for p in predictions], level, ci_method)
    return {
        "patients": [p.as_dict() for p in predictions],
        "metrics": metrics.as_dict(),
        "ci_level": level,
        "ci_method": ci_method,
    }


def write_cohort_json(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def read_outcomes(path) -> Dict[str, PatientOutcome]:
    """Read a CSV with columns ``patient_id,ilae,followup_months``."""
    import csv

    out: Dict[str, PatientOutcome] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            pid = row["patient_id"].strip()
            out[pid] = PatientOutcome(pid, int(row["ilae"]), int(row.get("followup_months") or 0))
    return out


# Reference maximum per-channel rates (HFO/min) of an eight-patient cohort.
# Post-resection values below 1 are only reported as "< 1"; 0.0 stands in.
REFERENCE_PRE_MAX = (3.4, 9.7, 1.3, 11.5, 30.0, 45.0, 1.4, 1.9)
REFERENCE_POST_MAX = (0.0, 0.0, 0.0, 0.0, 0.0, 13.9, 0.0, 0.0)
REFERENCE_ILAE = (1, 1, 1, 1, 1, 3, 1, 1)
REFERENCE_FOLLOWUP = (33, 24, 30, 18, 13, 20, 29, 12)


def reference_cohort() -> List[Tuple[PatientOutcome, float, float]]:
    """(outcome, pre max rate, post max rate) for the eight reference patients."""
    return [
        (PatientOutcome(f"P{i + 1}", ilae, months), pre, post)
        for i, (pre, post, ilae, months) in enumerate(
            zip(REFERENCE_PRE_MAX, REFERENCE_POST_MAX, REFERENCE_ILAE, REFERENCE_FOLLOWUP))
    ]
