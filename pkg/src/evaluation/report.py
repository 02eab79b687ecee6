"""
Evaluation Report
Per-machine AUC/pAUC, per-type and overall averages, and the persisted score table
"""

import logging
import math
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, Field, field_validator

from ..core.errors import DataError, MetricError
from ..data.dataset import ClipSet
from ..modules.detector import AnomalyDetector
from .metrics import partial_auc, roc_auc
from .scoring import DEFAULT_BATCH, score_clips

logger = logging.getLogger(__name__)

SUMMARY_MARKER = "# summary"
RECORD_COLUMNS = ("clip_id", "machine_type", "machine_id", "is_anomaly", "score")


class AnomalyRecord(BaseModel):
    clip_id: str
    machine_type: str
    machine_id: str
    score: float = Field(..., description="Higher means more anomalous")
    is_anomaly: bool = Field(..., description="Ground truth, evaluation only")

    @field_validator("score")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("score must be finite")
        return value


class MetricPair(BaseModel):
    auc: float = Field(..., ge=0.0, le=1.0)
    pauc: float = Field(..., ge=0.0, le=1.0)


class MachineMetrics(BaseModel):
    machine_type: str
    machine_id: str
    n_normal: int = 0
    n_anomaly: int = 0
    metrics: Optional[MetricPair] = Field(None, description="None when the ID lacks one of the classes")

    @property
    def missing(self) -> bool:
        return self.metrics is None


class EvalReport(BaseModel):
    max_fpr: float = 0.1
    machines: List[MachineMetrics] = Field(default_factory=list)
    machine_types: Dict[str, MetricPair] = Field(default_factory=dict)
    overall: Optional[MetricPair] = None
    records: List[AnomalyRecord] = Field(default_factory=list)

    def machine(self, machine_type: str, machine_id: str) -> MachineMetrics:
        for entry in self.machines:
            if (entry.machine_type, entry.machine_id) == (machine_type, machine_id):
                return entry
        raise KeyError(f"{machine_type}:{machine_id}")

    def summary(self) -> Dict:
        return self.model_dump(mode="json", exclude={"records"})


def _mean_pair(pairs: List[MetricPair]) -> MetricPair:
    return MetricPair(auc=float(np.mean([p.auc for p in pairs])), pauc=float(np.mean([p.pauc for p in pairs])))


def evaluate_scores(records: Iterable[AnomalyRecord], max_fpr: float = 0.1) -> EvalReport:
    """
    Aggregate clip scores: per (type, ID), then the mean over IDs of each
    type, then the mean over types.

    IDs lacking normal or anomalous clips are kept in the report as missing
    and excluded from the averages.
    """
    records = sorted(records, key=lambda r: r.clip_id)
    groups: Dict[Tuple[str, str], List[AnomalyRecord]] = defaultdict(list)
    for record in records:
        groups[(record.machine_type, record.machine_id)].append(record)

    machines: List[MachineMetrics] = []
    per_type: Dict[str, List[MetricPair]] = defaultdict(list)
    for (machine_type, machine_id), group in sorted(groups.items()):
        scores = [r.score for r in group]
        labels = [r.is_anomaly for r in group]
        entry = MachineMetrics(machine_type=machine_type, machine_id=machine_id,
                               n_normal=labels.count(False), n_anomaly=labels.count(True))
        try:
            entry.metrics = MetricPair(auc=roc_auc(scores, labels), pauc=partial_auc(scores, labels, max_fpr))
            per_type[machine_type].append(entry.metrics)
        except MetricError as exc:
            logger.warning(f"Excluding {machine_type}:{machine_id} from averages: {exc}")
        machines.append(entry)

    type_means = {t: _mean_pair(pairs) for t, pairs in sorted(per_type.items())}
    overall = _mean_pair(list(type_means.values())) if type_means else None
    if overall is None:
        logger.warning("No machine ID has both normal and anomalous clips; overall metrics unavailable")
    return EvalReport(max_fpr=max_fpr, machines=machines, machine_types=type_means, overall=overall,
                      records=records)


def evaluate_dataset(detector: AnomalyDetector, clips: ClipSet, max_fpr: float = 0.1,
                     batch_size: int = DEFAULT_BATCH) -> EvalReport:
    """Score every test clip and aggregate"""
    if len(clips) == 0:
        raise DataError("evaluation needs at least one test clip")
    scores = score_clips(detector, clips, batch_size)
    records = [
        AnomalyRecord(
            clip_id=record.clip_id,
            machine_type=record.machine_type,
            machine_id=record.machine_id,
            score=float(score),
            is_anomaly=record.is_anomaly,
        )
        for record, score in zip(clips.records, scores)
    ]
    report = evaluate_scores(records, max_fpr)
    for entry in report.machines:
        if entry.metrics is not None:
            logger.info(f"{entry.machine_type}:{entry.machine_id} AUC {entry.metrics.auc:.4f} "
                        f"pAUC {entry.metrics.pauc:.4f}")
    if report.overall is not None:
        logger.info(f"Overall AUC {report.overall.auc:.4f} pAUC {report.overall.pauc:.4f}")
    return report


def write_report(report: EvalReport, path: Union[str, Path]) -> Path:
    """Tab-separated clip records followed by a YAML summary block"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# " + "\t".join(RECORD_COLUMNS)]
    for r in report.records:
        lines.append("\t".join([r.clip_id, r.machine_type, r.machine_id, str(int(r.is_anomaly)), repr(r.score)]))
    lines.append(SUMMARY_MARKER)
    text = "\n".join(lines) + "\n" + yaml.safe_dump(report.summary(), sort_keys=False)
    path.write_text(text, encoding="utf-8")
    logger.info(f"Wrote evaluation report to {path}")
    return path


def read_report(path: Union[str, Path]) -> EvalReport:
    """
    Raises:
        DataError: Missing summary block or malformed record line
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    head, marker, tail = text.partition(SUMMARY_MARKER + "\n")
    if not marker:
        raise DataError(f"report has no summary block: {path}", path=str(path))
    records = []
    for line_no, line in enumerate(head.splitlines(), start=1):
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != len(RECORD_COLUMNS):
            raise DataError("malformed report line", path=str(path), line=line_no)
        clip_id, machine_type, machine_id, flag, score = fields
        records.append(AnomalyRecord(clip_id=clip_id, machine_type=machine_type, machine_id=machine_id,
                                     is_anomaly=flag == "1", score=float(score)))
    summary = yaml.safe_load(tail) or {}
    return EvalReport.model_validate({**summary, "records": records})
