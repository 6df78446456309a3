"""Metrics sink and plot-ready CSV writers."""
import csv
from pathlib import Path
from typing import IO, Iterable, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel

from app.schemas.metrics import KdeCurve, MetricsRecord
from app.services.base_service import BaseService


class MetricsSink(BaseService):
    """Append-only JSON Lines writer: one record per line."""

    def __init__(self, path: Union[str, Path]):
        super().__init__()
        self.path = Path(path)
        self._handle: Optional[IO[str]] = None
        self.count = 0

    def __enter__(self) -> "MetricsSink":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = self.path.open("w", encoding="utf-8")
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def append(self, record: BaseModel) -> None:
        if self._handle is None:
            raise RuntimeError("MetricsSink used outside its context")
        self._handle.write(record.model_dump_json() + "\n")
        self._handle.flush()
        self.count += 1

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None
            self.logger.debug(f"Wrote {self.count} records to {self.path}")


def read_metrics(path: Union[str, Path]) -> List[MetricsRecord]:
    """Parse a metrics JSONL file."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [MetricsRecord.model_validate_json(line) for line in lines if line.strip()]


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write a CSV file with a header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if value is None else value for value in row])
    return path


def write_kl_curve(path: Union[str, Path], rows: Iterable[Tuple[int, float]]) -> Path:
    return write_csv(path, ("step", "mean_kl"), rows)


def write_kde(path: Union[str, Path], curve: KdeCurve) -> Path:
    return write_csv(path, ("grid", "density"), zip(curve.grid.tolist(), curve.density.tolist()))
