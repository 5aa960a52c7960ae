import csv
import io
import json
import math
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np
import sympy
from pydantic import BaseModel

from app.config import settings
from app.models.schemas import ConvergenceReport, RunReport


def _round(x: float, digits: int) -> float | str:
    if not math.isfinite(x):
        return str(x)
    return float(f"{x:.{digits}g}")


def serialize(value: Any, digits: int | None = None) -> Any:
    """JSON-ready copy: complex as {re, im}, floats rounded to digits significant figures."""
    digits = digits or settings.report_digits
    if isinstance(value, BaseModel):
        return serialize(value.model_dump(), digits)
    if isinstance(value, dict):
        return {str(k): serialize(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [serialize(v, digits) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return _round(float(value), digits)
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": _round(value.real, digits), "im": _round(value.imag, digits)}
    if isinstance(value, (Fraction, sympy.Basic)):
        return str(value)
    return value


def dump_report(report: RunReport) -> str:
    payload = serialize(report)
    payload["passed"] = report.passed
    if not settings.report_timing:
        payload.pop("wall_time", None)
    return json.dumps(payload, sort_keys=True, indent=2)


def sweep_csv(reports: list[ConvergenceReport]) -> str:
    """Rows of (eps, L, re, im, err) for plotting."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["eps", "L", "re", "im", "err"])
    digits = settings.report_digits
    for report in reports:
        for eps, value, err in zip(report.eps_grid, report.values, report.error_bars):
            if value is None:
                writer.writerow([_round(eps, digits), _round(report.L, digits), "", "", ""])
                continue
            writer.writerow(
                [
                    _round(eps, digits),
                    _round(report.L, digits),
                    _round(value.real, digits),
                    _round(value.imag, digits),
                    _round(err, digits),
                ]
            )
    return buffer.getvalue()


def _load(path: Path) -> dict:
    if path.exists():
        return json.loads(path.read_text())
    return {}


def golden_get(key: str, path: str | None = None) -> complex | None:
    data = _load(Path(path or settings.golden_path))
    entry = data.get(key)
    if entry is None:
        return None
    return complex(entry["re"], entry["im"])


def golden_set(key: str, value: complex, path: str | None = None):
    target = Path(path or settings.golden_path)
    data = _load(target)
    data[key] = {"re": value.real, "im": value.imag, "provenance": "derived"}
    target.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")
