"""결과 표 (CSV/JSONL), 학습 history 스트림, 다중 seed 비교표."""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from fair_meta_dg.domain.model import AVERAGE_ROW, FairReport, LodoResult, Method
from fair_meta_dg.infrastructure.exceptions import ReportError
from fair_meta_dg.infrastructure.logging_utils import log_function_call

REPORT_COLUMNS = ("method", "held_out_domain", "accuracy", "delta_dp", "delta_eopp", "delta_eo", "seed")
COMPARISON_COLUMNS = ("method", "seeds", "accuracy", "delta_dp", "delta_eopp", "delta_eo", "score")
REPORT_FORMATS = ("csv", "jsonl")


def result_frame(result: LodoResult) -> pd.DataFrame:
    rows = [
        {
            "method": result.method.value,
            "held_out_domain": report.domain_id,
            "accuracy": report.accuracy,
            "delta_dp": report.delta_dp,
            "delta_eopp": report.delta_eopp,
            "delta_eo": report.delta_eo,
            "seed": result.seed,
        }
        for report in result.table()
    ]
    return pd.DataFrame(rows, columns=list(REPORT_COLUMNS))


def _write(path: Path, write) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        write(path)
    except OSError as e:
        raise ReportError(f"cannot write {path}: {e}") from e
    return path


@log_function_call
def emit_report(
    result: LodoResult,
    out_dir: str | Path,
    formats: Iterable[str] = REPORT_FORMATS,
    history: Mapping[str, Sequence[Mapping[str, float]]] | None = None,
    stem: str = "results",
) -> list[Path]:
    """``results.csv`` / ``results.jsonl`` 과, history 가 있으면 ``history.jsonl`` 을 씁니다."""
    out_dir = Path(out_dir)
    frame = result_frame(result)
    written: list[Path] = []
    for fmt in formats:
        match fmt:
            case "csv":
                written.append(
                    _write(
                        out_dir / f"{stem}.csv",
                        lambda p: frame.to_csv(p, index=False, lineterminator="\n"),
                    )
                )
            case "jsonl":
                written.append(
                    _write(
                        out_dir / f"{stem}.jsonl",
                        lambda p: frame.to_json(p, orient="records", lines=True, double_precision=15),
                    )
                )
            case _:
                raise ReportError(f"unknown report format {fmt!r} (expected one of {REPORT_FORMATS})")
    if history is not None:
        written.append(write_history(history, out_dir / "history.jsonl"))
    logger.info("결과 파일 작성 완료", files=[p.name for p in written])
    return written


def history_frame(history: Mapping[str, Sequence[Mapping[str, float]]]) -> pd.DataFrame:
    """fold 별 history 를 한 표로. 열: held_out_domain, phase, step, 손실 항목들, λ1, λ2"""
    rows = []
    for fold_key, records in history.items():
        domain, _, phase = fold_key.partition("/")
        for record in records:
            rows.append({"held_out_domain": domain, "phase": phase or "train", **record})
    return pd.DataFrame(rows)


def write_history(history: Mapping[str, Sequence[Mapping[str, float]]], path: str | Path) -> Path:
    frame = history_frame(history)
    path = Path(path)
    if frame.empty:
        return _write(path, lambda p: p.write_text("", encoding="utf-8"))
    return _write(
        path, lambda p: frame.to_json(p, orient="records", lines=True, double_precision=15)
    )


def _optional(value: float) -> float | None:
    return None if pd.isna(value) else float(value)


def read_report_csv(path: str | Path) -> LodoResult:
    """emit_report 가 쓴 CSV 를 다시 LodoResult 로 읽습니다. Avg 행은 다시 계산됩니다."""
    path = Path(path)
    try:
        frame = pd.read_csv(
            path,
            float_precision="round_trip",
            dtype={"method": str, "held_out_domain": str},
            keep_default_na=False,
            na_values=[""],
        )
    except OSError as e:
        raise ReportError(f"cannot read {path}: {e}") from e
    if tuple(frame.columns) != REPORT_COLUMNS:
        raise ReportError(f"{path.name}: unexpected header {list(frame.columns)}")
    if frame.empty:
        raise ReportError(f"{path.name}: no rows")

    rows = [
        FairReport(
            domain_id=str(row.held_out_domain),
            accuracy=float(row.accuracy),
            delta_dp=_optional(row.delta_dp),
            delta_eopp=_optional(row.delta_eopp),
            delta_eo=_optional(row.delta_eo),
        )
        for row in frame.itertuples(index=False)
        if row.held_out_domain != AVERAGE_ROW
    ]
    return LodoResult(method=Method(frame["method"].iloc[0]), seed=int(frame["seed"].iloc[0]), rows=rows)


def comparison_frame(results: Sequence[LodoResult]) -> pd.DataFrame:
    """method 별로 seed 평균한 Avg 행과 (accuracy − ΔDP) score"""
    records = []
    for result in results:
        avg = result.average()
        records.append(
            {
                "method": result.method.value,
                "seed": result.seed,
                "accuracy": avg.accuracy,
                "delta_dp": np.nan if avg.delta_dp is None else avg.delta_dp,
                "delta_eopp": np.nan if avg.delta_eopp is None else avg.delta_eopp,
                "delta_eo": np.nan if avg.delta_eo is None else avg.delta_eo,
            }
        )
    frame = pd.DataFrame(records)
    if frame.empty:
        return pd.DataFrame(columns=list(COMPARISON_COLUMNS))
    grouped = frame.groupby("method", sort=False)
    summary = grouped[["accuracy", "delta_dp", "delta_eopp", "delta_eo"]].mean()
    summary.insert(0, "seeds", grouped["seed"].count())
    summary["score"] = summary["accuracy"] - summary["delta_dp"]
    return summary.reset_index()[list(COMPARISON_COLUMNS)]


@log_function_call
def write_comparison(results: Sequence[LodoResult], path: str | Path) -> Path:
    frame = comparison_frame(results)
    return _write(Path(path), lambda p: frame.to_csv(p, index=False, lineterminator="\n"))
