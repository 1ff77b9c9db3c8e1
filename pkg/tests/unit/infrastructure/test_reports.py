from __future__ import annotations

import json

import pandas as pd
import pytest

from fair_meta_dg.domain.model import FairReport, LodoResult, Method
from fair_meta_dg.infrastructure.exceptions import ReportError
from fair_meta_dg.infrastructure.reports import (
    REPORT_COLUMNS,
    comparison_frame,
    emit_report,
    read_report_csv,
    result_frame,
    write_comparison,
    write_history,
)


def _result(method: Method = Method.FEED, seed: int = 0, shift: float = 0.0) -> LodoResult:
    rows = [
        FairReport("domain_0", 0.75 + shift, 0.125, 0.25, 0.1875),
        FairReport("domain_1", 0.5 + shift, None, 0.5, None),
        FairReport("domain_2", 1.0 + shift, 0.375, 0.0, 0.0625),
    ]
    return LodoResult(method=method, seed=seed, rows=rows)


def test_emit_report_writes_csv_and_jsonl(tmp_path):
    written = emit_report(_result(), tmp_path, history={"domain_0/meta": [{"step": 0, "L_total": 1.0}]})

    assert [p.name for p in written] == ["results.csv", "results.jsonl", "history.jsonl"]
    lines = (tmp_path / "results.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert len(lines) == 5
    assert lines[-1].startswith("feed,Avg,")
    records = [json.loads(line) for line in (tmp_path / "results.jsonl").read_text().splitlines()]
    assert len(records) == 4
    assert records[1]["delta_dp"] is None


def test_report_csv_reads_back(tmp_path):
    emit_report(_result(), tmp_path, formats=["csv"])

    result = read_report_csv(tmp_path / "results.csv")

    assert result.method == Method.FEED
    assert [r.domain_id for r in result.rows] == ["domain_0", "domain_1", "domain_2"]
    assert result.rows[0].accuracy == 0.75
    assert result.rows[1].delta_dp is None
    assert result.average().accuracy == pytest.approx(0.75)


def test_written_table_loads_back_equal(tmp_path):
    rows = [
        FairReport("domain_0", 2 / 3, 0.1, 1 / 7, 0.3),
        FairReport("domain_1", 0.7, 1 / 3, 0.2, 2 / 9),
        FairReport("domain_2", 0.9 + 1e-12, 0.05, 0.0, 1 / 11),
    ]
    result = LodoResult(method=Method.ERM_FC, seed=4, rows=rows)
    emit_report(result, tmp_path, formats=["csv"])

    loaded = read_report_csv(tmp_path / "results.csv")

    pd.testing.assert_frame_equal(result_frame(loaded), result_frame(result), check_exact=True)


def test_unknown_format_is_rejected(tmp_path):
    with pytest.raises(ReportError):
        emit_report(_result(), tmp_path, formats=["xml"])


def test_bad_header_is_rejected(tmp_path):
    path = tmp_path / "results.csv"
    path.write_text("a,b\n1,2\n", encoding="utf-8")

    with pytest.raises(ReportError):
        read_report_csv(path)


def test_history_stream_has_one_line_per_record(tmp_path):
    history = {
        "domain_0/stage1": [{"step": 0, "L_recon": 2.0}],
        "domain_0/meta": [{"step": 0, "L_total": 1.0}, {"step": 1, "L_total": 0.5}],
    }

    path = write_history(history, tmp_path / "history.jsonl")

    records = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(records) == 3
    assert records[0]["held_out_domain"] == "domain_0"
    assert [r["phase"] for r in records] == ["stage1", "meta", "meta"]


def test_comparison_averages_over_seeds(tmp_path):
    results = [_result(seed=0), _result(seed=1, shift=-0.25), _result(Method.ERM)]

    frame = comparison_frame(results)
    path = write_comparison(results, tmp_path / "comparison.csv")

    feed = frame[frame["method"] == "feed"].iloc[0]
    assert feed["seeds"] == 2
    assert feed["accuracy"] == pytest.approx(0.625)
    assert feed["score"] == pytest.approx(0.625 - 0.25)
    assert list(pd.read_csv(path)["method"]) == ["feed", "erm"]
