"""
Tests for transcript history and sweep export
"""

import numpy as np
from openpyxl import load_workbook

from two_level_pir import database
from two_level_pir.capacity_calc import SweepSpec, SystemParams, sweep
from two_level_pir.exporter import CSV_COLUMNS, SweepExporter
from two_level_pir.integrity import array_digest, canonical_bytes, sha256_hex
from two_level_pir.net_harness import retrieve

GOLDEN = SystemParams(N=4, T1=2, K1=2, T2=1, K2=4)


def crossover_rows():
    spec = SweepSpec(vary="T1", values=list(range(2, 11)), base={"N": 10, "K1": 2, "T2": 2, "K2": 6})
    return sweep(spec)


# ---------------------------------------------------------
# Database
# ---------------------------------------------------------

def test_record_and_read_back(tmp_path):
    db = str(tmp_path / "transcripts.db")
    transcript = retrieve(GOLDEN, "NS", 1, seed=11)
    retrieval_id = database.record_transcript(db, transcript)

    frame = database.get_recent_retrievals(db)
    assert len(frame) == 1
    row = frame.iloc[0]
    assert row["retrieval_id"] == retrieval_id
    assert row["params"] == "(4,2:2,1:4)"
    assert row["downloaded"] == 116
    assert row["rate"] == "16/29"


def test_stats_on_empty_and_filled_database(tmp_path):
    db = str(tmp_path / "transcripts.db")
    empty = database.get_retrieval_stats(db)
    assert empty["total_retrievals"] == 0
    assert empty["success_rate"] == 0

    for scheme in ("NS", "NB", "NB"):
        database.record_transcript(db, retrieve(GOLDEN, scheme, 3, seed=2))
    stats = database.get_retrieval_stats(db)
    assert stats["total_retrievals"] == 3
    assert stats["verified_retrievals"] == 3
    assert stats["success_rate"] == 100
    assert [(s["scheme"], s["retrievals"]) for s in stats["per_scheme"]] == [("NB", 2), ("NS", 1)]


def test_recent_retrievals_limit(tmp_path):
    db = str(tmp_path / "transcripts.db")
    for k_star in (1, 2, 3):
        database.record_transcript(db, retrieve(GOLDEN, "NS", k_star, seed=4))
    frame = database.get_recent_retrievals(db, limit=2)
    assert list(frame["k_star"]) == [3, 2]


# ---------------------------------------------------------
# Exporter
# ---------------------------------------------------------

def test_frame_columns_and_values():
    frame = SweepExporter().to_frame(crossover_rows())
    assert list(frame.columns) == CSV_COLUMNS
    assert len(frame) == 9
    assert frame.iloc[0]["best"] == "NS"
    assert frame.iloc[-1]["best"] == "NB"
    assert frame.iloc[0]["gap"] == "0/1"


def test_csv_export(tmp_path):
    out = tmp_path / "sweep.csv"
    SweepExporter().export_csv(crossover_rows(), out)
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 10


def test_excel_export_styles_header(tmp_path):
    out = tmp_path / "sweep.xlsx"
    SweepExporter().export_excel(crossover_rows(), out)
    workbook = load_workbook(out)
    sweep_sheet = workbook["Sweep"]
    assert sweep_sheet["A1"].value == "N"
    assert sweep_sheet["A1"].font.bold
    summary = {row[0].value: row[1].value for row in workbook["Summary"].iter_rows(min_row=2)}
    assert summary["Points"] == 9
    assert summary["NS best"] + summary["NB best"] + summary["Ties"] == 9
    assert summary["Max gap at"].startswith("(10,")


# ---------------------------------------------------------
# Digests
# ---------------------------------------------------------

def test_sha256_known_value():
    assert sha256_hex(b"abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_array_digest_ignores_storage_dtype():
    values = [[1, 2, 3], [4, 5, 6]]
    as_int = np.array(values, dtype=np.int64)
    as_object = np.array(values, dtype=object)
    assert array_digest(as_int) == array_digest(as_object)
    assert canonical_bytes(as_int).startswith(b"[2, 3]|")
    assert array_digest(as_int) != array_digest(as_int.reshape(3, 2))
