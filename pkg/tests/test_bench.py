import csv

import pytest

from porefill import bench
from porefill.errors import ResultMismatch


def test_single_worker_speedup_one(tmp_path):
    res = bench.bench_scaling((16, 16, 16), 10, [1], warmup=2)
    assert [r.speedup for r in res.rows] == [1.0]
    assert res.rows[0].mlups > 0 and res.fluid_cells > 0
    bench.write_bench(res, tmp_path / "bench.csv")
    rows = list(csv.DictReader(open(tmp_path / "bench.csv")))
    assert rows[0]["workers"] == "1" and float(rows[0]["speedup"]) == 1.0


def test_worker_counts_agree():
    res = bench.bench_scaling((16, 12, 14), 10, [1, 2, 3], warmup=2)
    assert len(res.rows) == 3 and len(res.digest) == 64


def test_mismatch_detected(monkeypatch):
    real = bench._final_digest

    def unordered(state, workers):
        # stands in for a reduction whose order depends on the partition
        return real(state, workers) if workers == 1 else "0" * 64

    monkeypatch.setattr(bench, "_final_digest", unordered)
    with pytest.raises(ResultMismatch):
        bench.bench_scaling((16, 16, 16), 5, [1, 2], warmup=1)


def test_rejects_bad_workers():
    with pytest.raises(ValueError):
        bench.bench_scaling((16, 16, 16), 5, [0])
