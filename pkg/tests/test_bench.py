import io
import math

import pytest

from stochlcp import bench
from stochlcp.bench import CSV_HEADER, parse_grid, run_benchmark, write_bench_csv
from stochlcp.solvers import SolverConfig


def test_empty_grid():
    assert run_benchmark([], repetitions=3) == []
    buf = io.StringIO()
    write_bench_csv([], buf)
    assert buf.getvalue() == ",".join(CSV_HEADER) + "\n"


def test_header_is_exact():
    assert ",".join(CSV_HEADER) == "J,nu,dim,aba_iter,aba_cpu,aba_res,pha_iter,pha_cpu,pha_res,init_res"


def test_single_cell():
    (row,) = run_benchmark([(3, 4)], repetitions=2, base_seed=5, cfg=SolverConfig(max_iter=50), n_threads=1)
    assert row.dim == 3 * 9 and row.repetitions == 2
    assert row.aba_converged == 2 and row.aba_res <= 1e-6
    assert row.pha_iter <= 50 and row.init_res > 0
    assert row.pha_max_drift <= 1e-12


def test_csv_without_timing_is_stable():
    cfg = SolverConfig(max_iter=30)
    out = []
    for _ in range(2):
        buf = io.StringIO()
        write_bench_csv(run_benchmark([(2, 3)], 2, 0, cfg, n_threads=1), buf, include_timing=False)
        out.append(buf.getvalue())
    assert out[0] == out[1]
    fields = out[0].splitlines()[1].split(",")
    assert fields[4] == "" and fields[7] == ""


def test_failures_are_counted_not_raised(monkeypatch):
    class Broken:
        def __init__(self, **kw):
            pass

        def fit(self, game):
            raise RuntimeError("boom")

    monkeypatch.setattr(bench, "PHASolver", Broken)
    (row,) = run_benchmark([(2, 2)], repetitions=2)
    assert row.pha_failures == 2 and math.isnan(row.pha_iter)
    assert row.aba_failures == 0 and row.aba_converged == 2


def test_parallel_marks_cpu_unreliable():
    rows = run_benchmark([(2, 2), (2, 3)], 1, 0, SolverConfig(max_iter=20), n_jobs=2)
    assert [r.nu for r in rows] == [2, 3]
    assert not any(r.cpu_reliable for r in rows)


def test_parse_grid():
    assert parse_grid("5:5, 10:100") == [(5, 5), (10, 100)]
    assert parse_grid("") == []
    with pytest.raises(ValueError):
        parse_grid("5x5")
    with pytest.raises(ValueError):
        parse_grid("0:5")


def test_invalid_repetitions():
    with pytest.raises(ValueError):
        run_benchmark([(2, 2)], repetitions=0)
