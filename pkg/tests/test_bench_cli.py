import csv
from collections import Counter

import numpy as np
import pydot
import pytest

from taskfmm import bench
from taskfmm.bench import (SWEEP_COLUMNS, RunConfig, default_q, generate_bodies, parse_sweep,
                           run_once, run_sweep, splitmix64)
from taskfmm.cli import main


def test_splitmix64_reference_values():
    # outputs for seed 0 from the published C reference implementation
    assert splitmix64(0, 3).tolist() == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4,
                                         0x06C45D188009454F]


@pytest.mark.parametrize("dist", bench.DISTRIBUTIONS)
def test_generate_bodies_deterministic_and_ranged(dist):
    a, b = generate_bodies(dist, 500, 7), generate_bodies(dist, 500, 7)
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.charges, b.charges)
    assert not np.array_equal(a.positions, generate_bodies(dist, 500, 8).positions)
    assert np.all(np.abs(a.charges) <= 2.0)
    if dist == "sphere-surface":
        assert np.allclose(np.linalg.norm(a.positions, axis=1), 1.0)
    one = generate_bodies(dist, 1, 3)
    assert one.positions.shape == (1, 3) and np.all(np.isfinite(one.positions))


def test_generate_cube():
    b = generate_bodies("cube", 10_000, 0)
    assert b.positions.min() >= 0.0 and b.positions.max() <= 1.0
    assert abs(b.charges.mean()) <= 1e-12
    # charges drawn from [-1, 1] and then centred
    assert b.charges.max() - b.charges.min() <= 2.0


def test_generate_errors():
    with pytest.raises(ValueError):
        generate_bodies("torus", 10)
    with pytest.raises(ValueError):
        generate_bodies("cube", 0)


def test_run_config_validation():
    assert default_q(10**6) == 10_000 and default_q(1000) == 64
    for bad in ({"n": 0}, {"theta": 1.5}, {"q": 0}, {"threads": 0}):
        with pytest.raises(ValueError):
            RunConfig(**bad)


def test_run_once_two_bodies_exact():
    r = run_once(RunConfig(n=2, check=True))
    assert r.error.rel_l2 <= 1e-12 and r.passed
    assert (r.log.m2l, r.log.p2p) == (0, 1)


def test_run_once_smoke():
    r = run_once(RunConfig(n=20_000, q=200, check=False))
    assert all(t > 0 for t in r.times.values())
    assert r.n_tasks >= 200
    assert r.error is None


def shipped_multiset(r):
    return Counter((t.values[0].cell, t.values[1].cell) for t in r.scheduler.tasks)


def test_task_multiset_independent_of_threads(tmp_path):
    cfg = dict(n=5000, q=100, dag=str(tmp_path / "d.dot"))
    r1 = run_once(RunConfig(threads=1, **cfg))
    r4 = run_once(RunConfig(threads=4, **cfg))
    assert shipped_multiset(r1) == shipped_multiset(r4)
    assert np.array_equal(r1.potentials, r4.potentials)


def test_mutual_potentials_independent_of_threads():
    r1 = run_once(RunConfig(n=5000, q=100, mutual=True))
    r4 = run_once(RunConfig(n=5000, q=100, mutual=True, threads=4))
    assert np.allclose(r1.potentials, r4.potentials, rtol=1e-12, atol=0)


def test_parse_sweep():
    assert parse_sweep("p=6;n=1e5,1e6;q=1000;t=1,2,4") == {
        "p": [6], "n": [100_000, 1_000_000], "q": [1000], "threads": [1, 2, 4]}
    with pytest.raises(ValueError):
        parse_sweep("x=1")


def test_sweep_single_point_and_lazy_baseline(tmp_path):
    base = RunConfig(n=3000)
    rows = run_sweep(base, {"threads": [1]})
    assert len(rows) == 1 and rows[0]["speedup_vs_T1"] == 1.0
    path = tmp_path / "s.csv"
    rows = run_sweep(base, parse_sweep("n=2000;t=2"), str(path))
    assert len(rows) == 1 and rows[0]["threads"] == 2
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        assert reader.fieldnames == SWEEP_COLUMNS
        got = list(reader)
    assert len(got) == 1
    sp = float(got[0]["speedup_vs_T1"])
    assert sp > 0 and float(got[0]["efficiency"]) == pytest.approx(sp / 2)


def test_sweep_speedup_definition(monkeypatch):
    times = iter([4.0, 2.5])

    def fake(cfg):
        t = next(times)
        return bench.RunResult(cfg, {"build": 0.0, "upward": 0.0, "traversal": t,
                                     "downward": 0.0}, 1, bench.InteractionLog(), np.zeros(1))

    monkeypatch.setattr(bench, "run_once", fake)
    rows = run_sweep(RunConfig(n=10), {"threads": [2, 1]})
    assert [r["threads"] for r in rows] == [1, 2]
    assert rows[1]["speedup_vs_T1"] == 4.0 / 2.5
    assert rows[1]["efficiency_flag"] == 0


def test_cli_run_with_outputs(tmp_path, capsys):
    trace, dag, out = tmp_path / "t.csv", tmp_path / "d.dot", tmp_path / "r.csv"
    code = main(["--n", "3000", "--threads", "2", "--check", "--trace", str(trace),
                 "--dag", str(dag), "--csv", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "rel_l2" in text and "tasks" in text
    with open(trace) as f:
        assert f.readline().strip() == "task_id,worker_id,kind,start_ns,end_ns"
    assert pydot.graph_from_dot_file(str(dag))
    with open(out, newline="") as f:
        assert len(list(csv.DictReader(f))) == 1


def test_cli_failed_check_and_bad_args(capsys):
    assert main(["--n", "2000", "--p", "1", "--check", "--check-tol", "1e-9"]) == 1
    assert main(["--n", "100", "--theta", "2"]) == 2
    assert main(["--n", "100", "--sweep", "z=3"]) == 2
    with pytest.raises(SystemExit):
        main(["--dist", "torus"])


def test_cli_sweep(capsys):
    assert main(["--sweep", "n=1000;t=1,2", "--mutual"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and "speedup=1.00" in lines[0]
