import csv
import math

import numpy as np
import pytest

from bpcp import certificate as cert
from bpcp.experiments import (
    ExperimentSpec,
    MONITOR_COLUMNS,
    TABLE_COLUMNS,
    bound_monitors,
    gen_low_rank,
    gen_noise,
    instance,
    monitor_delta,
    run_grid,
    stream,
    summarize,
    write_monitors,
    write_records,
    write_tables,
)


def test_streams_are_reproducible_and_distinct():
    a = stream(42, "noise", 200, 200, "cauchy", 0).random(5)
    b = stream(42, "noise", 200, 200, "cauchy", 0).random(5)
    c = stream(42, "noise", 200, 200, "cauchy", 1).random(5)
    d = stream(43, "noise", 200, 200, "cauchy", 0).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
    assert isinstance(stream(0).bit_generator, np.random.Philox)


def test_gen_low_rank_full_rank_and_deterministic():
    l0 = gen_low_rank(6, 6, 6, 3)
    assert np.linalg.svd(l0, compute_uv=False)[-1] > 0
    assert np.array_equal(gen_low_rank(6, 6, 6, 3), l0)
    assert np.linalg.matrix_rank(gen_low_rank(30, 20, 3, 4)) == 3
    with pytest.raises(ValueError):
        gen_low_rank(4, 4, 5, 0)


def test_low_rank_second_moment():
    # E ||L0||_F^2 = n t r for products of independent standard normals
    values = [np.sum(gen_low_rank(300, 300, 3, stream(7, "moment", k)) ** 2) for k in range(50)]
    assert np.mean(values) == pytest.approx(270000, rel=0.05)


def test_gaussian_noise_mean():
    z = gen_noise(300, 300, "gaussian", 5)
    assert abs(z.mean()) < 4 / 300
    assert z.std() == pytest.approx(1.0, rel=0.01)


def test_cauchy_noise_median_and_quartiles():
    z = gen_noise(300, 300, "cauchy", 5)
    assert abs(np.median(z)) < 4 * (math.pi / 2) / 300
    # quartiles of the standard Cauchy are -1 and 1
    q1, q3 = np.quantile(z, [0.25, 0.75])
    assert q1 == pytest.approx(-1.0, abs=0.03) and q3 == pytest.approx(1.0, abs=0.03)


def test_noise_determinism_scale_and_kind():
    assert np.array_equal(gen_noise(5, 4, "cauchy", 8), gen_noise(5, 4, "cauchy", 8))
    assert np.allclose(gen_noise(5, 4, "gaussian", 8, scale=3.0), 3.0 * gen_noise(5, 4, "gaussian", 8))
    with pytest.raises(ValueError):
        gen_noise(3, 3, "laplace", 0)


def test_instance_stream_sharing():
    l_g, z_g = instance(20, 20, 1, "gaussian", 0)
    l_c, z_c = instance(20, 20, 1, "cauchy", 0)
    l_r3, z_r3 = instance(20, 20, 3, "gaussian", 0)
    assert np.array_equal(l_g, l_c) and not np.array_equal(z_g, z_c)
    assert np.array_equal(z_g, z_r3)


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec(sizes=[(1, 5)], ranks=[1])
    with pytest.raises(ValueError):
        ExperimentSpec(sizes=[(5, 5)], ranks=[6])
    with pytest.raises(ValueError):
        ExperimentSpec(sizes=[(5, 5)], ranks=[1], noises=["laplace"])
    with pytest.raises(ValueError):
        ExperimentSpec(sizes=[(5, 5)], ranks=[1], replications=0)


@pytest.fixture(scope="module")
def small_grid():
    spec = ExperimentSpec(sizes=[(30, 30), (40, 40)], ranks=[1, 2], replications=2, seed=3)
    return spec, run_grid(spec)


def test_grid_records_and_identity(small_grid):
    spec, result = small_grid
    assert len(result.records) == 2 * 2 * 2 * 2
    assert set(result.cells) == set(spec.cells())
    for rec in result.records:
        assert rec.mse_per_entry >= 0 and rec.rel_error >= 0
        assert rec.rel_error == pytest.approx(rec.mse_per_entry * rec.n * rec.t / rec.l0_fro2, rel=1e-12)
    for cell in result.cells.values():
        assert cell.reps == 2 and cell.mse_stderr >= 0


def test_grid_merge_is_order_free(small_grid):
    _, result = small_grid
    shuffled = list(reversed(result.records))
    assert summarize(shuffled) == result.cells


def test_parallel_grid_matches_serial(small_grid):
    spec, result = small_grid
    parallel = run_grid(spec, workers=2)
    strip = lambda recs: [(r.n, r.r, r.noise, r.rep, r.mse_per_entry, r.iterations) for r in recs]
    assert strip(parallel.records) == strip(result.records)


def test_nonconverged_cells_are_flagged(caplog):
    spec = ExperimentSpec(sizes=[(20, 20)], ranks=[1], noises=["cauchy"], replications=3, max_iters=2)
    result = run_grid(spec)
    cell = result.cells[(20, 20, 1, "cauchy")]
    assert cell.nonconverged == 3 and cell.flagged
    assert "did not converge" in caplog.text


def test_table_csv_layout(tmp_path, small_grid):
    _, result = small_grid
    write_tables(result, tmp_path / "t1.csv", tmp_path / "t2.csv")
    write_records(result.records, tmp_path / "recs.csv")
    with open(tmp_path / "t1.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == TABLE_COLUMNS
    assert len(rows) == 1 + len(result.cells)
    first = result.cells[(30, 30, 1, "cauchy")]
    assert rows[1][:5] == ["30", "30", "1", "cauchy", "mse_per_entry"]
    assert float(rows[1][5]) == first.mse_mean
    with open(tmp_path / "t2.csv") as fh:
        assert list(csv.reader(fh))[1][4] == "rel_error"
    with open(tmp_path / "recs.csv") as fh:
        assert len(list(csv.DictReader(fh))) == len(result.records)


def _monitor_inputs(seed=0, n=40):
    g = stream(seed, "monitor-tests")
    l0 = gen_low_rank(n, n, 1, g)
    z0 = gen_noise(n, n, "gaussian", g)
    ts = cert.TangentSpace.from_matrix(l0, 1)
    s = cert.SupportSet(np.abs(z0) > 0.3)
    return l0, z0, ts, s


def test_monitors_zero_error():
    l0, z0, ts, s = _monitor_inputs()
    m = bound_monitors(l0, z0, l0, 0.3, 0.05, ts, s)
    assert m.cone_lhs == 0.0 and m.cone_ratio == 0.0
    assert m.mse_per_entry == 0.0 and m.error_ratio == 0.0


def test_monitors_empty_support_reduces_separation():
    l0, z0, ts, _ = _monitor_inputs()
    empty = cert.SupportSet(np.zeros(l0.shape, bool))
    h = stream(1, "h").standard_normal(l0.shape)
    m = bound_monitors(l0, z0, l0 + h, 0.4, 0.05, ts, empty)
    ph2 = np.sum(cert.proj_phi(ts, h) ** 2)
    assert m.separation_lhs == pytest.approx(ph2)
    assert m.separation_rhs == pytest.approx(0.1 * ph2)
    assert m.composed_norm == 0.0 and m.separation_measured_ok


@pytest.mark.parametrize("seed", range(5))
def test_separation_measured_form_on_random_errors(seed):
    # ||P_Phi H - P_Omega H||^2 >= (1 - ||P_Omega P_Phi||)(||P_Phi H||^2 + ||P_Omega H||^2) for every H
    l0, z0, ts, s = _monitor_inputs(seed)
    g = stream(seed, "separation")
    for h in (g.standard_normal(l0.shape), ts.uvt() + cert.proj_omega(s, g.standard_normal(l0.shape))):
        assert bound_monitors(l0, z0, l0 + h, 0.3, 0.05, ts, s).separation_measured_ok


def test_monitor_fields_consistent():
    l0, z0, ts, s = _monitor_inputs()
    h = 0.01 * stream(2, "h").standard_normal(l0.shape)
    m = bound_monitors(l0, z0, l0 + h, 0.3, 0.05, ts, s)
    d0 = np.where(s.mask, 0.0, z0)
    assert m.cone_rhs == pytest.approx(8 * np.abs(d0).sum())
    assert m.alpha == np.max(np.abs(l0))
    assert m.error_scale == pytest.approx(max(m.alpha, m.implied_mu ** (8 / 3)) * 0.3)


def test_monitor_delta_cap():
    assert monitor_delta(200, 1.0, 1) == pytest.approx(1 / 200 ** (1 / 3))
    assert monitor_delta(200, 8.0, 1) == pytest.approx(0.5)
    assert monitor_delta(200, 8.0, 1, c=0.1) == pytest.approx(0.8 / 200 ** (1 / 3))


def test_write_monitors(tmp_path):
    l0, z0, ts, s = _monitor_inputs()
    reports = [bound_monitors(l0, z0, l0 + 0.01, 0.3, 0.05, ts, s)]
    write_monitors(reports, tmp_path / "m.csv", seeds=[7])
    with open(tmp_path / "m.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == MONITOR_COLUMNS and rows[1][0] == "7"
