import json
import subprocess
import sys

import numpy as np
import pytest

from dppkit import cli
from dppkit.io import SCHEMA_VERSION, read_matrix
from dppkit.sampling import SampleDraw
from dppkit import ValidationError


def write(path, a):
    np.savetxt(path, np.atleast_2d(a), delimiter=",")
    return str(path)


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    doc = json.loads(out) if out.strip() else None
    return code, doc, err


@pytest.fixture
def diag_kernel(tmp_path):
    return write(tmp_path / "diag.csv", np.diag([2.0, 0.0]))


def test_sample_reports_empirical_frequency(diag_kernel, capsys):
    code, doc, _ = run(["sample", "--input", diag_kernel, "--trials", "100000", "--stats", "--seed", "4"], capsys)
    assert code == 0
    freq = {tuple(r["subset"]): r["frequency"] for r in doc["result"]["stats"]["subset_frequencies"]}
    assert set(freq) <= {(), (0,)}
    assert abs(freq[(0,)] - 2 / 3) <= 3 * np.sqrt(2 / 9 / 100000)
    assert doc["result"]["mu"] == pytest.approx(2 / 3)
    np.testing.assert_allclose(doc["result"]["stats"]["marginals"], [2 / 3, 0.0], atol=1e-12)


def test_document_embeds_config_and_version(diag_kernel, capsys):
    code, doc, _ = run(["sample", "--input", diag_kernel], capsys)
    assert code == 0
    assert doc["schema_version"] == SCHEMA_VERSION
    assert doc["dppkit_version"] == cli.__version__
    cfg = doc["config"]
    assert 0 <= cfg["seed"] < 2**64
    assert cfg["algorithm"] == "efficient" and cfg["trials"] == 1
    assert doc["result"]["seed"] == cfg["seed"]
    assert isinstance(doc["result"]["indices"], list)


def test_rerun_from_embedded_config(tmp_path, capsys, rng):
    a = rng.standard_normal((7, 7))
    kern = write(tmp_path / "k.csv", a @ a.T)
    first = tmp_path / "first.json"
    assert cli.main(["sample", "--input", kern, "--trials", "20", "--output", str(first)]) == 0
    second = tmp_path / "second.json"
    assert cli.main(["sample", "--config", str(first), "--output", str(second)]) == 0
    d1, d2 = json.loads(first.read_text()), json.loads(second.read_text())
    assert d1["result"]["draws"] == d2["result"]["draws"]
    assert d1["config"] == d2["config"]


def test_same_seed_same_output_regardless_of_threads(tmp_path, capsys, rng, monkeypatch):
    a = rng.standard_normal((9, 4))
    kern = write(tmp_path / "k.csv", a @ a.T)
    argv = ["sample", "--input", kern, "--trials", "50", "--seed", "77"]
    monkeypatch.setenv("DPPKIT_THREADS", "1")
    _, one, _ = run(argv, capsys)
    monkeypatch.setenv("DPPKIT_THREADS", "3")
    _, three, _ = run(argv, capsys)
    assert one["result"]["draws"] == three["result"]["draws"]


def test_bad_thread_count(diag_kernel, capsys, monkeypatch):
    monkeypatch.setenv("DPPKIT_THREADS", "many")
    code, _, err = run(["sample", "--input", diag_kernel, "--trials", "2"], capsys)
    assert code == 2 and "DPPKIT_THREADS" in err


def test_empty_feature_file(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    code, doc, err = run(["sample", "--input", str(empty), "--kind", "feature_matrix"], capsys)
    assert code == 2 and doc is None
    assert "empty" in err


def test_zero_kernel_gives_empty_draws(tmp_path, capsys):
    z = write(tmp_path / "z.csv", np.zeros((3, 3)))
    code, doc, _ = run(["sample", "--input", z, "--trials", "25"], capsys)
    assert code == 0
    assert doc["result"]["draws"] == [[]] * 25


@pytest.mark.parametrize(
    "content, needle",
    [("1,nan\nnan,1\n", "NaN"), ("1,2\n3\n", "parse"), ("1,2\n3,4\n", "NotSymmetric"), ("1,2\n2,1\n", "NotPSD")],
)
def test_invalid_kernels_exit_2(tmp_path, capsys, content, needle):
    p = tmp_path / "bad.csv"
    p.write_text(content)
    code, _, err = run(["sample", "--input", str(p)], capsys)
    assert code == 2
    assert needle in err


def test_missing_input_file(capsys):
    code, _, err = run(["sample", "--input", "/nonexistent/file.csv"], capsys)
    assert code == 2 and "does not exist" in err


def test_dual_needs_feature_matrix(diag_kernel, capsys):
    code, _, err = run(["sample", "--input", diag_kernel, "--algorithm", "dual"], capsys)
    assert code == 2 and "feature_matrix" in err


def test_feature_input_all_algorithms_agree(tmp_path, capsys, rng):
    feats = write(tmp_path / "f.csv", rng.standard_normal((12, 3)))
    outs = []
    for alg in ("reference", "schur", "efficient", "dual"):
        code, doc, _ = run(["sample", "--input", feats, "--kind", "feature_matrix", "--algorithm", alg, "--seed", "5", "--trials", "30"], capsys)
        assert code == 0
        outs.append(doc["result"]["draws"])
    assert all(o == outs[0] for o in outs)


def test_k_mode(tmp_path, capsys, rng):
    a = rng.standard_normal((6, 6))
    kern = write(tmp_path / "k.csv", a @ a.T)
    code, doc, _ = run(["sample", "--input", kern, "--k", "3", "--trials", "10", "--seed", "1"], capsys)
    assert code == 0
    assert all(len(d) == 3 for d in doc["result"]["draws"])
    assert doc["result"]["mode"] == "k-dpp"
    code, _, _ = run(["sample", "--input", kern, "--k", "7"], capsys)
    assert code == 2


def test_numerical_breakdown_exit_3(diag_kernel, capsys, monkeypatch):
    from dppkit import NumericalBreakdown

    def broken(*args, **kwargs):
        raise NumericalBreakdown("pivot vanished", 1)

    monkeypatch.setattr(cli, "sample_dpp", broken)
    code, _, err = run(["sample", "--input", diag_kernel], capsys)
    assert code == 3 and "breakdown" in err


def test_verify_passes_on_random_rank3(tmp_path, capsys, rng):
    a = rng.standard_normal((6, 3))
    kern = write(tmp_path / "l6.csv", a @ a.T)
    code, doc, _ = run(["verify", "--input", kern, "--seed", "2024"], capsys)
    r = doc["result"]
    assert code == 0, r["checks"]
    assert r["trials"] == 200_000
    assert r["fit"]["tv_distance"] <= 0.01
    assert r["checks"]["trace_equality"]["indices_identical"]
    assert r["pass"]


def test_verify_catches_corrupted_sampler(tmp_path, capsys, rng, monkeypatch):
    a = rng.standard_normal((5, 3))
    kern = write(tmp_path / "l5.csv", a @ a.T)
    honest = cli.sample_dpp

    def biased(source, r, algorithm="efficient", record_trace=False):
        d = honest(source, r, algorithm, record_trace)
        if len(d.indices) > 1 and r.random() < 0.3:
            return SampleDraw(d.indices[:-1], algorithm)
        return d

    monkeypatch.setattr(cli, "sample_dpp", biased)
    code, doc, err = run(["verify", "--input", kern, "--trials", "20000", "--seed", "1"], capsys)
    assert code == 4
    assert not doc["result"]["pass"]
    assert "verification failed" in err


def test_verify_rejects_large_ground_set(tmp_path, capsys):
    big = write(tmp_path / "big.csv", np.eye(25))
    code, _, err = run(["verify", "--input", big, "--trials", "10"], capsys)
    assert code == 2 and "TooLarge" in err


def test_verify_tolerance_override(tmp_path, capsys, rng):
    a = rng.standard_normal((4, 2))
    kern = write(tmp_path / "k.csv", a @ a.T)
    code, doc, _ = run(["verify", "--input", kern, "--trials", "2000", "--seed", "3", "--tolerance", "tv=1e-9"], capsys)
    assert code == 4
    assert doc["config"]["tolerances"]["tv"] == 1e-9
    assert not doc["result"]["checks"]["tv"]["pass"]


def test_unknown_tolerance_is_a_usage_error(diag_kernel):
    with pytest.raises(SystemExit) as info:
        cli.main(["verify", "--input", diag_kernel, "--tolerance", "speed=3"])
    assert info.value.code == 2


def test_verify_projective_feature_input(tmp_path, capsys, rng):
    feats = write(tmp_path / "f.csv", rng.standard_normal((7, 3)))
    code, doc, _ = run(
        ["verify", "--input", feats, "--kind", "feature_matrix", "--algorithm", "dual", "--k", "2", "--trials", "50000", "--seed", "8"],
        capsys,
    )
    assert code == 0, doc["result"]["checks"]


def test_coreset_two_points(tmp_path, capsys):
    pts = write(tmp_path / "two.csv", [[-1.0], [1.0]])
    code, doc, _ = run(["coreset", "--kind", "points", "--input", pts, "--seed", "0"], capsys)
    assert code == 0
    r = doc["result"]
    np.testing.assert_allclose(r["sigma"], [1.0, 1.0])
    assert r["mu_bounds"]["holds"]
    assert len(r["weights"]) == len(r["indices"])


def test_coreset_repeated_point(tmp_path, capsys):
    pts = write(tmp_path / "same.csv", np.tile([2.0, 5.0], (4, 1)))
    code, doc, _ = run(["coreset", "--kind", "points", "--input", pts, "--seed", "0"], capsys)
    assert code == 0
    assert doc["result"]["degenerate_variance"]
    np.testing.assert_allclose(doc["result"]["sigma"], 0.25)
    assert any("coincide" in n for n in doc["result"]["notes"])
    code, _, err = run(["coreset", "--kind", "points", "--input", pts, "--strict"], capsys)
    assert code == 2 and "DegenerateVariance" in err


def test_coreset_mu_bounds_asserted(tmp_path, capsys, rng):
    pts = write(tmp_path / "p.csv", rng.standard_normal((80, 2)))
    code, doc, _ = run(["coreset", "--kind", "points", "--input", pts, "--seed", "3", "--clusters", "2", "--trials", "20"], capsys)
    assert code == 0
    r = doc["result"]
    assert r["mu_bounds"]["lower"] <= r["mu"] <= r["mu_bounds"]["upper"]
    assert r["mu_bounds"]["holds"]
    assert r["quality"]["hypotheses"] == 9


def test_coreset_needs_points(diag_kernel, capsys):
    code, _, _ = run(["coreset", "--input", diag_kernel], capsys)
    assert code == 2


def test_stats(tmp_path, capsys):
    kern = write(tmp_path / "k.csv", np.diag([0.0, 2.0]))
    code, doc, _ = run(["stats", "--input", kern], capsys)
    assert code == 0
    r = doc["result"]
    assert r["mu"] == pytest.approx(2 / 3)
    assert r["variance"] == pytest.approx(2 / 9)
    np.testing.assert_allclose(r["cardinality_pmf"], [1 / 3, 2 / 3, 0.0], atol=1e-15)


def test_bench_writes_table_and_slopes(tmp_path, capsys):
    csv_path = tmp_path / "bench.csv"
    code, doc, _ = run(
        ["bench", "--n", "200", "--ks", "2,4,8", "--reps", "5", "--backend", "both", "--csv", str(csv_path), "--seed", "0"],
        capsys,
    )
    assert code == 0
    r = doc["result"]
    assert len(r["rows"]) == 3 * 4 * 2
    assert set(r["slopes"]) == {f"{a}/{b}" for a in ("reference", "schur", "efficient", "dual") for b in ("numba", "numpy")}
    assert all(row["reps"] >= 5 for row in r["rows"])
    assert csv_path.read_text().startswith("n,k,d,algorithm,backend,reps,median_s,min_s")
    assert "numba_speedup" in r


def test_bench_k1_all_algorithms_comparable(capsys):
    code, doc, _ = run(["bench", "--n", "2000", "--ks", "1", "--reps", "9", "--seed", "0"], capsys)
    assert code == 0
    times = [row["median_s"] for row in doc["result"]["rows"]]
    assert max(times) <= 2 * min(times), times


def test_bench_dual_vs_full(capsys):
    code, doc, _ = run(["bench", "--n", "100", "--ks", "2", "--reps", "5", "--dual-n", "1500", "--dual-d", "20", "--dual-draws", "20", "--seed", "0"], capsys)
    assert code == 0
    r = doc["result"]["dual_vs_full"]
    assert r["dual_s"] < r["full_s"]


def test_read_matrix_shapes(tmp_path):
    p = tmp_path / "row.csv"
    p.write_text("1,2,3\n")
    assert read_matrix(str(p)).shape == (1, 3)
    p.write_text("1\n2\n")
    assert read_matrix(str(p)).shape == (2, 1)
    p.write_text("1,inf\n")
    with pytest.raises(ValidationError):
        read_matrix(str(p))


def test_console_entry_point(diag_kernel):
    out = subprocess.run(
        [sys.executable, "-m", "dppkit.cli", "sample", "--input", diag_kernel, "--seed", "1"],
        capture_output=True,
        text=True,
        check=True,
    )
    assert json.loads(out.stdout)["command"] == "sample"
