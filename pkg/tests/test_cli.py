import csv
import shutil
import subprocess

import numpy as np
import pytest

from hvindex import formats
from hvindex.bitcode import hamming
from hvindex.cli import main, parse_sweep
from hvindex.errors import HvIndexError


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def data(tmp_path, capsys):
    code, out, _ = run(capsys, "gen", "--classes", 40, "--spc", 5, "--k", 128, "--pg", 0.03, "--seed", 3, "--out", tmp_path)
    assert code == 0 and "gallery codes" in out
    return tmp_path


def test_gen_two_classes(tmp_path, capsys):
    code, _, _ = run(capsys, "gen", "--classes", 2, "--spc", 1, "--pg", 0, "--gallery-fraction", 1, "--out", tmp_path)
    assert code == 0
    g = formats.read_codes(tmp_path / "gallery.hvc")
    assert len(g) == 2 and g.width == 512
    assert abs(hamming(g[0], g[1]) - 256) <= 4 * np.sqrt(512) / 2


def test_gen_iitk_preset(tmp_path, capsys):
    code, out, _ = run(capsys, "gen", "--preset", "iitk", "--seed", 7, "--out", tmp_path)
    assert code == 0
    assert len(formats.read_codes(tmp_path / "gallery.hvc")) == 8168
    assert len(formats.read_codes(tmp_path / "probes.hvc")) == 12252
    assert "2042" in out


def test_gen_same_seed_same_bytes(tmp_path, capsys):
    for d in ("a", "b"):
        run(capsys, "gen", "--classes", 10, "--spc", 4, "--seed", 9, "--out", tmp_path / d)
    for name in ("gallery.hvc", "probes.hvc"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_gen_needs_sizes(tmp_path, capsys):
    code, _, err = run(capsys, "gen", "--out", tmp_path)
    assert code == 1 and "--preset" in err


def test_build_and_query_enrolled(data, capsys):
    code, out, _ = run(capsys, "build", "--gallery", data / "gallery.hvc", "--out", data / "g.hvmi", "--t", 8)
    assert code == 0 and "8-table" in out
    assert formats.describe(data / "g.hvmi")["t"] == 8
    g = formats.read_codes(data / "gallery.hvc")
    formats.write_codes(g.subset([5, 17]), data / "q.hvc")
    code, out, _ = run(capsys, "query", "--index", data / "g.hvmi", "--probes", data / "q.hvc", "--r", 0)
    lines = out.splitlines()
    assert lines[0] == "probe\tid\tlabel\tdistance"
    assert f"0\t5\t{g.labels[5]}\t0" in lines
    assert f"1\t17\t{g.labels[17]}\t0" in lines


def test_query_engines_agree_on_gallery(data, capsys):
    outs = {}
    for engine in ("linear", "balltree", "mih"):
        code, out, _ = run(
            capsys, "query", "--gallery", data / "gallery.hvc", "--probes", data / "probes.hvc",
            "--engine", engine, "--r", 16, "--t", 8,
        )
        assert code == 0
        outs[engine] = out
    assert outs["linear"] == outs["balltree"] == outs["mih"]
    rows = outs["linear"].splitlines()[1:]
    assert rows and all(int(r.split("\t")[3]) <= 16 for r in rows)


def test_query_optimized_one_row_per_hit(data, capsys):
    code, out, _ = run(
        capsys, "query", "--gallery", data / "gallery.hvc", "--probes", data / "probes.hvc",
        "--engine", "mih_opt", "--r", 16, "--t", 8,
    )
    probes = [r.split("\t")[0] for r in out.splitlines()[1:]]
    assert code == 0 and len(probes) == len(set(probes))


def test_build_rejects_non_mih(data, capsys):
    code, _, err = run(capsys, "build", "--gallery", data / "gallery.hvc", "--out", data / "x", "--engine", "linear")
    assert code == 1 and "MIH" in err
    assert not (data / "x").exists()


def test_build_rejects_bad_t(data, capsys):
    code, _, err = run(capsys, "build", "--gallery", data / "gallery.hvc", "--out", data / "x", "--t", 7)
    assert code == 1 and not (data / "x").exists()


def test_corrupt_index_rejected(data, capsys):
    (data / "bad.hvmi").write_bytes(b"HVMX" + bytes(20))
    code, out, err = run(capsys, "query", "--index", data / "bad.hvmi", "--probes", data / "probes.hvc")
    assert code == 1 and "magic" in err and out == ""


def test_missing_input(tmp_path, capsys):
    code, _, err = run(capsys, "info", tmp_path / "nope.hvc")
    assert code == 1 and "not found" in err


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bench"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--k", "0"])
    assert exc.value.code == 2


def test_bench_reports(data, capsys):
    out_dir = data / "rep"
    code, out, _ = run(
        capsys, "bench", "--gallery", data / "gallery.hvc", "--probes", data / "probes.hvc",
        "--engine", "mih", "--engine", "mih_opt", "--engine", "mih_mcom",
        "--t", 8, "--sweep", "0:24:8", "--threads", 1, "--out", out_dir,
    )
    assert code == 0 and "substring balance" in out
    summary = list(csv.DictReader(open(out_dir / "summary.csv")))
    assert len(summary) == 12
    by = {(r["engine"], int(r["radius"])): r for r in summary}
    for r in (0, 8, 16, 24):
        naive, opt = by[("mih", r)], by[("mih_optimized", r)]
        assert float(opt["penetration_rate"]) <= float(naive["penetration_rate"])
    sweep = list(csv.DictReader(open(out_dir / "sweep_mih.csv")))
    assert [int(r["radius"]) for r in sweep] == [0, 8, 16, 24]
    assert (out_dir / "probes_mih_optimized_r16.csv").exists()


def test_bench_bad_sweep(data, capsys):
    code, _, err = run(capsys, "bench", "--gallery", data / "gallery.hvc", "--probes", data / "probes.hvc", "--sweep", "8:0:4")
    assert code == 1 and "empty" in err


def test_parse_sweep():
    assert parse_sweep("0:10:5") == [0, 5, 10]
    with pytest.raises(HvIndexError):
        parse_sweep("1-2")


@pytest.fixture
def strips(tmp_path, nprng):
    d = tmp_path / "strips"
    d.mkdir()
    for label in (1, 2):
        for s in range(2):
            img = nprng.integers(0, 256, (48, 432), dtype=np.uint8)
            formats.write_pgm(img, d / f"{label:03d}_{s}.pgm")
    return d


def test_extract_and_binarize(strips, tmp_path, capsys):
    emb = tmp_path / "e.hve"
    code, _, _ = run(capsys, "extract", "--images", strips, "--out", emb)
    assert code == 0
    x, labels = formats.read_embeddings(emb)
    assert x.shape == (4, 512) and labels == [1, 1, 2, 2]
    code, _, _ = run(capsys, "binarize", "--embeddings", emb, "--out", tmp_path / "c.hvc", "--k", 512, "--seed", 4)
    assert code == 0
    codes = formats.read_codes(tmp_path / "c.hvc")
    assert codes.width == 512 and len(codes) == 4
    bank = formats.read_bank(tmp_path / "c.hvp")
    assert (bank.input_dim, bank.output_bits, bank.seed) == (512, 512, 4)
    # reusing the persisted bank reproduces the codes
    code, _, _ = run(capsys, "binarize", "--embeddings", emb, "--out", tmp_path / "c2.hvc", "--bank", tmp_path / "c.hvp")
    assert formats.read_codes(tmp_path / "c2.hvc") == codes
    code, _, err = run(capsys, "binarize", "--embeddings", emb, "--out", tmp_path / "c3.hvc", "--bank", tmp_path / "c.hvp", "--k", 256)
    assert code == 1 and "conflicts" in err


def test_extract_zero_image_fixed_row(tmp_path, capsys):
    d = tmp_path / "z"
    d.mkdir()
    formats.write_pgm(np.zeros((48, 432), np.uint8), d / "a.pgm")
    formats.write_pgm(np.zeros((48, 432), np.uint8), d / "b.pgm")
    run(capsys, "extract", "--images", d, "--out", tmp_path / "z.hve")
    x, labels = formats.read_embeddings(tmp_path / "z.hve")
    assert labels is None and np.all(x == 0)


def test_binarize_duplicate_rows(tmp_path, capsys):
    x = np.tile(np.linspace(-1, 1, 16), (3, 1))
    formats.write_embeddings(x, tmp_path / "d.hve")
    run(capsys, "binarize", "--embeddings", tmp_path / "d.hve", "--out", tmp_path / "d.hvc", "--k", 64)
    c = formats.read_codes(tmp_path / "d.hvc")
    assert c[0] == c[1] == c[2]


def test_extract_size_mismatch(strips, tmp_path, capsys):
    code, _, err = run(capsys, "extract", "--images", strips, "--out", tmp_path / "e.hve", "--strip", "64x256")
    assert code == 1 and "expected 64x256" in err
    assert not (tmp_path / "e.hve").exists()


def test_info_lists_headers(data, capsys):
    code, out, _ = run(capsys, "info", data / "gallery.hvc")
    assert code == 0 and "HVC1" in out and "128" in out


@pytest.mark.skipif(shutil.which("hvindex") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["hvindex", "gen", "--classes", "3", "--spc", "2", "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    res = subprocess.run(["hvindex", "info", str(tmp_path / "gallery.hvc")], capture_output=True, text=True)
    assert "codes" in res.stdout
