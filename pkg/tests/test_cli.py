import json

import pytest

from evquad.cli import build_parser, infer_geometry, main
from evquad.events import SensorGeometry, parse_events


@pytest.fixture
def sample(tmp_path):
    path = tmp_path / "a.csv"
    assert main(["gen", "--seed", "3", "--duration", "3000", "-o", str(path)]) == 0
    return path


def test_encode_decode_round_trip(sample, tmp_path):
    lcl, out = tmp_path / "a.lcl", tmp_path / "b.csv"
    assert main(["encode", str(sample), "-o", str(lcl), "--geometry", "640x480"]) == 0
    assert main(["decode", str(lcl), "-o", str(out)]) == 0
    assert out.read_bytes() == sample.read_bytes()


def test_uniform_baseline_and_k(sample, tmp_path):
    lcl, out = tmp_path / "u.lcl", tmp_path / "u.csv"
    assert main(["encode", str(sample), "-o", str(lcl), "--uniform-baseline", "--k", "2"]) == 0
    assert lcl.read_bytes()[10] == 2
    assert main(["decode", str(lcl), "-o", str(out)]) == 0
    assert out.read_bytes() == sample.read_bytes()


def test_raw32_round_trip(tmp_path):
    raw, lcl, out = tmp_path / "a.raw32", tmp_path / "a.lcl", tmp_path / "b.raw32"
    assert main(["gen", "--seed", "1", "--duration", "2000", "-o", str(raw)]) == 0
    assert (tmp_path / "a.raw32.ts").exists()
    assert main(["encode", str(raw), "-o", str(lcl)]) == 0
    assert main(["decode", str(lcl), "-o", str(out)]) == 0
    assert out.read_bytes() == raw.read_bytes()
    assert (tmp_path / "b.raw32.ts").read_bytes() == (tmp_path / "a.raw32.ts").read_bytes()


def test_bench_outputs(sample, tmp_path, capsys):
    jl = tmp_path / "r.jsonl"
    assert main(["bench", str(sample), "--repeats", "2", "--jsonl", str(jl)]) == 0
    assert "CR" in capsys.readouterr().out
    row = json.loads(jl.read_text().splitlines()[0])
    assert row["cr"] * row["s_bits_per_event"] == pytest.approx(32)
    assert main(["bench", str(sample), "--k-sweep", "--jsonl", "-"]) == 0
    sweep = json.loads(capsys.readouterr().out.splitlines()[0])
    assert {"cr_k0", "cr_k1", "cr_k2", "cr_k3"} <= set(sweep)


def test_train_command(tmp_path):
    tr, va = tmp_path / "tr", tmp_path / "va"
    tr.mkdir()
    va.mkdir()
    main(["gen", "--seed", "1", "--duration", "3000", "-o", str(tr / "1.csv")])
    main(["gen", "--seed", "2", "--duration", "3000", "-o", str(va / "2.csv")])
    model = tmp_path / "m.lcw"
    assert main(["train", str(tr), "--val", str(va), "-o", str(model), "--epochs", "2",
                 "--patience", "2", "--geometry", "640x480"]) == 0
    lcl, out = tmp_path / "x.lcl", tmp_path / "x.csv"
    assert main(["encode", str(tr / "1.csv"), "-o", str(lcl), "--model", str(model)]) == 0
    assert main(["decode", str(lcl), "-o", str(out)]) == 1  # custom model must be given
    assert main(["decode", str(lcl), "-o", str(out), "--model", str(model)]) == 0
    assert out.read_bytes() == (tr / "1.csv").read_bytes()


def test_errors_exit_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,3\n")
    assert main(["encode", str(bad), "-o", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        build_parser().parse_args(["encode", "x", "-o", "y", "--k", "12"])


def test_infer_geometry():
    ev = parse_events(b"0,9,3,1\n1,2,7,-1\n")
    assert infer_geometry(ev) == SensorGeometry(10, 8)
