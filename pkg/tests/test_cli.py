import numpy as np
import pytest

from litematte import cli
from litematte.formats import read_image, write_image, write_weights
from litematte.network import NetConfig, build_params, format_config


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_flops_nonlocal(capsys):
    code, out, _ = run(capsys, "flops", "--attention", "nonlocal", "--c", "80", "--h", "64", "--w", "64")
    assert code == 0
    assert "total=2065694720" in out and "2.07 GFLOPs" in out and "gives 2.06" in out


def test_flops_ena_reports_both_terms(capsys):
    code, out, _ = run(capsys, "flops", "--attention", "ena", "--c", "80", "--h", "64", "--w", "64")
    assert code == 0
    assert "projection=104857600" in out and "interaction=133693440" in out
    assert "projection term alone is 0.105 GFLOPs" in out


def test_flops_bad_k(capsys):
    code, _, err = run(capsys, "flops", "--attention", "ena", "--c", "8", "--h", "2", "--w", "2")
    assert code == 1 and "exceeds" in err


@pytest.mark.parametrize("argv", [["nope"], ["flops", "--c", "1"], ["params"], ["trimap", "--bogus", "1"]])
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    assert exc.value.code == 2
    capsys.readouterr()


def write_config(path, config):
    path.write_text(format_config(config))
    return str(path)


def test_params_csv(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.cfg", NetConfig(input_size=64))
    code, out, _ = run(capsys, "params", "--config", cfg)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "layer,params,flops" and lines[-1].startswith("total,")
    (tmp_path / "bad.cfg").write_text("input_size = 40\n")
    code, _, err = run(capsys, "params", "--config", str(tmp_path / "bad.cfg"))
    assert code == 1 and "input_size" in err


def test_forward_deterministic(tmp_path, capsys):
    config = NetConfig(input_size=32, sn_widths=(8, 8, 8, 8), mrn_widths=(8, 8, 8, 8))
    cfg = write_config(tmp_path / "c.cfg", config)
    write_image(tmp_path / "img.ppm", np.random.default_rng(0).uniform(0, 1, (1, 3, 32, 32)))
    outs = []
    for i in range(2):
        a, t = tmp_path / f"a{i}.pgm", tmp_path / f"t{i}.pgm"
        code, _, _ = run(capsys, "forward", "--config", cfg, "--image", str(tmp_path / "img.ppm"),
                         "--out-alpha", str(a), "--out-trimap", str(t), "--seed", "4")
        assert code == 0
        outs.append((a.read_bytes(), t.read_bytes()))
    assert outs[0] == outs[1]
    trimap = read_image(tmp_path / "t0.pgm")
    assert set(np.unique(np.round(trimap * 255)).tolist()) <= {0, 128, 255}

    write_weights(tmp_path / "w.wts", build_params(config, seed=4))
    code, _, _ = run(capsys, "forward", "--config", cfg, "--image", str(tmp_path / "img.ppm"),
                     "--out-alpha", str(tmp_path / "aw.pgm"), "--out-trimap", str(tmp_path / "tw.pgm"),
                     "--weights", str(tmp_path / "w.wts"))
    assert code == 0 and (tmp_path / "aw.pgm").read_bytes() == outs[0][0]

    write_weights(tmp_path / "bad.wts", {"x": np.ones(1, np.float32)})
    code, _, err = run(capsys, "forward", "--config", cfg, "--image", str(tmp_path / "img.ppm"),
                       "--out-alpha", str(tmp_path / "x.pgm"), "--out-trimap", str(tmp_path / "y.pgm"),
                       "--weights", str(tmp_path / "bad.wts"))
    assert code == 1 and "missing parameter" in err


def test_composite_alpha_one_returns_foreground(tmp_path, capsys):
    rng = np.random.default_rng(1)
    write_image(tmp_path / "f.ppm", rng.uniform(0, 1, (1, 3, 5, 4)))
    write_image(tmp_path / "b.ppm", rng.uniform(0, 1, (1, 3, 5, 4)))
    write_image(tmp_path / "a.pgm", np.ones((5, 4)))
    code, _, _ = run(capsys, "composite", "--fg", str(tmp_path / "f.ppm"), "--bg", str(tmp_path / "b.ppm"),
                     "--alpha", str(tmp_path / "a.pgm"), "--out", str(tmp_path / "o.ppm"))
    assert code == 0 and (tmp_path / "o.ppm").read_bytes() == (tmp_path / "f.ppm").read_bytes()


def test_metrics_and_trimap(tmp_path, capsys):
    a = np.random.default_rng(2).uniform(-1, 2, (12, 12)).clip(0, 1)
    write_image(tmp_path / "x.pgm", a)
    code, out, _ = run(capsys, "metrics", "--pred", str(tmp_path / "x.pgm"), "--gt", str(tmp_path / "x.pgm"))
    assert code == 0 and out.split() == ["sad=0", "mse=0", "grad=0", "conn=0"]

    code, _, _ = run(capsys, "trimap", "--alpha", str(tmp_path / "x.pgm"), "--out", str(tmp_path / "t.pgm"),
                     "--dilate", "1")
    assert code == 0
    write_image(tmp_path / "y.pgm", np.clip(a + 0.1, 0, 1))
    code, out, _ = run(capsys, "metrics", "--pred", str(tmp_path / "y.pgm"), "--gt", str(tmp_path / "x.pgm"),
                       "--mask", str(tmp_path / "t.pgm"))
    assert code == 0 and [l.split("=")[0] for l in out.split()] == ["sad", "mse", "grad", "conn"]

    code, _, err = run(capsys, "metrics", "--pred", str(tmp_path / "missing.pgm"), "--gt", str(tmp_path / "x.pgm"))
    assert code == 1 and err


def test_selftest_passes(capsys):
    code, out, _ = run(capsys, "selftest")
    lines = out.splitlines()
    assert code == 0 and sum(l.startswith("[PASS]") for l in lines) == 12
