import time

import numpy as np
import pytest

from redactbench import dct
from redactbench.cli import main
from redactbench.config import ConfigError, parse_config
from redactbench.image import load_png, save_png, to_uint8

from conftest import smooth_rgb

MINIMAL = """\
seed: 11
output: {out}
dataset:
  synthetic: {{n_ids: 8, per_id: 6, side: 32}}
methods:
  - gaussian: [5, 15]
  - pixelation: 5
  - p3: 10
  - scramble
epochs: 5
"""


@pytest.fixture
def photo(tmp_path, rng):
    path = tmp_path / "in.png"
    save_png(smooth_rgb(rng, 48), path)
    return path


def test_obscure_gaussian(photo, tmp_path):
    out = tmp_path / "out.png"
    assert main(["obscure", str(photo), str(out), "--method", "gaussian", "--size", "25"]) == 0
    assert load_png(out).shape == load_png(photo).shape


def test_obscure_scramble_deterministic(photo, tmp_path):
    outs = [tmp_path / "a.png", tmp_path / "b.png"]
    for out in outs:
        assert main(["obscure", str(photo), str(out), "--method", "scramble", "--seed", "42"]) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()
    assert (tmp_path / "a.png.secret").read_bytes() == (tmp_path / "b.png.secret").read_bytes()


@pytest.mark.parametrize("flags", [["--method", "p3", "--threshold", "10"], ["--method", "scramble", "--seed", "7"]])
def test_obscure_restore_is_codec_roundtrip(photo, tmp_path, flags):
    out, restored = tmp_path / "out.png", tmp_path / "restored.png"
    assert main(["obscure", str(photo), str(out), *flags]) == 0
    assert main(["restore", str(out), str(out) + ".secret", str(restored)]) == 0
    expect = dct.codec_roundtrip(load_png(photo))
    np.testing.assert_array_equal(to_uint8(load_png(restored)), to_uint8(expect))


def test_wrong_seed_garbles(photo, tmp_path):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    main(["obscure", str(photo), str(a), "--method", "scramble", "--seed", "1"])
    main(["obscure", str(photo), str(b), "--method", "scramble", "--seed", "2"])
    out = tmp_path / "r.png"
    # public part of seed 1 with the secret of seed 2: valid file, wrong picture
    assert main(["restore", str(a), str(b) + ".secret", str(out)]) == 0
    diff = load_png(out).data - load_png(photo).data
    assert np.mean(diff**2) > 0.01


def test_exit_codes(photo, tmp_path, capsys):
    out = tmp_path / "o.png"
    assert main(["obscure", str(photo), str(out), "--method", "gaussian", "--size", "4"]) == 1
    assert main(["obscure", str(photo), str(out), "--method", "scramble"]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["obscure", str(photo), str(out), "--method", "sharpen", "--size", "3"])
    assert exc.value.code == 1
    assert main(["obscure", str(tmp_path / "missing.png"), str(out), "--method", "median", "--size", "3"]) == 2

    main(["obscure", str(photo), str(out), "--method", "p3"])
    secret = tmp_path / "o.png.secret"
    secret.write_bytes(secret.read_bytes()[:30])
    capsys.readouterr()
    assert main(["restore", str(out), str(secret), str(tmp_path / "r.png")]) == 2
    assert "truncated container at byte 28" in capsys.readouterr().err


def test_obscure_folder(tmp_path, rng):
    src = tmp_path / "faces"
    src.mkdir()
    for i in range(3):
        save_png(smooth_rgb(rng, 16), src / f"{i}.png")
    dst = tmp_path / "out"
    assert main(["obscure", str(src), str(dst), "--method", "scramble", "--seed", "3"]) == 0
    assert sorted(p.name for p in dst.iterdir()) == sorted(
        [f"{i}.png" for i in range(3)] + [f"{i}.png.secret" for i in range(3)]
    )


def test_attack_minimal_config(tmp_path):
    outs = []
    for name in ("r1", "r2"):
        cfg = tmp_path / f"{name}.yaml"
        cfg.write_text(MINIMAL.format(out=tmp_path / name))
        start = time.perf_counter()
        assert main(["attack", str(cfg)]) == 0
        assert time.perf_counter() - start < 60
        outs.append(tmp_path / name)
    for f in ("report.csv", "report.json", "manifest.tsv"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    assert main(["report", str(outs[0] / "report.csv")]) == 0


def test_attack_rejects_unknown_method_before_work(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(MINIMAL.format(out=tmp_path / "bad").replace("- scramble", "- swirl"))
    assert main(["attack", str(cfg)]) == 1
    assert "bad.yaml:9: methods[3]" in capsys.readouterr().err
    assert not (tmp_path / "bad").exists()


def test_config_diagnostics():
    with pytest.raises(ConfigError, match="missing required field"):
        parse_config("seed: 1\noutput: x\ndataset: {synthetic: {}}\n")
    with pytest.raises(ConfigError, match=r"<config>:2: output: expected a str"):
        parse_config("seed: 1\noutput: [1]\ndataset: {synthetic: {}}\nmethods: [scramble]\n")
    with pytest.raises(ConfigError, match=r":4: methods\[0\]\.gaussian\[0\]"):
        parse_config("seed: 1\noutput: x\ndataset: {synthetic: {}}\nmethods: [{gaussian: [4]}]\n")
    cfg = parse_config(MINIMAL.format(out="somewhere"))
    assert [s.label for s in cfg.specs] == ["gaussian-5", "gaussian-15", "pixelation-5", "p3-10", "scramble"]
    assert cfg.attacker.epochs == 5 and cfg.synthetic["side"] == 32
