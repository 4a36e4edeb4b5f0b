"""Tests for src/artifacts: CSV tables, Netpbm images and run manifests."""

import numpy as np
import pytest

from src.artifacts.manifest import (
    FALLBACK_BUILD_ID,
    RunManifest,
    build_id,
    load_manifest,
    write_manifest,
)
from src.artifacts.netpbm import chw_to_rgb, read_pgm, read_ppm, to_uint8, write_pgm, write_ppm
from src.artifacts.tables import read_csv, write_csv
from src.errors import ConfigError, DataError


class TestTables:

    def test_floats_are_repr_exact(self, tmp_path):
        write_csv(tmp_path / "t.csv", ("a", "b"), [(0.1 + 0.2, np.float64(1 / 3))])
        row = read_csv(tmp_path / "t.csv")[0]
        assert float(row["a"]) == 0.1 + 0.2
        assert row["b"] == repr(1 / 3)

    def test_row_width_checked(self, tmp_path):
        with pytest.raises(ValueError):
            write_csv(tmp_path / "t.csv", ("a", "b"), [(1,)])

    def test_nan_and_strings(self, tmp_path):
        write_csv(tmp_path / "t.csv", ("m", "v"), [("cutmix", float("nan"))])
        assert read_csv(tmp_path / "t.csv") == [{"m": "cutmix", "v": "nan"}]


class TestNetpbm:

    def test_to_uint8_rounds_and_clips(self):
        np.testing.assert_array_equal(to_uint8(np.array([-0.5, 0.5, 1.5])), [0, 128, 255])

    def test_pgm_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 256, size=(5, 7)).astype(np.uint8)
        write_pgm(tmp_path / "a.pgm", img)
        np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), img)
        assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5")

    def test_ppm_header(self, tmp_path):
        write_ppm(tmp_path / "a.ppm", np.zeros((2, 3, 3)))
        assert (tmp_path / "a.ppm").read_bytes().startswith(b"P6")
        assert read_ppm(tmp_path / "a.ppm").shape == (2, 3, 3)

    def test_wrong_kind(self, tmp_path):
        write_pgm(tmp_path / "a.pgm", np.zeros((2, 2)))
        with pytest.raises(DataError):
            read_ppm(tmp_path / "a.pgm")

    def test_not_an_image(self, tmp_path):
        (tmp_path / "junk.pgm").write_bytes(b"hello")
        with pytest.raises(DataError):
            read_pgm(tmp_path / "junk.pgm")

    def test_shape_checks(self, tmp_path):
        with pytest.raises(DataError):
            write_pgm(tmp_path / "a.pgm", np.zeros((2, 2, 3)))
        with pytest.raises(DataError):
            write_ppm(tmp_path / "a.ppm", np.zeros((2, 2)))

    def test_chw_to_rgb(self):
        grey = np.arange(4.0).reshape(1, 2, 2)
        rgb = chw_to_rgb(grey)
        assert rgb.shape == (2, 2, 3)
        np.testing.assert_array_equal(rgb[..., 2], grey[0])
        with pytest.raises(DataError):
            chw_to_rgb(np.zeros((2, 4, 4)))


class TestManifest:

    def _manifest(self, out) -> RunManifest:
        return RunManifest(command="maskviz", params={"n": 2}, seed=0, build_id="test", out_dir=str(out))

    def test_round_trip(self, tmp_path):
        path = write_manifest(self._manifest(tmp_path / "run"))
        assert path.name == "manifest.json"
        loaded = load_manifest(path)
        assert loaded.params == {"n": 2}
        assert loaded.created_at
        assert load_manifest(tmp_path / "run") == loaded

    def test_malformed(self, tmp_path):
        (tmp_path / "manifest.json").write_text('{"command": "maskviz"}')
        with pytest.raises(ConfigError) as exc:
            load_manifest(tmp_path)
        assert exc.value.key == "from_manifest"

    def test_not_json(self, tmp_path):
        (tmp_path / "manifest.json").write_text("command=maskviz")
        with pytest.raises(ConfigError):
            load_manifest(tmp_path)

    def test_build_id_without_git(self, monkeypatch):
        def no_git(*args, **kwargs):
            raise FileNotFoundError("git")

        monkeypatch.setattr("src.artifacts.manifest.subprocess.run", no_git)
        assert build_id() == FALLBACK_BUILD_ID
