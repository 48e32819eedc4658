import numpy as np
import pytest
import yaml
from hypothesis import given, settings, strategies as st

from pldimu.config import ConfigError, RunConfig, load_config, preset
from pldimu.io import ControllerFileError, fmt, read_controller, read_csv, write_controller, \
    write_csv
from pldimu.lti import RationalTF, StateSpace, TFMatrix, freq_response


class TestConfig:
    def test_defaults_round_trip(self, tmp_path):
        cfg = RunConfig()
        path = tmp_path / "c.yaml"
        path.write_text(cfg.dump())
        again = load_config(path)
        assert again == cfg
        assert again.digest() == cfg.digest()

    def test_preset_round_trip(self, tmp_path):
        cfg = preset("paper2r")
        path = tmp_path / "c.yaml"
        path.write_text(cfg.dump())
        assert load_config(path) == cfg

    def test_preset_controller_is_published(self):
        K = preset("paper2r").controller_tf()
        assert K.shape == (2, 2)
        assert K[0, 0].num == (1.07e5, 1.392e5, 44157.0)
        assert K[1, 1].den == (0.02319, 6.494, 454.6, 1.0)
        assert all(e.order == 3 for row in K.entries for e in row)

    def test_digest_tracks_content(self):
        a = RunConfig()
        b = RunConfig.from_dict({"seed": 1})
        assert a.digest() != b.digest()
        assert a.digest() == RunConfig.from_dict({}).digest()

    @pytest.mark.parametrize("data, where", [
        ({"robot": {"a1": 1.0, "a2": 1.0, "a3": 1.0}}, "robot"),
        ({"robot": {"q_domain": [[1, 0], [0, 1]]}}, "robot.q_domain"),
        ({"intervals": {"source": "guess"}}, "intervals.source"),
        ({"weights": {"M_S": [0.5, 3.0]}}, "weights"),
        ({"synthesis": {"mode": "lqg"}}, "synthesis.mode"),
        ({"synthesis": {"max_iter": 2.5}}, "synthesis.max_iter"),
        ({"synthesis": {"degrees": [[[3, 2]]]}}, "synthesis.degrees"),
        ({"verification": {"vertex_mode": "all"}}, "verification.vertex_mode"),
        ({"simulation": {"dt": 1.0}}, "simulation"),
        ({"simulation": {"check_dt": "yes"}}, "simulation.check_dt"),
        ({"colour": 1}, "colour"),
        ({"controller": [[{"num": [1.0]}]]}, "controller"),
    ])
    def test_validation_names_the_field(self, data, where):
        with pytest.raises(ConfigError) as exc:
            RunConfig.from_dict(data)
        assert str(exc.value).startswith(where)

    def test_yaml_errors(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("robot: [unclosed")
        with pytest.raises(ConfigError):
            load_config(path)
        with pytest.raises(ConfigError):
            preset("nope")

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 31), st.floats(1e-4, 1e-1), st.integers(1, 50))
    def test_round_trip_property(self, seed, tol, iters):
        cfg = RunConfig.from_dict({"seed": seed, "synthesis": {"tol": tol, "max_iter": iters}})
        assert RunConfig.from_dict(yaml.safe_load(cfg.dump())) == cfg


class TestCsv:
    def test_header_and_comment(self, tmp_path):
        p = write_csv(tmp_path / "x.csv", ["a", "b"], [[1, 0.1], [2, 1 / 3]], "abc", 7)
        lines = p.read_text().splitlines()
        assert lines[0] == "# config=abc seed=7"
        assert lines[1] == "a,b"
        cols, data = read_csv(p)
        assert cols == ["a", "b"]
        assert data[1, 1] == 1 / 3

    @settings(max_examples=200, deadline=None)
    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_float_round_trip(self, x):
        assert float(fmt(x)) == x

    def test_fmt_types(self):
        assert fmt(True) == "1" and fmt(np.int64(3)) == "3" and fmt("s") == "s"
        assert fmt(0.1) == "0.10000000000000001"


class TestControllerFile:
    def test_state_space_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        k = StateSpace(rng.normal(size=(3, 3)), rng.normal(size=(3, 2)), rng.normal(size=(2, 3)),
                       rng.normal(size=(2, 2)))
        p = write_controller(tmp_path / "k.csv", k, "d", 0)
        back, tf = read_controller(p)
        assert tf is None
        for name in "ABCD":
            np.testing.assert_array_equal(getattr(back, name), getattr(k, name))

    def test_rational_round_trip(self, tmp_path):
        K = preset("paper2r").controller_tf()
        p = write_controller(tmp_path / "k.csv", K.to_ss(), "d", 0, K)
        back, tf = read_controller(p)
        assert tf == K
        np.testing.assert_allclose(freq_response(back, 1.0), K(1j), rtol=1e-12)

    def test_tf_only_file(self, tmp_path):
        p = tmp_path / "k.csv"
        p.write_text("block,rows,cols\ntf,0,0\nnum,2\nden,1,1\n")
        k, tf = read_controller(p)
        assert tf[0, 0] == RationalTF([2.0], [1.0, 1.0])
        assert freq_response(k, 0.0)[0, 0] == pytest.approx(2.0)

    def test_static_controller(self, tmp_path):
        k = StateSpace.static([[1.0, 2.0], [3.0, 4.0]])
        back, _ = read_controller(write_controller(tmp_path / "k.csv", k, "d", 0))
        assert back.nstates == 0
        np.testing.assert_array_equal(back.D, k.D)

    @pytest.mark.parametrize("text", [
        "",
        "a,b\n",
        "block,rows,cols\nQ,1,1\n1\n",
        "block,rows,cols\nA,2,2\n1,2\n",
        "block,rows,cols\nA,1,1\nx\n",
        "block,rows,cols\ntf,0,0\nnum,1\n",
        "block,rows,cols\ntf,0,0\nnum,1\nden,1\ntf,1,1\nnum,1\nden,1\n",
        "block,rows,cols\nA,1,1\n1\nB,1,1\n1\nC,1,2\n1,1\nD,1,1\n0\n",
        "block,rows,cols\n",
    ])
    def test_malformed(self, tmp_path, text):
        p = tmp_path / "k.csv"
        p.write_text(text)
        with pytest.raises(ControllerFileError):
            read_controller(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ControllerFileError):
            read_controller(tmp_path / "none.csv")


def test_tfmatrix_equality_is_structural():
    a = TFMatrix(((([1.0], [1.0, 2.0]),),))
    assert a == TFMatrix(((RationalTF([1.0], [1.0, 2.0]),),))


def test_digest_ignores_output_directory():
    assert RunConfig.from_dict({"out": "a"}).digest() == RunConfig.from_dict({"out": "b"}).digest()
