import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from betagas import io
from betagas.config import ConfigError, ExperimentConfig, dump_config, load_config, parse_config
from betagas.equilibrium import EquilibriumProblem, solve_equilibrium


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg.ensemble.N == 200 and cfg.ensemble.beta == 2.0
        assert cfg.spec().h.is_zero
        assert cfg.reference_beta == 2.0

    def test_round_trip_defaults(self):
        cfg = ExperimentConfig().validate()
        assert parse_config(dump_config(cfg)) == cfg

    @settings(max_examples=50, deadline=None)
    @given(N=st.integers(1, 10_000), beta=st.floats(0.1, 10.0), seed=st.integers(0, 2**64 - 1),
           amp=st.floats(0.0, 1.0), width=st.floats(0.1, 5.0), k=st.sets(st.sampled_from([1, 2, 3]), min_size=1),
           thin=st.one_of(st.none(), st.integers(1, 10**6)), ref_beta=st.one_of(st.none(), st.floats(0.5, 8.0)))
    def test_round_trip(self, N, beta, seed, amp, width, k, thin, ref_beta):
        cfg = ExperimentConfig()
        cfg.ensemble.N, cfg.ensemble.beta, cfg.run.seed = N, beta, seed
        cfg.ensemble.interaction = [[amp, width]]
        cfg.stats.k = sorted(k)
        cfg.chain.thin = thin
        cfg.compare.reference_beta = ref_beta
        cfg.validate()
        assert parse_config(dump_config(cfg)) == cfg

    def test_integer_promoted_to_float(self):
        assert parse_config("[ensemble]\nbeta = 4\n").ensemble.beta == 4.0

    @pytest.mark.parametrize("text,where", [
        ("[ensemble]\nN = 0\n", "ensemble.N"),
        ("[ensemble]\nN = \"x\"\n", "ensemble.N"),
        ("[ensemble]\nbeta = -1.0\n", "ensemble.beta"),
        ("[ensemble.field]\nkind = \"cubic\"\n", "ensemble.field.kind"),
        ("[ensemble]\ninteraction = [[1.0]]\n", "ensemble.interaction"),
        ("[solver]\ndamping = 2.0\n", "solver.damping"),
        ("[chain]\nmethod = \"gibbs\"\n", "chain.method"),
        ("[stats]\nk = [4]\n", "stats.k"),
        ("[run]\nseed = -1\n", "run.seed"),
        ("[ensemble]\ncolour = 1\n", "ensemble.colour"),
        ("[extras]\n", "extras"),
    ])
    def test_field_diagnostics(self, text, where):
        with pytest.raises(ConfigError, match=f"'{where}'"):
            parse_config(text)

    def test_syntax_error_has_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config("[ensemble]\nN = = 3\n")

    def test_non_convex_field(self):
        with pytest.raises(ConfigError, match="ensemble"):
            parse_config("[ensemble.field]\nkind = \"gaussian-plus-bump\"\ncoefficients = [1.0, 5.0, 1.0]\n")

    def test_load(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("[ensemble]\nN = 12\n")
        assert load_config(p).ensemble.N == 12


class TestTables:
    def test_samples_round_trip_exact(self, tmp_path):
        X = np.random.default_rng(0).normal(size=(30, 7)) * 1e-3
        io.write_samples(tmp_path / "s.csv", X, {"N": 7, "note": [1, 2]})
        header, Y = io.read_samples(tmp_path / "s.csv")
        np.testing.assert_array_equal(X, Y)
        assert header == {"N": 7, "note": [1, 2]}

    def test_solution_round_trip(self, tmp_path):
        sol = solve_equilibrium(EquilibriumProblem.from_field(lambda t: t * t, 2.0, -3, 3, 128), 1e-9)
        io.write_solution(tmp_path / "sol.csv", sol, {"beta": 2.0})
        header, mu = io.read_solution(tmp_path / "sol.csv")
        np.testing.assert_array_equal(mu.weights, sol.mu.weights)
        assert header["beta"] == 2.0 and mu.n_cells == 128

    def test_missing(self, tmp_path):
        with pytest.raises(io.MissingArtifactError):
            io.read_samples(tmp_path / "none.csv")


class TestManifest:
    def test_verify(self, tmp_path):
        (tmp_path / "a.txt").write_text("alpha\n")
        m = io.Manifest(tmp_path)
        m.set("config", {"x": 1})
        m.record("step", {"ok": True}, ["a.txt"])
        m.save()
        again = io.Manifest(tmp_path)
        assert again.verify() == {"a.txt": True}
        assert json.loads((tmp_path / "manifest.json").read_text())["commands"]["step"]["files"] == ["a.txt"]
        (tmp_path / "a.txt").write_text("beta\n")
        assert again.verify() == {"a.txt": False}
