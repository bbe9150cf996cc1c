"""Config parsing: strict keys, JSON-pointer errors, defaults, sweeps."""

import json

import pytest

from ddrl.config import enumerate_runs, parse_config, parse_config_data
from ddrl.errors import ConfigError


@pytest.fixture
def data_file(tmp_path):
    path = tmp_path / "train.bin"
    path.write_bytes(bytes(3073))
    return path


def _minimal(data_file):
    return {"dataset": {"train": str(data_file)}, "layers": [{"k": 16}]}


class TestParse:
    def test_minimal_fills_defaults(self, data_file):
        spec = parse_config_data(_minimal(data_file))
        assert spec.seed == 0
        assert spec.fractions == [0.3, 0.1, 0.1, 0.1, 0.1, 0.3]
        assert spec.resolved["executor"]["workers"] == 4
        assert spec.resolved["classifier"] == {"reg": 1e-4, "epochs": 30}
        layer = spec.layer_dicts[0]
        assert layer["rf_size"] == 6 and layer["stride"] == 1
        assert layer["zeta"] == 0.25 and layer["whitening"] is True
        assert layer["group_size"] == 0

    def test_nonfinal_group_size_defaults_to_k_over_map_tasks(self, data_file):
        cfg = _minimal(data_file)
        cfg["layers"] = [{"k": 16}, {"k": 16}]
        spec = parse_config_data(cfg)
        assert spec.layer_dicts[0]["group_size"] == 4
        assert spec.layer_dicts[1]["group_size"] == 0

    def test_unknown_top_level_key(self, data_file):
        cfg = _minimal(data_file)
        cfg["classes"] = 10
        with pytest.raises(ConfigError, match="/classes"):
            parse_config_data(cfg)

    def test_unknown_layer_key_pointer(self, data_file):
        cfg = _minimal(data_file)
        cfg["layers"] = [{"k": 16, "striide": 2}]
        with pytest.raises(ConfigError, match="/layers/0/striide"):
            parse_config_data(cfg)

    def test_type_mismatches(self, data_file):
        bad = [
            ({"seed": "zero"}, "/seed"),
            ({"seed": True}, "/seed"),
            ({"executor": {"workers": 1.5}}, "/executor/workers"),
            ({"layers": [{"k": "many"}]}, "/layers/0/k"),
            ({"layers": [{"k": 16, "whitening": 1}]}, "/layers/0/whitening"),
            ({"partition": {"fractions": [1.0]}}, "/partition/fractions"),
            ({"export_features": "yes"}, "/export_features"),
        ]
        for override, pointer in bad:
            cfg = _minimal(data_file)
            cfg.update(override)
            with pytest.raises(ConfigError, match=pointer):
                parse_config_data(cfg)

    def test_constraint_violations(self, data_file):
        bad = [
            ({"seed": -1}, "/seed"),
            ({"executor": {"workers": 0}}, "/executor/workers"),
            ({"classifier": {"reg": 0}}, "/classifier/reg"),
            ({"dataset": {"train": str(data_file), "format": "mnist"}}, "/dataset/format"),
            ({"layers": [{"k": 0}]}, "/layers"),
            ({"partition": {"fractions": [0.5, 0.1, 0.1, 0.1, 0.1, 0.2]}}, "fractions"),
        ]
        for override, pointer in bad:
            cfg = _minimal(data_file)
            cfg.update(override)
            with pytest.raises(ConfigError, match=pointer):
                parse_config_data(cfg)

    def test_missing_dataset_file(self, tmp_path):
        cfg = {"dataset": {"train": str(tmp_path / "nope.bin")}, "layers": [{"k": 8}]}
        with pytest.raises(ConfigError, match="/dataset/train/0"):
            parse_config_data(cfg)

    def test_missing_model_file(self, data_file, tmp_path):
        cfg = _minimal(data_file)
        cfg["model"] = str(tmp_path / "nope.ddrl")
        with pytest.raises(ConfigError, match="/model"):
            parse_config_data(cfg)

    def test_relative_paths_resolve_against_base_dir(self, tmp_path, data_file):
        cfg = {"dataset": {"train": "train.bin"}, "layers": [{"k": 8}]}
        spec = parse_config_data(cfg, base_dir=str(tmp_path))
        assert spec.dataset["train"] == [str(data_file)]

    def test_config_file_parse_and_errors(self, tmp_path, data_file):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(_minimal(data_file)))
        assert parse_config(path).layer_dicts[0]["k"] == 16
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            parse_config(path)
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "missing.json")


class TestRoundTrip:
    def test_resolved_dump_reparses_identically(self, tmp_path, data_file):
        cfg = _minimal(data_file)
        cfg["sweep"] = {"rf_size": [6, 8]}
        cfg["executor"] = {"workers": 2}
        spec = parse_config_data(cfg, base_dir=str(tmp_path))
        dump = tmp_path / "resolved.json"
        spec.dump(dump)
        assert parse_config(dump) == spec

    def test_with_overrides(self, data_file):
        spec = parse_config_data(_minimal(data_file))
        out = spec.with_overrides(workers=7, seed=99, output_dir="/tmp/elsewhere")
        assert out.resolved["executor"]["workers"] == 7
        assert out.seed == 99
        assert out.output_dir == "/tmp/elsewhere"
        assert spec.seed == 0


class TestSweep:
    def test_cartesian_enumeration(self, data_file):
        cfg = _minimal(data_file)
        cfg["sweep"] = {"rf_size": [6, 8], "stride": [1, 2], "whitening": [True, False]}
        runs = enumerate_runs(parse_config_data(cfg))
        assert len(runs) == 8
        assert [r.run_id for r in runs] == [f"run{i:03d}" for i in range(8)]
        seen = {(r.conditions["omega"], r.conditions["stride"], r.conditions["whitening"]) for r in runs}
        assert seen == {(w, s, o) for w in (6, 8) for s in (1, 2) for o in ("on", "off")}

    def test_no_sweep_single_run(self, data_file):
        runs = enumerate_runs(parse_config_data(_minimal(data_file)))
        assert len(runs) == 1
        assert runs[0].conditions == {
            "depth": 1,
            "omega": 6,
            "stride": 1,
            "whitening": "on",
            "centroids": "16",
        }

    def test_depth_sweep_truncates_stack(self, data_file):
        cfg = _minimal(data_file)
        cfg["layers"] = [{"k": 16}, {"k": 16}]
        cfg["sweep"] = {"depth": [1, 2]}
        runs = enumerate_runs(parse_config_data(cfg))
        assert [r.conditions["depth"] for r in runs] == [1, 2]
        assert runs[0].layer_dicts[0]["group_size"] == 0
        assert runs[1].layer_dicts[0]["group_size"] == 4
        assert runs[1].conditions["centroids"] == "16/16"

    def test_whitening_sweep_touches_all_layers(self, data_file):
        cfg = _minimal(data_file)
        cfg["layers"] = [{"k": 16}, {"k": 16}]
        cfg["sweep"] = {"whitening": [False]}
        (run,) = enumerate_runs(parse_config_data(cfg))
        assert all(layer["whitening"] is False for layer in run.layer_dicts)

    def test_depth_beyond_layers_rejected(self, data_file):
        cfg = _minimal(data_file)
        cfg["sweep"] = {"depth": [1, 2]}
        with pytest.raises(ConfigError, match="/sweep/depth"):
            parse_config_data(cfg)

    def test_sweep_value_validation(self, data_file):
        for sweep, pointer in [
            ({"rf_size": []}, "/sweep/rf_size"),
            ({"stride": [0]}, "/sweep/stride"),
            ({"whitening": [1]}, "/sweep/whitening/0"),
            ({"omega": [6]}, "/sweep/omega"),
        ]:
            cfg = _minimal(data_file)
            cfg["sweep"] = sweep
            with pytest.raises(ConfigError, match=pointer):
                parse_config_data(cfg)
