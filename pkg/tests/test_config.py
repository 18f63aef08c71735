import pytest

from miaudit.config import ConfigError, ExperimentConfig, config_fields, load_config, parse_config


class TestParse:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg.k == 8 and cfg.target.arch == "gcn2"
        assert [a.name for a in cfg.attacks] == ["base"]
        assert not cfg.mismatched

    def test_sections(self):
        cfg = parse_config(
            """
            [experiment]
            seed = 4
            repetitions = 3
            [data]
            n = 40
            num_classes = 2
            [target]
            arch = mlp1
            lr = 0.1
            [shadow]
            lr = 0.2
            k = 4
            [attack:rmia_off]
            method = rmia
            mode = offline
            alpha = auto
            gamma = 2
            [mcmc]
            flip_fraction = 0.5
            [threshold]
            attacks = base, lira
            """.replace("            ", "")
        )
        assert (cfg.seed, cfg.repetitions, cfg.data.n, cfg.data.seed) == (4, 3, 40, 4)
        assert cfg.shadow.arch == "mlp1" and cfg.shadow.lr == 0.2 and cfg.mismatched
        (att,) = cfg.attacks
        assert att.auto_alpha and att.config.gamma == 2.0 and att.config.mode == "offline"
        assert cfg.mcmc.flip_fraction == 0.5 and cfg.threshold.attacks == ("base", "lira")

    @pytest.mark.parametrize(
        "text",
        [
            "[data]\nbogus = 1\n",
            "[nonsense]\n",
            "[target]\narch = gat\n",
            "[shadow]\nk = 3\n",
            "[attack:x]\nmethod = foo\n",
            "[attack:x]\nmethod = base\nlam = 1.5\n",
            "[attack:x]\nalpha = abc\n",
            "[attack:x]\nmethod = gbase\nsampler = gibbs\n",
            "[experiment]\nsignal_mode = two_hop\n",
            "[experiment]\nrepetitions = 0\n",
            "[experiment]\nseed = x\n",
            "[data]\nn = 10\nnum_classes = 3\n",
            "[data]\ngraph_file = /does/not/exist\n",
            "[mcmc]\ntarget_node = 50\n",
            "[threshold]\nattacks = gbase\n",
            "[threshold]\nk = 4\nsimulated_targets = 5\n",
            "[shadow]\nk = 2\n[attack:l]\nmethod = lira\n",
            "not a config",
        ],
    )
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_load_missing(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.ini")

    def test_relative_graph_file(self, tmp_path, small_graph):
        from miaudit.graph import write_graph

        write_graph(small_graph, tmp_path / "g.txt")
        (tmp_path / "c.ini").write_text("[data]\ngraph_file = g.txt\n")
        assert load_config(tmp_path / "c.ini").graph_file == str(tmp_path / "g.txt")

    def test_fields_are_flat(self):
        keys = dict(config_fields(ExperimentConfig(attacks=parse_config("").attacks)))
        assert keys["data.n"] == 400 and keys["attacks.base.method"] == "base"


def test_readme_example_parses():
    import pathlib
    import re

    readme = pathlib.Path(__file__).resolve().parents[1] / "README.md"
    block = re.search(r"```ini\n(.*?)```", readme.read_text(), re.S).group(1)
    cfg = parse_config(block)
    assert [a.name for a in cfg.attacks] == ["base", "base_offline", "gbase"]
    assert cfg.signal_mode == "zero_hop" and cfg.repetitions == 5
