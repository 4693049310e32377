import pytest

from soundscene.config import (
    ConfigError,
    PipelineConfig,
    PlannerEndpoint,
    SamplerConfig,
    config_from_dict,
    load_config,
)


def write_yaml(tmp_path, text):
    p = tmp_path / "run.yaml"
    p.write_text(text, encoding="utf-8")
    return p


class TestDefaults:
    def test_empty_file_gives_defaults(self, tmp_path):
        cfg = load_config(write_yaml(tmp_path, ""))
        assert cfg.dataset_seed == 0
        assert cfg.output_dir == "out"
        assert cfg.oov_policy == "letter_fallback"
        assert cfg.planner is None
        assert cfg.lexicon_path is None

    def test_sampler_defaults(self):
        sc = SamplerConfig()
        assert (sc.T, sc.schedule, sc.t1) == (100, "cosine", 88)
        assert (sc.w_low, sc.w_high) == (3.0, 9.0)
        assert sc.mode == "ancestral"

    def test_priors_defaults(self, tmp_path):
        cfg = load_config(write_yaml(tmp_path, "dataset_seed: 3"))
        assert cfg.priors.p_single_speaker == 0.791
        assert cfg.priors.snr_range_db == (2.0, 10.0)


class TestFullLoad:
    def test_all_sections(self, tmp_path):
        cfg = load_config(
            write_yaml(
                tmp_path,
                """
dataset_seed: 42
output_dir: data/run1
speech_manifest: pools/speech.jsonl
background_manifest: pools/bg.jsonl
oov_policy: skip
lexicon_path: lex.dict
priors:
  p_single_speaker: 0.5
  utterance_count_pmf: {1: 0.25, 2: 0.75}
  snr_range_db: [0.0, 6.0]
sampler:
  T: 50
  schedule: linear
  t1: 10
  w_low: 1.0
  w_high: 4.0
  mode: deterministic
  seed: 9
planner:
  url: https://planner.example/v1/chat/completions
  model: plan-large
  timeout: 5.0
""",
            )
        )
        assert cfg.dataset_seed == 42
        assert cfg.speech_manifest == "pools/speech.jsonl"
        assert cfg.priors.p_single_speaker == 0.5
        assert cfg.priors.utterance_count_pmf == {1: 0.25, 2: 0.75}
        assert cfg.priors.snr_range_db == (0.0, 6.0)
        assert cfg.sampler == SamplerConfig(
            T=50, schedule="linear", t1=10, w_low=1.0, w_high=4.0,
            mode="deterministic", seed=9,
        )
        assert cfg.planner == PlannerEndpoint(
            url="https://planner.example/v1/chat/completions",
            model="plan-large",
            timeout=5.0,
        )
        assert cfg.planner.api_key_env == "PLANNER_API_KEY"

    def test_pmf_keys_may_be_yaml_strings(self):
        cfg = config_from_dict(
            {"priors": {"utterance_count_pmf": {"1": 0.5, "2": 0.5}}}
        )
        assert cfg.priors.utterance_count_pmf == {1: 0.5, 2: 0.5}


class TestValidation:
    def test_unknown_top_level_key(self, tmp_path):
        with pytest.raises(ConfigError, match="dataset_sed"):
            load_config(write_yaml(tmp_path, "dataset_sed: 1"))

    def test_unknown_sampler_key(self):
        with pytest.raises(ConfigError, match="sampler.*steps"):
            config_from_dict({"sampler": {"steps": 10}})

    def test_unknown_priors_key(self):
        with pytest.raises(ConfigError, match="priors"):
            config_from_dict({"priors": {"snr": [0, 1]}})

    def test_token_in_planner_section_rejected(self):
        with pytest.raises(ConfigError, match="no token"):
            config_from_dict(
                {"planner": {"url": "https://x", "model": "m", "api_key": "sk-123"}}
            )

    def test_bad_schedule_family(self):
        with pytest.raises(ConfigError, match="schedule"):
            SamplerConfig(schedule="quadratic")

    def test_t1_out_of_range(self):
        with pytest.raises(ConfigError, match="t1"):
            SamplerConfig(T=100, t1=101)
        with pytest.raises(ConfigError, match="t1"):
            SamplerConfig(T=100, t1=-1)

    def test_t1_boundaries_allowed(self):
        assert SamplerConfig(t1=0).t1 == 0
        assert SamplerConfig(t1=100).t1 == 100

    def test_bad_mode(self):
        with pytest.raises(ConfigError, match="mode"):
            SamplerConfig(mode="ddim")

    def test_bad_oov_policy(self):
        with pytest.raises(ConfigError, match="oov_policy"):
            PipelineConfig(oov_policy="mumble")

    def test_planner_needs_url_and_model(self):
        with pytest.raises(ConfigError, match="url"):
            PlannerEndpoint(url="", model="m")
        with pytest.raises(ConfigError, match="model"):
            PlannerEndpoint(url="https://x", model="")

    def test_bad_pmf_probability_wrapped(self):
        with pytest.raises(ConfigError, match="priors"):
            config_from_dict({"priors": {"utterance_count_pmf": {1: 0.4}}})

    def test_snr_range_must_be_pair(self):
        with pytest.raises(ConfigError, match="snr_range_db"):
            config_from_dict({"priors": {"snr_range_db": [1.0]}})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "nope.yaml")

    def test_invalid_yaml(self, tmp_path):
        with pytest.raises(ConfigError, match="invalid YAML"):
            load_config(write_yaml(tmp_path, "a: [unclosed"))

    def test_non_mapping_root(self, tmp_path):
        with pytest.raises(ConfigError, match="mapping"):
            load_config(write_yaml(tmp_path, "- 1\n- 2\n"))

    def test_error_names_config_file(self, tmp_path):
        with pytest.raises(ConfigError, match="run.yaml"):
            load_config(write_yaml(tmp_path, "oov_policy: mumble"))
