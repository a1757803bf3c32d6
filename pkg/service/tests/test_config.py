import pytest

from infill_service.config import ServiceConfig


class TestServiceConfig:
    def test_defaults(self):
        cfg = ServiceConfig(model="some/model")
        assert cfg.host == "127.0.0.1"
        assert cfg.port == 8008
        assert cfg.max_batch_size == 8
        assert cfg.temperature == 1.0
        assert cfg.top_p == 0.95
        assert cfg.max_new_tokens == 24

    def test_decode_metadata_echoes_settings(self):
        cfg = ServiceConfig(model="m", temperature=0.7, top_p=0.9, max_new_tokens=12)
        assert cfg.decode_metadata() == {
            "model": "m",
            "temperature": 0.7,
            "top_p": 0.9,
            "max_new_tokens": 12,
        }

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"model": ""},
            {"model": "m", "port": 0},
            {"model": "m", "port": 70000},
            {"model": "m", "max_batch_size": 0},
            {"model": "m", "temperature": 0.0},
            {"model": "m", "temperature": -1.0},
            {"model": "m", "top_p": 0.0},
            {"model": "m", "top_p": 1.5},
            {"model": "m", "max_new_tokens": 0},
        ],
    )
    def test_rejects_bad_settings(self, kwargs):
        with pytest.raises(ValueError):
            ServiceConfig(**kwargs)
