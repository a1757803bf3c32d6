import random
import re

import jsonschema
import pytest
from fastapi.testclient import TestClient

from infill_service.app import create_app

from tinymodel import random_prompt, random_request

RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["proposals"],
    "properties": {
        "proposals": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["index", "candidates"],
                "additionalProperties": False,
                "properties": {
                    "index": {"type": "integer", "minimum": 0},
                    "candidates": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
        "metadata": {"type": "object"},
    },
}


def valid_body() -> dict:
    return {
        "text_with_masks": "there is <mask_0> on the table",
        "masks": [{"index": 0, "original": "a red ball", "banned_tokens": ["ball"]}],
        "num_candidates": 2,
        "seed": 7,
    }


class TestHealthz:
    def test_loading_until_startup_ran(self, service_config):
        bare_client = TestClient(create_app(service_config))
        response = bare_client.get("/healthz")
        assert response.status_code == 503
        assert response.json() == {"status": "loading"}

    def test_ok_once_model_is_loaded(self, client, service_config):
        response = client.get("/healthz")
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "ok"
        assert body["model"] == service_config.model

    def test_propose_unavailable_while_loading(self, service_config):
        bare_client = TestClient(create_app(service_config))
        response = bare_client.post("/v1/propose", json=valid_body())
        assert response.status_code == 503


class TestMalformedRequests:
    @pytest.mark.parametrize(
        "body",
        [
            {},
            {"masks": [{"index": 0}]},
            {"text_with_masks": "a <mask_0>"},
            {"text_with_masks": "a <mask_0>", "masks": []},
            {"text_with_masks": "a <mask_0>", "masks": "not a list"},
            {"text_with_masks": "a <mask_0>", "masks": [{"original": "x"}]},
            {"text_with_masks": "a <mask_0>", "masks": [{"index": -1}]},
            {"text_with_masks": "a <mask_0>", "masks": [{"index": 0, "extra": 1}]},
            {"text_with_masks": "a <mask_0>", "masks": [{"index": 0}], "num_candidates": 0},
            {"text_with_masks": "a <mask_0>", "masks": [{"index": 0}], "seed": "abc"},
            {"text_with_masks": "a <mask_0>", "masks": [{"index": 0}], "surprise": True},
            {
                "text_with_masks": "a <mask_0>",
                "masks": [{"index": 0, "banned_tokens": [1, 2]}],
            },
        ],
    )
    def test_schema_violations_are_400(self, client, body):
        response = client.post("/v1/propose", json=body)
        assert response.status_code == 400
        assert "error" in response.json()

    def test_non_json_body_is_400(self, client):
        response = client.post(
            "/v1/propose",
            content=b"{definitely not json",
            headers={"Content-Type": "application/json"},
        )
        assert response.status_code == 400

    def test_semantic_violations_are_400(self, client):
        body = valid_body()
        body["masks"].append({"index": 1, "original": "x", "banned_tokens": []})
        response = client.post("/v1/propose", json=body)
        assert response.status_code == 400
        assert "placeholder" in response.json()["error"]


class TestProposeEndpoint:
    def test_reply_matches_wire_schema(self, client):
        response = client.post("/v1/propose", json=valid_body())
        assert response.status_code == 200
        jsonschema.validate(response.json(), RESPONSE_SCHEMA)

    def test_fuzzed_valid_requests_conform(self, client):
        rng = random.Random(424243)
        for _ in range(50):
            body = random_request(rng)
            response = client.post("/v1/propose", json=body)
            assert response.status_code == 200, body
            reply = response.json()
            jsonschema.validate(reply, RESPONSE_SCHEMA)
            answered = [entry["index"] for entry in reply["proposals"]]
            assert answered == [mask["index"] for mask in body["masks"]]

    def test_fixed_seed_reply_is_stable(self, client):
        first = client.post("/v1/propose", json=valid_body())
        second = client.post("/v1/propose", json=valid_body())
        assert first.json() == second.json()

    def test_metadata_reports_decode_settings(self, client, service_config):
        reply = client.post("/v1/propose", json=valid_body()).json()
        assert reply["metadata"] == service_config.decode_metadata()


class TestDecodeBanSoundness:
    def test_hundred_masked_prompts_emit_no_banned_tokens(self, client):
        """Ban exactly the words the model wants to produce, then re-ask.

        A control pass with empty ban lists records which words the model
        samples for each mask. The banned pass forbids those words, so any
        gap in the decode-time ban (wrong segment, wrong case, wrong vocab
        ids) would leak a word the model demonstrably favors there.
        """
        rng = random.Random(55_556)
        prompts_checked = 0
        armed_masks = 0
        candidates_checked = 0
        for _ in range(100):
            num_masks = rng.randint(1, 2)
            text = random_prompt(rng, num_masks)

            def body_with(bans: dict[int, list[str]]) -> dict:
                return {
                    "text_with_masks": text,
                    "masks": [
                        {"index": i, "original": "red ball", "banned_tokens": bans[i]}
                        for i in range(num_masks)
                    ],
                    "num_candidates": 8,
                    "seed": rng.getrandbits(32),
                }

            control = client.post(
                "/v1/propose", json=body_with({i: [] for i in range(num_masks)})
            )
            assert control.status_code == 200
            emitted: dict[int, set[str]] = {i: set() for i in range(num_masks)}
            for entry in control.json()["proposals"]:
                for candidate in entry["candidates"]:
                    emitted[entry["index"]].update(
                        re.findall(r"\w+", candidate.casefold())
                    )
            bans = {i: sorted(emitted[i])[:4] for i in range(num_masks)}
            armed_masks += sum(1 for i in range(num_masks) if bans[i])

            response = client.post("/v1/propose", json=body_with(bans))
            assert response.status_code == 200
            for entry in response.json()["proposals"]:
                forbidden = set(bans[entry["index"]])
                for candidate in entry["candidates"]:
                    words = set(re.findall(r"\w+", candidate.casefold()))
                    assert not words & forbidden, (candidate, sorted(forbidden))
                    candidates_checked += 1
            prompts_checked += 1
        assert prompts_checked == 100
        assert armed_masks >= 50
        assert candidates_checked >= 50
