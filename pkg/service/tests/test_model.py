import re

import pytest

from infill_service.wire import InvalidRequest, ProposeRequest, WireMask

from tinymodel import NUM_SENTINELS


def request_for(text: str, indices: list[int], **kwargs) -> ProposeRequest:
    masks = [WireMask(index=i, original="red ball", banned_tokens=[]) for i in indices]
    return ProposeRequest(text_with_masks=text, masks=masks, **kwargs)


class TestPropose:
    def test_answers_every_requested_index(self, infill_model):
        reply = infill_model.propose(
            request_for("there is <mask_0> on the <mask_1>", [0, 1], num_candidates=3)
        )
        assert [entry["index"] for entry in reply["proposals"]] == [0, 1]
        for entry in reply["proposals"]:
            assert isinstance(entry["candidates"], list)
            assert len(entry["candidates"]) <= 3
            assert all(isinstance(c, str) and c for c in entry["candidates"])

    def test_metadata_echoes_decode_settings(self, infill_model, service_config):
        reply = infill_model.propose(request_for("a <mask_0> cat", [0]))
        assert reply["metadata"] == service_config.decode_metadata()

    def test_same_seed_same_reply(self, infill_model):
        request = request_for("the <mask_0> sat on the <mask_1>", [0, 1], num_candidates=4, seed=9)
        assert infill_model.propose(request) == infill_model.propose(request)

    def test_seed_changes_the_samples(self, infill_model):
        replies = [
            infill_model.propose(
                request_for("the <mask_0> sat on the <mask_1>", [0, 1], num_candidates=4, seed=s)
            )
            for s in range(5)
        ]
        assert any(replies[0]["proposals"] != other["proposals"] for other in replies[1:])

    def test_huge_seed_is_accepted(self, infill_model):
        reply = infill_model.propose(request_for("a <mask_0>", [0], seed=2**63 + 7))
        assert reply["proposals"][0]["index"] == 0

    def test_candidate_count_beyond_batch_size(self, infill_model, service_config):
        count = service_config.max_batch_size * 2 + 1
        reply = infill_model.propose(request_for("a <mask_0> dog", [0], num_candidates=count))
        assert len(reply["proposals"][0]["candidates"]) <= count

    def test_subset_of_masks_against_full_text(self, infill_model):
        masks = [WireMask(index=1, original="blue cup", banned_tokens=[])]
        reply = infill_model.propose(
            ProposeRequest(
                text_with_masks="there is <mask_0> near <mask_1>",
                masks=masks,
                num_candidates=2,
            )
        )
        assert [entry["index"] for entry in reply["proposals"]] == [1]

    def test_banned_words_never_emitted(self, infill_model):
        banned = ["ball", "table", "red", "the", "a", "on"]
        request = ProposeRequest(
            text_with_masks="there is <mask_0> on the table",
            masks=[WireMask(index=0, original="a red ball", banned_tokens=banned)],
            num_candidates=8,
            seed=3,
        )
        reply = infill_model.propose(request)
        for candidate in reply["proposals"][0]["candidates"]:
            words = set(re.findall(r"\w+", candidate.casefold()))
            assert not words & set(banned), candidate


class TestProposeRejections:
    def test_mask_index_missing_from_text(self, infill_model):
        with pytest.raises(InvalidRequest, match="no <mask_k> placeholder"):
            infill_model.propose(request_for("no placeholders here", [0]))

    def test_duplicate_mask_indices(self, infill_model):
        masks = [
            WireMask(index=0, original="a", banned_tokens=[]),
            WireMask(index=0, original="b", banned_tokens=[]),
        ]
        with pytest.raises(InvalidRequest, match="duplicate"):
            infill_model.propose(
                ProposeRequest(text_with_masks="a <mask_0> b", masks=masks)
            )

    def test_requested_slot_beyond_sentinel_inventory(self, infill_model):
        slot = NUM_SENTINELS + 3
        with pytest.raises(InvalidRequest, match="sentinel slots"):
            infill_model.propose(request_for(f"a <mask_{slot}> b", [slot]))

    def test_unrequested_slot_beyond_inventory_also_rejected(self, infill_model):
        text = f"a <mask_0> b <mask_{NUM_SENTINELS}> c"
        with pytest.raises(InvalidRequest, match="sentinel slots"):
            infill_model.propose(request_for(text, [0]))
