import math

import torch
from transformers import AutoTokenizer

from infill_service.banning import SegmentBanProcessor, ban_ids, sentinel_table, surface_table

from tinymodel import NUM_SENTINELS


class TestSentinelTable:
    def test_finds_every_sentinel(self, model_dir):
        tokenizer = AutoTokenizer.from_pretrained(model_dir)
        table = sentinel_table(tokenizer)
        assert sorted(table.values()) == list(range(NUM_SENTINELS))

    def test_ids_round_trip_through_tokenizer(self, model_dir):
        tokenizer = AutoTokenizer.from_pretrained(model_dir)
        for token_id, slot in sentinel_table(tokenizer).items():
            assert tokenizer.convert_ids_to_tokens(token_id) == f"<extra_id_{slot}>"


class TestSurfaceTable:
    def test_case_variants_share_a_surface(self, model_dir):
        tokenizer = AutoTokenizer.from_pretrained(model_dir)
        surfaces = surface_table(tokenizer)
        vocab = tokenizer.get_vocab()
        assert surfaces["ball"] == tuple(
            sorted((vocab["▁ball"], vocab["▁Ball"]))
        )

    def test_plain_words_map_to_their_piece(self, model_dir):
        tokenizer = AutoTokenizer.from_pretrained(model_dir)
        surfaces = surface_table(tokenizer)
        vocab = tokenizer.get_vocab()
        assert surfaces["bottles"] == (vocab["▁bottles"],)

    def test_whitespace_only_pieces_are_dropped(self, model_dir):
        tokenizer = AutoTokenizer.from_pretrained(model_dir)
        assert "" not in surface_table(tokenizer)


class TestBanIds:
    def test_union_over_banned_list(self, model_dir):
        tokenizer = AutoTokenizer.from_pretrained(model_dir)
        surfaces = surface_table(tokenizer)
        vocab = tokenizer.get_vocab()
        ids = ban_ids(surfaces, ["bottles", "shelf"])
        assert ids == tuple(sorted((vocab["▁bottles"], vocab["▁shelf"])))

    def test_lookup_is_case_folded(self, model_dir):
        tokenizer = AutoTokenizer.from_pretrained(model_dir)
        surfaces = surface_table(tokenizer)
        assert ban_ids(surfaces, ["BALL"]) == surfaces["ball"]

    def test_unknown_words_ban_nothing(self, model_dir):
        tokenizer = AutoTokenizer.from_pretrained(model_dir)
        assert ban_ids(surface_table(tokenizer), ["zebra"]) == ()


class TestSegmentBanProcessor:
    def test_bans_follow_the_active_sentinel(self):
        sentinels = {100: 0, 101: 1}
        bans = {0: (5, 6), 1: (7,)}
        processor = SegmentBanProcessor(sentinels, bans)
        input_ids = torch.tensor(
            [
                [0, 3, 4, 4],  # no sentinel yet
                [0, 100, 3, 3],  # inside slot 0
                [0, 100, 3, 101],  # slot 1 took over
            ]
        )
        scores = torch.zeros(3, 10)
        out = processor(input_ids, scores)
        assert torch.isfinite(out[0]).all()
        assert out[1, 5] == -math.inf and out[1, 6] == -math.inf
        assert torch.isfinite(out[1, 7])
        assert out[2, 7] == -math.inf
        assert torch.isfinite(out[2, 5]) and torch.isfinite(out[2, 6])

    def test_slot_without_bans_is_untouched(self):
        processor = SegmentBanProcessor({100: 0}, {0: ()})
        input_ids = torch.tensor([[0, 100]])
        scores = torch.zeros(1, 8)
        assert torch.isfinite(processor(input_ids, scores)).all()

    def test_rows_are_independent(self):
        processor = SegmentBanProcessor({100: 0, 101: 1}, {0: (2,), 1: (3,)})
        input_ids = torch.tensor([[0, 100, 5], [0, 101, 5]])
        scores = torch.zeros(2, 8)
        out = processor(input_ids, scores)
        assert out[0, 2] == -math.inf and torch.isfinite(out[0, 3])
        assert out[1, 3] == -math.inf and torch.isfinite(out[1, 2])
