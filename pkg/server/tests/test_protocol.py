import threading

import pytest
import requests

from logitsd.app import ModelHost, create_app
from logitsd.models import CharTokenizer, load_model

from conftest import ServerThread


class TestMeta:
    def test_fields(self, endpoint):
        meta = requests.get(f"{endpoint}/v1/meta", timeout=10).json()
        assert meta["vocab_size"] == 103
        assert 0 <= meta["eos_id"] < meta["vocab_size"]
        assert meta["max_context"] == 512
        assert meta["model_id"].startswith("tiny-char-lm")
        assert meta["architecture"] == "decoder-only"

    def test_constant_across_calls(self, endpoint):
        first = requests.get(f"{endpoint}/v1/meta", timeout=10).json()
        second = requests.get(f"{endpoint}/v1/meta", timeout=10).json()
        assert first == second


class TestTokenizePair:
    def test_roundtrip_ascii(self, endpoint):
        text = "Answer the following question. Question: Q? Answer: "
        ids = requests.post(f"{endpoint}/v1/tokenize", json={"text": text}, timeout=10).json()["ids"]
        back = requests.post(f"{endpoint}/v1/detokenize", json={"ids": ids}, timeout=10).json()["text"]
        assert back == text

    def test_non_ascii_dropped_to_fixed_point(self, endpoint):
        ids = requests.post(
            f"{endpoint}/v1/tokenize", json={"text": "café ☃"}, timeout=10
        ).json()["ids"]
        once = requests.post(f"{endpoint}/v1/detokenize", json={"ids": ids}, timeout=10).json()["text"]
        ids2 = requests.post(f"{endpoint}/v1/tokenize", json={"text": once}, timeout=10).json()["ids"]
        twice = requests.post(f"{endpoint}/v1/detokenize", json={"ids": ids2}, timeout=10).json()["text"]
        assert once == twice == "caf "

    def test_empty(self, endpoint):
        assert requests.post(f"{endpoint}/v1/tokenize", json={"text": ""}, timeout=10).json()["ids"] == []
        assert requests.post(f"{endpoint}/v1/detokenize", json={"ids": []}, timeout=10).json()["text"] == ""


class TestLogits:
    def test_vocab_size_matches_meta(self, endpoint):
        meta = requests.get(f"{endpoint}/v1/meta", timeout=10).json()
        logits = requests.post(f"{endpoint}/v1/logits", json={"ids": [1, 2, 3]}, timeout=20).json()["logits"]
        assert len(logits) == meta["vocab_size"]

    def test_repeated_calls_identical(self, endpoint):
        body = {"ids": [5, 10, 15, 20]}
        first = requests.post(f"{endpoint}/v1/logits", json=body, timeout=20).json()["logits"]
        second = requests.post(f"{endpoint}/v1/logits", json=body, timeout=20).json()["logits"]
        assert max(abs(a - b) for a, b in zip(first, second)) < 1e-6

    def test_empty_prefix_allowed(self, endpoint):
        logits = requests.post(f"{endpoint}/v1/logits", json={"ids": []}, timeout=20).json()["logits"]
        assert len(logits) == 103


class TestErrorCodes:
    def test_400_on_malformed_ids(self, endpoint):
        for bad in (["a", "b"], "nope", [1.5], [True], None):
            resp = requests.post(f"{endpoint}/v1/logits", json={"ids": bad}, timeout=10)
            assert resp.status_code == 400, f"ids={bad!r} gave {resp.status_code}"

    def test_400_on_out_of_range_ids(self, endpoint):
        resp = requests.post(f"{endpoint}/v1/logits", json={"ids": [9999]}, timeout=10)
        assert resp.status_code == 400

    def test_400_on_decoder_ids_for_decoder_only(self, endpoint):
        resp = requests.post(
            f"{endpoint}/v1/logits", json={"ids": [1], "decoder_ids": [2]}, timeout=10
        )
        assert resp.status_code == 400

    def test_413_on_over_length_context(self, endpoint):
        resp = requests.post(f"{endpoint}/v1/logits", json={"ids": [1] * 513}, timeout=10)
        assert resp.status_code == 413

    def test_503_while_model_not_loaded(self):
        server = ServerThread(create_app(ModelHost(adapter=None)))
        url = server.start()
        try:
            assert requests.get(f"{url}/v1/meta", timeout=10).status_code == 503
            assert requests.post(f"{url}/v1/tokenize", json={"text": "x"}, timeout=10).status_code == 503
            assert requests.post(f"{url}/v1/logits", json={"ids": []}, timeout=10).status_code == 503
        finally:
            server.stop()


class TestSeq2Seq:
    def test_meta_declares_encoder_decoder(self, seq2seq_endpoint):
        meta = requests.get(f"{seq2seq_endpoint}/v1/meta", timeout=10).json()
        assert meta["architecture"] == "encoder-decoder"

    def test_decoder_ids_shape_accepted(self, seq2seq_endpoint):
        tok = CharTokenizer()
        body = {"ids": tok.tokenize("encode this"), "decoder_ids": tok.tokenize("gen")}
        logits = requests.post(f"{seq2seq_endpoint}/v1/logits", json=body, timeout=30).json()["logits"]
        assert len(logits) == 103

    def test_decoder_prefix_changes_distribution(self, seq2seq_endpoint):
        tok = CharTokenizer()
        ids = tok.tokenize("encode this")
        without = requests.post(
            f"{seq2seq_endpoint}/v1/logits", json={"ids": ids, "decoder_ids": []}, timeout=30
        ).json()["logits"]
        with_prefix = requests.post(
            f"{seq2seq_endpoint}/v1/logits",
            json={"ids": ids, "decoder_ids": tok.tokenize("abc")},
            timeout=30,
        ).json()["logits"]
        assert without != with_prefix

    def test_deterministic(self, seq2seq_endpoint):
        tok = CharTokenizer()
        body = {"ids": tok.tokenize("same"), "decoder_ids": tok.tokenize("x")}
        first = requests.post(f"{seq2seq_endpoint}/v1/logits", json=body, timeout=30).json()["logits"]
        second = requests.post(f"{seq2seq_endpoint}/v1/logits", json=body, timeout=30).json()["logits"]
        assert max(abs(a - b) for a, b in zip(first, second)) < 1e-6


class TestStatelessness:
    def test_interleaved_runs_match_serial(self, endpoint):
        """Two interleaved decode-style request streams equal serial replay."""
        run_a = [[1, 2], [1, 2, 30], [1, 2, 30, 40]]
        run_b = [[9], [9, 8], [9, 8, 7]]

        def fetch(ids):
            return requests.post(f"{endpoint}/v1/logits", json={"ids": ids}, timeout=20).json()["logits"]

        serial_a = [fetch(ids) for ids in run_a]
        serial_b = [fetch(ids) for ids in run_b]

        interleaved: dict[str, list] = {"a": [], "b": []}
        for step in range(3):
            interleaved["a"].append(fetch(run_a[step]))
            interleaved["b"].append(fetch(run_b[step]))
        assert interleaved["a"] == serial_a
        assert interleaved["b"] == serial_b

    def test_concurrent_requests_consistent(self, endpoint):
        from concurrent.futures import ThreadPoolExecutor

        bodies = [{"ids": [i, i + 1, i + 2]} for i in range(10)]

        def fetch(body):
            return requests.post(f"{endpoint}/v1/logits", json=body, timeout=30).json()["logits"]

        serial = [fetch(b) for b in bodies]
        with ThreadPoolExecutor(max_workers=5) as pool:
            concurrent = list(pool.map(fetch, bodies))
        for a, b in zip(serial, concurrent):
            assert max(abs(x - y) for x, y in zip(a, b)) < 1e-6


class TestModelSpecs:
    def test_unknown_spec_rejected(self):
        with pytest.raises(ValueError):
            load_model("quantum:foo")

    def test_tiny_seeds_differ(self):
        a = load_model("tiny:1")
        b = load_model("tiny:2")
        la = a.logits([1, 2, 3])
        lb = b.logits([1, 2, 3])
        assert la != lb
