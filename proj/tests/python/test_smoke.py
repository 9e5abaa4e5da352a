import json
import math

import pytest

import cqr

SMALL = {
    "world.num_users": 40,
    "world.num_clusters": 4,
    "world.weeks_history": 4,
    "guardrail_size": 80,
    "epochs": 30,
}


def test_text_helpers():
    assert cqr.normalize_utterance("  Play   JAZZ ") == "play jazz"
    assert cqr.normalized_edit_distance("abc", "abd") == pytest.approx(1 / 3)
    assert cqr.token_set_jaccard("pink", "pink floyd") == 0.5


def test_encoder():
    v = cqr.encode("play jazz")
    assert len(v) == 256
    assert math.isclose(sum(x * x for x in v), 1.0, rel_tol=1e-12)
    assert cqr.similarity("play jazz", "Play Jazz") == 1.0
    assert cqr.similarity("play jazz", "turn on the light") < 0.5


def test_config_items_apply_settings(tmp_path):
    items = dict(cqr.config_items(str(tmp_path), {"world.seed": 9, "trigger_threshold": 0.7}))
    assert items["world.seed"] == "9"
    assert float(items["trigger_threshold"]) == 0.7
    with pytest.raises(KeyError):
        cqr.config_items(str(tmp_path), {"bogus": 1})


def test_missing_artifact(tmp_path):
    with pytest.raises(cqr.MissingArtifact):
        cqr.build_graph(str(tmp_path))
    with pytest.raises(FileNotFoundError):
        cqr.build_graph(str(tmp_path))


def test_pipeline_end_to_end(tmp_path):
    report = cqr.run_pipeline(str(tmp_path), SMALL)
    records = [json.loads(line) for line in report.splitlines() if line]
    kinds = {r["record"] for r in records}
    assert {"experiment", "metrics", "hop_coverage", "cap_coverage"} <= kinds
    hop1 = next(r for r in records if r["record"] == "hop_coverage" and r["hop"] == 1)
    assert hop1["query_level"]["covered"] == 0

    g = cqr.Graph.load(str(tmp_path / "graph.fig"))
    assert g.num_users > 0
    user = g.users()[0]
    assert len(g.history_index(user)) <= 100
    a = g.collaborative_index(user, "traversal", 100)
    b = g.collaborative_index(user, "traversal", 200)
    assert b[: len(a)] == a

    pairs = cqr.mine_opportunity_pairs(str(tmp_path / "logs.tsv"))
    assert pairs and {"user_id", "defective_utterance", "rewrite_label"} <= set(pairs[0])

    service = cqr.RewriteService(str(tmp_path), SMALL)
    assert not service.default_weights_used
    reply = service.answer("nobody", "play jazz")
    assert reply["triggered"] is False


def test_prediction_interchange(tmp_path):
    out = tmp_path / "resp.jsonl"
    cqr.write_prediction_response(str(out), [("u1", "music", ["Jolene", "Fancy, live"]), ("u1", "video", ["The Wall"])])
    by_user, rejects = cqr.read_predictions(str(out))
    assert rejects == []
    assert by_user["u1"] == [("music", ["Jolene", "Fancy, live"]), ("video", ["The Wall"])]

    cqr.synth(str(tmp_path), SMALL)
    cqr.build_graph(str(tmp_path), SMALL)
    cqr.predict_links(str(tmp_path), SMALL, export_requests=True)
    reqs = cqr.read_prediction_requests(str(tmp_path / "prediction_requests.jsonl"))
    assert reqs and reqs[0]["domain"] in ("music", "video")
