import json

import pytest

from qembed.workspace import (
    ARTIFACTS,
    DependencyError,
    FingerprintError,
    Workspace,
    WorkspaceLockedError,
    file_fingerprint,
)


@pytest.fixture
def ws(tmp_path):
    return Workspace(tmp_path / "ws")


class TestLayout:
    def test_every_artifact_has_a_producer(self):
        stages = {producer for _, producer in ARTIFACTS.values()}
        assert "ingest" in stages and "train" in stages
        for name, (rel, producer) in ARTIFACTS.items():
            assert rel and producer

    def test_paths_under_root(self, ws):
        for name in ARTIFACTS:
            assert ws.path(name).is_relative_to(ws.root)

    def test_reports_dir_created(self, ws):
        assert (ws.root / "reports").is_dir()


class TestFingerprints:
    def test_file_fingerprint_stable_and_sensitive(self, tmp_path):
        f = tmp_path / "x"
        f.write_text("hello")
        a = file_fingerprint(f)
        assert a == file_fingerprint(f)
        f.write_text("hello!")
        assert file_fingerprint(f) != a

    def test_require_inputs_names_producer(self, ws):
        with pytest.raises(DependencyError, match="run stage 'probe' first"):
            ws.require_inputs("select", ["probes"])

    def test_require_inputs_returns_fps(self, ws):
        ws.path("probes").write_text("{}\n")
        fps = ws.require_inputs("select", ["probes"])
        assert fps == {"probes": file_fingerprint(ws.path("probes"))}

    def test_verify_chain_detects_tamper(self, ws):
        ws.path("bank").write_text("original\n")
        fp = file_fingerprint(ws.path("bank"))
        ws.record_stage("select", "cfg", {}, {"bank": fp})
        ws.path("bank").write_text("tampered\n")
        current = {"bank": file_fingerprint(ws.path("bank"))}
        with pytest.raises(FingerprintError, match="select"):
            ws.verify_chain("collect", current)
        ws.verify_chain("collect", current, force=True)  # force bypasses

    def test_verify_chain_ignores_unrecorded_producers(self, ws):
        ws.path("bank").write_text("out of band\n")
        ws.verify_chain("collect", {"bank": file_fingerprint(ws.path("bank"))})


class TestUpToDate:
    def test_fresh_stage_not_up_to_date(self, ws):
        assert not ws.up_to_date("cluster", "cfg", {})

    def test_recorded_stage_up_to_date(self, ws):
        ws.path("cluster_model").write_text("model\n")
        out = {"cluster_model": file_fingerprint(ws.path("cluster_model"))}
        ws.record_stage("cluster", "cfg", {"corpus": "abc"}, out)
        assert ws.up_to_date("cluster", "cfg", {"corpus": "abc"})
        assert not ws.up_to_date("cluster", "cfg2", {"corpus": "abc"})
        assert not ws.up_to_date("cluster", "cfg", {"corpus": "def"})

    def test_missing_output_not_up_to_date(self, ws):
        ws.path("cluster_model").write_text("model\n")
        out = {"cluster_model": file_fingerprint(ws.path("cluster_model"))}
        ws.record_stage("cluster", "cfg", {}, out)
        ws.path("cluster_model").unlink()
        assert not ws.up_to_date("cluster", "cfg", {})

    def test_clear_stage(self, ws):
        ws.record_stage("cluster", "cfg", {}, {})
        ws.clear_stage("cluster")
        assert ws.stage_record("cluster") is None


class TestLockAndLog:
    def test_lock_exclusive(self, ws):
        with ws.locked():
            with pytest.raises(WorkspaceLockedError, match="locked"):
                with ws.locked():
                    pass
        # released after the context exits
        with ws.locked():
            pass

    def test_log_appends_jsonl(self, ws):
        ws.log({"stage": "cluster", "status": "ran"})
        ws.log({"stage": "generate", "status": "skipped"})
        lines = (ws.root / "run_log.jsonl").read_text().strip().split("\n")
        assert [json.loads(l)["stage"] for l in lines] == ["cluster", "generate"]
