"""Workspace directory: stage artifacts, fingerprint tracking, and the run lock.

Every artifact has one producing stage. Completed stages record the SHA-256
of each input and output file in state.json; re-running with identical
fingerprints and config is a no-op, and an artifact that no longer matches
what its producer recorded stops the run unless forced.
"""

import hashlib
import json
import os
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path


class DependencyError(RuntimeError):
    """An upstream artifact is missing; the message names the stage to run."""


class FingerprintError(RuntimeError):
    """An artifact on disk no longer matches what its producing stage recorded."""


class WorkspaceLockedError(RuntimeError):
    """Another run holds the workspace lock."""


# artifact name -> (relative path, producing stage)
ARTIFACTS: dict[str, tuple[str, str]] = {
    "corpus": ("corpus.jsonl", "ingest"),
    "split": ("split.json", "ingest"),
    "doc_embeddings": ("doc_embeddings.npy", "encode"),
    "cluster_model": ("cluster.model", "cluster"),
    "candidates": ("candidates.jsonl", "generate"),
    "probes": ("probes.jsonl", "probe"),
    "bank": ("bank.jsonl", "select"),
    "answers": ("answers.jsonl", "collect"),
    "train_examples": ("train_examples.jsonl", "collect"),
    "heldout_examples": ("heldout_examples.jsonl", "collect"),
    "heads": ("heads.bin", "train"),
    "heldout_report": ("reports/heldout.json", "train"),
    "matrix": ("embeddings.bin", "embed"),
    "embed_meta": ("embed_meta.json", "embed"),
    "sts_report": ("reports/sts.json", "eval-sts"),
    "retrieval_report": ("reports/retrieval.json", "eval-retrieval"),
    "clustering_report": ("reports/clustering.json", "eval-clustering"),
    "explanations": ("reports/explanations.jsonl", "explain"),
    "ablation_report": ("reports/ablate.jsonl", "ablate"),
    "cost_report": ("reports/cost.jsonl", "cost"),
}

_STATE_FILE = "state.json"
_LOCK_FILE = "lock"
_RUN_LOG = "run_log.jsonl"


def file_fingerprint(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()[:16]


@dataclass
class StageRecord:
    config: str
    inputs: dict[str, str]
    outputs: dict[str, str]


class Workspace:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "reports").mkdir(exist_ok=True)

    def path(self, artifact: str) -> Path:
        return self.root / ARTIFACTS[artifact][0]

    def producer(self, artifact: str) -> str:
        return ARTIFACTS[artifact][1]

    # -- stage state ---------------------------------------------------------

    def _load_state(self) -> dict:
        state_path = self.root / _STATE_FILE
        if not state_path.exists():
            return {"stages": {}}
        return json.loads(state_path.read_text(encoding="utf-8"))

    def _save_state(self, state: dict) -> None:
        text = json.dumps(state, indent=2, sort_keys=True)
        (self.root / _STATE_FILE).write_text(text + "\n", encoding="utf-8")

    def stage_record(self, stage: str) -> StageRecord | None:
        rec = self._load_state()["stages"].get(stage)
        if rec is None:
            return None
        return StageRecord(config=rec["config"], inputs=rec["inputs"],
                           outputs=rec["outputs"])

    def record_stage(self, stage: str, config_hash: str,
                     inputs: dict[str, str], outputs: dict[str, str]) -> None:
        state = self._load_state()
        state["stages"][stage] = {"config": config_hash, "inputs": inputs,
                                  "outputs": outputs}
        self._save_state(state)

    def clear_stage(self, stage: str) -> None:
        state = self._load_state()
        state["stages"].pop(stage, None)
        self._save_state(state)

    # -- dependency and staleness checks -------------------------------------

    def require_inputs(self, stage: str, artifacts: list[str]) -> dict[str, str]:
        """Fingerprint each input artifact; missing file names its producer."""
        fps = {}
        for artifact in artifacts:
            path = self.path(artifact)
            if not path.exists():
                raise DependencyError(
                    f"stage '{stage}' needs {path.name}; "
                    f"run stage '{self.producer(artifact)}' first")
            fps[artifact] = file_fingerprint(path)
        return fps

    def verify_chain(self, stage: str, input_fps: dict[str, str],
                     force: bool = False) -> None:
        """Inputs must match what their producing stages recorded as outputs."""
        if force:
            return
        state = self._load_state()["stages"]
        for artifact, current in input_fps.items():
            producer = self.producer(artifact)
            rec = state.get(producer)
            if rec is None:
                continue  # produced out of band; nothing recorded to check
            recorded = rec["outputs"].get(artifact)
            if recorded is not None and recorded != current:
                raise FingerprintError(
                    f"stage '{stage}': {self.path(artifact).name} changed since "
                    f"stage '{producer}' produced it (recorded {recorded}, "
                    f"found {current}); re-run '{producer}' or pass --force")

    def up_to_date(self, stage: str, config_hash: str,
                   input_fps: dict[str, str]) -> bool:
        rec = self.stage_record(stage)
        if rec is None or rec.config != config_hash or rec.inputs != input_fps:
            return False
        # outputs must still exist and match
        for artifact, fp in rec.outputs.items():
            path = self.path(artifact)
            if not path.exists() or file_fingerprint(path) != fp:
                return False
        return True

    def fingerprint_outputs(self, artifacts: list[str]) -> dict[str, str]:
        return {a: file_fingerprint(self.path(a)) for a in artifacts}

    # -- run log and lock -----------------------------------------------------

    def log(self, record: dict) -> None:
        with open(self.root / _RUN_LOG, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    @contextmanager
    def locked(self):
        lock_path = self.root / _LOCK_FILE
        try:
            fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise WorkspaceLockedError(
                f"workspace {self.root} is locked; if no other run is active, "
                f"remove {lock_path}") from None
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            yield self
        finally:
            try:
                os.unlink(lock_path)
            except FileNotFoundError:
                pass
