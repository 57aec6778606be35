"""Score binary embeddings on similarity, retrieval, and clustering tasks.

Runs the bundled pipeline end to end in a temporary workspace, then reads
the three evaluation reports it produced: Spearman correlation against gold
similarity, nDCG@10 for retrieval, and V-measure for clustering, plus the
cognitive load (shared yes answers) a reader needs per similarity judgment.
"""

import json
import tempfile
from pathlib import Path

from qembed.config import load_config
from qembed.pipeline import run_all, write_demo_workspace
from qembed.workspace import Workspace


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp) / "ws"
        config_path = write_demo_workspace(root, seed=0, n_per_topic=16,
                                           steps=2500, hidden=8, dim=64,
                                           sts_pairs=60)
        ws = Workspace(root)
        print("running all pipeline stages on 64 synthetic documents...")
        run_all(load_config(config_path), ws, config_dir=root)

        sts = json.loads(ws.path("sts_report").read_text())
        retrieval = json.loads(ws.path("retrieval_report").read_text())
        clustering = json.loads(ws.path("clustering_report").read_text())

        print(f"\nsimilarity:  spearman {sts['spearman']:.4f} "
              f"({sts['pairs']} scored pairs)")
        print(f"             mean cognitive load {sts['mean_cognitive_load']:.2f} "
              f"questions per judgment")
        print(f"retrieval:   mean nDCG@10 {retrieval['mean_ndcg']:.4f} "
              f"over {len(retrieval['per_query'])} queries")
        print(f"clustering:  v-measure {clustering['v_measure']:.4f}")

        print("\nper-query nDCG:")
        for qid, score in sorted(retrieval["per_query"].items()):
            print(f"  {qid:24} {score:.4f}")


if __name__ == "__main__":
    main()
