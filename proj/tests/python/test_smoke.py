"""Python smoke tests for the compiled module: one pass over every bound
operation against small known answers."""

import json
import math
import os
import shutil
import sys
import tempfile

import hanme

SYNTH = {
    "seed": 11,
    "num_classes": 2,
    "communities": 2,
    "intra_prob": 0.3,
    "inter_prob": 0.05,
    "feature_noise": 0.8,
    "node_types": [
        {"name": "movie", "count": 40, "feature_dim": 5},
        {"name": "director", "count": 10},
        {"name": "actor", "count": 10},
    ],
}


def approx(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    workdir = tempfile.mkdtemp(prefix="hanme_smoke_")
    try:
        data = os.path.join(workdir, "data")
        hanme.gen_synthetic(json.dumps(SYNTH), data)

        g = hanme.load_graph(data)
        assert g.node_count("movie") == 40
        assert g.feature_dim("movie") == 5
        assert g.feature_dim("director") == 0
        assert g.num_classes == 2
        assert len(g.train_ids) + len(g.val_ids) + len(g.test_ids) == 40

        hanme.assign_pooled_features(g, ["director", "actor"])
        assert g.feature_dim("director") == 5

        table = hanme.enumerate_instances(g, ["movie", "director", "movie"])
        assert table.num_sources == 40
        assert table.num_instances > 0
        for inst in table.instances(0):
            assert len(inst) == 3
            assert inst[0] == 0
        assert set(i[-1] for i in table.instances(0)) == set(table.neighbors(0))

        # The closed-form chain encoder must match the power-series route.
        w_h = [[0.2, -0.1, 0.05], [0.0, 0.3, -0.2], [0.1, 0.1, 0.1]]
        w_t = [[-0.3, 0.2, 0.0], [0.15, 0.0, 0.1], [0.05, -0.25, 0.2]]
        v_a = [0.1, -0.2, 0.3, -0.1, 0.2, -0.3]
        feats = [[1.0, 0.5, -0.25], [0.0, -1.0, 0.75], [0.5, 0.5, 0.5]]
        closed = hanme.multihop_encode(feats, w_h, w_t, v_a, 0.4, 0.2)
        series = hanme.diffusion_series_encode(feats, w_h, w_t, v_a, 0.4, 0.2)
        assert all(approx(a, b, 1e-12) for a, b in zip(closed, series))

        scores = hanme.one_hop_scores(feats, w_h, w_t, v_a)
        assert len(scores) == 3
        assert all(0.0 < s < 1.0 for s in scores)

        direct = hanme.direct_encode(feats, w_t, w_h)
        assert len(direct) == 3
        assert all(math.isfinite(v) for v in direct)

        # Pacing endpoints and midpoints.
        assert hanme.pacing("linear", 0.1, 10, 0) == 0.1
        assert hanme.pacing("linear", 0.1, 10, 10) == 1.0
        assert approx(hanme.pacing("linear", 0.1, 10, 5), 0.55, 1e-12)
        assert approx(hanme.pacing("geometric", 0.1, 10, 5), 0.31622776601683794, 1e-9)

        assert hanme.select_nodes_lts([3.0, 1.0, 2.0], [0, 1, 2], 1.0 / 3.0) == [1]
        assert hanme.select_nodes_lts([2.0, 2.0, 2.0], [5, 2, 9], 2.0 / 3.0) == [2, 5]

        micro, macro = hanme.f1_scores([[5.0, -5.0], [5.0, -5.0]],
                                       [[1.0, 1.0], [0.0, 0.0]])
        assert approx(micro, 0.5, 1e-12)
        assert approx(macro, 1.0 / 3.0, 1e-12)

        # A short training run plus checkpoint evaluation.
        opts = hanme.TrainOptions()
        opts.encoder = "multihop"
        opts.heads = 2
        opts.hidden = 8
        opts.semantic_hidden = 8
        opts.dropout = 0.2
        opts.lr = 0.01
        opts.max_epochs = 8
        opts.patience = 10
        opts.lts = "linear"
        opts.lambda0 = 0.2
        opts.pace_T = 6
        opts.seed = 483
        run_dir = os.path.join(workdir, "run")
        result = hanme.train(opts, data, run_dir)
        assert result["epochs_run"] == 8
        assert os.path.exists(result["checkpoint"])
        assert os.path.exists(result["history"])
        assert set(result["semantic_betas"]) == {
            "movie-director-movie",
            "movie-actor-movie",
        }
        assert approx(sum(result["semantic_betas"].values()), 1.0, 1e-12)

        ev = hanme.evaluate(result["checkpoint"], data, "val")
        assert approx(ev["micro_f1"], result["best_val_micro_f1"], 0.0)

        # Error surfaces map onto python exceptions.
        try:
            hanme.load_graph(os.path.join(workdir, "nope"))
        except ValueError as e:
            assert "manifest.json" in str(e)
        else:
            raise AssertionError("missing dataset should raise")

        print("python smoke: all checks passed")
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


if __name__ == "__main__":
    sys.exit(main())
