from vemd import settings
from vemd.harness import ExperimentConfig, expand_grid, train, evaluate
from vemd.datagen import generate_dataset
import os
import pytest

settings.verbose = False

slow = pytest.mark.skipif(not os.environ.get("VEMD_SLOW_TESTS"),
                          reason="set VEMD_SLOW_TESTS=1 to run the learning checks")


@pytest.fixture(scope="module")
def synth30(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("synth30"))
    generate_dataset(out, num_videos=30, frames=5, group_size_range=(1, 6), seed=0)
    return os.path.join(out, "manifest.jsonl")


###################################### overfit the synthetic set with the heatmap decoder
@slow
def test_heatmap_reaches_train_accuracy(synth30, tmp_path):
    cfg = ExperimentConfig(dataset=synth30, decoder="heatmap", sr_modality="body+face",
                           epochs=50, seed=0)
    res = train(cfg, str(tmp_path / "run"))
    rep = evaluate(res["run_dir"])
    assert rep.n == 30
    assert rep.accuracy >= 0.95


###################################### every structural variant trains
@slow
def test_ablation_grid_shapes(synth30, tmp_path):
    grid = expand_grid(dict(dataset=synth30, sr_to_decoder=True, epochs=1, scale="tiny"),
                       dict(decoder=["personquery", "heatmap"],
                            sr_modality=["body", "face", "body+face"],
                            projection=["raw", 0.5, 1, 2, 3, 4],
                            query_policy=["50", "Q_max"]))
    unique = dict((c.hash(), c) for c in grid)
    assert len(unique) == 2 * 3 * 6 + 3 * 6
    for i, cfg in enumerate(unique.values()):
        res = train(cfg, str(tmp_path / ("run%d" % i)))
        assert res["trace"]
