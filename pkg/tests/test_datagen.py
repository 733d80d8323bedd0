from vemd import settings
from vemd.datagen import (SceneSpec, packing_limit, class_arm_angle, generate_scene,
                          generate_dataset, VideoDataset)
from vemd.annotations import load_manifest, manifest_stats, limb_angle_histogram
from vemd.utils import ConfigError
from vemd import dataio
import os
import numpy as np
import pytest

settings.verbose = False


###################################### scene specification
def test_packing_limit():
    assert packing_limit((224, 224)) == 12
    assert packing_limit((96, 96)) == 4
    assert class_arm_angle(0, 3) == -75
    assert class_arm_angle(2, 3) == 75
    with pytest.raises(ConfigError):
        SceneSpec(group_size=13, image_size=224).validate()
    with pytest.raises(ConfigError):
        SceneSpec(emotion_class=3, num_classes=3).validate()
    with pytest.raises(ConfigError):
        SceneSpec(image_size=(64, 64)).validate()


###################################### generate_scene
def test_generate_scene():
    spec = SceneSpec(group_size=3, emotion_class=1, frames=2, image_size=(96, 128), rng_seed=4)
    frames, ann, label = generate_scene(spec)
    assert frames.shape == (2, 3, 96, 128)
    assert frames.dtype == np.float32
    assert frames.min() >= 0 and frames.max() <= 1
    assert label == 1
    assert len(ann) == 2
    assert len(ann[0].persons_body) == 3
    assert ann[0].persons_body[0].num_limbs == 18
    assert ann[0].persons_face[0].num_limbs == 83

    # same seed, same scene
    frames2, _, _ = generate_scene(spec)
    assert np.array_equal(frames, frames2)
    other, _, _ = generate_scene(SceneSpec(group_size=3, emotion_class=1, frames=2,
                                           image_size=(96, 128), rng_seed=5))
    assert not np.array_equal(frames, other)

    empty, ann, _ = generate_scene(SceneSpec(group_size=0, frames=1, image_size=96))
    assert all(f.is_empty() for f in ann)


def test_variable_group_size():
    spec = SceneSpec(group_size=4, frames=12, image_size=96, rng_seed=1, min_group_size=1)
    _, ann, _ = generate_scene(spec)
    counts = [len(f.persons_body) for f in ann]
    assert min(counts) >= 1 and max(counts) <= 4
    assert len(set(counts)) > 1


###################################### generate_dataset
def test_generate_dataset(tmp_path):
    out = str(tmp_path / "synth")
    m = generate_dataset(out, num_videos=5, class_balance=[2, 1], frames=3,
                         group_size_range=(1, 3), image_size=96, previews=True,
                         class_names=["calm", "excited"])
    assert len(m) == 5
    assert sorted(m.labels().tolist()) == [0, 0, 0, 1, 1]
    for sub in ("frames", "annotations", "previews"):
        assert len(os.listdir(os.path.join(out, sub))) == 5

    m2 = load_manifest(os.path.join(out, "manifest.jsonl"))
    assert m2.class_names == ["calm", "excited"]
    assert [e["video_id"] for e in m2] == [e["video_id"] for e in m]
    video = dataio.loadFrames(m2.resolve(m2.entries[0]["path"]))
    assert video.shape == (3, 3, 96, 96)
    st = manifest_stats(m2)
    assert 1 <= st["max_bodies_per_frame"] <= 3
    assert st["class_counts"] == {"calm": 3, "excited": 2}

    # deterministic given the seed
    again = generate_dataset(str(tmp_path / "again"), num_videos=5, class_balance=[2, 1],
                             frames=3, group_size_range=(1, 3), image_size=96,
                             class_names=["calm", "excited"])
    assert again.labels().tolist() == m.labels().tolist()
    first = dataio.loadFrames(again.resolve(again.entries[0]["path"]))
    assert np.array_equal(first, video)
    seed1 = generate_dataset(str(tmp_path / "seed1"), num_videos=5, class_balance=[2, 1],
                             frames=3, group_size_range=(1, 3), image_size=96, seed=1,
                             class_names=["calm", "excited"])
    assert not np.array_equal(dataio.loadFrames(seed1.resolve(seed1.entries[0]["path"])), video)

    with pytest.raises(ConfigError):
        generate_dataset(str(tmp_path / "bad"), group_size_range=(3, 1))


###################################### VideoDataset
def test_video_dataset(tmp_path):
    out = str(tmp_path / "synth")
    m = generate_dataset(out, num_videos=3, frames=4, group_size_range=(1, 2), image_size=96)
    ds = VideoDataset(m, frames=2, heatmap_modalities=("body", "face"), image_size=64,
                      heatmap_size=16)
    it = ds[0]
    assert it["frames"].shape == (2, 3, 64, 64)
    assert it["heatmaps"]["body"].shape == (2, 18, 16, 16)
    assert it["heatmaps"]["face"].shape == (2, 83, 16, 16)
    assert [f.frame_index for f in it["annotations"]] == [0, 3]

    batch = VideoDataset.collate([ds[0], ds[1], ds[2]])
    assert batch["frames"].shape == (3, 2, 3, 64, 64)
    assert batch["label"].tolist() == m.labels().tolist()
    assert batch["heatmaps"]["body"].shape == (3, 2, 18, 16, 16)
    assert len(batch["annotations"]) == 3


###################################### classes are separable by limb angles
def test_limb_angle_baseline(tmp_path):
    from sklearn.linear_model import LogisticRegression

    m = generate_dataset(str(tmp_path / "synth"), num_videos=30, frames=2,
                         group_size_range=(1, 3), image_size=96)
    X = np.array([limb_angle_histogram([p for f in m.annotation(e).frames
                                        for p in f.persons_body], bins=8) for e in m])
    y = m.labels()
    assert sorted(set(y.tolist())) == [0, 1, 2]
    clf = LogisticRegression(C=100.0, max_iter=2000).fit(X, y)
    assert clf.score(X, y) >= 0.95
