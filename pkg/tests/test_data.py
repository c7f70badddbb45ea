import numpy as np
import pytest

from simulearn.data import (
    GroupedDataset,
    Sample,
    SyntheticConfig,
    compose_batch,
    epoch_plan,
    load_image_dir,
    save_image_dir,
    synth_generate,
)
from simulearn.errors import DatasetError
from simulearn.groups import AUXILIARY, TARGET, GroupLayout


def make_samples(group, cls, count, dim=3):
    return [Sample(np.full(dim, float(cls)), group, cls) for _ in range(count)]


def toy_dataset(n_train=20, n_aux=30, k=2, m=3):
    layout = GroupLayout(k=k, m=m)
    train = [s for c in range(k) for s in make_samples(TARGET, c, n_train // k)]
    aux = [s for c in range(m) for s in make_samples(AUXILIARY, c, n_aux // m)]
    return GroupedDataset(layout, train, [], [], aux)


class TestComposeBatch:
    def test_half_and_half(self):
        ds = toy_dataset(n_train=32, n_aux=40)
        rng = np.random.default_rng(0)
        batch = compose_batch(ds.layout, ds.target_train[:16], ds.aux_pool, 32, rng)
        groups = [g for g, _ in batch.provenance]
        assert groups.count(TARGET) == 16
        assert groups.count(AUXILIARY) == 16
        assert batch.inputs.shape[0] == 32
        assert batch.labels.shape == (32, ds.layout.n)

    def test_no_duplicate_auxiliary_within_step(self):
        ds = toy_dataset(n_train=32, n_aux=18)
        rng = np.random.default_rng(1)
        for _ in range(50):
            batch = compose_batch(ds.layout, ds.target_train[:16], ds.aux_pool, 32, rng)
            aux_ids = [i for g, i in batch.provenance if g == AUXILIARY]
            assert len(aux_ids) == len(set(aux_ids))

    def test_pool_of_exactly_half_batch_is_used_whole(self):
        ds = toy_dataset(n_train=8, n_aux=4, m=2)
        rng = np.random.default_rng(2)
        batch = compose_batch(ds.layout, ds.target_train[:4], ds.aux_pool, 8, rng)
        aux_ids = sorted(i for g, i in batch.provenance if g == AUXILIARY)
        assert aux_ids == [0, 1, 2, 3]

    def test_deterministic_given_seed(self):
        ds = toy_dataset()
        b1 = compose_batch(ds.layout, ds.target_train[:4], ds.aux_pool, 8, np.random.default_rng(5))
        b2 = compose_batch(ds.layout, ds.target_train[:4], ds.aux_pool, 8, np.random.default_rng(5))
        np.testing.assert_array_equal(b1.inputs, b2.inputs)
        assert b1.provenance == b2.provenance

    def test_aux_reuse_across_steps_is_allowed(self):
        # pool of 18 with 16 draws per step forces overlap between steps
        ds = toy_dataset(n_train=64, n_aux=18, m=3)
        rng = np.random.default_rng(6)
        first = compose_batch(ds.layout, ds.target_train[:16], ds.aux_pool, 32, rng)
        second = compose_batch(ds.layout, ds.target_train[16:32], ds.aux_pool, 32, rng)
        ids_a = {i for g, i in first.provenance if g == AUXILIARY}
        ids_b = {i for g, i in second.provenance if g == AUXILIARY}
        assert ids_a & ids_b

    def test_odd_batch_rejected(self):
        ds = toy_dataset()
        with pytest.raises(ValueError):
            compose_batch(ds.layout, ds.target_train[:3], ds.aux_pool, 7, np.random.default_rng(0))

    def test_short_pool_rejected(self):
        ds = toy_dataset(n_aux=3)
        with pytest.raises(ValueError):
            compose_batch(ds.layout, ds.target_train[:8], ds.aux_pool, 16, np.random.default_rng(0))

    def test_wrong_slice_size_rejected(self):
        ds = toy_dataset()
        with pytest.raises(ValueError):
            compose_batch(ds.layout, ds.target_train[:5], ds.aux_pool, 8, np.random.default_rng(0))


class TestEpochPlan:
    def test_floor_division_and_coverage(self):
        ds = toy_dataset(n_train=100, k=2)
        slices = epoch_plan(ds, 32, np.random.default_rng(0))
        assert len(slices) == 6
        used = np.concatenate(slices)
        assert used.size == 96
        # each sample at most once per epoch
        assert len(np.unique(used)) == 96

    def test_single_step_epoch(self):
        ds = toy_dataset(n_train=16, k=2)
        slices = epoch_plan(ds, 32, np.random.default_rng(0))
        assert len(slices) == 1
        assert sorted(slices[0].tolist()) == list(range(16))

    def test_shuffle_disabled_keeps_order(self):
        ds = toy_dataset(n_train=8, k=2)
        slices = epoch_plan(ds, 4, np.random.default_rng(0), shuffle=False)
        np.testing.assert_array_equal(np.concatenate(slices), np.arange(8))

    def test_target_set_too_small(self):
        ds = toy_dataset(n_train=4, k=2)
        with pytest.raises(ValueError):
            epoch_plan(ds, 32, np.random.default_rng(0))

    def test_slices_are_prefix_of_one_shuffle(self):
        # contract: one shuffle per epoch, consecutive half-batch slices of
        # its prefix, remainder dropped
        ds = toy_dataset(n_train=22, k=2)
        slices = epoch_plan(ds, 8, np.random.default_rng(9))
        expected = np.random.default_rng(9).permutation(22)
        np.testing.assert_array_equal(np.concatenate(slices), expected[:20])


class TestSynthGenerate:
    def test_nearest_centroid_oracle_at_zero_noise(self):
        cfg = SyntheticConfig(
            k=4, m=2, train_per_class=5, val_per_class=2, test_per_class=3,
            aux_per_class=2, noise=0.0,
        )
        ds = synth_generate(cfg, seed=0)
        centroids = {}
        for c in range(cfg.k):
            feats = [s.features for s in ds.target_train if s.class_index == c]
            centroids[c] = np.mean(feats, axis=0)
        correct = 0
        for s in ds.target_test:
            dists = {c: float(np.sum((s.features - m) ** 2)) for c, m in centroids.items()}
            if min(dists, key=dists.get) == s.class_index:
                correct += 1
        assert correct == len(ds.target_test)

    def test_same_seed_bitwise_identical(self):
        cfg = SyntheticConfig(k=2, m=2, train_per_class=3, val_per_class=1,
                              test_per_class=1, aux_per_class=2, noise=0.5)
        a = synth_generate(cfg, seed=3)
        b = synth_generate(cfg, seed=3)
        for sa, sb in zip(a.target_train + a.aux_pool, b.target_train + b.aux_pool):
            np.testing.assert_array_equal(sa.features, sb.features)

    def test_imbalance_vector_honored(self):
        cfg = SyntheticConfig(
            k=3, m=2, train_per_class=(5, 2, 9), val_per_class=1,
            test_per_class=1, aux_per_class=(4, 1),
        )
        ds = synth_generate(cfg, seed=1)
        train_counts = [sum(1 for s in ds.target_train if s.class_index == c) for c in range(3)]
        aux_counts = [sum(1 for s in ds.aux_pool if s.class_index == c) for c in range(2)]
        assert train_counts == [5, 2, 9]
        assert aux_counts == [4, 1]

    def test_shapes_and_range(self):
        cfg = SyntheticConfig(k=2, m=1, image_size=16, train_per_class=2,
                              val_per_class=1, test_per_class=1, aux_per_class=1)
        ds = synth_generate(cfg, seed=2)
        for s in ds.target_train:
            assert s.features.shape == (16, 16, 1)
            assert s.features.min() >= 0.0 and s.features.max() <= 1.0

    def test_gratings_aux_family_is_class_separable(self):
        cfg = SyntheticConfig(k=3, m=4, train_per_class=1, val_per_class=1,
                              test_per_class=1, aux_per_class=3, noise=0.0,
                              aux_family="gratings")
        ds = synth_generate(cfg, seed=4)
        # noise-free auxiliary classes are distinct templates, and none
        # coincides with a target class template
        aux_by_class = {}
        for s in ds.aux_pool:
            aux_by_class.setdefault(s.class_index, []).append(s.features)
        templates = {c: feats[0] for c, feats in aux_by_class.items()}
        for c, feats in aux_by_class.items():
            for f in feats[1:]:
                np.testing.assert_array_equal(f, templates[c])
        classes = sorted(templates)
        for i in classes:
            for j in classes:
                if i < j:
                    assert not np.array_equal(templates[i], templates[j])
        for t in ds.target_train:
            for c in classes:
                assert not np.array_equal(t.features, templates[c])

    def test_bad_aux_family_rejected(self):
        with pytest.raises(ValueError):
            SyntheticConfig(aux_family="plasma")


class TestImageDir:
    def _write_tree(self, tmp_path, per_class=3, classes=2, aux_classes=0, size=8):
        from PIL import Image

        rng = np.random.default_rng(0)
        for c in range(classes):
            d = tmp_path / "target" / f"class_{c}"
            d.mkdir(parents=True)
            for i in range(per_class):
                arr = (rng.random((size, size)) * 255).astype(np.uint8)
                Image.fromarray(arr, "L").save(d / f"img_{i}.png")
        for c in range(aux_classes):
            d = tmp_path / "auxiliary" / f"class_{c}"
            d.mkdir(parents=True)
            arr = (rng.random((size, size)) * 255).astype(np.uint8)
            Image.fromarray(arr, "L").save(d / "img_0.png")
        return tmp_path

    def test_counts_and_labels(self, tmp_path):
        root = self._write_tree(tmp_path, per_class=3, classes=2)
        ds = load_image_dir(root, image_size=8)
        total = len(ds.target_train) + len(ds.target_val) + len(ds.target_test)
        assert total == 6
        assert ds.layout.k == 2
        assert ds.layout.m == 0
        classes = sorted(
            {s.class_index for s in ds.target_train + ds.target_val + ds.target_test}
        )
        assert classes == [0, 1]

    def test_values_scaled_and_resized(self, tmp_path):
        root = self._write_tree(tmp_path, per_class=2, classes=1, size=16)
        ds = load_image_dir(root, image_size=8)
        s = (ds.target_train + ds.target_val + ds.target_test)[0]
        assert s.features.shape == (8, 8, 1)
        assert 0.0 <= s.features.min() and s.features.max() <= 1.0

    def test_non_image_file_skipped_with_warning(self, tmp_path):
        root = self._write_tree(tmp_path, per_class=3, classes=2)
        (root / "target" / "class_0" / "notes.txt").write_text("not an image")
        with pytest.warns(UserWarning, match="notes.txt"):
            ds = load_image_dir(root, image_size=8)
        total = len(ds.target_train) + len(ds.target_val) + len(ds.target_test)
        assert total == 6

    def test_missing_aux_dir_fails_when_required(self, tmp_path):
        root = self._write_tree(tmp_path)
        with pytest.raises(DatasetError):
            load_image_dir(root, require_aux=True)
        ds = load_image_dir(root, require_aux=False)
        assert ds.aux_pool == []

    def test_empty_class_dir_rejected(self, tmp_path):
        root = self._write_tree(tmp_path)
        (root / "target" / "class_9").mkdir()
        with pytest.raises(DatasetError):
            load_image_dir(root)

    def test_unreadable_png_raises_io_error(self, tmp_path):
        root = self._write_tree(tmp_path)
        bad = root / "target" / "class_0" / "img_9.png"
        bad.write_bytes(b"not a png at all")
        with pytest.raises(OSError, match="img_9.png"):
            load_image_dir(root)

    def test_save_round_trip_counts(self, tmp_path):
        cfg = SyntheticConfig(k=2, m=2, image_size=8, train_per_class=4,
                              val_per_class=2, test_per_class=2, aux_per_class=3)
        ds = synth_generate(cfg, seed=5)
        root = save_image_dir(ds, tmp_path / "out")
        back = load_image_dir(root, image_size=8)
        total = len(back.target_train) + len(back.target_val) + len(back.target_test)
        assert total == 2 * (4 + 2 + 2)
        assert len(back.aux_pool) == 6
        assert back.layout == ds.layout
