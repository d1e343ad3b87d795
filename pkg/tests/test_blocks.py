import numpy as np
import pytest

from blocksrc import BENIGN, MALIGNANT, RoiSample, assemble_block_dictionaries, compose_blocks, decompose_roi


def make_roi(pixels, label=BENIGN, source="t"):
    return RoiSample(pixels=pixels, label=label, source_id=source)


class TestDecompose:
    def test_block_count_64(self):
        roi = make_roi(np.arange(64 * 64, dtype=float).reshape(64, 64))
        grid = decompose_roi(roi, 8, 8)
        assert grid.nbl == 64
        assert grid.vectors.shape == (64, 64)

    def test_single_block(self):
        roi = make_roi(np.random.default_rng(0).random((64, 64)))
        grid = decompose_roi(roi, 64, 64)
        assert grid.nbl == 1
        np.testing.assert_array_equal(grid.vectors[0], roi.pixels.reshape(-1))

    def test_constant_roi(self):
        roi = make_roi(np.full((16, 16), 3.5))
        grid = decompose_roi(roi, 8, 8)
        assert np.all(grid.vectors == 3.5)

    def test_row_major_vectorization(self):
        px = np.arange(16, dtype=float).reshape(4, 4)
        grid = decompose_roi(make_roi(px), 2, 2)
        # block at grid position (0, 1) covers columns 2:4 of rows 0:2
        np.testing.assert_array_equal(grid.vectors[1], [2, 3, 6, 7])

    def test_non_divisible_lists_valid_sizes(self):
        roi = make_roi(np.zeros((12, 12)))
        with pytest.raises(ValueError, match="valid"):
            decompose_roi(roi, 5, 5)

    def test_tiling_identity_all_sizes(self):
        rng = np.random.default_rng(1)
        px = rng.random((64, 64)) * 255
        roi = make_roi(px)
        for b in (8, 16, 32, 64):
            grid = decompose_roi(roi, b, b)
            np.testing.assert_array_equal(compose_blocks(grid), px)
            assert grid.nbl * b * b == 64 * 64


class TestAssemble:
    def samples(self, rng, n=5, size=16):
        labels = [BENIGN, MALIGNANT] * (n // 2) + [BENIGN] * (n % 2)
        return [make_roi(rng.random((size, size)), label=labels[i], source=f"s{i}") for i in range(n)]

    def test_shapes_and_order(self):
        rng = np.random.default_rng(2)
        training = self.samples(rng, n=5)
        dicts = assemble_block_dictionaries(training, 8, 8)
        assert len(dicts) == 4
        for D in dicts:
            assert D.atoms.shape == (64, 5)
            np.testing.assert_array_equal(D.atom_labels, [s.label for s in training])

    def test_identical_images_different_labels_allowed(self):
        rng = np.random.default_rng(3)
        px = rng.random((8, 8))
        training = [make_roi(px, BENIGN), make_roi(px.copy(), MALIGNANT)]
        dicts = assemble_block_dictionaries(training, 8, 8)
        np.testing.assert_array_equal(dicts[0].atoms[:, 0], dicts[0].atoms[:, 1])
        assert list(dicts[0].atom_labels) == [BENIGN, MALIGNANT]

    def test_columns_reconstruct_block_vectors(self):
        rng = np.random.default_rng(4)
        training = self.samples(rng, n=4)
        dicts = assemble_block_dictionaries(training, 8, 8)
        for i, smp in enumerate(training):
            grid = decompose_roi(smp, 8, 8)
            for j, D in enumerate(dicts):
                np.testing.assert_allclose(
                    D.atoms[:, i] * D.scales[i], grid.vectors[j], atol=1e-12
                )

    def test_block_dictionary_depends_only_on_its_block(self):
        rng = np.random.default_rng(5)
        training = self.samples(rng, n=4)
        dicts = assemble_block_dictionaries(training, 8, 8)
        perturbed = []
        for smp in training:
            px = smp.pixels.copy()
            px[8:, :] += rng.random((8, 16))  # touch blocks 2 and 3 only
            perturbed.append(make_roi(px, smp.label, smp.source_id))
        dicts2 = assemble_block_dictionaries(perturbed, 8, 8)
        np.testing.assert_array_equal(dicts[0].atoms, dicts2[0].atoms)
        np.testing.assert_array_equal(dicts[1].atoms, dicts2[1].atoms)
        assert not np.array_equal(dicts[2].atoms, dicts2[2].atoms)

    def test_mixed_sizes_rejected(self):
        rng = np.random.default_rng(6)
        training = [make_roi(rng.random((16, 16)), BENIGN), make_roi(rng.random((8, 8)), MALIGNANT)]
        with pytest.raises(ValueError, match="mixed"):
            assemble_block_dictionaries(training, 8, 8)

    def test_single_class_rejected(self):
        rng = np.random.default_rng(7)
        training = [make_roi(rng.random((8, 8)), BENIGN) for _ in range(3)]
        with pytest.raises(ValueError, match="per class"):
            assemble_block_dictionaries(training, 8, 8)


class TestRoiSample:
    def test_rejects_negative_intensities(self):
        with pytest.raises(ValueError, match=">= 0"):
            RoiSample(pixels=np.array([[-1.0, 0.0], [0.0, 0.0]]), label=BENIGN)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            RoiSample(pixels=np.zeros((2, 3)), label=BENIGN)
