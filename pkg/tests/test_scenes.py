import numpy as np
import pytest

from imgcloak.detector import (
    SHAPE_CATEGORIES,
    full_kind_scene_spec,
    generate_corpus,
    generate_scene,
    load_corpus,
    load_image_png,
    random_scene_spec,
    save_corpus,
    save_image_png,
)
from imgcloak.detector.scenes import image_from_png_bytes, image_to_png_bytes, quantize_image
from imgcloak.detector.types import ImageTensor, SceneShape, SceneSpec
from imgcloak.errors import DatasetError, SceneError


class TestGenerateScene:
    def test_deterministic(self):
        spec = random_scene_spec(np.random.default_rng(3))
        img_a, anns_a = generate_scene(spec, seed=7)
        img_b, anns_b = generate_scene(spec, seed=7)
        np.testing.assert_array_equal(img_a.pixels, img_b.pixels)
        assert anns_a == anns_b

    def test_different_seed_changes_texture(self):
        spec = random_scene_spec(np.random.default_rng(3))
        img_a, _ = generate_scene(spec, seed=7)
        img_b, _ = generate_scene(spec, seed=8)
        assert not np.array_equal(img_a.pixels, img_b.pixels)

    def test_annotations_match_spec(self):
        spec = random_scene_spec(np.random.default_rng(5), n_shapes=2)
        _, anns = generate_scene(spec, seed=1)
        assert len(anns) == len(spec.shapes)
        for (box, cat), shape in zip(anns, spec.shapes):
            assert cat == SHAPE_CATEGORIES.index(shape.kind)
            assert 0 <= box.x_min < box.x_max <= spec.width
            assert 0 <= box.y_min < box.y_max <= spec.height

    def test_overlapping_spec_rejected(self):
        shapes = (
            SceneShape("circle", (1, 0, 0), (20, 20), 8),
            SceneShape("square", (0, 1, 0), (22, 22), 8),
        )
        with pytest.raises(SceneError):
            generate_scene(SceneSpec(shapes=shapes), seed=0)

    def test_out_of_canvas_rejected(self):
        shapes = (SceneShape("circle", (1, 0, 0), (2, 2), 8),)
        with pytest.raises(SceneError):
            generate_scene(SceneSpec(shapes=shapes), seed=0)

    def test_shape_pixels_present(self):
        """Each annotated region must deviate from the background."""
        spec = full_kind_scene_spec(np.random.default_rng(11))
        img, anns = generate_scene(spec, seed=2)
        for (box, _), shape in zip(anns, spec.shapes):
            ys = slice(int(box.y_min) + 2, int(box.y_max) - 2)
            xs = slice(int(box.x_min) + 2, int(box.x_max) - 2)
            region = img.pixels[ys, xs]
            color = np.asarray(shape.color)
            assert np.abs(region - color).sum(axis=2).min() < 0.05


class TestFullKindScenes:
    def test_every_kind_present(self):
        corpus = generate_corpus(5, seed=9, full_kind=True)
        for _, anns in corpus:
            assert sorted(cat for _, cat in anns) == [0, 1, 2]

    def test_deterministic(self):
        a = generate_corpus(3, seed=4, full_kind=True)
        b = generate_corpus(3, seed=4, full_kind=True)
        for (img_a, _), (img_b, _) in zip(a, b):
            np.testing.assert_array_equal(img_a.pixels, img_b.pixels)


class TestPngIo:
    def test_on_grid_roundtrip_is_lossless(self, tmp_path, rng):
        img = quantize_image(ImageTensor(rng.random((32, 32, 3))))
        path = str(tmp_path / "img.png")
        save_image_png(img, path)
        np.testing.assert_array_equal(load_image_png(path).pixels, img.pixels)

    def test_bytes_roundtrip(self, rng):
        img = quantize_image(ImageTensor(rng.random((32, 32, 3))))
        again = image_from_png_bytes(image_to_png_bytes(img))
        np.testing.assert_array_equal(again.pixels, img.pixels)

    def test_byte_stability(self, rng):
        img = ImageTensor(rng.random((32, 32, 3)))
        assert image_to_png_bytes(img) == image_to_png_bytes(img)


class TestCorpusIo:
    def test_roundtrip(self, tmp_path, small_corpus):
        save_corpus(str(tmp_path), small_corpus)
        loaded = load_corpus(str(tmp_path))
        assert len(loaded) == len(small_corpus)
        for (img_a, anns_a), (img_b, anns_b) in zip(small_corpus, loaded):
            np.testing.assert_array_equal(quantize_image(img_a).pixels, img_b.pixels)
            assert [c for _, c in anns_a] == [c for _, c in anns_b]

    def test_missing_annotations_file(self, tmp_path):
        with pytest.raises(DatasetError):
            load_corpus(str(tmp_path))

    def test_missing_image_file(self, tmp_path, small_corpus):
        save_corpus(str(tmp_path), small_corpus)
        (tmp_path / "images" / "00001.png").unlink()
        with pytest.raises(DatasetError, match="00001"):
            load_corpus(str(tmp_path))
