"""Builtin encoder tests: determinism, unit norm, dims, identifier parsing."""

import numpy as np
import pytest

from egomem_bridge.encoders import (BridgeError, BuiltinImageEncoder,
                                    BuiltinTextEncoder, block_mean,
                                    make_image_encoder, make_text_encoder)


def random_image(seed, h=40, w=50):
    return np.random.default_rng(seed).integers(0, 256, (h, w, 3)).astype(np.uint8)


class TestBuiltinImageEncoder:
    def test_unit_norm_and_dim(self):
        enc = BuiltinImageEncoder(64, "clip")
        v = enc.encode(random_image(1))
        assert v.shape == (64,)
        assert abs(np.linalg.norm(v) - 1.0) < 1e-9

    def test_deterministic_across_instances(self):
        a = BuiltinImageEncoder(64, "clip").encode(random_image(2))
        b = BuiltinImageEncoder(64, "clip").encode(random_image(2))
        assert np.array_equal(a, b)

    def test_different_tags_give_different_channels(self):
        img = random_image(3)
        clip = BuiltinImageEncoder(64, "clip").encode(img)
        dino = BuiltinImageEncoder(64, "dino").encode(img)
        assert abs(float(clip @ dino)) < 0.9

    def test_different_images_differ(self):
        enc = BuiltinImageEncoder(64, "clip")
        a = enc.encode(random_image(4))
        b = enc.encode(random_image(5))
        assert float(a @ b) < 0.999

    def test_tiny_and_grayscale_inputs(self):
        enc = BuiltinImageEncoder(16, "clip")
        v = enc.encode(np.full((3, 2), 128, dtype=np.uint8))
        assert abs(np.linalg.norm(v) - 1.0) < 1e-9

    def test_block_mean_shape(self):
        out = block_mean(random_image(6, 33, 47))
        assert out.shape == (16, 16, 3)


class TestBuiltinTextEncoder:
    def test_unit_norm_and_determinism(self):
        enc = BuiltinTextEncoder(64, "text")
        a = enc.encode("a green cup")
        b = enc.encode("a green cup")
        assert a.shape == (64,)
        assert abs(np.linalg.norm(a) - 1.0) < 1e-9
        assert np.array_equal(a, b)

    def test_token_order_invariant_but_content_sensitive(self):
        enc = BuiltinTextEncoder(64, "text")
        assert np.allclose(enc.encode("green cup"), enc.encode("cup green"))
        assert float(enc.encode("green cup") @ enc.encode("red fridge")) < 0.9

    def test_empty_text_is_still_unit(self):
        v = BuiltinTextEncoder(8, "text").encode("")
        assert abs(np.linalg.norm(v) - 1.0) < 1e-9


class TestIdentifiers:
    def test_builtin_identifiers(self):
        assert make_image_encoder("builtin:32", "clip").dim == 32
        assert make_text_encoder("builtin-text:48").dim == 48

    def test_unknown_identifier_rejected(self):
        with pytest.raises(BridgeError):
            make_image_encoder("magic:thing", "clip")

    def test_hf_identifier_fails_cleanly_offline(self):
        with pytest.raises(BridgeError):
            make_image_encoder("hf:no-such-model-anywhere", "clip")
