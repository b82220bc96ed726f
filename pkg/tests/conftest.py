import numpy as np
import pytest

from swapforge.media import FaceFrame, VideoClip
from swapforge.synth import IdentityParams, synth_clip, synth_corpus


def random_frame(rng, size=16, identity="a", frame_index=0, landmarks=None, lo=0.1, hi=0.9):
    px = rng.uniform(lo, hi, size=(size, size, 3))
    return FaceFrame(pixels=px, identity=identity, frame_index=frame_index,
                     landmarks=landmarks)


def random_clip(rng, n_frames=4, size=16, identity="a", clip_id="clip", label="real"):
    frames = tuple(
        random_frame(rng, size=size, identity=identity, frame_index=t)
        for t in range(n_frames)
    )
    return VideoClip(frames=frames, fps=25.0, clip_id=clip_id, label=label)


@pytest.fixture(scope="session")
def tiny_corpus():
    """2 identities x 2 clips x 6 frames at 16x16, with landmarks."""
    return synth_corpus(n_identities=2, clips_per_identity=2, n_frames=6, size=16, seed=3)


@pytest.fixture(scope="session")
def one_identity():
    return IdentityParams.from_seed(7)


@pytest.fixture(scope="session")
def one_clip(one_identity):
    return synth_clip(one_identity, clip_id="c0", identity_tag="id_x",
                      n_frames=6, size=32, seed=11)
