import numpy as np
import pytest

from mopteval.core import ClassTaxonomy, make_grid_frame


@pytest.fixture
def taxonomy():
    # void 0, stuff 1, things 2 and 3
    return ClassTaxonomy.simple(2, 2)


def random_valid_frame(rng, width, height, taxonomy, max_track=4, frame_index=0,
                       allow_void=True):
    """Random frame satisfying the labeling invariants."""
    classes = [e.class_id for e in taxonomy.entries]
    if not allow_void:
        classes = [c for c in classes if c != taxonomy.void_id]
    class_map = rng.choice(classes, size=(height, width))
    track_map = np.zeros((height, width), dtype=np.int64)
    thing = np.isin(class_map, taxonomy.thing_ids())
    track_map[thing] = rng.integers(1, max_track + 1, size=int(thing.sum()))
    return make_grid_frame(class_map, track_map, frame_index)
