"""Seed splitting: stream ``k`` of a run with seed ``s`` uses seed ``s + k``."""

STREAMS = {
    "train_data": 0,
    "test_data": 1,
    "weight_init": 2,
    "shuffle": 3,
    "scanpath_init": 4,
    "random_cam": 5,
    "gaze": 6,
}


def stream_seed(seed, name):
    return seed + STREAMS[name]
