"""Convert the UCI Character Trajectories ``.mat`` release to dataset CSV.

The archive's ``mixoutALL_shifted.mat`` holds ``mixout`` (one 3 x L array
per sample: x velocity, y velocity, pen-tip force) and ``consts`` with
``charlabels`` (1-based class indices) and ``key`` (class characters).
"""

import numpy as np
from scipy.io import loadmat

from .io import Dataset


def load_uci_mat(path) -> Dataset:
    mat = loadmat(path, squeeze_me=True, struct_as_record=False)
    mixout = np.atleast_1d(mat["mixout"])
    consts = mat["consts"]
    labels = np.atleast_1d(consts.charlabels).astype(int)
    keys = [str(k) for k in np.atleast_1d(consts.key)]
    if len(labels) != len(mixout):
        raise ValueError(f"{len(mixout)} samples but {len(labels)} labels")
    ds = Dataset()
    for i, (sample, lab) in enumerate(zip(mixout, labels)):
        y = np.asarray(sample, dtype=np.float64)
        if y.ndim != 2 or y.shape[0] != 3:
            raise ValueError(f"sample {i} has shape {y.shape}, expected (3, L)")
        ds.add(str(i + 1), keys[lab - 1], y.T)
    return ds
