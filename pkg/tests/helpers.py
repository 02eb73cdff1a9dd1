import numpy as np

from proxsarah.core import FiniteSumOracle
from proxsarah.data import Dataset
import scipy.sparse as sp


class ScalarOracle(FiniteSumOracle):
    """Components given as callables ``(value, gradient)`` of a 1-d ``w``."""

    def __init__(self, comps, lipschitz=1.0):
        super().__init__(len(comps), 1, lipschitz)
        self.comps = comps

    def gradients(self, w, ids):
        ids = self.check_ids(ids)
        return np.array([[self.comps[i][1](w[0])] for i in ids], dtype=float).reshape(-1, 1)

    def values(self, w, ids):
        ids = self.check_ids(ids)
        return np.array([self.comps[i][0](w[0]) for i in ids], dtype=float)


def dense_dataset(rows, labels=None):
    return Dataset(sp.csr_matrix(np.asarray(rows, dtype=float)), None if labels is None else np.asarray(labels, float))
