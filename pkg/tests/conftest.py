import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def unfold_oracle(t, k):
    """Mode-k unfolding built entry by entry from the column-order contract."""
    dims = t.shape
    rest = [a for a in range(3) if a != k - 1]
    out = np.zeros((dims[k - 1], dims[rest[0]] * dims[rest[1]]))
    for idx in np.ndindex(*dims):
        c = idx[rest[0]] + dims[rest[0]] * idx[rest[1]]
        out[idx[k - 1], c] = t[idx]
    return out


def pair_scatter_oracle(tensor, pids, cams, u_other, k, gallery):
    """Scatter matrices by looping over every cross-view pair explicitly."""
    m = tensor.shape[2]
    slices = []
    for i in range(m):
        s = tensor[:, :, i]
        slices.append(s @ u_other if k == 1 else (u_other.T @ s).T)
    dim = slices[0].shape[0]
    v_i = np.zeros((dim, dim))
    v_e = np.zeros((dim, dim))
    n_i = n_e = 0
    for a in range(m):
        if cams[a] != gallery:
            continue
        for b in range(m):
            if cams[b] == gallery:
                continue
            d = slices[a] - slices[b]
            if pids[a] == pids[b]:
                v_i += d @ d.T
                n_i += 1
            else:
                v_e += d @ d.T
                n_e += 1
    return v_e / n_e, v_i / n_i


def random_cross_view(rng, n_ids, per_view, shape):
    """Random set where every identity has ``per_view[c]`` samples in camera c."""
    pids, cams = [], []
    for p in range(n_ids):
        for cam in (0, 1):
            for _ in range(per_view[p % len(per_view)][cam]):
                pids.append(f"id{p}")
                cams.append(cam)
    t = rng.standard_normal(shape + (len(pids),))
    return t, np.array(pids), np.array(cams)
