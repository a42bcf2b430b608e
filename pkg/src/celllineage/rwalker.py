"""Seeded random-walker segmentation on the 4-connected pixel lattice.

Pixel label probabilities are discrete harmonic functions: for each seed
label the probability field solves the Dirichlet problem on the graph
Laplacian with boundary value 1 on that label's seeds and 0 on the others.
Used to split under-segmented cell lumps into a required number of parts.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .imagecore import make_cell


class SolverError(RuntimeError):
    pass


class ResegFailure(Exception):
    """Re-segmentation could not produce the requested partition.

    A first-class outcome: the collision loop keeps the lump whole and
    marks it unresolved.
    """


@dataclass(frozen=True)
class RWConfig:
    beta: float = 130.0  # edge-weight sharpness on [0,1] intensities
    epsilon: float = 1e-6  # weight floor, keeps the Laplacian block SPD
    cg_tol: float = 1e-8  # absolute residual tolerance
    cg_max_iter: int = 0  # 0 = 10 * node count
    jacobi_precondition: bool = False

    def __post_init__(self):
        if self.beta < 0 or self.epsilon <= 0 or self.cg_tol <= 0:
            raise ValueError("invalid random-walker config")


@dataclass(frozen=True)
class LatticeGraph:
    pixels: tuple  # region pixels (row, col), row-major order
    index: dict  # pixel -> node index
    edges: np.ndarray  # (m, 2) node index pairs, i < j
    weights: np.ndarray  # (m,) positive edge weights


@dataclass(frozen=True)
class SeedSet:
    seeds: tuple  # ((row, col), label) pairs, labels 1..n

    @property
    def n_labels(self):
        return max(lab for _, lab in self.seeds)

    def validate(self, region):
        pixels = [p for p, _ in self.seeds]
        if len(set(pixels)) != len(pixels):
            raise ValueError("seed pixels must be distinct")
        labels = sorted({lab for _, lab in self.seeds})
        if labels != list(range(1, len(labels) + 1)):
            raise ValueError("seed labels must be 1..n")
        for p in pixels:
            if p not in region:
                raise ValueError("seed %r outside the region" % (p,))


def build_lattice(patch, region, config=RWConfig()):
    """4-neighbor graph over `region` with Gaussian intensity edge weights.

    `patch` holds normalized intensities in [0, 1]; w = exp(-beta (gi-gj)^2)
    + epsilon per edge.
    """
    if not region:
        raise ValueError("empty region")
    patch = np.asarray(patch, dtype=np.float64)
    pixels = tuple(sorted(region))
    index = {p: i for i, p in enumerate(pixels)}
    edges = []
    weights = []
    for (r, c), i in index.items():
        for nb in ((r + 1, c), (r, c + 1)):
            j = index.get(nb)
            if j is not None:
                g1 = patch[r, c]
                g2 = patch[nb[0], nb[1]]
                edges.append((min(i, j), max(i, j)))
                weights.append(np.exp(-config.beta * (g1 - g2) ** 2) + config.epsilon)
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
    return LatticeGraph(pixels, index, edges, np.array(weights, dtype=np.float64))


def _laplacian(graph):
    n = len(graph.pixels)
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    w = graph.weights
    rows = np.concatenate([i, j])
    cols = np.concatenate([j, i])
    data = np.concatenate([-w, -w])
    lap = sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    lap = lap + sparse.diags(np.asarray(-lap.sum(axis=1)).ravel())
    return lap.tocsr()


def conjugate_gradient(mat, b, tol, max_iter, jacobi=False):
    """CG on an SPD sparse matrix; raises when the residual stays above tol."""
    x = np.zeros_like(b)
    r = b - mat @ x
    minv = 1.0 / mat.diagonal() if jacobi else None
    z = r * minv if jacobi else r
    p = z.copy()
    rz = float(r @ z)
    if np.linalg.norm(r) <= tol:
        return x
    for _ in range(max_iter):
        ap = mat @ p
        alpha = rz / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        if np.linalg.norm(r) <= tol:
            return x
        z = r * minv if jacobi else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        "conjugate gradient did not reach residual %g within %d iterations "
        "(achieved %g)" % (tol, max_iter, np.linalg.norm(r))
    )


def _components(graph):
    n = len(graph.pixels)
    adj = [[] for _ in range(n)]
    for i, j in graph.edges:
        adj[i].append(j)
        adj[j].append(i)
    comp = np.full(n, -1, dtype=np.int64)
    ncomp = 0
    for start in range(n):
        if comp[start] >= 0:
            continue
        queue = deque([start])
        comp[start] = ncomp
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if comp[v] < 0:
                    comp[v] = ncomp
                    queue.append(v)
        ncomp += 1
    return comp, ncomp


@dataclass(frozen=True)
class RWResult:
    probabilities: np.ndarray  # (n_pixels, n_labels)
    orphan_components: int  # components without a seed, assigned by distance


def solve_probabilities(graph, seeds, config=RWConfig()):
    """Per-pixel label probabilities of the seeded random walker.

    Labels 1..n-1 are solved by conjugate gradient on the unseeded Laplacian
    block; the last label is the complement, which enforces exact
    normalization. Seedless connected components get the graph-nearest
    seed's label (lattice distance, ties to the lower label) and are counted
    in the result.
    """
    region = set(graph.pixels)
    seeds.validate(region)
    n = len(graph.pixels)
    n_labels = seeds.n_labels
    max_iter = config.cg_max_iter or 10 * n

    seed_label = {}
    for p, lab in seeds.seeds:
        seed_label[graph.index[p]] = lab

    comp, ncomp = _components(graph)
    seeded_comps = {comp[i] for i in seed_label}
    orphan = [k for k in range(ncomp) if k not in seeded_comps]

    prob = np.zeros((n, n_labels))
    for i, lab in seed_label.items():
        prob[i, lab - 1] = 1.0

    # orphan components: nearest seed by unrestricted-lattice (Manhattan) distance
    for k in orphan:
        members = np.nonzero(comp == k)[0]
        best = None
        for i in seed_label:
            sr, sc = graph.pixels[i]
            d = min(abs(graph.pixels[m][0] - sr) + abs(graph.pixels[m][1] - sc) for m in members)
            key = (d, seed_label[i])
            if best is None or key < best:
                best = key
        prob[members, best[1] - 1] = 1.0

    solve_idx = np.array(
        [i for i in range(n) if i not in seed_label and comp[i] in seeded_comps], dtype=np.int64
    )
    if solve_idx.size:
        lap = _laplacian(graph)
        pos = np.full(n, -1, dtype=np.int64)
        pos[solve_idx] = np.arange(solve_idx.size)
        lap_uu = lap[solve_idx][:, solve_idx].tocsr()
        seeded_idx = np.array(sorted(seed_label), dtype=np.int64)
        lap_us = lap[solve_idx][:, seeded_idx].tocsr()
        for lab in range(1, n_labels):
            m_s = np.array([1.0 if seed_label[i] == lab else 0.0 for i in sorted(seed_label)])
            rhs = -lap_us @ m_s
            x = conjugate_gradient(
                lap_uu, rhs, config.cg_tol, max_iter, jacobi=config.jacobi_precondition
            )
            prob[solve_idx, lab - 1] = x
        prob[solve_idx, n_labels - 1] = 1.0 - prob[solve_idx, : n_labels - 1].sum(axis=1)
    return RWResult(probabilities=prob, orphan_components=len(orphan))


def segment(graph, seeds, config=RWConfig()):
    """Argmax-probability label per pixel; ties and seeds resolve as specified.

    Returns an int array aligned with graph.pixels.
    """
    result = solve_probabilities(graph, seeds, config)
    # lowest label wins ties; 1e-12 slack absorbs solver round-off
    prob = result.probabilities
    best = prob.max(axis=1, keepdims=True)
    labels = np.argmax(prob >= best - 1e-12, axis=1).astype(np.int64) + 1
    for p, lab in seeds.seeds:
        labels[graph.index[p]] = lab
    return labels


def _snap_to_region(point, region_pixels):
    """Nearest region pixel by Euclidean distance, ties row-major."""
    r0, c0 = point
    return min(region_pixels, key=lambda p: ((p[0] - r0) ** 2 + (p[1] - c0) ** 2, p))


def reseg_cell(frame, lump, prev_centroids, displacement, config=RWConfig()):
    """Split a lump into one segment per previous-frame centroid.

    Seeds are the previous centroids shifted by `displacement`, rounded and
    snapped into the lump. Raises ResegFailure when two seeds land on the
    same pixel or any segment comes out empty.
    """
    if len(prev_centroids) < 2:
        raise ValueError("re-segmentation needs at least 2 previous centroids")
    region_pixels = sorted(lump.pixels)
    region = set(region_pixels)
    dr, dc = displacement
    seeds = []
    for k, (r, c) in enumerate(prev_centroids, start=1):
        p = (int(round(r + dr)), int(round(c + dc)))
        if p not in region:
            p = _snap_to_region(p, region_pixels)
        seeds.append((p, k))
    if len({p for p, _ in seeds}) != len(seeds):
        raise ResegFailure("two seeds snapped to the same lump pixel")

    graph = build_lattice(frame.normalized(), region, config)
    labels = segment(graph, SeedSet(tuple(seeds)), config)
    cells = []
    for lab in range(1, len(seeds) + 1):
        pix = [graph.pixels[i] for i in np.nonzero(labels == lab)[0]]
        if not pix:
            raise ResegFailure("segment %d is empty" % lab)
        cells.append(make_cell(lab, pix))
    return cells


def probability_heatmaps(graph, result, height, width):
    """8-bit heatmap per label (round(255 p)) for debug dumps."""
    maps = []
    for lab in range(result.probabilities.shape[1]):
        img = np.zeros((height, width), dtype=np.uint8)
        for i, (r, c) in enumerate(graph.pixels):
            img[r, c] = int(round(255.0 * result.probabilities[i, lab]))
        maps.append(img)
    return maps
