"""
Discrete control grids on the long-only simplex
``A = {a in R^d : a_i >= 0, sum(a) <= 1}``.

A grid of mesh ``delta = 2**-s`` holds every lattice point of ``A`` whose
coordinates are multiples of ``delta``, in lexicographic order. Every
argmax over a node set breaks ties towards the lexicographically
smallest weight vector, which is the first one in that order.
"""
import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from lsmcport.errors import ConfigurationError, UsageError


TOL = 1e-12


def mesh_exponent(mesh):
    """
    Return ``s`` for a mesh ``2**-s`` with ``s >= 1``.

    :raises ConfigurationError: for any other mesh
    """
    try:
        mesh = float(mesh)
    except (TypeError, ValueError):
        raise ConfigurationError(
            'Mesh {!r} is not a number'.format(mesh)
        ) from None
    if not 0.0 < mesh < 1.0:
        raise ConfigurationError(
            'Mesh {} must be a power of 1/2 below 1'.format(mesh)
        )
    mantissa, exponent = np.frexp(mesh)
    if mantissa != 0.5:
        raise ConfigurationError(
            'Mesh {} is not a power of 1/2'.format(mesh)
        )
    return int(1 - exponent)


def lexsorted(points):
    """Rows of ``points`` in lexicographic order."""
    points = np.asarray(points, dtype=float)
    if points.shape[0] < 2:
        return points
    return points[np.lexsort(points.T[::-1])]


def is_admissible(points, tol=TOL):
    """Row-wise membership of ``A``."""
    points = np.atleast_2d(points)
    return np.all(points >= -tol, axis=1) & (points.sum(axis=1) <= 1.0 + tol)


@dataclass(frozen=True, eq=False)
class LocalPatch:
    """
    Neighbourhood of a grid node: the grid nodes within ``delta`` in the
    sup norm, and the continuous box ``[center - delta, center + delta]``
    clipped to ``[0, 1]``. Points of the box are admissible only if they
    also lie in ``A``.
    """
    center: np.ndarray
    mesh: float
    disc_nodes: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    node_ids: np.ndarray = None

    @property
    def offsets(self):
        """Lattice offsets of the patch nodes from the center."""
        return np.rint((self.disc_nodes - self.center) / self.mesh).astype(int)

    @property
    def cont_bounds(self):
        return np.column_stack([self.lower, self.upper])

    def contains(self, points):
        """Row-wise membership of the box intersected with ``A``."""
        points = np.atleast_2d(points)
        in_box = (
            np.all(points >= self.lower - TOL, axis=1)
            & np.all(points <= self.upper + TOL, axis=1)
        )
        return in_box & is_admissible(points)


class ControlGrid:
    """
    Simplex lattice of mesh ``delta`` in ``d`` dimensions.

    Grids are immutable; local patches are memoized per center node.
    """
    def __init__(self, d, mesh):
        """
        :param int d: number of risky assets
        :param float mesh: lattice spacing, a power of 1/2
        """
        if int(d) < 1:
            raise ConfigurationError('Grid dimension must be at least 1')
        self.d = int(d)
        self.exponent = mesh_exponent(mesh)
        self.mesh = 2.0 ** -self.exponent
        self.steps = 2 ** self.exponent

        lattice = list(_lattice(self.d, self.steps))
        self.index = {point: j for j, point in enumerate(lattice)}
        self.nodes = np.array(lattice, dtype=float) * self.mesh
        self.nodes.setflags(write=False)
        self._patches = {}

    def __len__(self):
        return self.nodes.shape[0]

    def __repr__(self):
        return 'ControlGrid(d={}, mesh=1/{})'.format(self.d, self.steps)

    @property
    def expected_size(self):
        """Simplex lattice count ``C(1/delta + d, d)``."""
        return comb(self.steps + self.d, self.d)

    def lattice_key(self, point):
        """
        Lattice coordinates of a node.

        :raises UsageError: if ``point`` is not a node of the grid
        """
        point = np.asarray(point, dtype=float).reshape(-1)
        if point.size != self.d:
            raise UsageError('Expected a weight vector of length {}'
                             .format(self.d))
        scaled = point / self.mesh
        key = tuple(int(v) for v in np.rint(scaled))
        if not np.allclose(scaled, key, rtol=0.0, atol=1e-9) or \
                key not in self.index:
            raise UsageError('{} is not a node of {!r}'
                             .format(point.tolist(), self))
        return key

    def node_index(self, point):
        return self.index[self.lattice_key(point)]

    def local_patch(self, center):
        """
        Grid nodes within ``delta`` of ``center`` in the sup norm, plus the
        continuous local box.

        :param center: a node of the grid
        :rtype: LocalPatch
        """
        key = self.lattice_key(center)
        patch = self._patches.get(key)
        if patch is not None:
            return patch

        neighbours = []
        for offset in itertools.product((-1, 0, 1), repeat=self.d):
            candidate = tuple(k + o for k, o in zip(key, offset))
            if candidate in self.index:
                neighbours.append(candidate)
        center = np.array(key, dtype=float) * self.mesh
        disc = np.array(neighbours, dtype=float) * self.mesh
        patch = LocalPatch(
            center=center,
            mesh=self.mesh,
            disc_nodes=disc,
            lower=np.maximum(center - self.mesh, 0.0),
            upper=np.minimum(center + self.mesh, 1.0),
            node_ids=np.array([self.index[k] for k in neighbours]),
        )
        self._patches[key] = patch
        return patch

    def argmax(self, values):
        """
        Index of the largest value; ties go to the lexicographically
        smallest node. ``values`` may be (J,) or (M, J).
        """
        return np.argmax(values, axis=-1)

    def to_dict(self):
        return {'d': self.d, 'mesh': self.mesh}


def _lattice(d, total):
    """nonnegative integer d-tuples with sum <= total, lexicographically"""
    if d == 1:
        for k in range(total + 1):
            yield (k,)
        return
    for k in range(total + 1):
        for rest in _lattice(d - 1, total - k):
            yield (k,) + rest


def build_simplex_grid(d, mesh):
    """
    Enumerate the simplex lattice of mesh ``delta`` in ``d`` dimensions.

    :raises ConfigurationError: if ``mesh`` is not a power of 1/2
    :rtype: ControlGrid
    """
    return ControlGrid(d, mesh)


def local_patch(grid, center):
    """The :class:`LocalPatch` of ``grid`` around the node ``center``."""
    return grid.local_patch(center)


def refine_offsets(d, step):
    """
    The center and its axis neighbours at distance ``step`` as offsets
    (2d + 1, d), in lexicographic order of the resulting points.
    """
    offsets = np.zeros((2 * d + 1, d))
    for i in range(d):
        offsets[2 * i + 1, i] = -step
        offsets[2 * i + 2, i] = step
    return lexsorted(offsets)


def refine_candidates(centers, mesh, level, lower, upper):
    """
    Batched :func:`refine_grid`: the level ``p`` point set of every row
    of ``centers`` and a mask of the points inside that row's box
    ``[lower, upper]`` intersected with ``A``. The center is always kept.

    :param centers: incumbents (M, d)
    :param float mesh: coarse grid mesh ``delta``
    :param int level: refinement level ``p >= 1``
    :returns: candidates (M, 2d + 1, d) in lexicographic order per row,
        mask (M, 2d + 1) and the column holding the center
    """
    if level < 1:
        raise UsageError('Refinement level must be at least 1')
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    offsets = refine_offsets(centers.shape[1], mesh / 2 ** level)
    center_col = int(np.flatnonzero(~offsets.any(axis=1))[0])

    candidates = centers[:, None, :] + offsets[None, :, :]
    lower = np.atleast_2d(lower)[:, None, :]
    upper = np.atleast_2d(upper)[:, None, :]
    inside = (
        np.all(candidates >= lower - TOL, axis=2)
        & np.all(candidates <= upper + TOL, axis=2)
        & np.all(candidates >= -TOL, axis=2)
        & (candidates.sum(axis=2) <= 1.0 + TOL)
    )
    inside[:, center_col] = True
    return candidates, inside, center_col


def refine_grid(center, mesh, level, patch):
    """
    Adaptive grid of refinement level ``p``: ``center`` plus the
    axis-aligned offsets ``center +- mesh / 2**p``, keeping only points in
    the patch box intersected with ``A``.

    :param center: incumbent weight vector
    :param float mesh: coarse grid mesh ``delta``
    :param int level: refinement level ``p >= 1``
    :param LocalPatch patch: patch bounding the search
    :returns: candidate points in lexicographic order
    :rtype: numpy.ndarray
    """
    candidates, inside, _ = refine_candidates(
        np.asarray(center, dtype=float).reshape(1, -1), mesh, level,
        patch.lower, patch.upper
    )
    return candidates[0][inside[0]]
