"""
Tests for simplex control grids, local patches and adaptive refinement
"""
import numpy as np
import pytest

from lsmcport.errors import ConfigurationError, UsageError
from lsmcport.grid import (
    ControlGrid,
    build_simplex_grid,
    is_admissible,
    lexsorted,
    local_patch,
    mesh_exponent,
    refine_candidates,
    refine_grid,
    refine_offsets,
)


class TestMeshExponent:
    """
    Tests for mesh validation
    """
    @pytest.mark.parametrize('mesh,exponent', [
        (0.5, 1), (0.125, 3), (1 / 32, 5), (2 ** -10, 10),
    ])
    def test_powers_of_half(self, mesh, exponent):
        assert mesh_exponent(mesh) == exponent

    @pytest.mark.parametrize('mesh', [0.3, 1.0, 0.0, -0.25, 2.0, 'x'])
    def test_invalid(self, mesh):
        with pytest.raises(ConfigurationError):
            mesh_exponent(mesh)


class TestBuildSimplexGrid:
    """
    Tests for simplex lattice enumeration
    """
    @pytest.mark.parametrize('d,mesh,size', [
        (1, 0.25, 5), (2, 0.25, 15), (2, 0.5, 6), (3, 0.125, 165),
        (2, 1 / 32, 561),
    ])
    def test_size(self, d, mesh, size):
        grid = build_simplex_grid(d, mesh)
        assert len(grid) == size
        assert grid.expected_size == size

    def test_nodes_admissible_and_on_lattice(self):
        grid = build_simplex_grid(3, 0.25)
        assert np.all(is_admissible(grid.nodes))
        assert np.allclose(grid.nodes / 0.25, np.rint(grid.nodes / 0.25))

    def test_lexicographic_and_unique(self):
        grid = build_simplex_grid(2, 0.125)
        assert np.array_equal(lexsorted(grid.nodes), grid.nodes)
        assert len(np.unique(grid.nodes, axis=0)) == len(grid)
        assert np.array_equal(grid.nodes[0], [0.0, 0.0])

    def test_nodes_read_only(self):
        grid = build_simplex_grid(1, 0.5)
        with pytest.raises(ValueError):
            grid.nodes[0, 0] = 1.0

    def test_invalid_mesh(self):
        with pytest.raises(ConfigurationError):
            build_simplex_grid(2, 0.3)

    def test_invalid_dimension(self):
        with pytest.raises(ConfigurationError):
            ControlGrid(0, 0.5)

    def test_node_index(self):
        grid = build_simplex_grid(2, 0.25)
        j = grid.node_index([0.25, 0.5])
        assert np.array_equal(grid.nodes[j], [0.25, 0.5])
        with pytest.raises(UsageError):
            grid.node_index([0.1, 0.5])
        with pytest.raises(UsageError):
            grid.node_index([0.75, 0.5])


class TestLocalPatch:
    """
    Tests for grid node neighbourhoods
    """
    def test_interior(self):
        grid = build_simplex_grid(2, 0.25)
        patch = local_patch(grid, [0.25, 0.25])
        assert len(patch.disc_nodes) == 9
        assert np.allclose(patch.lower, [0.0, 0.0])
        assert np.allclose(patch.upper, [0.5, 0.5])

    def test_corner(self):
        grid = build_simplex_grid(2, 0.25)
        patch = local_patch(grid, [0.0, 0.0])
        assert len(patch.disc_nodes) == 4
        assert patch.offsets.min() == 0

    def test_face(self):
        grid = build_simplex_grid(2, 0.25)
        patch = local_patch(grid, [0.5, 0.5])
        assert len(patch.disc_nodes) == 6
        assert np.all(patch.disc_nodes.sum(axis=1) <= 1.0)

    def test_node_ids(self):
        grid = build_simplex_grid(3, 0.25)
        patch = grid.local_patch([0.25, 0.0, 0.5])
        assert np.array_equal(grid.nodes[patch.node_ids], patch.disc_nodes)
        assert np.all(np.abs(patch.offsets) <= 1)

    def test_memoized(self):
        grid = build_simplex_grid(2, 0.25)
        assert grid.local_patch([0.25, 0.5]) is grid.local_patch([0.25, 0.5])

    def test_contains(self):
        grid = build_simplex_grid(2, 0.25)
        patch = grid.local_patch([0.5, 0.25])
        points = np.array([[0.5, 0.25], [0.7, 0.1], [0.7, 0.4], [0.2, 0.0]])
        assert patch.contains(points).tolist() == [True, True, False, False]

    def test_not_a_node(self):
        grid = build_simplex_grid(2, 0.25)
        with pytest.raises(UsageError):
            grid.local_patch([0.3, 0.3])


class TestArgmax:
    """
    Tests for discrete maximization and its tie-breaking
    """
    def test_ties_go_to_first_node(self):
        grid = build_simplex_grid(2, 0.25)
        values = np.zeros(len(grid))
        values[[3, 7, 9]] = 1.0
        assert grid.argmax(values) == 3

    def test_batched(self):
        grid = build_simplex_grid(1, 0.25)
        values = np.array([[0, 1, 2, 1, 0], [5, 5, 5, 5, 5]], dtype=float)
        assert grid.argmax(values).tolist() == [2, 0]


class TestRefineGrid:
    """
    Tests for adaptive refinement grids
    """
    def test_final_spacing(self):
        grid = build_simplex_grid(2, 0.25)
        patch = grid.local_patch([0.25, 0.25])
        points = refine_grid(patch.center, grid.mesh, 5, patch)
        offsets = np.abs(points - patch.center).max(axis=1)
        assert np.allclose(np.sort(offsets)[1:], 1 / 128)
        assert len(points) == 5

    def test_keeps_center_and_drops_inadmissible(self):
        grid = build_simplex_grid(1, 0.25)
        patch = grid.local_patch([0.0])
        points = refine_grid([0.0], grid.mesh, 1, patch)
        assert points[:, 0].tolist() == [0.0, 0.125]

    def test_level_zero(self):
        grid = build_simplex_grid(1, 0.25)
        with pytest.raises(UsageError):
            refine_grid([0.25], grid.mesh, 0, grid.local_patch([0.25]))


class TestRefineCandidates:
    """
    Tests for batched refinement grids
    """
    def test_offset_order(self):
        assert refine_offsets(2, 0.5).tolist() == [
            [-0.5, 0.0], [0.0, -0.5], [0.0, 0.0], [0.0, 0.5], [0.5, 0.0],
        ]

    def test_mask_matches_refine_grid(self):
        grid = build_simplex_grid(2, 0.25)
        centers = np.array([[0.5, 0.5], [0.0, 0.25], [0.25, 0.25]])
        patches = [grid.local_patch(c) for c in centers]
        lower = np.array([p.lower for p in patches])
        upper = np.array([p.upper for p in patches])

        candidates, inside, center = refine_candidates(centers, 0.25, 1,
                                                       lower, upper)

        assert candidates.shape == (3, 5, 2)
        assert center == 2
        assert inside[:, center].all()
        for m, patch in enumerate(patches):
            expected = refine_grid(centers[m], 0.25, 1, patch)
            assert candidates[m][inside[m]].tolist() == expected.tolist()
        assert inside[0].tolist() == [True, True, True, False, False]
        assert inside[1].tolist() == [False, True, True, True, True]
