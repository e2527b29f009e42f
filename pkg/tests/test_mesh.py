import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onelap.errors import ParameterError
from onelap.mesh import assemble_mesh


def test_uniform_nodes():
    np.testing.assert_array_equal(assemble_mesh(1, 1.0, 4).nodes, [0, 0.25, 0.5, 0.75, 1])


@pytest.mark.parametrize("N, R, volume", [(2, 1.0, 0.5), (3, 2.0, 8 / 3)])
def test_total_weight(N, R, volume):
    assert assemble_mesh(N, R, 64).weights.sum() == pytest.approx(volume, rel=1e-3)


def test_geometric_clusters_at_origin():
    m = assemble_mesh(2, 1.0, 32, "geometric-toward-0")
    assert m.dr[0] < m.dr[-1]
    assert m.nodes[0] == 0 and m.nodes[-1] == 1


def test_too_few_cells():
    with pytest.raises(ParameterError):
        assemble_mesh(2, 1.0, 3)
    with pytest.raises(ParameterError):
        assemble_mesh(2, 1.0, 16, "chebyshev")


@settings(max_examples=30)
@given(st.integers(1, 3), st.floats(0.1, 10), st.integers(4, 200), st.sampled_from(["uniform", "geometric"]))
def test_weights_positive_and_sum(N, R, M, grading):
    m = assemble_mesh(N, R, M, grading)
    assert np.all(m.weights > 0)
    assert np.all(np.diff(m.nodes) > 0)
    # dual cells tile the ball exactly up to the node-point quadrature
    exact = np.diff(m.dual_edges ** N) / N
    assert m.weights.sum() == pytest.approx(R ** N / N, rel=0.6 if M < 8 else 0.1)
    assert exact.sum() == pytest.approx(R ** N / N, rel=1e-12)
