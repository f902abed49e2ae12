import numpy as np
import pytest

from effsr import graph as g
from effsr import zoo
from effsr.graph import GraphBuilder, GraphError, GraphIR, Node
from effsr.ops import Conv2dParams


def identity_graph(c=3):
    return GraphIR({"in": Node("in", g.Input(c)), "out": Node("out", g.Output(), ("in",))})


def test_identity_graph_returns_input(rng):
    x = rng.standard_normal((1, 3, 5, 5))
    np.testing.assert_array_equal(g.execute(identity_graph(), x), x)


def test_identity_conv_graph(rng):
    nodes = {
        "in": Node("in", g.Input(2)),
        "c": Node("c", g.Conv2d("w"), ("in",)),
        "out": Node("out", g.Output(), ("c",)),
    }
    w = np.eye(2).reshape(2, 2, 1, 1)
    graph = GraphIR(nodes, {"w": Conv2dParams(w, np.zeros(2))})
    x = rng.standard_normal((1, 2, 4, 6))
    np.testing.assert_array_equal(g.execute(graph, x), x)


def test_shape_examples():
    b = GraphBuilder(48)
    y = b.pixel_shuffle("ps", b.input, 4)
    graph = b.build(y)
    assert g.infer_shapes(graph, (1, 48, 16, 16))["ps"] == (1, 3, 64, 64)

    b = GraphBuilder(50)
    convs = [b.conv(f"c{i}", b.input, 50, 1) for i in range(4)]
    cat = b.concat("cat", convs)
    assert g.infer_shapes(b.build(cat), (1, 50, 8, 8))["cat"] == (1, 200, 8, 8)


def test_msrresnet_output_shape():
    shapes = g.infer_shapes(zoo.build("msrresnet"), (1, 3, 256, 256))
    assert shapes["output"] == (1, 3, 1024, 1024)


def test_validation_errors():
    with pytest.raises(GraphError, match="Input"):
        GraphIR({"out": Node("out", g.Output(), ())})
    with pytest.raises(GraphError, match="unknown node"):
        GraphIR({"in": Node("in", g.Input(3)), "out": Node("out", g.Output(), ("nope",))})
    with pytest.raises(GraphError, match="blob"):
        GraphIR({"in": Node("in", g.Input(3)), "c": Node("c", g.Conv2d("w"), ("in",)),
                 "out": Node("out", g.Output(), ("c",))})
    cyc = {
        "in": Node("in", g.Input(3)),
        "a": Node("a", g.Add(), ("in", "b")),
        "b": Node("b", g.ReLU(), ("a",)),
        "out": Node("out", g.Output(), ("b",)),
    }
    with pytest.raises(GraphError, match="cycle"):
        GraphIR(cyc)


def test_shape_error_names_edge():
    b = GraphBuilder(3)
    a = b.conv("a", b.input, 8)
    c = b.conv("c", b.input, 4)
    graph = b.build(b.add("sum", [a, c]))
    with pytest.raises(GraphError) as info:
        g.infer_shapes(graph, (1, 3, 8, 8))
    msg = str(info.value)
    assert "sum" in msg and "a=(1, 8, 8, 8)" in msg and "c=(1, 4, 8, 8)" in msg


def test_input_channel_mismatch():
    with pytest.raises(GraphError, match="channels"):
        g.infer_shapes(identity_graph(3), (1, 4, 8, 8))


def test_builder_rejects_bad_pixel_shuffle_width():
    b = GraphBuilder(3)
    x = b.conv("c", b.input, 10)
    with pytest.raises(GraphError):
        b.pixel_shuffle("ps", x, 2)


def test_split_references():
    b = GraphBuilder(3)
    x = b.conv("c", b.input, 6)
    lo, hi = b.split("s", x, (2, 4))
    y = b.concat("cat", [hi, lo])
    graph = b.build(y)
    shapes = g.infer_shapes(graph, (1, 3, 5, 5))
    assert shapes["s"] == ((1, 2, 5, 5), (1, 4, 5, 5))
    x_in = np.random.default_rng(0).standard_normal((1, 3, 5, 5))
    trace = {}
    out = g.execute(graph, x_in, trace=trace)
    np.testing.assert_array_equal(out[:, :4], trace["c"][:, 2:])
    np.testing.assert_array_equal(out[:, 4:], trace["c"][:, :2])


@pytest.mark.parametrize("name", ["rfdn", "pan", "msrresnet"])
def test_execution_order_invariant(name):
    graph = zoo.build(name, seed=3)
    x = np.random.default_rng(5).standard_normal((1, 3, 16, 16))
    canonical = graph.topological_order()
    reverse = graph.topological_order(key=lambda nid: tuple(-ord(ch) for ch in nid))
    assert canonical != reverse
    a = g.execute(graph, x, order=canonical)
    b = g.execute(graph, x, order=reverse)
    assert a.tobytes() == b.tobytes()


def test_non_topological_order_rejected(rng):
    graph = zoo.build("rfdn")
    order = graph.topological_order()[::-1]
    with pytest.raises(GraphError):
        g.execute(graph, rng.standard_normal((1, 3, 16, 16)), order=order)


def test_rfdn_deterministic_bit_identical():
    graph = zoo.build("rfdn", seed=11)
    x = np.random.default_rng(0).standard_normal((1, 3, 16, 16))
    a = g.execute(graph, x)
    b = g.execute(graph, x)
    assert a.shape == (1, 3, 64, 64)
    assert a.tobytes() == b.tobytes()


def test_shared_blob_mutation_affects_every_user(rng):
    b = GraphBuilder(4)
    x = b.conv("a", b.input, 4, param="shared")
    y = b.conv("b", x, 4, param="shared")
    graph = b.build(y)
    assert len(graph.params) == 1
    xin = rng.standard_normal((1, 4, 6, 6))
    before = g.execute(graph, xin)
    graph.params["shared"].weight[...] = 0.0
    graph.params["shared"].bias[...] = 1.0
    after = g.execute(graph, xin)
    # second conv sees the mutated blob too: zero weights -> bias only
    np.testing.assert_array_equal(after, np.ones_like(after))
    assert not np.array_equal(before, after)


def test_copy_is_deep():
    graph = zoo.build("rfdn")
    dup = graph.copy()
    blob = next(iter(dup.params))
    dup.params[blob].weight[...] = 0
    assert np.any(graph.params[blob].weight != 0)


@pytest.mark.parametrize("name", zoo.MODELS)
def test_execute_shape_matches_inference(name):
    graph = zoo.build(name, seed=1)
    rng = np.random.default_rng(99)
    sizes = [(int(rng.integers(15, 21)), int(rng.integers(15, 21))) for _ in range(10)]
    for h, w in sizes:
        x = rng.standard_normal((1, 3, h, w)).astype(np.float32)
        predicted = g.infer_shapes(graph, x.shape)[graph.output_id]
        assert g.execute(graph, x).shape == predicted == (1, 3, 4 * h, 4 * w)


def test_executor_error_carries_node_id(rng):
    b = GraphBuilder(3)
    x = b.conv("big", b.input, 3, kernel=5, padding=0)
    graph = b.build(x)
    with pytest.raises(GraphError) as info:
        g.execute(graph, rng.standard_normal((1, 3, 3, 3)))
    assert info.value.node == "big"
