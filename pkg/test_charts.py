import numpy as np
import pandas as pd

from charts import create_blowup_chart, create_rescaled_chart, create_scan_chart, create_trajectory_chart


def test_trajectory_chart_has_one_trace_per_column():
    frame = pd.DataFrame({"t": [0.0, 0.5, 1.0], "y_1": [0.0, 0.1, 0.2], "y_2": [0.0, 0.0, 0.1],
                          "L_1": [0.2, 0.2, 0.2], "L_2": [0.0, 0.1, 0.2], "xi": [0.1, 0.0, -0.1],
                          "u": np.nan, "M": np.nan, "Mt": np.nan})
    fig = create_trajectory_chart(frame)
    assert [trace.name for trace in fig.data] == ["y_1", "y_2", "L_1", "L_2", "xi"]


def test_blowup_chart_drops_the_singular_sample():
    t = np.array([1.0, 0.1, 0.01, 0.0])
    with np.errstate(divide="ignore"):
        M = np.sqrt(2) / t
    frame = pd.DataFrame({"t": t, "M": M, "Mt": M * t})
    fig = create_blowup_chart(frame, 0.0)
    assert len(fig.data[0].x) == 3


def test_scan_chart_marks_folds_and_pairs():
    scan = pd.DataFrame({"k1": [0.0, 1.0, 2.0], "y_end": [1.0, 0.5, 1.0], "converged": True})
    folds = pd.DataFrame({"k1": [1.0], "y_end": [0.5], "kind": ["min"]})
    pairs = pd.DataFrame({"level": [0.75], "k1_a": [0.5], "k1_b": [1.5], "y_a": [0.75], "y_b": [0.75]})
    fig = create_scan_chart(scan, folds, pairs)
    assert [trace.name for trace in fig.data] == ["y(1)", "fold", "level 0.75"]


def test_rescaled_chart():
    frame = pd.DataFrame({"s": [-0.5, 0.0, 0.5], "t": [0.9, 1.0, 1.1], "y_1": 0.0, "L_1": 0.5,
                          "xi": 0.7, "M": 1.0})
    assert [trace.name for trace in create_rescaled_chart(frame).data] == ["L_1", "xi", "M"]
