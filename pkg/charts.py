import numpy as np
import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots


def create_trajectory_chart(frame: pd.DataFrame) -> go.Figure:
    """y_i and L_i on the left axis, xi on the right"""
    fig = make_subplots(specs=[[{"secondary_y": True}]])
    for column in frame.columns:
        if column.startswith(("y_", "L_")):
            fig.add_trace(go.Scatter(name=column, x=frame["t"], y=frame[column], mode="lines",
                                     hovertemplate="t: %{x:.6g}<br>" + column + ": %{y:.6g}<extra></extra>"),
                          secondary_y=False)
    fig.add_trace(go.Scatter(name="xi", x=frame["t"], y=frame["xi"], mode="lines", line=dict(dash="dot")),
                  secondary_y=True)
    fig.update_layout(title="Trajectory", height=450, template="plotly_white",
                      legend=dict(orientation="h", yanchor="bottom", y=1.02, xanchor="left", x=0))
    fig.update_xaxes(title_text="t")
    fig.update_yaxes(title_text="y, L", secondary_y=False)
    fig.update_yaxes(title_text="xi", secondary_y=True)
    return fig


def create_blowup_chart(frame: pd.DataFrame, t_sing: float) -> go.Figure:
    """Log-log M against the distance to the singular time, with M |t - t_sing|"""
    distance = np.abs(frame["t"] - t_sing)
    keep = (distance > 0) & np.isfinite(frame["M"]) & (frame["M"] > 0)
    fig = make_subplots(rows=1, cols=2, subplot_titles=("M against |t - t_sing|", "M |t - t_sing|"))
    fig.add_trace(go.Scatter(name="M", x=distance[keep], y=frame["M"][keep], mode="markers"), row=1, col=1)
    fig.add_trace(go.Scatter(name="M |t - t_sing|", x=frame["t"], y=frame["Mt"], mode="lines+markers"),
                  row=1, col=2)
    fig.update_xaxes(type="log", title_text="|t - t_sing|", row=1, col=1)
    fig.update_yaxes(type="log", title_text="M", row=1, col=1)
    fig.update_xaxes(title_text="t", row=1, col=2)
    fig.update_layout(title="Blow-up rate", height=420, template="plotly_white", showlegend=False)
    return fig


def create_scan_chart(scan_df: pd.DataFrame, folds_df: pd.DataFrame, pairs_df: pd.DataFrame) -> go.Figure:
    """Shoot map k1 -> y(1) with folds and level pairs marked"""
    fig = go.Figure()
    fig.add_trace(go.Scatter(name="y(1)", x=scan_df["k1"], y=scan_df["y_end"], mode="lines+markers",
                             marker=dict(size=4),
                             hovertemplate="k1: %{x:.6g}<br>y(1): %{y:.9g}<extra></extra>"))
    if not folds_df.empty:
        fig.add_trace(go.Scatter(name="fold", x=folds_df["k1"], y=folds_df["y_end"], mode="markers",
                                 marker=dict(size=11, symbol="diamond", color="#ef553b")))
    for _, pair in pairs_df.iterrows():
        fig.add_trace(go.Scatter(name=f"level {pair['level']:.6g}", x=[pair["k1_a"], pair["k1_b"]],
                                 y=[pair["y_a"], pair["y_b"]], mode="lines+markers",
                                 line=dict(dash="dash", color="#00cc96")))
    fig.update_layout(title="Symmetric shots on the round 2-sphere", xaxis_title="k1", yaxis_title="y(1)",
                      height=450, template="plotly_white")
    return fig


def create_rescaled_chart(frame: pd.DataFrame) -> go.Figure:
    fig = go.Figure()
    for column in frame.columns:
        if column.startswith("L_") or column in ("xi", "M"):
            fig.add_trace(go.Scatter(name=column, x=frame["s"], y=frame[column], mode="lines"))
    fig.update_layout(title="Rescaled trajectory", xaxis_title="s", height=400, template="plotly_white")
    return fig
