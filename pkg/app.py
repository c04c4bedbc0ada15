import streamlit as st
import yaml

from charts import (create_blowup_chart, create_rescaled_chart, create_scan_chart,
                    create_trajectory_chart)
from config import Config
from config_processor import ConfigProcessor
from exceptions import CoqeError
from experiment_manager import ExperimentManager
from preset_service import PresetService


def _parse_vector(text: str):
    return [float(v) for v in text.replace(",", " ").split()]


def _png_download(fig, label: str, file_name: str) -> None:
    try:
        st.download_button(label=label, data=fig.to_image(format="png"), file_name=file_name, mime="image/png")
    except Exception:
        st.info("📥 Chart download requires: `pip install kaleido`")


def _csv_download(frame, label: str, file_name: str) -> None:
    st.download_button(label, data=frame.to_csv(index=False, float_format=Config.CSV_FLOAT_FORMAT).encode("utf-8"),
                       file_name=file_name)


def main():
    st.set_page_config(page_title="Quasi-Einstein Explorer", layout="wide")
    st.title("🌀 Quasi-Einstein Explorer")
    st.markdown("**Cohomogeneity-one quasi-Einstein ODE: trajectories, symmetric shots and blow-up**")

    presets = PresetService()
    st.sidebar.header("⚙️ Run Configuration")
    view = st.sidebar.selectbox("View", ["Initial value problem", "Symmetric-shot scan", "Blow-up analysis"])

    data = {}
    if view != "Symmetric-shot scan":
        space = st.sidebar.text_input("Space preset", value="sphere2",
                                      help=f"One of {', '.join(presets.names())}, e.g. torus(3)")
        m = st.sidebar.number_input("m", value=1.0, min_value=0.0)
        lam = st.sidebar.number_input("lambda", value=0.0)
        h2 = st.sidebar.number_input("h²", value=1.0, min_value=0.0)
        data.update({"space": space, "params": {"m": m, "lambda": lam, "h2": h2}})

    if view == "Initial value problem":
        data["ivp"] = {
            "t0": st.sidebar.number_input("t0", value=0.0),
            "t_end": st.sidebar.number_input("t_end", value=1.0),
            "y": _parse_vector(st.sidebar.text_input("y(t0)", value="0")),
            "L": _parse_vector(st.sidebar.text_input("L(t0)", value="0.5")),
            "xi": st.sidebar.number_input("xi(t0)", value=0.5),
        }
    elif view == "Symmetric-shot scan":
        k1_min, k1_max = st.sidebar.slider("k1 range", min_value=-3.0, max_value=8.0,
                                           value=(Config.SCAN["k1_min"], Config.SCAN["k1_max"]))
        steps = st.sidebar.slider("Shots", min_value=10, max_value=400, value=80)
        data["scan"] = {"k1_min": k1_min, "k1_max": k1_max, "steps": steps}
    else:
        data["blowup"] = {
            "direction": st.sidebar.selectbox("Direction", ["backward", "forward"]),
            "t": st.sidebar.number_input("seed t", value=1.0),
            "y": _parse_vector(st.sidebar.text_input("seed y", value="0")),
            "L": _parse_vector(st.sidebar.text_input("seed L", value="-5")),
            "xi": st.sidebar.number_input("seed xi", value=10.0),
        }

    with st.spinner("🔄 Integrating..."):
        try:
            run = ConfigProcessor().from_mapping(data)
            manager = ExperimentManager().load_config(run).execute()
            summary = manager.get_run_summary()
        except CoqeError as e:
            st.error(f"❌ {e.describe()}")
            return

    st.success(f"✅ Finished in {summary['wall_clock_seconds']:.3f} s")
    statistics = summary["statistics"]

    if manager.scan is not None:
        col1, col2, col3 = st.columns(3)
        col1.metric("Shots", statistics["shots"])
        col2.metric("Converged", statistics["converged"])
        col3.metric("Folds", len(statistics["folds"]))
        fig = create_scan_chart(manager.scan.to_frame(), manager.scan.folds_frame(), manager.scan.pairs_frame())
        st.plotly_chart(fig, use_container_width=True)
        _png_download(fig, "📥 Download Scan Chart (PNG)", "symmetric_scan.png")
        with st.expander("📄 Level pairs"):
            st.dataframe(manager.scan.pairs_frame(), use_container_width=True)
        _csv_download(manager.scan.to_frame(), "Download Scan (CSV)", Config.SCAN_FILE)
        return

    frame = manager.get_trajectory_frame()
    col1, col2, col3, col4 = st.columns(4)
    col1.metric("Termination", statistics["termination"])
    col2.metric("Final t", f"{statistics['t_final']:.6g}")
    col3.metric("Accepted steps", statistics["accepted_steps"])
    col4.metric("Rejected steps", statistics["rejected_steps"])

    fig = create_trajectory_chart(frame)
    st.plotly_chart(fig, use_container_width=True)
    _png_download(fig, "📥 Download Trajectory Chart (PNG)", "trajectory.png")

    if manager.blowup is not None:
        report = manager.blowup
        col1, col2, col3 = st.columns(3)
        col1.metric("Singular time", f"{report.t_sing:.10g}")
        col2.metric("sup M|t - t_sing|", f"{report.sup_Mt:.6g}")
        col3.metric("Fitted exponent", f"{report.exponent:.4f}")
        for diagnostic in report.diagnostics:
            st.warning(f"⚠️ {diagnostic}")
        st.plotly_chart(create_blowup_chart(frame, report.t_sing), use_container_width=True)

        distance = st.select_slider("Distance of T from the singular time", options=[1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
                                    value=1e-3)
        window = st.slider("Rescaling window", min_value=0.1, max_value=5.0, value=1.0)
        rescaled = manager.rescale_near(distance, window)
        st.caption(f"Anchor t = {rescaled.t_anchor:.10g}, M = {rescaled.M_anchor:.6g}")
        st.plotly_chart(create_rescaled_chart(rescaled.to_frame()), use_container_width=True)

    with st.expander("✅ Invariant checks"):
        st.code(yaml.safe_dump(summary.get("checks", {}), sort_keys=False), language="yaml")
    _csv_download(frame, "Download Trajectory (CSV)", Config.TRAJECTORY_FILE)


if __name__ == "__main__":
    main()
