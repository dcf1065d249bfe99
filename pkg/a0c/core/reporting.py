"""
Reporting
Per-episode CSV logs and SVG learning curves over accounted environment steps.
"""

from pathlib import Path
from typing import List, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from a0c.exceptions import ReportFormatError  # noqa: E402
from a0c.models.schemas import CSV_COLUMNS, RepetitionResult, RunRecord  # noqa: E402
from a0c.utils.logger import logger  # noqa: E402


SMOOTHING_WINDOW = 10

PathLike = Union[str, Path]


def records_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    """Records as a DataFrame with exactly the CSV columns, in order"""
    return pd.DataFrame([record.csv_row() for record in records], columns=CSV_COLUMNS)


def collect_records(results: Sequence[RepetitionResult]) -> List[RunRecord]:
    return [record for result in results for record in result.records]


def emit_csv(records: Sequence[RunRecord], path: PathLike) -> Path:
    """
    Write one row per episode with the fixed column order.

    Floats are written in shortest round-trip form, so read_results
    recovers identical values.

    Raises:
        ReportFormatError: no records
        OSError: path not writable
    """
    if not records:
        raise ReportFormatError("no records to write")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records_frame(records).to_csv(path, index=False, na_rep="nan", lineterminator="\n")
    logger.info(f"Wrote {len(records)} record(s) to {path}")
    return path


def read_results(path: PathLike) -> pd.DataFrame:
    """
    Parse a CSV written by emit_csv.

    Raises:
        ReportFormatError: columns differ from the expected header, or the
            file is empty
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError as e:
        raise ReportFormatError("empty result file", str(path)) from e
    if list(frame.columns) != CSV_COLUMNS:
        raise ReportFormatError("unexpected columns", f"{path}: {list(frame.columns)}")
    if frame.empty:
        raise ReportFormatError("result file has no rows", str(path))
    return frame


def n_trace_of(frame: pd.DataFrame) -> int:
    """
    N_trace implied by the step accounting, accounted = real * N_trace.

    Raises:
        ReportFormatError: ratio missing, fractional or not constant
    """
    rows = frame[frame["real_steps"] > 0]
    if rows.empty:
        raise ReportFormatError("no steps recorded; N_trace is undefined")
    ratios = rows["accounted_steps"] / rows["real_steps"]
    first = float(ratios.iloc[0])
    if not np.allclose(ratios, first) or first != round(first):
        raise ReportFormatError("inconsistent step accounting", f"ratios {sorted(set(ratios))}")
    return int(round(first))


def smoothed_returns(frame: pd.DataFrame, window: int = SMOOTHING_WINDOW) -> pd.DataFrame:
    """Add a ``smoothed`` column: trailing mean of return over ``window`` episodes per repetition"""
    frame = frame.sort_values(["rep", "episode"]).reset_index(drop=True)
    frame["smoothed"] = frame.groupby("rep")["return"].transform(
        lambda s: s.rolling(window, min_periods=1).mean()
    )
    return frame


def learning_curve(frame: pd.DataFrame, window: int = SMOOTHING_WINDOW) -> pd.DataFrame:
    """Mean, min and max of the smoothed return over repetitions, per episode index"""
    smoothed = smoothed_returns(frame, window)
    curve = smoothed.groupby("episode").agg(
        steps=("accounted_steps", "mean"),
        mean=("smoothed", "mean"),
        low=("smoothed", "min"),
        high=("smoothed", "max"),
    )
    return curve.reset_index()


def quartile_summary(frame: pd.DataFrame, window: int = SMOOTHING_WINDOW) -> pd.DataFrame:
    """
    Per repetition: mean smoothed return over the first and the final
    quartile of its episodes, and their difference.
    """
    rows = []
    for rep, group in smoothed_returns(frame, window).groupby("rep"):
        values = group["smoothed"].to_numpy()
        quarter = max(len(values) // 4, 1)
        first = float(values[:quarter].mean())
        final = float(values[-quarter:].mean())
        rows.append({"rep": rep, "first_quartile": first, "final_quartile": final, "improvement": final - first})
    return pd.DataFrame(rows, columns=["rep", "first_quartile", "final_quartile", "improvement"])


def plot_curves(csv_paths: Sequence[PathLike], window: int = SMOOTHING_WINDOW) -> Figure:
    """
    Draw one learning curve per CSV: mean smoothed return against accounted
    steps with a shaded min-max band over repetitions. A single-point series
    is drawn as one marker.

    Raises:
        ReportFormatError: no inputs, or an input with inconsistent columns
    """
    if not csv_paths:
        raise ReportFormatError("at least one CSV is required")

    curves = []
    for path in csv_paths:
        frame = read_results(path)
        curves.append((n_trace_of(frame), learning_curve(frame, window)))

    fig, ax = plt.subplots(figsize=(8, 5))
    for n_trace, curve in curves:
        label = f"N_trace = {n_trace}"
        if len(curve) == 1:
            ax.plot(curve["steps"], curve["mean"], marker="o", linestyle="None", label=label)
            continue
        (line,) = ax.plot(curve["steps"], curve["mean"], label=label)
        ax.fill_between(curve["steps"], curve["low"], curve["high"], color=line.get_color(), alpha=0.2)
    ax.set_xlabel("Accounted environment steps")
    ax.set_ylabel(f"Episode return (trailing mean over {window})")
    ax.set_title("Pendulum swing-up")
    ax.legend(loc="lower right")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def emit_plot(csv_paths: Sequence[PathLike], out: PathLike, window: int = SMOOTHING_WINDOW) -> Path:
    """Render plot_curves to a self-contained SVG file"""
    fig = plot_curves(csv_paths, window)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        with plt.rc_context({"svg.fonttype": "none", "svg.hashsalt": "a0c"}):
            fig.savefig(out, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    logger.info(f"Wrote learning curves for {len(csv_paths)} file(s) to {out}")
    return out
