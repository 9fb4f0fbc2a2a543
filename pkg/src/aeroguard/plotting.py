"""Tidy plot data and figures from a trajectory log.

Two products mirror the reported result figures: the split of the control
wrench into its inertial and aerodynamic cancellation parts, and the tracking
of the six guard channels.  Each writes a long-format CSV
(``t,series,value``) and a PNG rendered with the Agg backend.
"""

import os

import numpy as np

from .sim import atomic_write_text

WRENCH_LABELS = ("fx", "fy", "fz", "mroll", "mpitch", "myaw")
CHANNELS = ("x", "y", "z", "roll", "pitch", "yaw")


def dominant_frequency(t, x, window=None):
    """Frequency of the largest non-DC FFT peak over the final ``window`` seconds.

    Returns ``(frequency, bin_width)`` in Hz.
    """
    t = np.asarray(t, float)
    x = np.asarray(x, float)
    if window is not None:
        sel = t >= t[-1] - window - 1e-12
        t, x = t[sel], x[sel]
    if t.size < 4:
        raise ValueError("need at least four samples for a spectrum")
    dt = float(np.median(np.diff(t)))
    spec = np.abs(np.fft.rfft(x - x.mean()))
    freqs = np.fft.rfftfreq(x.size, dt)
    k = int(np.argmax(spec[1:])) + 1
    return float(freqs[k]), float(freqs[1] - freqs[0])


def _tidy(t, series):
    rows = []
    for name, values in series.items():
        rows.extend(f"{float(ti)!r},{name},{float(v)!r}" for ti, v in zip(t, values))
    return "t,series,value\n" + "\n".join(rows) + "\n"


def gen_forces_series(log):
    t = log.column("t")
    series = {}
    for j, lab in enumerate(WRENCH_LABELS):
        series[f"inertial_{lab}"] = log.column(f"inertial_{j}")
    for j, lab in enumerate(WRENCH_LABELS):
        series[f"aero_{lab}"] = log.column(f"aero_{j}")
    return t, series


def tracking_series(log):
    t = log.column("t")
    series = {}
    for ch in CHANNELS:
        series[ch] = log.column(f"guard_{ch}")
        series[f"{ch}_setpoint"] = log.column(f"setpoint_{ch}")
    return t, series


def aero_dominant_frequency(log, window=5.0):
    """Dominant frequency of the strongest aerodynamic cancellation channel."""
    t, series = gen_forces_series(log)
    aero = {k: v for k, v in series.items() if k.startswith("aero_")}
    sel = t >= t[-1] - window - 1e-12
    name = max(aero, key=lambda k: np.std(aero[k][sel]))
    f, df = dominant_frequency(t, aero[name], window)
    return name, f, df


def settling_report(log, window=5.0, pos_band=0.01, att_band_deg=3.0):
    """Per-channel maximum absolute tracking error over the final window."""
    t = log.column("t")
    sel = t >= t[-1] - window - 1e-12
    out = {}
    for ch in CHANNELS:
        err = log.column(f"guard_{ch}")[sel] - log.column(f"setpoint_{ch}")[sel]
        if ch in ("roll", "pitch", "yaw"):
            err = (err + np.pi) % (2.0 * np.pi) - np.pi
            band = np.radians(att_band_deg)
        else:
            band = pos_band
        peak = float(np.max(np.abs(err)))
        out[ch] = {"max_error": peak, "band": band, "settled": peak < band}
    return out


def _figure(t, series, groups, title, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(len(groups), 1, figsize=(8, 1.8 * len(groups)), sharex=True)
    for ax, (label, names) in zip(np.atleast_1d(axes), groups):
        for name in names:
            style = "--" if name.endswith("_setpoint") else "-"
            ax.plot(t, series[name], style, lw=0.8, label=name)
        ax.set_ylabel(label)
        ax.legend(loc="upper right", fontsize=6)
    np.atleast_1d(axes)[-1].set_xlabel("t [s]")
    fig.suptitle(title)
    fig.tight_layout()
    tmp = path + ".tmp.png"
    fig.savefig(tmp, dpi=110)
    plt.close(fig)
    os.replace(tmp, path)


def write_gen_forces(log, out_dir, stem="gen_forces"):
    os.makedirs(out_dir, exist_ok=True)
    t, series = gen_forces_series(log)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    png_path = os.path.join(out_dir, f"{stem}.png")
    atomic_write_text(csv_path, _tidy(t, series))
    groups = [(lab, (f"inertial_{lab}", f"aero_{lab}")) for lab in WRENCH_LABELS]
    _figure(t, series, groups, "Generalized wrench: inertial vs aerodynamic cancellation", png_path)
    return csv_path, png_path


def write_tracking(log, out_dir, stem="tracking"):
    os.makedirs(out_dir, exist_ok=True)
    t, series = tracking_series(log)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    png_path = os.path.join(out_dir, f"{stem}.png")
    atomic_write_text(csv_path, _tidy(t, series))
    groups = [(ch, (ch, f"{ch}_setpoint")) for ch in CHANNELS]
    _figure(t, series, groups, "Guard tracking", png_path)
    return csv_path, png_path


def read_tidy(path):
    """Load a tidy CSV back into ``{series: (t, values)}``."""
    data = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "t,series,value":
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            t, name, v = line.rstrip("\n").split(",")
            data.setdefault(name, ([], []))
            data[name][0].append(float(t))
            data[name][1].append(float(v))
    return {k: (np.array(a), np.array(b)) for k, (a, b) in data.items()}
