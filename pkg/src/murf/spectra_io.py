"""Delimited text I/O for asymmetry spectra and detector-count tables.

Files are comma-separated numeric tables with a commented header that
carries the column names/units, optional metadata and the digest of the
run manifest that produced the file.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .asymmetry import Spectrum, experimental_asymmetry
from .constants import MUON_LIFETIME_US
from .errors import DataError

_FLOAT_FMT = "%.10g"


def write_spectrum(spectrum: Spectrum, path: str | Path, manifest_digest: str | None = None) -> None:
    """Write a spectrum as commented-header CSV (canonical formatting)."""
    path = Path(path)
    lines = ["# murf spectrum v1"]
    if manifest_digest:
        lines.append(f"# manifest: {manifest_digest}")
    for key in sorted(spectrum.meta):
        lines.append(f"# {key}: {spectrum.meta[key]}")
    cols = "time_us,asymmetry_pct" + (",sigma_pct" if spectrum.sigma is not None else "")
    lines.append(f"# columns: {cols}")
    for k in range(len(spectrum.times)):
        row = [_FLOAT_FMT % spectrum.times[k], _FLOAT_FMT % spectrum.values[k]]
        if spectrum.sigma is not None:
            row.append(_FLOAT_FMT % spectrum.sigma[k])
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def _read_table(path: Path) -> tuple[dict, np.ndarray]:
    meta: dict = {}
    rows = []
    kind = None
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.startswith("murf "):
                kind = body.split()[1]
            elif ":" in body:
                key, _, val = body.partition(":")
                meta[key.strip()] = val.strip()
            continue
        try:
            rows.append([float(x) for x in line.split(",")])
        except ValueError as exc:
            raise DataError(f"{path}: bad numeric row {line!r}") from exc
    if not rows:
        raise DataError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataError(f"{path}: ragged rows (widths {sorted(widths)})")
    meta["_kind"] = kind
    return meta, np.array(rows, dtype=float)


def load_spectrum(
    path: str | Path,
    format: str = "auto",
    alpha: float | None = None,
    sigma_default: float | None = None,
) -> Spectrum:
    """Read a spectrum table.

    `format` is ``asymmetry`` (columns time, asymmetry[, sigma]) or
    ``counts`` (columns time, n_forward, n_backward; converted through
    `experimental_asymmetry`, which requires `alpha`).  ``auto`` trusts
    the file's header marker.
    """
    path = Path(path)
    meta, table = _read_table(path)
    kind = meta.pop("_kind", None)
    if format == "auto":
        if kind in ("spectrum", "counts"):
            format = "asymmetry" if kind == "spectrum" else "counts"
        else:
            raise DataError(f"{path}: cannot infer format; pass format= explicitly")
    times = table[:, 0]
    if np.any(np.diff(times) <= 0):
        raise DataError(f"{path}: time column must be strictly increasing")
    meta = {k: v for k, v in meta.items() if k not in ("columns", "manifest")}
    if format == "counts":
        if table.shape[1] != 3:
            raise DataError(f"{path}: counts format needs 3 columns, got {table.shape[1]}")
        if alpha is None:
            raise DataError("counts format requires the detector-balance alpha (no default)")
        spec = experimental_asymmetry(times, table[:, 1], table[:, 2], alpha)
        spec.meta.update(meta)
        spec.meta["alpha"] = alpha
        return spec
    if format == "asymmetry":
        if table.shape[1] == 3:
            sigma = table[:, 2]
            if np.any(sigma[np.isfinite(sigma)] <= 0):
                raise DataError(f"{path}: sigma column must be positive")
        elif table.shape[1] == 2:
            if sigma_default is None:
                raise DataError(f"{path}: no sigma column and no default sigma supplied")
            sigma = np.full_like(times, float(sigma_default))
        else:
            raise DataError(f"{path}: asymmetry format needs 2 or 3 columns")
        return Spectrum(times=times, values=table[:, 1], sigma=sigma, meta=meta)
    raise ValueError(f"unknown format {format!r}")


def write_counts(path: str | Path, times: np.ndarray, nf: np.ndarray, nb: np.ndarray) -> None:
    path = Path(path)
    lines = ["# murf counts v1", "# columns: time_us,n_forward,n_backward"]
    for k in range(len(times)):
        lines.append(",".join(_FLOAT_FMT % v for v in (times[k], nf[k], nb[k])))
    path.write_text("\n".join(lines) + "\n")


def synthetic_counts(
    times: Sequence[float],
    asymmetry_pct: Sequence[float],
    alpha: float,
    rate0: float,
    rng: np.random.Generator,
    tau_us: float = MUON_LIFETIME_US,
) -> tuple[np.ndarray, np.ndarray]:
    """Poisson forward/backward counts for a known asymmetry.

    Count rates carry the muon-lifetime envelope: the forward mean is
    rate0 * exp(-t/tau) * (1 + a) and the backward mean is chosen so the
    configured alpha reproduces a exactly on average.
    """
    t = np.asarray(times, dtype=float)
    a = np.asarray(asymmetry_pct, dtype=float) / 100.0
    if np.any(np.abs(a) > 1):
        raise DataError("asymmetry magnitude above 100%")
    envelope = rate0 * np.exp(-t / tau_us)
    mean_f = envelope * (1.0 + a)
    mean_b = envelope * (1.0 - a) / alpha
    return rng.poisson(mean_f).astype(float), rng.poisson(mean_b).astype(float)
