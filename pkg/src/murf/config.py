"""Cluster configuration files: load, validate, normalize, save.

Configs are YAML.  Site positions are given in the crystal a/b/c frame
exactly as published; the loader owns the permutation into the lab frame
(default: z=a beam/polarization axis, y=c RF axis, x=b) and validates the
redundant muon-distance column when present.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from .asymmetry import FitParams
from .errors import ConfigError
from .hamiltonian import Cluster, SpinSite

DISTANCE_COLUMN_TOL = 1e-3  # angstrom, vs the file's own r_mu column
# Positions published to 4 decimals bound the distance-difference error of two
# equivalent orientations by ~1.7e-4 A; 2e-4 accepts exactly that rounding.
ORIENTATION_EQUIV_TOL = 2e-4

_AXES = ("a", "b", "c")


def _lab_permutation(frame: Mapping[str, str]) -> tuple[int, int, int]:
    """Indices into (a,b,c) for the lab (x,y,z) axes."""
    try:
        perm = tuple(_AXES.index(frame[k]) for k in ("x", "y", "z"))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"frame must map x,y,z onto crystal axes a,b,c: {frame}") from exc
    if len(set(perm)) != 3:
        raise ConfigError(f"frame axes must be a permutation of a,b,c: {frame}")
    return perm


def _parse_orientation(block: Mapping, species: Mapping, groups: Mapping, perm) -> Cluster:
    sites = []
    try:
        raw_sites = block["sites"]
        orientation_id = int(block.get("id", 1))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed orientation block: {exc}") from exc
    if not raw_sites:
        raise ConfigError("orientation has no sites")
    for k, raw in enumerate(raw_sites):
        try:
            label = str(raw["label"])
            spec = species[raw["species"]]
            r_abc = np.asarray(raw["r_abc"], dtype=float)
            j = float(spec["j"])
            gamma = float(spec["gamma_mhz_t"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed site entry {raw!r}: {exc}") from exc
        if r_abc.shape != (3,):
            raise ConfigError(f"site {label}: r_abc must have three components")
        pos_lab = tuple(float(r_abc[p]) for p in perm)
        sites.append((SpinSite(label=label, j=j, gamma_mhz_t=gamma, position=pos_lab), raw.get("r_mu")))
    mu_pos = np.asarray(sites[0][0].position)
    if sites[0][0].j != 0.5:
        raise ConfigError("first site must be the spin-1/2 muon")
    for site, r_mu in sites[1:]:
        if r_mu is None:
            continue
        dist = float(np.linalg.norm(np.asarray(site.position) - mu_pos))
        if abs(dist - float(r_mu)) > DISTANCE_COLUMN_TOL:
            raise ConfigError(
                f"site {site.label}: muon distance {dist:.4f} A disagrees with the "
                f"file's r_mu column {r_mu} beyond {DISTANCE_COLUMN_TOL} A"
            )
    cluster_groups = {str(name): tuple(str(m) for m in members) for name, members in groups.items()}
    return Cluster(sites=tuple(s for s, _ in sites), orientation_id=orientation_id, groups=cluster_groups)


def load_cluster(path: str | Path, expect_sites: int | None = 7) -> tuple[Cluster, ...]:
    """Load all cluster orientations from a YAML config.

    Validates the muon-distance column, the per-orientation site count and
    the crystallographic equivalence of the orientations (identical sorted
    muon-site distance lists).
    """
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read cluster config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("cluster config must be a mapping")
    try:
        frame = doc.get("frame", {"x": "b", "y": "c", "z": "a"})
        species = doc["species"]
        orientations = doc["orientations"]
    except KeyError as exc:
        raise ConfigError(f"cluster config missing section {exc}") from exc
    groups = doc.get("groups", {})
    perm = _lab_permutation(frame)
    clusters = tuple(_parse_orientation(block, species, groups, perm) for block in orientations)
    if not clusters:
        raise ConfigError("no orientations in config")
    for c in clusters:
        if expect_sites is not None and len(c.sites) != expect_sites:
            raise ConfigError(
                f"orientation {c.orientation_id}: expected {expect_sites} sites, got {len(c.sites)}"
            )
        labels = [s.label for s in c.sites]
        if labels != [s.label for s in clusters[0].sites]:
            raise ConfigError("orientations carry different site labels")
    ref = np.sort(np.array(list(clusters[0].muon_distances().values())))
    for c in clusters[1:]:
        dists = np.sort(np.array(list(c.muon_distances().values())))
        if np.max(np.abs(dists - ref)) > ORIENTATION_EQUIV_TOL:
            raise ConfigError(
                "orientations are not crystallographically equivalent: "
                f"sorted muon-site distances differ beyond {ORIENTATION_EQUIV_TOL} A"
            )
    return clusters


def save_cluster(clusters: Sequence[Cluster], path: str | Path, frame: Mapping[str, str] | None = None,
                 name: str = "cluster") -> None:
    """Write clusters back to the YAML schema (inverse frame permutation)."""
    frame = dict(frame or {"x": "b", "y": "c", "z": "a"})
    perm = _lab_permutation(frame)
    inv = np.argsort(perm)  # lab index for each crystal axis
    species: dict[str, dict] = {}
    out_orients = []
    for c in clusters:
        sites_out = []
        mu_pos = np.asarray(c.muon.position)
        for s in c.sites:
            key = s.label.rstrip("0123456789") or s.label
            entry = {"j": s.j, "gamma_mhz_t": s.gamma_mhz_t}
            if key in species and species[key] != entry:
                key = s.label
            species[key] = entry
            pos_lab = np.asarray(s.position)
            r_abc = [float(pos_lab[inv[k]]) for k in range(3)]
            sites_out.append({
                "label": s.label, "species": key, "r_abc": r_abc,
                "r_mu": float(np.linalg.norm(pos_lab - mu_pos)),
            })
        out_orients.append({"id": c.orientation_id, "sites": sites_out})
    groups = {k: list(v) for k, v in clusters[0].groups.items()}
    doc = {"name": name, "frame": frame, "species": species, "groups": groups,
           "orientations": out_orients}
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False, default_flow_style=None))


def default_cluster() -> tuple[Cluster, ...]:
    """The packaged LiYF4 muon-site cluster (both orientations)."""
    with resources.as_file(resources.files("murf").joinpath("data/liyf4_cluster.yaml")) as p:
        return load_cluster(p)


def load_fit_params(path: str | Path) -> tuple[FitParams, float]:
    """Read a fit-parameter YAML; returns (params, f0_khz)."""
    try:
        doc = yaml.safe_load(Path(path).read_text())
        f0 = float(doc["f0_khz"])
        params = FitParams(**{k: float(v) for k, v in doc["params"].items()})
    except (OSError, yaml.YAMLError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read fit params {path}: {exc}") from exc
    return params, f0


def save_fit_params(params: FitParams, f0_khz: float, path: str | Path) -> None:
    doc = {"f0_khz": float(f0_khz),
           "params": {name: float(getattr(params, name)) for name in FitParams.names()}}
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))


def default_fit_params() -> tuple[FitParams, float]:
    """The packaged reference parameter set; returns (params, f0_khz)."""
    with resources.as_file(resources.files("murf").joinpath("data/default_fit_params.yaml")) as p:
        return load_fit_params(p)


DEFAULT_BOUNDS: dict[str, tuple[float, float]] = {
    "s_f12": (0.8, 1.2),
    "s_li12": (0.8, 1.2),
    "s_f34": (0.8, 1.2),
    "f_rel": (0.8, 1.2),
    "g_rel": (0.0, 0.3),
    "a0": (0.0, 30.0),
    "a1": (0.0, 10.0),
    "lambda1": (0.0, 5.0),
    "a2": (-5.0, 5.0),
}


def load_bounds(path: str | Path | None) -> list[tuple[float, float]]:
    """Per-parameter fit bounds, in FitParams field order."""
    table = dict(DEFAULT_BOUNDS)
    if path is not None:
        try:
            doc = yaml.safe_load(Path(path).read_text())
            for k, v in (doc or {}).items():
                if k not in table:
                    raise ConfigError(f"unknown parameter {k!r} in bounds file")
                lo, hi = float(v[0]), float(v[1])
                table[k] = (lo, hi)
        except (OSError, yaml.YAMLError, TypeError, ValueError, IndexError) as exc:
            raise ConfigError(f"cannot read bounds {path}: {exc}") from exc
    return [table[name] for name in FitParams.names()]
