"""Run configuration (YAML), run summary and on-disk artifacts.

A configuration looks like::

    lattice:
      vectors: [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    ions:
      - {Z: 1.0, position: [0.3, 0.4, 0.55]}   # fractional coordinates
    grid: [16, 16, 16]
    units: {hbar: 1.0, m: 1.0, e: -1.0}      # or {preset: codata}
    ewald: {eta: auto}                        # or eta/rcut/kcut numbers
    solver: {tol_psi: 1.0e-6, tol_force: 1.0e-6, max_iter: 2000, seed: 0}
    output: {dir: out, dump_fields: true, dump_state: true, dump_green: false}
    green: {from: [-0.5, 0, 0], to: [0.5, 0, 0], points: 101}
    sweep: {parameter: separation, values: [0.1, 0.2], direction: [1, 0, 0]}

Errors name the offending field and, when known, its line in the file.
"""

import copy
import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import __version__
from .coulomb import EwaldParams, auto_ewald
from .errors import SPError
from .fields import IonSet, PhysParams, WaveField
from .lattice import Lattice, make_kgrid
from .optimize import GroundState, SolverConfig

FLOAT_FMT = "%.17g"


class ConfigError(SPError, ValueError):
    pass


# -- YAML with line numbers ------------------------------------------------


class _LineDict(dict):
    lines: dict


class _LineList(list):
    lines: list


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = _LineDict()
    out.lines = {}
    for knode, vnode in node.value:
        key = loader.construct_object(knode, deep=True)
        out[key] = loader.construct_object(vnode, deep=True)
        out.lines[key] = vnode.start_mark.line + 1
    return out


def _construct_sequence(loader, node):
    out = _LineList(loader.construct_object(v, deep=True) for v in node.value)
    out.lines = [v.start_mark.line + 1 for v in node.value]
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)
_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_sequence)


class _Reader:
    """Typed field access that reports 'file: line N: field a.b.c: ...' on failure."""

    def __init__(self, source):
        self.source = source

    def fail(self, path, msg, line=None):
        where = f"{self.source}: " + (f"line {line}: " if line else "")
        raise ConfigError(f"{where}field '{path}': {msg}")

    def get(self, node, key, path, default=dataclasses.MISSING):
        if not isinstance(node, dict):
            self.fail(path, "expected a mapping")
        if key not in node:
            if default is dataclasses.MISSING:
                self.fail(f"{path}.{key}" if path else str(key), "missing required field")
            return default, None
        line = getattr(node, "lines", {}).get(key)
        return node[key], line

    def number(self, value, path, line):
        # YAML 1.1 reads '1e-6' as a string
        try:
            if isinstance(value, bool):
                raise TypeError
            out = float(value)
        except (TypeError, ValueError):
            self.fail(path, f"expected a number, got {value!r}", line)
        if not np.isfinite(out):
            self.fail(path, f"must be finite, got {value!r}", line)
        return out

    def vector(self, value, path, line, n=3):
        if not isinstance(value, (list, tuple)) or len(value) != n:
            self.fail(path, f"expected a list of {n} numbers, got {value!r}", line)
        lines = getattr(value, "lines", [line] * n)
        return [self.number(v, f"{path}[{i}]", lines[i]) for i, v in enumerate(value)]


# -- RunConfig -----------------------------------------------------------------


@dataclass(eq=False)
class RunConfig:
    lattice: Lattice
    ions: IonSet
    dims: tuple
    units: PhysParams
    ewald: EwaldParams
    solver: SolverConfig
    out_dir: str = "out"
    dump_fields: bool = False
    dump_state: bool = True
    dump_green: bool = False
    green: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def grid(self):
        return make_kgrid(self.lattice.dual, self.dims)

    def echo(self):
        """Plain-data copy of the configuration sufficient to reproduce the run."""
        return _plain(self.raw)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
    return parse_config(text, source=str(path))


def parse_config(text, source="<config>"):
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: malformed YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    return build_config(data, source)


_SOLVER_FIELDS = {f.name: f for f in dataclasses.fields(SolverConfig)}


def build_config(data, source="<config>"):
    rd = _Reader(source)

    lat_node, line = rd.get(data, "lattice", "")
    vecs, vline = rd.get(lat_node, "vectors", "lattice")
    if not isinstance(vecs, list) or len(vecs) != 3:
        rd.fail("lattice.vectors", "expected three period vectors", vline or line)
    vlines = getattr(vecs, "lines", [vline] * 3)
    A = [rd.vector(v, f"lattice.vectors[{i}]", vlines[i]) for i, v in enumerate(vecs)]
    try:
        lattice = Lattice(np.array(A))
    except SPError as exc:
        rd.fail("lattice.vectors", str(exc), vline)

    ion_nodes, iline = rd.get(data, "ions", "")
    if not isinstance(ion_nodes, list) or not ion_nodes:
        rd.fail("ions", "expected a non-empty list of {Z, position}", iline)
    ilines = getattr(ion_nodes, "lines", [iline] * len(ion_nodes))
    charges, positions = [], []
    for i, node in enumerate(ion_nodes):
        path = f"ions[{i}]"
        z, zl = rd.get(node, "Z", path)
        z = rd.number(z, f"{path}.Z", zl or ilines[i])
        if not z > 0:
            rd.fail(f"{path}.Z", f"positivity condition requires Z_j > 0, got {z}", zl or ilines[i])
        pos, pl = rd.get(node, "position", path)
        positions.append(rd.vector(pos, f"{path}.position", pl or ilines[i]))
        charges.append(z)
    try:
        ions = IonSet(lattice, positions, charges)
    except SPError as exc:
        rd.fail("ions", str(exc), iline)

    dims, dline = rd.get(data, "grid", "", [16, 16, 16])
    if isinstance(dims, dict):
        dims, dline = rd.get(dims, "dims", "grid")
    if isinstance(dims, int) and not isinstance(dims, bool):
        dims = [dims] * 3
    if (not isinstance(dims, list) or len(dims) != 3
            or not all(isinstance(n, int) and not isinstance(n, bool) and n >= 2 for n in dims)):
        rd.fail("grid", f"expected three integers >= 2, got {dims!r}", dline)

    unode, uline = rd.get(data, "units", "", {})
    if not isinstance(unode, dict):
        rd.fail("units", "expected a mapping", uline)
    preset, pl = rd.get(unode, "preset", "units", "dimensionless")
    if preset == "codata":
        base = PhysParams.codata()
    elif preset == "dimensionless":
        base = PhysParams()
    else:
        rd.fail("units.preset", f"unknown preset {preset!r} (use dimensionless or codata)", pl)
    vals = {}
    for key in ("hbar", "m", "e"):
        v, vl = rd.get(unode, key, "units", getattr(base, key))
        vals[key] = rd.number(v, f"units.{key}", vl or uline)
    ulines = getattr(unode, "lines", {})
    for key, ok, msg in (("hbar", vals["hbar"] > 0, "must be positive"),
                         ("m", vals["m"] > 0, "must be positive"),
                         ("e", vals["e"] < 0, "electron charge must be negative")):
        if not ok:
            rd.fail(f"units.{key}", msg, ulines.get(key, uline))
    units = PhysParams(**vals)

    enode, eline = rd.get(data, "ewald", "", {})
    if not isinstance(enode, dict):
        rd.fail("ewald", "expected a mapping", eline)
    eta, etl = rd.get(enode, "eta", "ewald", "auto")
    eta = None if eta == "auto" else rd.number(eta, "ewald.eta", etl or eline)
    if eta is not None and not eta > 0:
        rd.fail("ewald.eta", "must be positive", etl)
    ew = auto_ewald(lattice, eta)
    rcut, rl = rd.get(enode, "rcut", "ewald", "auto")
    kcut, kl = rd.get(enode, "kcut", "ewald", "auto")
    rcut = ew.rcut if rcut == "auto" else rd.number(rcut, "ewald.rcut", rl)
    kcut = ew.kcut if kcut == "auto" else rd.number(kcut, "ewald.kcut", kl)
    if not (rcut > 0 and kcut > 0):
        rd.fail("ewald", "cutoffs must be positive", eline)
    ew = EwaldParams(ew.eta, rcut, kcut)

    snode, sline = rd.get(data, "solver", "", {})
    if not isinstance(snode, dict):
        rd.fail("solver", "expected a mapping", sline)
    kwargs = {}
    for key, value in snode.items():
        path = f"solver.{key}"
        kl = getattr(snode, "lines", {}).get(key, sline)
        if key not in _SOLVER_FIELDS:
            rd.fail(path, f"unknown solver option (known: {', '.join(sorted(_SOLVER_FIELDS))})", kl)
        kind = type(_SOLVER_FIELDS[key].default)
        if kind is bool:
            if not isinstance(value, bool):
                rd.fail(path, f"expected true/false, got {value!r}", kl)
            kwargs[key] = value
        elif kind is int:
            if not isinstance(value, int) or isinstance(value, bool):
                rd.fail(path, f"expected an integer, got {value!r}", kl)
            kwargs[key] = value
        else:
            kwargs[key] = rd.number(value, path, kl)
    try:
        solver = SolverConfig(**kwargs)
    except SPError as exc:
        rd.fail("solver", str(exc), sline)

    onode, oline = rd.get(data, "output", "", {})
    if not isinstance(onode, dict):
        rd.fail("output", "expected a mapping", oline)
    flags = {}
    for key, default in (("dump_fields", False), ("dump_state", True), ("dump_green", False)):
        v, vl = rd.get(onode, key, "output", default)
        if not isinstance(v, bool):
            rd.fail(f"output.{key}", f"expected true/false, got {v!r}", vl)
        flags[key] = v
    out_dir, _ = rd.get(onode, "dir", "output", "out")

    green, gline = rd.get(data, "green", "", {})
    if not isinstance(green, dict):
        rd.fail("green", "expected a mapping", gline)
    sweep, swline = rd.get(data, "sweep", "", {})
    if not isinstance(sweep, dict):
        rd.fail("sweep", "expected a mapping", swline)

    raw = _plain(data)
    return RunConfig(
        lattice=lattice,
        ions=ions,
        dims=tuple(dims),
        units=units,
        ewald=ew,
        solver=solver,
        out_dir=str(out_dir),
        green=_plain(green),
        sweep=_plain(sweep),
        raw=raw,
        **flags,
    )


def override(raw, dotted, value):
    """Copy of a plain config dict with ``a.b.0.c`` set to ``value``."""
    out = copy.deepcopy(raw)
    node = out
    keys = dotted.split(".")
    for k in keys[:-1]:
        node = node[int(k)] if isinstance(node, list) else node.setdefault(k, {})
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value
    return out


# -- Summary -------------------------------------------------------------------


@dataclass
class Summary:
    version: str
    converged: bool
    iterations: int
    energy: dict
    lam: float
    omega0: float
    lam_imag: float
    residuals: dict
    d_min: float
    ions: list
    wall_time: float
    config: dict

    @classmethod
    def from_state(cls, state: GroundState, cfg: RunConfig, wall_time):
        return cls(
            version=__version__,
            converged=bool(state.converged),
            iterations=int(state.iterations),
            energy=state.energy.as_dict(),
            lam=float(state.lam),
            omega0=float(state.omega0),
            lam_imag=float(state.lam_imag),
            residuals={k: float(v) for k, v in state.residuals.items()},
            d_min=float(state.ions.min_distance),
            ions=[
                {"Z": float(z), "position": [float(v) for v in pos]}
                for z, pos in zip(state.ions.charges, state.ions.positions)
            ],
            wall_time=float(wall_time),
            config=cfg.echo(),
        )

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        d["lambda_imag"] = d.pop("lam_imag")
        if not np.isfinite(d["d_min"]):
            d["d_min"] = None
        return d

    def to_json(self):
        # repr of a float is the shortest string that round-trips exactly
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        d["lam"] = d.pop("lambda")
        d["lam_imag"] = d.pop("lambda_imag")
        if d["d_min"] is None:
            d["d_min"] = float("inf")
        return cls(**d)


# -- state dumps ----------------------------------------------------------------


def save_state(path, state: GroundState, cfg: RunConfig):
    np.savez(
        path,
        version=__version__,
        lattice=cfg.lattice.vectors,
        positions=state.ions.positions,
        charges=state.ions.charges,
        dims=np.array(state.psi.grid.dims),
        Z=state.psi.Z,
        psi=state.psi.values,
        phi=state.phi.coeffs,
        lam=state.lam,
        omega0=state.omega0,
        lam_imag=state.lam_imag,
        units=np.array([cfg.units.hbar, cfg.units.m, cfg.units.e]),
        ewald=np.array([cfg.ewald.eta, cfg.ewald.rcut, cfg.ewald.kcut]),
        tolerances=np.array([cfg.solver.tol_psi, cfg.solver.tol_force]),
    )


def load_state(path):
    """Returns (GroundState, PhysParams, EwaldParams, (tol_psi, tol_force))."""
    from .coulomb import SpectralField
    from .energy import EnergyModel

    with np.load(path, allow_pickle=False) as z:
        lattice = Lattice(z["lattice"])
        grid = make_kgrid(lattice.dual, tuple(int(n) for n in z["dims"]))
        ions = IonSet(lattice, z["positions"], z["charges"])
        psi = WaveField(z["psi"], grid, float(z["Z"]))
        phi = SpectralField(z["phi"], grid.doubled)
        if phi.coeffs.shape != grid.doubled.dims:
            raise ValueError("potential array does not match the density grid")
        p = PhysParams(*(float(v) for v in z["units"]))
        ew = EwaldParams(*(float(v) for v in z["ewald"]))
        tols = tuple(float(v) for v in z["tolerances"])
        lam, omega0, lam_imag = float(z["lam"]), float(z["omega0"]), float(z["lam_imag"])
    energy = EnergyModel(grid, ions, p, ew).energy(psi)
    state = GroundState(psi, phi, ions, lam, omega0, energy, {}, lam_imag=lam_imag)
    return state, p, ew, tols


# -- CSV -------------------------------------------------------------------------


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(v)
    return FLOAT_FMT % v


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


FIELD_HEADER = ["ix", "iy", "iz", "x", "y", "z", "re_psi", "im_psi", "nu", "phi"]


def field_rows(state: GroundState, p: PhysParams):
    """Rows of the field dump in C order over (ix, iy, iz)."""
    g = state.psi.grid
    xyz = g.lattice.to_cartesian(g.nodes)
    psi = state.psi.values
    nu = p.e * np.abs(psi) ** 2
    # psi nodes are every other density-grid node
    phi = state.phi.samples().real[::2, ::2, ::2]
    for ix, iy, iz in np.ndindex(*g.dims):
        x = xyz[ix, iy, iz]
        yield (ix, iy, iz, x[0], x[1], x[2], psi[ix, iy, iz].real, psi[ix, iy, iz].imag,
               nu[ix, iy, iz], phi[ix, iy, iz])
