"""Fiber-network geometry, materials, boundary conditions, and file I/O.

A network is a pin-jointed truss: nodes in 3D reference coordinates joined by
2-node axial elements, each carrying a material (E, A, rho).  Nodes listed in
``boundary_nodes`` are fully Dirichlet-constrained; their displacements are
prescribed by an affine map u = (F - I) X derived from a macroscale
deformation gradient F.

Network file format (UTF-8 text, ``#`` starts a comment, one record per line):

    nodes N
    x y z            (N lines)
    elements M
    a b m            (M lines, 0-based node and material indices)
    materials K
    E A rho          (K lines)
    boundary B
    n                (B lines, one node index each)
    volume V         (optional)

When the ``volume`` line is absent the RVE volume defaults to the volume of
the reference bounding box.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray


class NetworkFormatError(ValueError):
    """Malformed network file; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NetworkValidationError(ValueError):
    """Structurally parsed but invalid network; names the offending entity."""


@dataclass(frozen=True)
class Material:
    """Linear elastic fiber constants: modulus, cross-section area, density."""

    elastic_modulus: float
    cross_section_area: float
    density: float

    def __post_init__(self):
        if not (self.elastic_modulus > 0):
            raise NetworkValidationError(
                f"material elastic_modulus must be > 0, got {self.elastic_modulus}")
        if not (self.cross_section_area > 0):
            raise NetworkValidationError(
                f"material cross_section_area must be > 0, got {self.cross_section_area}")
        if not (self.density > 0):
            raise NetworkValidationError(
                f"material density must be > 0, got {self.density}")


@dataclass(frozen=True)
class AffineBC:
    """Affine (kinematically uniform) boundary condition u = (F - I) X."""

    deformation_gradient: NDArray[np.float64]

    def __post_init__(self):
        f = np.asarray(self.deformation_gradient, dtype=np.float64)
        if f.shape != (3, 3):
            raise NetworkValidationError(
                f"deformation gradient must be 3x3, got shape {f.shape}")
        object.__setattr__(self, "deformation_gradient", f)
        if not np.linalg.det(f) > 0:
            raise NetworkValidationError("deformation gradient must have det > 0")


@dataclass(eq=False)
class FiberNetwork:
    """Immutable truss network in reference configuration.

    node_coords: (N, 3) reference positions.
    elements: (M, 3) rows of (node_a, node_b, material_index).
    materials: material table indexed by elements[:, 2].
    boundary_nodes: node indices with all three DOFs Dirichlet-constrained.
    rve_volume: averaging volume; bounding-box volume when not given.
    """

    node_coords: NDArray[np.float64]
    elements: NDArray[np.int64]
    materials: list[Material]
    boundary_nodes: frozenset[int]
    rve_volume: float | None = None

    def __post_init__(self):
        coords = np.ascontiguousarray(np.asarray(self.node_coords, dtype=np.float64))
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise NetworkValidationError(
                f"node_coords must be (N, 3), got shape {coords.shape}")
        elems = np.ascontiguousarray(np.asarray(self.elements, dtype=np.int64))
        if elems.size == 0:
            elems = elems.reshape(0, 3)
        if elems.ndim != 2 or elems.shape[1] != 3:
            raise NetworkValidationError(
                f"elements must be (M, 3), got shape {elems.shape}")
        self.node_coords = coords
        self.elements = elems
        self.boundary_nodes = frozenset(int(b) for b in self.boundary_nodes)
        self._validate()

    def _validate(self):
        n_nodes = len(self.node_coords)
        n_mat = len(self.materials)
        seen: dict[tuple[int, int], int] = {}
        for i, (a, b, m) in enumerate(self.elements):
            a, b, m = int(a), int(b), int(m)
            if a == b:
                raise NetworkValidationError(f"element {i}: endpoints coincide (node {a})")
            if not (0 <= a < n_nodes) or not (0 <= b < n_nodes):
                raise NetworkValidationError(
                    f"element {i}: node index out of range (nodes {a}, {b} of {n_nodes})")
            if not (0 <= m < n_mat):
                raise NetworkValidationError(
                    f"element {i}: material index {m} out of range ({n_mat} materials)")
            key = (a, b) if a < b else (b, a)
            if key in seen:
                raise NetworkValidationError(
                    f"duplicate element: element {i} repeats element {seen[key]} "
                    f"(nodes {key[0]}, {key[1]})")
            seen[key] = i
        lengths = self.reference_lengths()
        if np.any(lengths <= 0):
            bad = int(np.argmin(lengths))
            raise NetworkValidationError(f"element {bad}: reference length is zero")
        for b in self.boundary_nodes:
            if not (0 <= b < n_nodes):
                raise NetworkValidationError(
                    f"boundary node {b} out of range ({n_nodes} nodes)")
        if self.rve_volume is not None and not (self.rve_volume > 0):
            raise NetworkValidationError(f"rve_volume must be > 0, got {self.rve_volume}")

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def volume(self) -> float:
        """RVE volume: explicit value or reference bounding-box volume.

        Degenerate (flat or collinear) networks have a zero bounding box; the
        default then falls back to 1 so averaged stress stays defined.
        """
        if self.rve_volume is not None:
            return float(self.rve_volume)
        span = self.node_coords.max(axis=0) - self.node_coords.min(axis=0)
        box = float(span[0] * span[1] * span[2])
        return box if box > 0 else 1.0

    def reference_lengths(self) -> NDArray[np.float64]:
        """Per-element reference length |X_b - X_a|."""
        if self.n_elements == 0:
            return np.zeros(0)
        d = self.node_coords[self.elements[:, 1]] - self.node_coords[self.elements[:, 0]]
        return np.sqrt(np.einsum("ij,ij->i", d, d))

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiberNetwork):
            return NotImplemented
        return (
            np.array_equal(self.node_coords, other.node_coords)
            and np.array_equal(self.elements, other.elements)
            and self.materials == other.materials
            and self.boundary_nodes == other.boundary_nodes
            and self.volume == other.volume
        )


def _tokenized_lines(text: str):
    """Yield (line_number, tokens) for non-empty lines, comments stripped."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        tokens = body.split()
        if tokens:
            yield lineno, tokens


class _LineReader:
    def __init__(self, text: str):
        self._lines = list(_tokenized_lines(text))
        self._pos = 0
        self.lineno = 0

    def next(self) -> list[str] | None:
        if self._pos >= len(self._lines):
            return None
        self.lineno, tokens = self._lines[self._pos]
        self._pos += 1
        return tokens

    def expect(self, what: str) -> list[str]:
        tokens = self.next()
        if tokens is None:
            raise NetworkFormatError(self.lineno + 1, f"unexpected end of file, expected {what}")
        return tokens


def _parse_count(reader: _LineReader, keyword: str) -> int:
    tokens = reader.expect(f"'{keyword} <count>'")
    if len(tokens) != 2 or tokens[0] != keyword:
        raise NetworkFormatError(reader.lineno, f"expected '{keyword} <count>', got {' '.join(tokens)!r}")
    try:
        n = int(tokens[1])
    except ValueError:
        raise NetworkFormatError(reader.lineno, f"invalid {keyword} count {tokens[1]!r}") from None
    if n < 0:
        raise NetworkFormatError(reader.lineno, f"negative {keyword} count {n}")
    return n


def _parse_floats(reader: _LineReader, n: int, what: str) -> list[float]:
    tokens = reader.expect(what)
    if len(tokens) != n:
        raise NetworkFormatError(reader.lineno, f"expected {n} values for {what}, got {len(tokens)}")
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise NetworkFormatError(reader.lineno, f"invalid number in {what}: {' '.join(tokens)!r}") from None


def _parse_ints(reader: _LineReader, n: int, what: str) -> list[int]:
    tokens = reader.expect(what)
    if len(tokens) != n:
        raise NetworkFormatError(reader.lineno, f"expected {n} values for {what}, got {len(tokens)}")
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise NetworkFormatError(reader.lineno, f"invalid integer in {what}: {' '.join(tokens)!r}") from None


def load_network(source) -> FiberNetwork:
    """Parse a network from a string, bytes, file-like object, or path-free stream.

    Raises NetworkFormatError (with line number) on syntax problems and
    NetworkValidationError when the parsed network violates an invariant.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    elif hasattr(source, "read"):
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    else:
        raise TypeError(f"cannot read network from {type(source).__name__}")

    reader = _LineReader(text)
    n_nodes = _parse_count(reader, "nodes")
    coords = np.array([_parse_floats(reader, 3, "node coordinates") for _ in range(n_nodes)],
                      dtype=np.float64).reshape(n_nodes, 3)
    n_elems = _parse_count(reader, "elements")
    elems = np.array([_parse_ints(reader, 3, "element record") for _ in range(n_elems)],
                     dtype=np.int64).reshape(n_elems, 3)
    n_mats = _parse_count(reader, "materials")
    materials = [Material(*_parse_floats(reader, 3, "material record")) for _ in range(n_mats)]
    n_bound = _parse_count(reader, "boundary")
    boundary = frozenset(_parse_ints(reader, 1, "boundary node index")[0] for _ in range(n_bound))

    volume = None
    tail = reader.next()
    if tail is not None:
        if tail[0] != "volume" or len(tail) != 2:
            raise NetworkFormatError(reader.lineno, f"expected 'volume <V>' or end of file, got {' '.join(tail)!r}")
        try:
            volume = float(tail[1])
        except ValueError:
            raise NetworkFormatError(reader.lineno, f"invalid volume {tail[1]!r}") from None
        extra = reader.next()
        if extra is not None:
            raise NetworkFormatError(reader.lineno, f"trailing content: {' '.join(extra)!r}")

    return FiberNetwork(coords, elems, materials, boundary, rve_volume=volume)


def save_network(network: FiberNetwork) -> str:
    """Serialize a network to the text format; inverse of load_network."""
    out = io.StringIO()
    out.write(f"nodes {network.n_nodes}\n")
    for x, y, z in network.node_coords:
        out.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")
    out.write(f"elements {network.n_elements}\n")
    for a, b, m in network.elements:
        out.write(f"{a} {b} {m}\n")
    out.write(f"materials {len(network.materials)}\n")
    for mat in network.materials:
        out.write(f"{mat.elastic_modulus!r} {mat.cross_section_area!r} {mat.density!r}\n")
    bound = sorted(network.boundary_nodes)
    out.write(f"boundary {len(bound)}\n")
    for b in bound:
        out.write(f"{b}\n")
    out.write(f"volume {network.volume!r}\n")
    return out.getvalue()


def generate_lattice(nx: int, ny: int, nz: int, jitter: float = 0.0,
                     seed: int = 0, material: Material | None = None) -> FiberNetwork:
    """Jittered cubic lattice on the unit cube.

    Nodes sit on an nx x ny x nz grid spanning [0, 1]^3; interior nodes are
    perturbed per-coordinate by uniform noise of amplitude jitter * spacing
    (spacing taken per axis).  Elements are the grid edges along the three
    axes; every node on a cube face is a boundary node.  Identical arguments
    produce bit-identical networks.
    """
    if nx < 2 or ny < 2 or nz < 2:
        raise ValueError(f"lattice counts must be >= 2, got ({nx}, {ny}, {nz})")
    if not (0.0 <= jitter < 0.5):
        raise ValueError(f"jitter must be in [0, 0.5), got {jitter}")
    if material is None:
        material = Material(1.0, 1.0, 1.0)

    counts = (nx, ny, nz)
    spacing = np.array([1.0 / (c - 1) for c in counts])

    def node_id(i: int, j: int, k: int) -> int:
        return (i * ny + j) * nz + k

    coords = np.zeros((nx * ny * nz, 3))
    interior = []
    boundary = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                n = node_id(i, j, k)
                coords[n] = (i * spacing[0], j * spacing[1], k * spacing[2])
                if 0 < i < nx - 1 and 0 < j < ny - 1 and 0 < k < nz - 1:
                    interior.append(n)
                else:
                    boundary.append(n)

    if jitter > 0.0 and interior:
        rng = np.random.default_rng(seed)
        noise = rng.uniform(-1.0, 1.0, size=(len(interior), 3))
        coords[interior] += noise * (jitter * spacing)

    elems = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                n = node_id(i, j, k)
                if i < nx - 1:
                    elems.append((n, node_id(i + 1, j, k), 0))
                if j < ny - 1:
                    elems.append((n, node_id(i, j + 1, k), 0))
                if k < nz - 1:
                    elems.append((n, node_id(i, j, k + 1), 0))

    return FiberNetwork(coords, np.array(elems, dtype=np.int64), [material],
                        frozenset(boundary))


def apply_affine_bc(network: FiberNetwork, bc: AffineBC) -> dict[int, NDArray[np.float64]]:
    """Prescribed displacement u = (F - I) X for every boundary node."""
    g = bc.deformation_gradient - np.eye(3)
    return {b: g @ network.node_coords[b] for b in sorted(network.boundary_nodes)}
