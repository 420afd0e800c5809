"""Structured-grid finite elements: meshes, element matrices, assembly, density filter.

Supports uniform Q4 (2D, plane stress) and Hex8 (3D) grids with lexicographic
node numbering (x fastest). All assembled operators are scipy CSR matrices.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

DEFAULT_NU = 0.3


@dataclass(frozen=True)
class StructuredMesh:
    """Uniform structured grid of Q4 or Hex8 elements.

    Nodes are numbered lexicographically with x varying fastest; element e
    owns 4 (2D) or 8 (3D) nodes in the standard counterclockwise ordering.
    """

    dims: tuple
    element_size: tuple

    def __post_init__(self):
        if len(self.dims) not in (2, 3):
            raise ValueError("mesh must be 2D or 3D, got dims=%r" % (self.dims,))
        if len(self.dims) != len(self.element_size):
            raise ValueError("dims and element_size length mismatch")
        if any(d < 1 for d in self.dims):
            raise ValueError("all dims must be >= 1")
        if any(h <= 0 for h in self.element_size):
            raise ValueError("all element sizes must be > 0")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "element_size", tuple(float(h) for h in self.element_size))

    @property
    def ndim(self):
        return len(self.dims)

    @property
    def dofs_per_node(self):
        return self.ndim

    @property
    def node_count(self):
        return int(np.prod([d + 1 for d in self.dims]))

    @property
    def element_count(self):
        return int(np.prod(self.dims))

    @property
    def total_dofs(self):
        return self.node_count * self.dofs_per_node

    def node_coordinates(self):
        """(node_count, ndim) array of physical node positions."""
        axes = [np.arange(d + 1) * h for d, h in zip(self.dims, self.element_size)]
        grids = np.meshgrid(*axes, indexing="ij")
        # lexicographic with x fastest: flatten in Fortran order over (x, y[, z])
        return np.stack([g.ravel(order="F") for g in grids], axis=1)

    def node_index(self, *ijk):
        """Node index from integer grid coordinates."""
        if self.ndim == 2:
            i, j = ijk
            return i + j * (self.dims[0] + 1)
        i, j, k = ijk
        return i + (self.dims[0] + 1) * (j + (self.dims[1] + 1) * k)

    def element_nodes(self):
        """(element_count, 4 or 8) connectivity in local node ordering."""
        if self.ndim == 2:
            nx, ny = self.dims
            i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
            i = i.ravel(order="F")
            j = j.ravel(order="F")
            n0 = self.node_index(i, j)
            n1 = self.node_index(i + 1, j)
            n2 = self.node_index(i + 1, j + 1)
            n3 = self.node_index(i, j + 1)
            return np.stack([n0, n1, n2, n3], axis=1)
        nx, ny, nz = self.dims
        i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
        i = i.ravel(order="F")
        j = j.ravel(order="F")
        k = k.ravel(order="F")
        bottom = [
            self.node_index(i, j, k),
            self.node_index(i + 1, j, k),
            self.node_index(i + 1, j + 1, k),
            self.node_index(i, j + 1, k),
        ]
        top = [
            self.node_index(i, j, k + 1),
            self.node_index(i + 1, j, k + 1),
            self.node_index(i + 1, j + 1, k + 1),
            self.node_index(i, j + 1, k + 1),
        ]
        return np.stack(bottom + top, axis=1)

    def element_dofs(self):
        """(element_count, nodes*dofs_per_node) dof map per element."""
        conn = self.element_nodes()
        dpn = self.dofs_per_node
        edof = np.empty((conn.shape[0], conn.shape[1] * dpn), dtype=np.int64)
        for c in range(dpn):
            edof[:, c::dpn] = dpn * conn + c
        return edof

    def element_centroids(self):
        """(element_count, ndim) centroid positions."""
        axes = [(np.arange(d) + 0.5) * h for d, h in zip(self.dims, self.element_size)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel(order="F") for g in grids], axis=1)


@dataclass
class BoundaryConditions:
    """Fixed dofs plus nodal load vector (zeroed on fixed dofs)."""

    fixed_dofs: np.ndarray
    load_vector: np.ndarray

    def __post_init__(self):
        self.fixed_dofs = np.unique(np.asarray(self.fixed_dofs, dtype=np.int64))
        self.load_vector = np.asarray(self.load_vector, dtype=float).copy()
        if self.fixed_dofs.size and self.fixed_dofs[-1] >= self.load_vector.size:
            raise ValueError("fixed dof index out of range")
        self.load_vector[self.fixed_dofs] = 0.0

    @property
    def free_mask(self):
        mask = np.ones(self.load_vector.size, dtype=bool)
        mask[self.fixed_dofs] = False
        return mask


@dataclass
class FilterOperator:
    """Row-normalized linear density filter rho = S @ alpha."""

    matrix: sp.csr_matrix
    radius: float

    def apply(self, alpha):
        return self.matrix @ alpha

    def apply_transpose(self, g):
        return self.matrix.T @ g


def build_mesh(dims, element_size=None):
    """Construct a StructuredMesh; element_size defaults to unit cubes."""
    if element_size is None:
        element_size = [1.0] * len(dims)
    return StructuredMesh(tuple(dims), tuple(element_size))


def _gauss_points_1d():
    g = 1.0 / np.sqrt(3.0)
    return np.array([-g, g]), np.array([1.0, 1.0])


def _shape_gradients(mesh_ndim, xi):
    """Shape values N and natural-coordinate gradients dN at point xi."""
    if mesh_ndim == 2:
        s, t = xi
        N = 0.25 * np.array([(1 - s) * (1 - t), (1 + s) * (1 - t),
                             (1 + s) * (1 + t), (1 - s) * (1 + t)])
        dN = 0.25 * np.array([
            [-(1 - t), (1 - t), (1 + t), -(1 + t)],
            [-(1 - s), -(1 + s), (1 + s), (1 - s)],
        ])
        return N, dN
    s, t, u = xi
    sgn_s = np.array([-1, 1, 1, -1, -1, 1, 1, -1])
    sgn_t = np.array([-1, -1, 1, 1, -1, -1, 1, 1])
    sgn_u = np.array([-1, -1, -1, -1, 1, 1, 1, 1])
    N = 0.125 * (1 + sgn_s * s) * (1 + sgn_t * t) * (1 + sgn_u * u)
    dN = 0.125 * np.array([
        sgn_s * (1 + sgn_t * t) * (1 + sgn_u * u),
        sgn_t * (1 + sgn_s * s) * (1 + sgn_u * u),
        sgn_u * (1 + sgn_s * s) * (1 + sgn_t * t),
    ])
    return N, dN


def _constitutive(ndim, E, nu):
    if ndim == 2:  # plane stress, unit thickness
        c = E / (1.0 - nu ** 2)
        return c * np.array([
            [1.0, nu, 0.0],
            [nu, 1.0, 0.0],
            [0.0, 0.0, (1.0 - nu) / 2.0],
        ])
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    D = np.zeros((6, 6))
    D[:3, :3] = lam
    D[np.arange(3), np.arange(3)] += 2 * mu
    D[3:, 3:] = mu * np.eye(3)
    return D


def _b_matrix(ndim, grad):
    """Strain-displacement matrix from physical shape gradients (ndim, nn)."""
    nn = grad.shape[1]
    if ndim == 2:
        B = np.zeros((3, 2 * nn))
        B[0, 0::2] = grad[0]
        B[1, 1::2] = grad[1]
        B[2, 0::2] = grad[1]
        B[2, 1::2] = grad[0]
        return B
    B = np.zeros((6, 3 * nn))
    B[0, 0::3] = grad[0]
    B[1, 1::3] = grad[1]
    B[2, 2::3] = grad[2]
    B[3, 0::3] = grad[1]
    B[3, 1::3] = grad[0]
    B[4, 1::3] = grad[2]
    B[4, 2::3] = grad[1]
    B[5, 0::3] = grad[2]
    B[5, 2::3] = grad[0]
    return B


def _quadrature(mesh):
    """Iterate (weight*detJ, physical gradients) over the element Gauss points."""
    ndim = mesh.ndim
    h = np.array(mesh.element_size)
    detJ = np.prod(h / 2.0)
    pts, wts = _gauss_points_1d()
    out = []
    if ndim == 2:
        for a, wa in zip(pts, wts):
            for b, wb in zip(pts, wts):
                _, dN = _shape_gradients(2, (a, b))
                grad = dN / (h[:, None] / 2.0)
                out.append((wa * wb * detJ, grad))
    else:
        for a, wa in zip(pts, wts):
            for b, wb in zip(pts, wts):
                for c, wc in zip(pts, wts):
                    _, dN = _shape_gradients(3, (a, b, c))
                    grad = dN / (h[:, None] / 2.0)
                    out.append((wa * wb * wc * detJ, grad))
    return out


def element_stiffness(mesh, E=1.0, nu=DEFAULT_NU):
    """Element stiffness matrix (8x8 for Q4, 24x24 for Hex8) by Gauss quadrature."""
    if not (0 <= nu < 0.5):
        raise ValueError("nu must be in [0, 0.5)")
    if E <= 0:
        raise ValueError("E must be positive")
    ndim = mesh.ndim
    D = _constitutive(ndim, E, nu)
    nd = (4 if ndim == 2 else 8) * ndim
    ke = np.zeros((nd, nd))
    for w, grad in _quadrature(mesh):
        B = _b_matrix(ndim, grad)
        ke += w * (B.T @ D @ B)
    return 0.5 * (ke + ke.T)


def geometric_stiffness_tensor(mesh, nu=DEFAULT_NU):
    """Third-order tensor G with G[k] the element stress stiffness for u_e = e_k.

    The element stress stiffness for a unit stress modulus is linear in the
    element displacements, so any state is recovered as einsum('k,kij->ij', u_e, G).
    The sign is chosen so that a compressive prestress produces positive
    eigenvalues of the buckling pencil (largest eigenvalue = 1/P_critical).
    """
    ndim = mesh.ndim
    D = _constitutive(ndim, 1.0, nu)
    nn = 4 if ndim == 2 else 8
    nd = nn * ndim
    G = np.zeros((nd, nd, nd))
    eye = np.eye(nd)
    for w, grad in _quadrature(mesh):
        B = _b_matrix(ndim, grad)
        for k in range(nd):
            sig = D @ (B @ eye[k])
            if ndim == 2:
                S = np.array([[sig[0], sig[2]], [sig[2], sig[1]]])
            else:
                S = np.array([
                    [sig[0], sig[3], sig[5]],
                    [sig[3], sig[1], sig[4]],
                    [sig[5], sig[4], sig[2]],
                ])
            knode = grad.T @ S @ grad
            G[k] -= w * np.kron(knode, np.eye(ndim))
    return G


def _scatter(mesh, ke_all):
    """Assemble per-element dense matrices into a global CSR matrix."""
    edof = mesh.element_dofs()
    nd = edof.shape[1]
    rows = np.repeat(edof, nd, axis=1).ravel()
    cols = np.tile(edof, (1, nd)).ravel()
    n = mesh.total_dofs
    K = sp.coo_matrix((ke_all.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    return K


def apply_dirichlet(K, fixed_dofs):
    """Symmetric elimination with unit diagonal: zero rows/cols, 1 on the diagonal."""
    n = K.shape[0]
    mask = np.ones(n)
    mask[fixed_dofs] = 0.0
    Z = sp.diags(mask)
    Kbc = (Z @ K @ Z).tocsr()
    ones = np.zeros(n)
    ones[fixed_dofs] = 1.0
    Kbc = (Kbc + sp.diags(ones)).tocsr()
    Kbc.sum_duplicates()
    return Kbc


def assemble_stiffness(mesh, bc, element_moduli, nu=DEFAULT_NU):
    """Global stiffness K(rho) with Dirichlet rows/columns eliminated.

    Pass bc=None to obtain the unconstrained (singular) operator.
    """
    element_moduli = np.asarray(element_moduli, dtype=float)
    if element_moduli.shape != (mesh.element_count,):
        raise ValueError("element_moduli must have one entry per element")
    if np.any(element_moduli <= 0):
        raise ValueError("element moduli must be positive")
    ke = element_stiffness(mesh, 1.0, nu)
    ke_all = element_moduli[:, None, None] * ke[None, :, :]
    K = _scatter(mesh, ke_all)
    if bc is not None:
        K = apply_dirichlet(K, bc.fixed_dofs)
    return K


def assemble_stress_stiffness(mesh, bc, u, element_sigma_moduli, nu=DEFAULT_NU,
                              tensor=None):
    """Global stress stiffness K_sigma at the stress state induced by u.

    Linear in u; pass a precomputed geometric_stiffness_tensor to amortize setup.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.total_dofs,):
        raise ValueError("u must have one entry per dof")
    moduli = np.asarray(element_sigma_moduli, dtype=float)
    if tensor is None:
        tensor = geometric_stiffness_tensor(mesh, nu)
    edof = mesh.element_dofs()
    ue = u[edof]
    ke_all = np.einsum("ek,kij->eij", ue, tensor) * moduli[:, None, None]
    Ks = _scatter(mesh, ke_all)
    if bc is not None:
        mask = np.ones(mesh.total_dofs)
        mask[bc.fixed_dofs] = 0.0
        Z = sp.diags(mask)
        Ks = (Z @ Ks @ Z).tocsr()
    return Ks


def build_filter(mesh, radius=1.5):
    """Linear hat-weight density filter with the given radius in element units.

    Centroid distances are measured in units of the element size per axis, so
    radius=1.5 always reaches the first ring of neighbors regardless of the
    physical element dimensions.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    dims = mesh.dims
    reach = int(np.ceil(radius - 1e-12)) - 1
    reach = max(reach, 0)
    offsets = []
    rng = range(-reach, reach + 1)
    if mesh.ndim == 2:
        for dx in rng:
            for dy in rng:
                d = np.hypot(dx, dy)
                if d < radius:
                    offsets.append((np.array([dx, dy]), radius - d))
    else:
        for dx in rng:
            for dy in rng:
                for dz in rng:
                    d = np.sqrt(dx * dx + dy * dy + dz * dz)
                    if d < radius:
                        offsets.append((np.array([dx, dy, dz]), radius - d))

    index_grids = np.meshgrid(*[np.arange(d) for d in dims], indexing="ij")
    idx = np.stack([g.ravel(order="F") for g in index_grids], axis=1)
    strides = np.cumprod([1] + list(dims[:-1]))
    rows, cols, vals = [], [], []
    for off, w in offsets:
        nbr = idx + off
        ok = np.all((nbr >= 0) & (nbr < np.array(dims)), axis=1)
        e = (idx[ok] * strides).sum(axis=1)
        f = (nbr[ok] * strides).sum(axis=1)
        rows.append(e)
        cols.append(f)
        vals.append(np.full(e.size, w))
    S = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.element_count, mesh.element_count),
    ).tocsr()
    rowsum = np.asarray(S.sum(axis=1)).ravel()
    S = sp.diags(1.0 / rowsum) @ S
    return FilterOperator(matrix=S.tocsr(), radius=float(radius))


def rigid_body_modes(mesh, fixed_dofs=None):
    """Rigid-body-mode candidate vectors (3 columns in 2D, 6 in 3D).

    Computed from the full-mesh geometry; optionally zeroed on fixed dofs.
    """
    xyz = mesh.node_coordinates()
    xyz = xyz - xyz.mean(axis=0)
    n = mesh.node_count
    dpn = mesh.dofs_per_node
    if mesh.ndim == 2:
        B = np.zeros((n * dpn, 3))
        B[0::2, 0] = 1.0
        B[1::2, 1] = 1.0
        B[0::2, 2] = -xyz[:, 1]
        B[1::2, 2] = xyz[:, 0]
    else:
        B = np.zeros((n * dpn, 6))
        for c in range(3):
            B[c::3, c] = 1.0
        # rotations about z, x, y
        B[0::3, 3] = -xyz[:, 1]
        B[1::3, 3] = xyz[:, 0]
        B[1::3, 4] = -xyz[:, 2]
        B[2::3, 4] = xyz[:, 1]
        B[0::3, 5] = xyz[:, 2]
        B[2::3, 5] = -xyz[:, 0]
    if fixed_dofs is not None:
        B[np.asarray(fixed_dofs, dtype=np.int64)] = 0.0
    return B
