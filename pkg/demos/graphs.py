# Graph algebra on the six-terminal test grid.
import numpy as np

from mtdcctl import load_config
from mtdcctl.graph import (
    algebraic_connectivity,
    incidence_matrix,
    orthonormal_complement,
    proportionality_factor,
)

sd, _ = load_config("testgrid6")
dc = sd.dc_topology
print("nodes", dc.n, "lines", dc.m)

# B W B^T reproduces the conductance Laplacian
b = incidence_matrix(dc)
lap = sd.laplacian_r
print("incidence shape", b.shape)
print("|B W B^T - L_R| =", np.max(np.abs(b @ np.diag(dc.weights) @ b.T - lap)))
print("L_R[0, 0] =", round(lap[0, 0], 3))
print("algebraic connectivity", algebraic_connectivity(lap))

# phi weights are 15 / R, eta weights 5 / R
print("k_phi =", round(proportionality_factor(sd.laplacian_phi, lap), 9))
print("k_eta =", round(proportionality_factor(sd.laplacian_eta, lap), 9))

# basis of the complement of the ones vector
s = orthonormal_complement(6)
print("S^T S = I:", np.allclose(s.T @ s, np.eye(5)))
print("S S^T 1 = 0:", np.allclose(s @ s.T @ np.ones(6), 0))
print("eigenvalues of S^T L_R S:", np.round(np.linalg.eigvalsh(s.T @ lap @ s), 2))
