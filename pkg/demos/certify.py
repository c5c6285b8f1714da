# Stability certificates: Lyapunov conditions versus a direct eigenvalue check.
from mtdcctl import certify, load_config
from mtdcctl.cli import format_certificate

sd, _ = load_config("testgrid6")

# as published, gamma = 0 violates the damping bound but the loop is still stable
print(format_certificate(certify(sd), "testgrid6, gamma = 0"))
print()

# enough damping on phi lets the Lyapunov conditions certify it too
print(format_certificate(certify(sd.with_gains(gamma=4.0)), "testgrid6, gamma = 4"))
print()

# without integral action the eta consensus direction is undriven
print(format_certificate(certify(sd.with_gains(k_droop_i=0.0)), "testgrid6, k_droop_i = 0"))
