# Equilibria and how close they come to the economic optimum.
import numpy as np

from mtdcctl import assemble_reduced, equilibrium, load_config, objective_gap
from mtdcctl.analysis import generation_cost_weights, generation_optimum
from mtdcctl.cli import format_equilibrium

sd, sc = load_config("testgrid6")
p_m = sc.final_p_m(sd.p_load)
eq = equilibrium(assemble_reduced(sd), p_m)
print(format_equilibrium(sd, eq))

# Equal gains share the load equally. How the shares split depends on the
# integral gains, while the cost weights depend on the droop gains, so
# doubling both at area 1 doubles its share at the equilibrium and at the optimum.
print()
het = sd.with_gains(k_droop=[18.0, 9, 9, 9, 9, 9], k_droop_i=[6.7, 3.35, 3.35, 3.35, 3.35, 3.35])
eq_het = equilibrium(assemble_reduced(het), p_m)
print("shares, K_droop and K_droop_i doubled at area 1:", np.round(eq_het.p_gen_star, 5))
print("optimum:                                    ", np.round(generation_optimum(generation_cost_weights(het), p_m), 5))

# with gamma > 0 the optimum is reached only as K^omega grows
print()
damped = sd.with_gains(gamma=4.0)
for scale in (1, 10, 100):
    x = damped.with_gains(k_omega=damped.k_omega * scale)
    freq, gen, volt = objective_gap(equilibrium(assemble_reduced(x), p_m), x)
    print(f"K_omega x{scale:<4d} freq gap {freq:.2e}  gen gap {gen:.2e}  volt gap {volt:.2e}")
