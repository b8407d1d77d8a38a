#!/usr/bin/env python3
"""Critical derivative gain at the Stribeck peak as sigma0 grows.

Prints the eigenvalue-based critical k_d (alpha, PD control, v_r at the
critical velocity) for increasing sigma0 scale factors next to the two
closed-form candidates for the rigid-bristle limit: the one implemented as
``sigma0_inf_margin`` and the one implemented as ``sigma0_inf_margin_exact``.
"""

import numpy as np

from stagelab.plant import Model, System
from stagelab.stability import critical_velocity, sigma0_inf_margin, sigma0_inf_margin_exact
from stagelab.sweep import critical_value


def main() -> None:
    m = Model(System.ALPHA).replace(k_i=0.0)
    v = critical_velocity(m.friction)
    m = m.replace(v_r=v)
    k_d = m.gains.k_d
    print(f"v_r = {v * 1e3:.4f} mm/s")
    print(f"closed form (sigma0_inf_margin):       k_d = {k_d - sigma0_inf_margin(v, m):.6f}")
    print(f"closed form (sigma0_inf_margin_exact): k_d = {k_d - sigma0_inf_margin_exact(v, m):.6f}")
    print("sigma0 scale   critical k_d")
    for scale in np.logspace(0, 6, 7):
        ms = m.replace(sigma0=m.friction.sigma0 * scale)
        print(f"{scale:12.0e}   {critical_value(ms, 'k_d', 0.0, 500.0, 1e-8, 'pd'):.8f}")


if __name__ == "__main__":
    main()
