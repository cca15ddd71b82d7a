"""
Secrecy on the Poisson wiretap channel.

Shows the secure identification dichotomy, the leakage bounds for small
ensembles, and the eavesdropper's best test against a binned tag code.
"""
import numpy as np

from dtpclab import capacity as cap
from dtpclab import idcode, secrecy
from dtpclab.channel import PoissonChannel, PowerConstraint


def main() -> None:
    pc = PowerConstraint(5.0, 5.0)
    for lam_e in (1.0, 2.0, 10.0, 100.0):
        rep = cap.sid_capacity(cap.WiretapPair.poisson(1.0, lam_e, 5.0), pc)
        print(f"lambda_E={lam_e:6.1f}  C={rep.c_main:.5f}  C_S={rep.c_secrecy:.5f}  C_SID={rep.c_sid:.5f}")

    rng = np.random.default_rng(0)
    eve = PoissonChannel.for_peak(10.0, 1.0)
    ens = [secrecy.MessageInput(rng.uniform(0, 1, (3, 2)), rng.dirichlet(np.ones(3))) for _ in range(4)]
    print("\nleakage:", secrecy.leakage_report(ens, eve).to_json())
    for row in secrecy.leakage_scaling(1.0, 10.0, [10, 100, 1000]):
        print(f"  n={row['n']:5d} total bound={row['total_bits']:.3e} bits")

    ch = PoissonChannel.for_peak(100.0, 20.0)
    spec = idcode.build_id_code(ch, PowerConstraint(20.0, 20.0), n=1600, q=5, degree=1, bin_size=2048)
    ind = secrecy.eve_indistinguishability(spec, PoissonChannel.for_peak(1000.0, 20.0), 0, 1, trials=2000)
    print(f"\neavesdropper type-I + type-II = {ind.error_sum:.3f} (sigma {ind.sigma:.3f})")


if __name__ == "__main__":
    main()
