"""
Capacity of the Poisson channel as the peak intensity grows.

Prints the capacity, the optimal mass points and the certificate for a
sweep of peak limits, then shows the effect of an active average limit.
"""
import numpy as np

from dtpclab import capacity as cap
from dtpclab.channel import PoissonChannel, PowerConstraint


def main() -> None:
    print(f"{'P_max':>6} {'C (bits)':>10} {'points':>6} {'KKT viol':>9}  support")
    for p in (1.0, 5.0, 20.0, 50.0):
        res = cap.capacity(PoissonChannel.for_peak(1.0, p), PowerConstraint(p, p), strict=True)
        pts = ", ".join(f"{x:.2f}:{w:.3f}" for x, w in res.distribution.to_list())
        print(f"{p:6.1f} {res.capacity_bits:10.6f} {len(res.distribution):6d} {res.kkt_max_violation:9.1e}  {pts}")

    print("\naverage limit at P_max = 5")
    ch = PoissonChannel.for_peak(1.0, 5.0)
    for a in np.linspace(0.5, 3.0, 6):
        res = cap.capacity(ch, PowerConstraint(5.0, a), strict=True)
        print(f"  P_avg={a:4.2f}  C={res.capacity_bits:.6f}  E[X]={res.distribution.mean:.4f}  mu={res.mu:.4f}")


if __name__ == "__main__":
    main()
