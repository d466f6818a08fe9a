"""Large-deviation tails of the sup deviation from the skeleton.

Estimates p(eps) = P(sup_t |X^eps - skeleton| >= delta) for the zero-drift
unit-noise model on [0, 1] over a shrinking epsilon ladder, and compares
eps * ln p(eps) against the variational certificate -S*, where S* is the
cheapest endpoint-pinned action reaching the delta-tube boundary. The
scaled log-probabilities decrease toward the certificate.
"""

import reflectal as rf


def main():
    dom = rf.make_domain("interval", a=0.0, b=1.0)
    co = rf.preset("zero-drift-unit-noise")
    grid = rf.TimeGrid(0.0, 1.0, 512)

    rep = rf.tail_study(co, dom, 0.0, [0.5], 0.2, (0.1, 0.05, 0.025, 0.0125),
                        4000, grid, rng_seed=13)
    if rep.delta_adjusted:
        print("pilot adjusted delta to %.4f" % rep.deltas[0])
    print("certificate: -S* = %.4f  (delta = %.4f)"
          % (rep.rate_bound, rep.deltas[0]))
    for e, p, elp, se in zip(rep.epsilons, rep.p_hat, rep.eps_log_p, rep.se):
        print("eps = %-8g p_hat = %.4f (se %.4f)   eps ln p = %.4f"
              % (e, p, se, elp))


if __name__ == "__main__":
    main()
