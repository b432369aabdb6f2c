"""Test-function means on rescaled Poisson GW trees as the size grows.

Run with ``python demos/convergence.py``.  Uses the mean-depth control variate,
whose expectation is known exactly for Poisson offspring.
"""
from biprune import convergence_report, default_suite
from biprune.generators import OffspringDistribution, crt_scale, gw_bimeasure
from biprune.statistics import depth_control


def main(replicates=300):
    eta = OffspringDistribution.poisson(1.0)

    def family(N, rng):
        return gw_bimeasure(eta, N, rng, mu="mu_ske", nu="nu_ske", a_N=crt_scale(N))

    rep = convergence_report(
        family, [50, 100, 200], default_suite()[:3], replicates, 11,
        times=(0.0, 0.5), paths=4, control=depth_control,
    )
    print(rep.to_csv())


if __name__ == "__main__":
    main()
