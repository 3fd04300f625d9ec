"""Smoke test for the Python extension: run after `maturin develop` or with the
built library on PYTHONPATH."""

import swarmflow


def main():
    ring = swarmflow.Landscape.ring20()
    assert ring.n == 20
    assert ring.minimizers() == [7]

    prof = swarmflow.stationary(ring, beta=5.0)
    mass = sum(prof["zeta"][6:9])
    assert 0.60 <= mass <= 0.70, mass
    assert abs(sum(prof["zeta"]) - 1.0) < 1e-12

    ent = swarmflow.Entropy(-1.0)
    assert ent.kappa() == 0.25
    assert ent.phi(1.0) == 0.0

    traj = swarmflow.flow(ring, horizon=50.0, beta=5.0)
    gaps = traj["gap_i"]
    assert gaps[-1] < gaps[0]

    two = swarmflow.Landscape.from_edges([(0, 1, 1.0), (1, 0, 1.0)], [0.5, 0.5], [0.0, 1.0])
    assert swarmflow.representation_error(two, 3.0, [1.2, 0.8]) < 1e-12
    assert swarmflow.linearized_gap(two, 0.0) > 0.0

    a = swarmflow.simulate(ring, particles=50, horizon=20.0, seed=42, schedule=(1.0, 0.25))
    b = swarmflow.simulate(ring, particles=50, horizon=20.0, seed=42, schedule=(1.0, 0.25))
    assert a["events"] == b["events"]
    assert all(abs(sum(p) - 1.0) < 1e-12 for p in a["empirical"])

    rep = swarmflow.metropolis_check(50, path_draws=5, seed=1)
    assert rep["pass"], rep

    try:
        swarmflow.Entropy(0.5)
    except swarmflow.SwarmflowError:
        pass
    else:
        raise AssertionError("positive exponent accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
