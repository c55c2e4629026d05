import math

import novelty


def test_reference_instance():
    system = novelty.LtvSystem([[0.0]], [[1.0]])
    n = 400
    prior = [[1.0 + math.sqrt(2.0) * math.sin(2.0 * math.pi * i / n) for i in range(n + 1)]]
    sol = novelty.min_novelty_control(system, [1.0], [1.5], 1.0, 2.0, 1.0, prior)
    assert abs(sol.mu - 1.0 / math.sqrt(6.0)) < 1e-4
    assert abs(sol.j - 0.96593) < 1e-4
    assert abs(sol.energy - 1.0) < 1e-6
    assert len(sol.times) == n + 1


def test_gramian_and_feasibility():
    system = novelty.LtvSystem([[-1.0]], [[1.0]])
    w, cond = novelty.gramian(system, 1.0)
    assert abs(w[0][0] - (1.0 - math.exp(-2.0)) / 2.0) < 1e-9
    assert cond == 1.0
    report = novelty.feasibility(novelty.LtvSystem([[0.0]], [[1.0]]), [0.0], [1.0], [1.5], 1.0, 1.0, 1.0)
    assert abs(report["margin_prior"]) < 1e-12
    assert not report["feasible"]


def test_no_solution_is_raised():
    system = novelty.LtvSystem([[0.0]], [[1.0]])
    prior = [[1.0] * 101]
    try:
        novelty.min_novelty_control(system, [1.0], [1.5], 1.0, 1.0, 1.0, prior)
    except novelty.NoSolutionError:
        pass
    else:
        raise AssertionError("expected NoSolutionError")


def test_discrete_matches_oracle():
    system = novelty.DtSystem.lti([[1.0]], [[1.0]], 2)
    args = (system, [0.0], [1.0], 1.5, 1.0, [[1.0], [0.2]])
    closed = novelty.min_novelty_control_discrete(*args, rescale_prior=True)
    oracle = novelty.qp_oracle_discrete(*args, rescale_prior=True)
    assert max(abs(a - b) for a, b in zip(closed.u[0], oracle.u[0])) < 1e-6
    assert abs(closed.j - oracle.j) < 1e-6
    forced = novelty.min_novelty_control_discrete(
        novelty.DtSystem.lti([[1.0]], [[1.0]], 1), [0.0], [1.0], 1.0, 1.0, [[1.0]]
    )
    assert forced.gamma is None
    assert abs(forced.u[0][0] - 1.0) < 1e-12


def test_graph_and_experiment():
    edges = novelty.sample_graph('{"family": "BA", "n": 30, "attachment": 3, "seed": 5}', 1)
    assert len(edges) == 3 * 27
    csv, verdict = novelty.run_fig3(
        '{"protocol": {"horizon": 3.0, "gamma_v": 1.0, "gamma_u": 1.0, "epsilon": 0.7645,'
        ' "realizations": 4, "seed": 1, "intervals": 100}, "network": {"n": 20, "n_exc": 16}}'
    )
    assert csv.splitlines()[0].startswith("realization,")
    assert "dominance" in verdict


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok {name}")
