"""Search, enumeration, LP round-trip, and external bridge checks."""

import random
import sys
from pathlib import Path
from types import SimpleNamespace

import pytest

from cgramap.dfg import parse_dfg
from cgramap.ilp import (IlpModel, LinearConstraint, VarId, build_variant,
                         evar, fvar, pvar, set_cost_function)
from cgramap.lp_io import (ExternalSolverError, export_lp, import_lp,
                           parse_solution, parse_var_name, solve_external,
                           var_name)
from cgramap.mrrg import ArchSpec, build_mrrg
from cgramap.neighbors import build_neighbor_map
from cgramap.paths import build_path_cache
from cgramap.solver import (SolveConfig, check_assignment,
                            enumerate_solutions, solve)
from helpers import exhaustive

STUB = Path(__file__).parent / "external_stub.py"


def mk_model(names, rows, objective=None, cls="f"):
    model = IlpModel("combined")
    by_name = {n: model.add_var(VarId(cls, (n,))) for n in names}
    for terms, rel, rhs in rows:
        model.add_constraint([(c, by_name[n]) for c, n in terms],
                             rel, rhs, "row")
    if objective:
        set_cost_function(model, {by_name[n]: c for n, c in objective.items()})
    return model, by_name


def random_model(rng, max_vars=10):
    n = rng.randint(1, max_vars)
    names = [f"x{i}" for i in range(n)]
    rows = []
    for _ in range(rng.randint(1, 2 * n)):
        size = rng.randint(1, min(4, n))
        chosen = rng.sample(names, size)
        terms = [(rng.choice([-3, -2, -1, 1, 2, 3]), nm) for nm in chosen]
        rows.append((terms, rng.choice(["<=", ">=", "="]),
                     rng.randint(-2, 4)))
    objective = None
    if rng.random() < 0.5:
        objective = {nm: rng.randint(-4, 4) for nm in names}
    return mk_model(names, rows, objective)[0]


def test_forced_assignment():
    model, vs = mk_model(["x", "y"],
                         [([(1, "x"), (1, "y")], "<=", 1),
                          ([(1, "x")], "=", 1)])
    res = solve(model, SolveConfig())
    assert res.status == "feasible"
    assert res.assignment[vs["x"]] == 1
    assert res.assignment[vs["y"]] == 0
    assert not check_assignment(model.constraints, res.assignment)
    assert res.wall_time >= 0


def test_contradiction():
    model, _ = mk_model(["x", "y"],
                        [([(1, "x"), (1, "y")], "<=", 1),
                         ([(1, "x")], "=", 1),
                         ([(1, "y")], "=", 1)])
    res = solve(model, SolveConfig())
    assert res.status == "infeasible"
    assert res.assignment is None


def test_empty_model():
    model = IlpModel("combined")
    res = solve(model, SolveConfig())
    assert res.status == "feasible"
    assert res.assignment == {}
    assert res.nodes == 0


def test_malformed_rejected():
    v = VarId("f", ("x",))
    ghost = VarId("f", ("ghost",))
    bad_ref = SimpleNamespace(
        variables=[v],
        constraints=[LinearConstraint(((1, ghost),), "<=", 1, "t")],
        objective=None)
    with pytest.raises(ValueError, match="undeclared"):
        solve(bad_ref, SolveConfig())
    bad_rel = SimpleNamespace(
        variables=[v],
        constraints=[LinearConstraint(((1, v),), "<", 1, "t")],
        objective=None)
    with pytest.raises(ValueError, match="relation"):
        solve(bad_rel, SolveConfig())
    bad_coef = SimpleNamespace(
        variables=[v],
        constraints=[LinearConstraint(((1.5, v),), "<=", 1, "t")],
        objective=None)
    with pytest.raises(ValueError, match="coefficient"):
        solve(bad_coef, SolveConfig())
    dup = SimpleNamespace(variables=[v, v], constraints=[], objective=None)
    with pytest.raises(ValueError, match="duplicate"):
        solve(dup, SolveConfig())


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(time_limit=0)
    with pytest.raises(ValueError):
        SolveConfig(solution_limit=0)
    with pytest.raises(ValueError):
        SolveConfig(mode="anneal")


def test_random_agreement_with_exhaustive():
    rng = random.Random(20240917)
    for trial in range(150):
        model = random_model(rng)
        feasible, best = exhaustive(model)
        res = solve(model, SolveConfig(seed=trial % 5))
        assert (res.status == "feasible") == feasible, f"trial {trial}"
        if res.status == "feasible":
            assert not check_assignment(model.constraints, res.assignment)
        if model.objective:
            opt = solve(model, SolveConfig(mode="optimize", seed=trial % 5))
            assert (opt.status == "feasible") == feasible, f"trial {trial}"
            if feasible:
                assert opt.objective_value == best, f"trial {trial}"


def test_optimize_small():
    model, vs = mk_model(["x", "y", "z"],
                         [([(1, "x"), (1, "y"), (1, "z")], ">=", 2)],
                         objective={"x": 3, "y": 1, "z": 1})
    res = solve(model, SolveConfig(mode="optimize"))
    assert res.status == "feasible"
    assert res.objective_value == 2
    assert res.assignment[vs["x"]] == 0
    plain = solve(model, SolveConfig())
    assert plain.status == "feasible"
    assert plain.objective_value is None


def test_determinism_and_seed_independence():
    rng = random.Random(7)
    model = random_model(rng, max_vars=14)
    first = solve(model, SolveConfig(seed=3))
    second = solve(model, SolveConfig(seed=3))
    assert first.assignment == second.assignment
    assert first.nodes == second.nodes
    statuses = set()
    for trial in range(30):
        m = random_model(rng, max_vars=9)
        statuses = {solve(m, SolveConfig(seed=s)).status for s in range(3)}
        assert len(statuses) == 1, f"trial {trial} split {statuses}"


def _pigeonhole(pigeons, holes):
    model = IlpModel("combined")
    grid = {}
    for p in range(pigeons):
        for h in range(holes):
            grid[p, h] = model.add_var(VarId("f", (f"p{p}", f"h{h}")))
    for p in range(pigeons):
        model.add_constraint([(1, grid[p, h]) for h in range(holes)],
                             "=", 1, "pigeon")
    for h in range(holes):
        model.add_constraint([(1, grid[p, h]) for p in range(pigeons)],
                             "<=", 1, "hole")
    return model


def test_pigeonhole_and_timeout():
    small = _pigeonhole(4, 3)
    assert solve(small, SolveConfig()).status == "infeasible"
    big = _pigeonhole(12, 11)
    res = solve(big, SolveConfig(time_limit=0.15))
    assert res.status == "timeout"
    assert res.assignment is None
    assert res.nodes > 0


def test_enumerate_two_placements():
    model, vs = mk_model(["f1", "f2"],
                         [([(1, "f1"), (1, "f2")], "=", 1)])
    free = model.add_var(VarId("p", ("n", 0)))
    rows_before = list(model.constraints)
    sols = list(enumerate_solutions(model, SolveConfig(solution_limit=8)))
    assert len(sols) == 2
    picks = {tuple(sorted(v.idx for v in model.variables
                          if v.cls == "f" and s.assignment[v] == 1))
             for s in sols}
    assert picks == {(("f1",),), (("f2",),)}
    assert model.constraints == rows_before  # cuts never leak into the model
    assert all(s.assignment[free] in (0, 1) for s in sols)


def test_enumerate_limits_and_empty():
    model, _ = mk_model(["f1", "f2"],
                        [([(1, "f1"), (1, "f2")], "=", 1)])
    assert len(list(enumerate_solutions(model, SolveConfig()))) == 1
    dead, _ = mk_model(["x"], [([(1, "x")], "=", 1),
                               ([(1, "x")], "<=", 0)])
    assert list(enumerate_solutions(dead, SolveConfig(solution_limit=5))) == []


def test_enumerate_projection_classes():
    model = IlpModel("combined")
    f1 = model.add_var(VarId("f", ("a",)))
    q = model.add_var(VarId("p", ("n", 0)))
    model.add_constraint([(1, f1)], "=", 1, "row")
    on_f = list(enumerate_solutions(model, SolveConfig(solution_limit=8)))
    assert len(on_f) == 1
    both = list(enumerate_solutions(model, SolveConfig(solution_limit=8),
                                    projection=("f", "p")))
    assert len(both) == 2
    assert {s.assignment[q] for s in both} == {0, 1}


@pytest.fixture(scope="module")
def small_instance():
    dfg = parse_dfg("op a add\nop b add\nedge a -> b:0\n")
    mrrg = build_mrrg(ArchSpec("ortho", 2, 2), 1)
    nmap = build_neighbor_map(mrrg, 4)
    cache = build_path_cache(mrrg, nmap, 4)
    return dfg, mrrg, nmap, cache


def test_lp_roundtrip_bytes(small_instance):
    dfg, mrrg, nmap, cache = small_instance
    model = build_variant("combined", dfg, mrrg, nmap, cache)
    set_cost_function(model, {model.variables[0]: 2, model.variables[1]: -1})
    text = export_lp(model)
    again = import_lp(text)
    assert export_lp(again) == text
    assert again.variables == model.variables
    assert again.constraints == model.constraints
    assert again.objective == model.objective
    assert again.variant == model.variant
    # byte stability across independent builds of the same instance
    twin = build_variant("combined", dfg, mrrg, nmap, cache)
    set_cost_function(twin, {twin.variables[0]: 2, twin.variables[1]: -1})
    assert export_lp(twin) == text


def test_lp_feasibility_only_roundtrip(small_instance):
    dfg, mrrg, nmap, _ = small_instance
    model = build_variant("placement_only", dfg, mrrg, nmap)
    text = export_lp(model)
    again = import_lp(text)
    assert export_lp(again) == text
    assert again.objective is None
    assert solve(again, SolveConfig()).status == solve(model,
                                                       SolveConfig()).status


def test_var_name_roundtrip():
    cases = [
        fvar("add0", ("pe_1_1.alu", 0)),
        evar("a", ("pe_0_0.alu", 0), "b", ("pe_1_0.alu", 1)),
        pvar(("pe_0_0.alu", 0), ("pe_1_0.alu", 1), 3),
        VarId("f", ("p0", "h7")),
    ]
    for var in cases:
        assert parse_var_name(var_name(var)) == var
    assert var_name(cases[0]) == "f!add0!pe_1_1.alu!0"


def test_import_lp_errors():
    with pytest.raises(ValueError, match="[Mm]inimize"):
        import_lp("Maximize\n obj: x\nSubject To\nBinaries\n x\nEnd\n")
    with pytest.raises(ValueError, match="Subject To"):
        import_lp("Minimize\n obj: x\nBinaries\n x\nEnd\n")
    with pytest.raises(ValueError, match="not declared binary"):
        import_lp("Minimize\n obj:\nSubject To\n r0_t: x <= 1\nBinaries\n"
                  " y\nEnd\n")
    with pytest.raises(ValueError, match="rhs"):
        import_lp("Minimize\n obj:\nSubject To\n r0_t: x <= 0.5\nBinaries\n"
                  " x\nEnd\n")


def test_parse_solution():
    text = "f!a!u!0 1\np!n!0 0.000000\n# comment\n\nf!b!u!0 1.0000004\n"
    got = parse_solution(text)
    assert got[fvar("a", ("u", 0))] == 1
    assert got[VarId("p", ("n", 0))] == 0
    assert got[fvar("b", ("u", 0))] == 1
    assert parse_solution("infeasible\n") is None
    with pytest.raises(ExternalSolverError, match="unparsable"):
        parse_solution("a b c\n")
    with pytest.raises(ExternalSolverError, match="non-binary"):
        parse_solution("a 0.5\n")
    with pytest.raises(ExternalSolverError, match="bad value"):
        parse_solution("a one\n")


def stub_command():
    return f"{sys.executable} {STUB} {{lp}} {{sol}}"


def test_solve_external_stub():
    model, vs = mk_model(["x", "y"],
                         [([(1, "x"), (1, "y")], "<=", 1),
                          ([(1, "x")], "=", 1)])
    res = solve_external(model, stub_command(), SolveConfig(time_limit=30))
    assert res.status == "feasible"
    assert res.assignment[vs["x"]] == 1
    assert not check_assignment(model.constraints, res.assignment)
    dead, _ = mk_model(["x"], [([(1, "x")], "=", 1), ([(1, "x")], "<=", 0)])
    assert solve_external(dead, stub_command(),
                          SolveConfig(time_limit=30)).status == "infeasible"


def test_solve_external_agreement():
    rng = random.Random(41)
    cfg = SolveConfig(time_limit=30)
    for trial in range(25):
        model = random_model(rng, max_vars=8)
        ours = solve(model, cfg)
        theirs = solve_external(model, stub_command(), cfg)
        assert ours.status == theirs.status, f"trial {trial}"


def test_solve_external_faults(tmp_path):
    model, _ = mk_model(["x", "y"], [([(1, "x"), (1, "y")], "<=", 1)])
    with pytest.raises(ExternalSolverError, match="placeholders"):
        solve_external(model, "solver {lp}", SolveConfig())
    with pytest.raises(ExternalSolverError, match="launch"):
        solve_external(model, "/no/such/binary {lp} {sol}", SolveConfig())

    liar = tmp_path / "liar.py"
    liar.write_text(
        "import sys\n"
        "toks = open(sys.argv[1]).read().split()\n"
        "names = toks[toks.index('Binaries') + 1:toks.index('End')]\n"
        "open(sys.argv[2], 'w').write(''.join(f'{n} 1\\n' for n in names))\n")
    with pytest.raises(ExternalSolverError, match="violates"):
        solve_external(model, f"{sys.executable} {liar} {{lp}} {{sol}}",
                       SolveConfig())

    mute = tmp_path / "mute.py"
    mute.write_text("pass\n")
    with pytest.raises(ExternalSolverError, match="no solution file"):
        solve_external(model, f"{sys.executable} {mute} {{lp}} {{sol}}",
                       SolveConfig())

    crash = tmp_path / "crash.py"
    crash.write_text("raise SystemExit(3)\n")
    with pytest.raises(ExternalSolverError, match="exited 3"):
        solve_external(model, f"{sys.executable} {crash} {{lp}} {{sol}}",
                       SolveConfig())


def test_scipy_crosscheck():
    milp = pytest.importorskip("scipy.optimize").milp
    import numpy as np
    from scipy.optimize import Bounds, LinearConstraint as SciRow

    rng = random.Random(99)
    for trial in range(40):
        model = random_model(rng, max_vars=9)
        index = {v: i for i, v in enumerate(model.variables)}
        n = len(model.variables)
        rows, lo, hi = [], [], []
        for con in model.constraints:
            coefs = [0.0] * n
            for c, v in con.terms:
                coefs[index[v]] = c
            rows.append(coefs)
            lo.append(-np.inf if con.relation == "<=" else con.rhs)
            hi.append(np.inf if con.relation == ">=" else con.rhs)
        res = milp(c=np.zeros(n),
                   constraints=SciRow(np.array(rows), lo, hi),
                   integrality=np.ones(n),
                   bounds=Bounds(0, 1))
        ours = solve(model, SolveConfig())
        assert (ours.status == "feasible") == res.success, f"trial {trial}"
