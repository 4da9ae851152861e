"""
Acceptance-scale runs on the simulator: candidate generation against brute
force, station convergence under lossy delivery, outlier robustness, both
loop initializers on the aliasing suite and the full pipeline on the tunnel
preset. All are marked slow.
"""

import dataclasses
import statistics

import numpy as np
import pytest

from burrow.evaluation.experiment import (
    CellReport,
    CellSpec,
    ExperimentConfig,
    evaluate_cell,
    run_experiment,
    run_frontend_cell,
)
from burrow.evaluation.loops import (
    LoopErrorSample,
    ground_truth_labels,
    ground_truth_transforms,
    loop_error_samples,
)
from burrow.geometry.se3 import Pose6
from burrow.graph.model import GraphNode, NodeKey, PoseGraph
from burrow.loops.candidates import GenerationConfig, generate_candidates
from burrow.sim import SimConfig, build_scenario, inject_outlier_loops
from burrow.sim.scenario import Scenario
from burrow.station.client import (
    ConnectivitySchedule,
    ResendLog,
    client_session,
    deliver_local,
    key_updates,
)
from burrow.station.protocol import ClientMessage
from burrow.station.state import StationConfig, StationState, handle_message

pytestmark = pytest.mark.slow

LIGHT_SIM = SimConfig(preset="tunnel", rays_horizontal=90, rays_vertical=6)


@pytest.fixture(scope="module")
def tunnel() -> Scenario:
    return build_scenario(LIGHT_SIM, workers=2)


# ---------------------------------------------------------------------------
# candidate generation
# ---------------------------------------------------------------------------


def test_candidates_match_brute_force_on_500_nodes():
    rng = np.random.default_rng(11)
    nodes = []
    for robot in range(2):
        walk = np.cumsum(rng.normal(scale=0.6, size=(250, 3)), axis=0)
        walk[:, 2] *= 0.1
        nodes += [
            GraphNode(NodeKey(robot, i), Pose6(translation=tuple(p)))
            for i, p in enumerate(walk)
        ]
    graph = PoseGraph(nodes)
    cfg = GenerationConfig()
    positions = {n.key: n.pose.t for n in nodes}

    total = 0
    for new in graph.nodes:
        expected = set()
        for other, p in positions.items():
            if other == new:
                continue
            gap = float(np.linalg.norm(p - positions[new]))
            if other.robot_id == new.robot_id:
                separation = abs(other.index - new.index)
                if separation >= cfg.min_index_separation:
                    if gap <= cfg.alpha * separation:
                        expected.add(other)
            elif gap <= cfg.alpha * new.index:
                expected.add(other)

        got = [c.key_b for c in generate_candidates(graph, new, cfg)]
        assert set(got) == expected, f"mismatch for {new}"
        assert len(got) == len(expected)
        total += len(got)
    assert total > 0


# ---------------------------------------------------------------------------
# station convergence
# ---------------------------------------------------------------------------


def _lossy_deliver(
    state: StationState, messages: list[ClientMessage], rng: np.random.Generator
) -> None:
    """Deliver a session over a link that drops and duplicates batches."""
    resend = ResendLog.from_messages(messages)
    while not resend.done:
        (reply,) = handle_message(state, resend.hello)
        resend.on_hello_reply(reply)
        while (batch := resend.next_batch()) is not None:
            roll = rng.random()
            if roll < 0.2:
                continue
            for _ in range(2 if roll > 0.85 else 1):
                for answer in handle_message(state, batch):
                    resend.on_reply(answer)


def _random_blackouts(
    rng: np.random.Generator, duration: float
) -> ConnectivitySchedule:
    starts = np.sort(rng.uniform(0.0, duration, size=rng.integers(0, 4)))
    return ConnectivitySchedule(
        tuple((float(s), float(s + rng.uniform(5.0, 60.0))) for s in starts)
    )


def test_station_converges_under_any_delivery(tunnel):
    updates = {r.run.robot_id: key_updates(r.frontend) for r in tunnel.robots}
    calibrations = {r.run.robot_id: r.run.calibration for r in tunnel.robots}
    reference = StationState(StationConfig(loop_closure=False))
    for robot, robot_updates in updates.items():
        messages = client_session(
            robot_updates, ConnectivitySchedule.always(), robot, calibrations[robot]
        )
        deliver_local(reference, messages)
    expected_graph, expected_scans = reference.snapshot()
    rng = np.random.default_rng(5)

    for trial in range(50):
        state = StationState(StationConfig(loop_closure=False))
        for robot, robot_updates in updates.items():
            duration = robot_updates[-1].timestamp
            schedule = _random_blackouts(rng, duration)
            messages = client_session(
                robot_updates, schedule, robot, calibrations[robot]
            )
            _lossy_deliver(state, messages, rng)

        graph, scans = state.snapshot()
        assert graph == expected_graph, f"trial {trial} diverged"
        assert scans.keys() == expected_scans.keys()


# ---------------------------------------------------------------------------
# robustness to outlier loops
# ---------------------------------------------------------------------------


def _with_outlier_share(
    scenario: Scenario, true_loops: int, seed: int
) -> Scenario:
    """Inject five outliers per true loop, a share of about 83 percent."""
    cfg = scenario.config.model_copy(update={"outlier_loop_count": 5 * true_loops})
    outliers = inject_outlier_loops([], scenario.ground_truth, cfg, seed=seed)
    return dataclasses.replace(scenario, outliers=outliers)


def _robustness_run(seed: int) -> dict[str, CellReport]:
    sim = LIGHT_SIM.model_copy(update={"seed": seed})
    cfg = ExperimentConfig(sim=sim, seeds=(seed,))
    scenario = build_scenario(sim, workers=2)
    front = run_frontend_cell(scenario, CellSpec(name="front"), cfg)
    labels = ground_truth_labels(
        front.results, scenario.ground_truth, sim.true_loop_radius
    )
    true_loops = sum(
        1 for r in front.results if r.accepted and labels[r.candidate.pair]
    )
    assert true_loops > 0, f"seed {seed} closed no true loops"
    scenario = _with_outlier_share(scenario, true_loops, seed)

    reports = {
        mode: evaluate_cell(
            scenario, front, CellSpec(name=mode, outlier_mode=mode), cfg
        )
        for mode in ("none", "icm", "gnc")
    }
    odom = CellSpec(name="odom", outlier_mode="none", loop_closure=False)
    odom_front = run_frontend_cell(scenario, odom, cfg)
    reports["odom"] = evaluate_cell(scenario, odom_front, odom, cfg)
    return reports


def test_gnc_rejects_a_majority_of_outlier_loops():
    runs = [_robustness_run(seed) for seed in range(10)]

    passed = 0
    for seed, reports in enumerate(runs):
        gnc = reports["gnc"]
        rejected = gnc.rejected_outliers / gnc.injected_outliers
        kept = gnc.true_loops_kept / max(gnc.true_loops_verified, 1)
        better = gnc.ate < reports["none"].ate and gnc.ate < reports["odom"].ate
        print(
            f"seed {seed}: rejected {rejected:.1%}, kept {kept:.1%}, ATE gnc "
            f"{gnc.ate:.3f} icm {reports['icm'].ate:.3f} "
            f"none {reports['none'].ate:.3f} odom {reports['odom'].ate:.3f}"
        )
        if rejected >= 0.95 and kept >= 0.8 and better:
            passed += 1

    assert passed >= 9
    gnc_median = statistics.median(r["gnc"].ate for r in runs)
    icm_median = statistics.median(r["icm"].ate for r in runs)
    assert gnc_median <= icm_median


# ---------------------------------------------------------------------------
# two-stage registration under perceptual aliasing
# ---------------------------------------------------------------------------

ALIASING_SIM = SimConfig(
    preset="aliasing-stress", range_noise=0.05, rays_horizontal=120, rays_vertical=8
)
ALIASING_SEEDS = (0, 1, 2)
INITIALIZERS = ("sample-consensus", "odometric")


@dataclasses.dataclass(frozen=True)
class InitializerRun:
    scenario: Scenario
    candidates: set[tuple[NodeKey, NodeKey]]
    samples: list[LoopErrorSample]


@pytest.fixture(scope="module")
def aliasing_runs() -> dict[str, list[InitializerRun]]:
    """Both initializers on the same scenarios, one run per seed."""
    runs: dict[str, list[InitializerRun]] = {name: [] for name in INITIALIZERS}
    for seed in ALIASING_SEEDS:
        sim = ALIASING_SIM.model_copy(update={"seed": seed})
        cfg = ExperimentConfig(sim=sim, seeds=(seed,))
        scenario = build_scenario(sim, workers=2)
        truth = scenario.ground_truth
        for name in INITIALIZERS:
            front = run_frontend_cell(
                scenario, CellSpec(name=name, initializer=name), cfg
            )
            labels = ground_truth_labels(front.results, truth, sim.true_loop_radius)
            samples = loop_error_samples(
                front.results, labels, ground_truth_transforms(front.results, truth)
            )
            pairs = {r.candidate.pair for r in front.results}
            runs[name].append(InitializerRun(scenario, pairs, samples))
    return runs


def _true_loops(runs: list[InitializerRun]) -> list[LoopErrorSample]:
    return [s for run in runs for s in run.samples if s.true_loop]


def test_initializers_see_the_same_candidates(aliasing_runs):
    consensus, odometric = (aliasing_runs[name] for name in INITIALIZERS)

    for sc, odom in zip(consensus, odometric, strict=True):
        assert sc.candidates == odom.candidates
        assert sc.candidates


def test_sample_consensus_accepts_fewer_false_loops(aliasing_runs):
    false_positives = {
        name: sum(not s.true_loop for run in runs for s in run.samples)
        for name, runs in aliasing_runs.items()
    }
    print(f"false positives: {false_positives}")

    assert false_positives["sample-consensus"] <= false_positives["odometric"]


def test_sample_consensus_loops_are_more_accurate(aliasing_runs):
    consensus = _true_loops(aliasing_runs["sample-consensus"])
    odometric = _true_loops(aliasing_runs["odometric"])
    assert consensus and odometric

    def mean(samples: list[LoopErrorSample], attribute: str) -> float:
        return statistics.fmean(getattr(s, attribute) for s in samples)

    for attribute in ("translation_error", "rotation_error"):
        sc, odom = mean(consensus, attribute), mean(odometric, attribute)
        print(f"{attribute}: sample-consensus {sc:.3f} odometric {odom:.3f}")
        assert sc <= odom


def test_loops_outside_repeated_sections_are_precise(aliasing_runs):
    checked = 0
    for run in aliasing_runs["sample-consensus"]:
        truth = run.scenario.ground_truth
        for sample in run.samples:
            ends = [truth[key].t for key in sample.pair]
            if not sample.true_loop or run.scenario.world.in_repeated(ends).any():
                continue
            checked += 1
            assert sample.translation_error <= 0.3, sample
            assert sample.rotation_error <= 3.0, sample

    assert checked > 0


# ---------------------------------------------------------------------------
# end to end
# ---------------------------------------------------------------------------


def test_tunnel_end_to_end():
    sim = SimConfig(preset="tunnel", seed=0, robots=2)
    cells = (
        CellSpec(name="odom", outlier_mode="none", loop_closure=False),
        CellSpec(name="current"),
    )
    cfg = ExperimentConfig(sim=sim, cells=cells, map_error=True)

    odom, current = run_experiment(cfg)

    assert current.ate <= 0.5 * odom.ate
    assert current.map_error_mean is not None
    assert current.map_error_mean <= 2 * sim.range_noise + 0.1
    assert current.recall is not None and current.recall > 0
