"""Campaign orchestration: sets x iterations, CSV emission, comparison and
crash reproduction entry points.

A campaign runs ``sets`` independent repetitions of ``iterations`` fuzzing
iterations each. Set ``s`` derives its RNG seed as ``base_seed + s``, and
every iteration inside a set gets its own 64-bit seed mixed from the set
seed and the iteration number, so any single iteration can be replayed
from its recorded seed alone.

Outputs per campaign directory:

* ``set_<s>.csv``       -- one row per iteration (see CSV_HEADER)
* ``summary.csv``       -- per-set final DUT coverage plus the median
* ``crashes/*.seed``    -- reproduction seeds for every iteration in which
  a planted bug fired
* with diagnostics on: ``diag_set_<s>.csv`` (mean mutations per packet) and
  ``probs_set_<s>.csv`` (full probability table per iteration)

Coverage units everywhere are cumulative first-seen (edge, bucket) pairs;
the DUT columns always track the device under test regardless of which
machine feeds the fuzzer.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from scipy.stats import binomtest

from attachfuzz.coverage import (Component, CoverageMap, FeedbackMode, dut_component,
                                 feedback_source, peer_component)
from attachfuzz.fuzzers import FuzzerConfig, FuzzerKind, make_fuzzer
from attachfuzz.mutation import record_seed
from attachfuzz.packets import Direction, Layer
from attachfuzz.simulator import (EnbMachine, IterationOutcome, ReproMode, UeMachine,
                                  reproduce_crash, run_iteration)

CSV_HEADER = ("set,iteration,new_units_dut,total_units_dut,"
              "new_units_peer,total_units_peer,mutated_fields,packets,crash_id,hang")
DIAG_HEADER = "set,iteration,intercepted_packets,mean_mutations_per_packet"
PROBS_HEADER = "iteration,packet_type,field,index,p"
SUMMARY_HEADER = "set,final_total_units_dut"

_M64 = (1 << 64) - 1


def iteration_seed(set_seed: int, iteration: int) -> int:
    """Stable 64-bit mix of (set seed, iteration number)."""
    x = (set_seed * 0x9E3779B97F4A7C15 + iteration + 0x632BE59BD9B4E019) & _M64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _M64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


@dataclass
class CampaignConfig:
    fuzzer: FuzzerConfig
    direction: Direction = Direction.DL
    sets: int = 20
    out_dir: Path = Path("out")
    diagnostics: bool = False

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if self.sets < 1:
            raise ValueError("sets must be >= 1")


@dataclass
class CampaignSummary:
    out_dir: Path
    finals_dut: list[int]
    median_dut: float
    crash_seeds: list[Path] = dc_field(default_factory=list)
    crashes: int = 0
    hangs: int = 0


def _format_units(value: float) -> str:
    return f"{value:g}"


def run_campaign(config: CampaignConfig) -> CampaignSummary:
    """Run every set sequentially and write the campaign outputs."""
    out_dir = config.out_dir
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "crashes").mkdir(exist_ok=True)
    except OSError as exc:
        raise ValueError(f"output directory {out_dir} is not writable: {exc}") from exc

    dut = dut_component(config.direction)
    summary = CampaignSummary(out_dir, [], 0.0)
    for s in range(config.sets):
        set_seed = (config.fuzzer.rng_seed + s) & _M64
        fuzzer_cfg = FuzzerConfig(
            kind=config.fuzzer.kind, k=config.fuzzer.k, beta=config.fuzzer.beta,
            replay_prob=config.fuzzer.replay_prob, mut_prob=config.fuzzer.mut_prob,
            feedback=config.fuzzer.feedback,
            max_iterations=config.fuzzer.max_iterations, rng_seed=set_seed)
        fuzzer = make_fuzzer(fuzzer_cfg)
        feedback_comp = feedback_source(fuzzer_cfg.feedback, config.direction)
        ue, enb = UeMachine(), EnbMachine()
        maps = {Component.UE_MACHINE: CoverageMap(), Component.ENB_MACHINE: CoverageMap()}
        rows = [CSV_HEADER]
        diag_rows = [DIAG_HEADER]
        prob_rows = [PROBS_HEADER]
        for i in range(1, fuzzer_cfg.max_iterations + 1):
            outcome = run_iteration(config.direction, Layer.RRC, fuzzer, ue, enb,
                                    iteration_seed(set_seed, i))
            mutated = fuzzer.ledger.mutated_count
            intercepted = len(outcome.seed.snapshots)
            new_units = {Component.UE_MACHINE: maps[Component.UE_MACHINE].merge_iteration(outcome.ue_hits),
                         Component.ENB_MACHINE: maps[Component.ENB_MACHINE].merge_iteration(outcome.enb_hits)}
            peer = peer_component(config.direction)
            crash_id = outcome.crash[0] if outcome.crash else ""
            rows.append(f"{s},{i},{new_units[dut]},{maps[dut].total_units()},"
                        f"{new_units[peer]},{maps[peer].total_units()},"
                        f"{mutated},{outcome.packets_exchanged},{crash_id},{int(outcome.hang)}")
            if config.diagnostics:
                mean_mut = mutated / intercepted if intercepted else 0.0
                diag_rows.append(f"{s},{i},{intercepted},{mean_mut:.6f}")
                for ptype, fname, idx, p in fuzzer.table.rows():
                    prob_rows.append(f"{i},{ptype},{fname},{idx},{p:.9f}")
            if outcome.seed.bug is not None:
                seed_path = out_dir / "crashes" / f"set{s}_{i}.seed"
                record_seed(outcome.seed, seed_path)
                summary.crash_seeds.append(seed_path)
                if outcome.crash:
                    summary.crashes += 1
                else:
                    summary.hangs += 1
            fuzzer.end_iteration(new_units[feedback_comp])
            if fuzzer.needs_finish():
                break
        (out_dir / f"set_{s}.csv").write_text("\n".join(rows) + "\n")
        if config.diagnostics:
            (out_dir / f"diag_set_{s}.csv").write_text("\n".join(diag_rows) + "\n")
            (out_dir / f"probs_set_{s}.csv").write_text("\n".join(prob_rows) + "\n")
        summary.finals_dut.append(maps[dut].total_units())
    summary.median_dut = statistics.median(summary.finals_dut)
    lines = [SUMMARY_HEADER]
    lines += [f"{s},{final}" for s, final in enumerate(summary.finals_dut)]
    lines.append(f"median,{_format_units(summary.median_dut)}")
    (out_dir / "summary.csv").write_text("\n".join(lines) + "\n")
    return summary


def load_campaign_finals(out_dir: str | Path) -> list[int]:
    """Per-set final DUT coverage from a campaign's summary.csv."""
    path = Path(out_dir) / "summary.csv"
    finals = []
    for line in path.read_text().splitlines()[1:]:
        label, value = line.split(",")
        if label != "median":
            finals.append(int(value))
    return finals


def _campaign_shape(out_dir: Path) -> tuple[int, int]:
    sets = len(load_campaign_finals(out_dir))
    rows = (out_dir / "set_0.csv").read_text().count("\n") - 1
    return sets, rows


@dataclass
class CompareReport:
    median_a: float
    median_b: float
    baseline: float
    improvement_pct: float | None
    wins_a: int
    wins_b: int
    ties: int
    sign_test_p: float

    def text(self) -> str:
        imp = "n/a" if self.improvement_pct is None else f"{self.improvement_pct:+.1f}%"
        return (f"median final coverage: A={_format_units(self.median_a)} "
                f"B={_format_units(self.median_b)} (baseline {_format_units(self.baseline)})\n"
                f"improvement of A over B relative to baseline: {imp}\n"
                f"paired sign test: A>{self.wins_a} B>{self.wins_b} ties={self.ties} "
                f"p={self.sign_test_p:.4f}")


def compare_campaigns(dir_a: str | Path, dir_b: str | Path,
                      baseline_dir: str | Path | None = None) -> CompareReport:
    """Compare two campaigns of equal shape on final DUT coverage.

    Improvement is measured after subtracting the no-fuzzing baseline's
    median (taken as zero when no baseline directory is given), and the
    paired sign test runs across the per-set finals.
    """
    dir_a, dir_b = Path(dir_a), Path(dir_b)
    if _campaign_shape(dir_a) != _campaign_shape(dir_b):
        raise ValueError("campaigns differ in sets or iterations; cannot compare")
    finals_a = load_campaign_finals(dir_a)
    finals_b = load_campaign_finals(dir_b)
    baseline = 0.0
    if baseline_dir is not None:
        baseline = statistics.median(load_campaign_finals(baseline_dir))
    median_a = statistics.median(finals_a)
    median_b = statistics.median(finals_b)
    improvement = None
    if median_b - baseline != 0:
        improvement = 100.0 * ((median_a - baseline) / (median_b - baseline) - 1.0)
    wins_a = sum(a > b for a, b in zip(finals_a, finals_b))
    wins_b = sum(b > a for a, b in zip(finals_a, finals_b))
    ties = len(finals_a) - wins_a - wins_b
    if wins_a + wins_b:
        p = binomtest(wins_a, wins_a + wins_b, 0.5).pvalue
    else:
        p = 1.0
    return CompareReport(median_a, median_b, baseline, improvement,
                         wins_a, wins_b, ties, p)


def reproduce(seed_path: str | Path, mode: ReproMode,
              direction: Direction = Direction.DL) -> tuple[int, IterationOutcome]:
    """Replay a recorded seed; (0, outcome) iff the recorded bug fired again."""
    from attachfuzz.mutation import load_seed

    seed = load_seed(seed_path)
    outcome = reproduce_crash(seed, mode, direction)
    if seed.bug is not None and outcome.seed.bug == seed.bug:
        return 0, outcome
    return 3, outcome
