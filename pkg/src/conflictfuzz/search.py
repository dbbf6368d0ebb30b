"""Two-stage search: a conflict-count GA and conflict-targeted collision fuzzing.

Stage 1 evolves a population toward many conflicts (fitness = conflict
count); Stage 2 takes the most conflict-rich scenario and fuzzes its
conflicts toward zero arrival-time gap (fitness rewards short gaps).

Threshold semantics are literal: an operation applies when r ~ U(0,1)
exceeds the threshold, so threshold 0.4 means a 60% application rate.
Set GaConfig.invert_thresholds to flip to the colloquial reading.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace

from . import conflicts as ca
from . import genome as gn
from .conflicts import ConflictSet, OP
from .genome import ScenarioGenome, SpeedRange


class SearchError(ValueError):
    pass


@dataclass
class GaConfig:
    population_size: int = 4
    threshold_m: float = 0.4
    threshold_c: float = 0.4
    m_generations_per_handoff: int = 5
    collision_threshold_m: float = 0.8
    collision_iterations: int = 5
    collision_batch: int = 4
    restart_stagnation_R: int = 4
    restart_similarity_eps: float = 0.05
    invert_thresholds: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("threshold_m", "threshold_c", "collision_threshold_m"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SearchError(f"{name} must be in [0, 1]")
        if self.population_size < 2:
            raise SearchError("population_size must be >= 2")
        if self.m_generations_per_handoff < 1:
            raise SearchError("m_generations_per_handoff must be >= 1")

    def applies(self, r: float, threshold: float) -> bool:
        if self.invert_thresholds:
            return r < threshold
        return r > threshold


@dataclass
class EvaluatedScenario:
    genome: ScenarioGenome
    trace: object
    conflict_set: ConflictSet
    fitness_conflict: float
    fitness_collision: float
    collided: bool


# -- fitness -----------------------------------------------------------------

def fitness_conflict(cset: ConflictSet) -> float:
    """Number of conflicts in the scenario."""
    return float(ca.conflict_count(cset))


def fitness_collision(cset: ConflictSet, t_c: float = ca.DEFAULT_TC) -> float:
    """Mean closeness to collision plus closeness of the tightest conflict.

    Only full conflicts (0 < gap <= t_c) contribute; no conflicts scores 0.
    """
    gaps = [r.delta_t for r in cset.conflicts if 0.0 < r.delta_t <= t_c]
    if not gaps:
        return 0.0
    mean_term = sum(t_c - g for g in gaps) / len(gaps)
    return mean_term + (t_c - min(gaps))


# -- selection ---------------------------------------------------------------

def roulette_select(scored: list, k: int, rng: random.Random) -> list:
    """k independent draws proportional to score; uniform when all zero."""
    for _item, score in scored:
        if score < 0:
            raise SearchError("negative score in roulette selection")
    total = sum(score for _item, score in scored)
    out = []
    for _ in range(k):
        if total <= 0.0:
            out.append(scored[rng.randrange(len(scored))][0])
            continue
        pick = rng.uniform(0.0, total)
        acc = 0.0
        chosen = scored[-1][0]
        for item, score in scored:
            acc += score
            if pick <= acc:
                chosen = item
                break
        out.append(chosen)
    return out


# -- stage 1: conflict search -----------------------------------------------

def select_conflict_mutation(genome: ScenarioGenome, spatial_set: list,
                             conflict_set: ConflictSet, rng: random.Random,
                             speed_limit: float) -> ScenarioGenome:
    """Stage-1 mutation of one scenario.

    NPCs in spatial conflicts get a long acceleration (EV arrived first) or
    long deceleration (NPC arrived first) over one randomly chosen spatial
    conflict's approach interval; NPCs in no conflict at all get one random
    speed or action gene edit. NPCs involved only in full conflicts are
    left untouched.
    """
    spatial_by_npc = {}
    for rec in spatial_set:
        spatial_by_npc.setdefault(rec.npc_id, []).append(rec)
    in_conflict = {r.npc_id for r in conflict_set.conflicts}
    out = genome
    for idx, chrom in enumerate(genome.npcs):
        group = spatial_by_npc.get(chrom.npc_id)
        if group:
            sc = group[rng.randrange(len(group))]
            t_arrive = max(1, min(int(math.ceil(sc.npc_time)), chrom.T))
            if sc.first_arriver == "EV":
                mutated = gn.mutate_long_acceleration(chrom, t_arrive, speed_limit)
            else:
                mutated = gn.mutate_long_deceleration(chrom, t_arrive)
        elif chrom.npc_id in in_conflict:
            continue
        else:
            if rng.random() < 0.5:
                mutated = gn.mutate_speed_random(rng, chrom,
                                                 SpeedRange(0.0, speed_limit))
            else:
                mutated = gn.mutate_action_random(rng, chrom)
        out = gn.replace_npc(out, idx, mutated)
    return out


def conflict_search_generation(population: list, cfg: GaConfig,
                               rng: random.Random, evaluate,
                               speed_limit: float, id_factory):
    """One GA generation.

    `population` is a list of EvaluatedScenario; `evaluate` maps a genome to
    an EvaluatedScenario (one simulation each); `id_factory()` issues fresh
    scenario ids. Returns (next_population, events) where events list one
    dict per member.
    """
    k = len(population)
    candidates = []
    events = []
    for i, member in enumerate(population):
        new_genome = None
        mutated = cfg.applies(rng.random(), cfg.threshold_m)
        if mutated:
            new_genome = select_conflict_mutation(
                member.genome, member.conflict_set.spatial,
                member.conflict_set, rng, speed_limit)
        crossed = cfg.applies(rng.random(), cfg.threshold_c)
        if crossed:
            j = rng.randrange(k - 1)
            if j >= i:
                j += 1
            base = new_genome if new_genome is not None else member.genome
            child, _ = gn.crossover(rng, base, population[j].genome)
            new_genome = child
        if new_genome is not None:
            new_genome = replace(new_genome, scenario_id=id_factory(),
                                 parent_ids=(member.genome.scenario_id,))
            evaluated = evaluate(new_genome)
        else:
            evaluated = member  # carried forward unchanged
        candidates.append(evaluated)
        events.append({"member": i, "mutated": mutated, "crossed": crossed,
                       "simulated": new_genome is not None,
                       "evaluated": evaluated})
    selected = roulette_select(
        [(c, c.fitness_conflict) for c in candidates], k, rng)
    return selected, events


# -- stage 2: collision search ----------------------------------------------

def _pick_conflict(conflict_list, rng: random.Random):
    if rng.random() < 0.5:
        return min(conflict_list, key=lambda r: r.delta_t)
    return conflict_list[rng.randrange(len(conflict_list))]


def mutate_for_conflict(genome: ScenarioGenome, rec, rng: random.Random,
                        speed_limit: float) -> ScenarioGenome | None:
    """Apply the conflict-type-specific Stage-2 operator to one conflict.

    Obstructed-path conflicts are mutated only when the NPC is ahead of the
    EV; returns None when the conflict is not mutable.
    """
    idx = next((i for i, c in enumerate(genome.npcs)
                if c.npc_id == rec.npc_id), None)
    if idx is None:
        return None
    chrom = genome.npcs[idx]
    t = max(1, min(int(math.ceil(rec.npc_time)), chrom.T - 1))
    if rec.ctype == OP and rec.first_arriver == "EV":
        return None  # NPC behind the EV; a crash here would be the NPC's fault
    if rec.first_arriver == "NPC":
        if rng.random() < 0.5:
            mutated = gn.mutate_deceleration(rng, chrom, t, rec.delta_t)
        else:
            mutated = gn.mutate_brake(rng, chrom, t)
    else:
        mutated = gn.mutate_acceleration(rng, chrom, t, rec.delta_t, speed_limit)
    return gn.replace_npc(genome, idx, mutated)


def random_mutation(genome: ScenarioGenome, rng: random.Random,
                    speed_limit: float) -> ScenarioGenome:
    """Ablation operator: one random speed or action edit on a random NPC."""
    idx = rng.randrange(len(genome.npcs))
    chrom = genome.npcs[idx]
    if rng.random() < 0.5:
        mutated = gn.mutate_speed_random(rng, chrom, SpeedRange(0.0, speed_limit))
    else:
        mutated = gn.mutate_action_random(rng, chrom)
    return gn.replace_npc(genome, idx, mutated)


def collision_search_iteration(target: EvaluatedScenario, cfg: GaConfig,
                               rng: random.Random, evaluate,
                               speed_limit: float, id_factory,
                               use_random_mutations: bool = False):
    """One fuzzing iteration from the current target scenario.

    Generates cfg.collision_batch mutants, simulates each, records
    collisions, and advances to the best-scoring surviving mutant.
    Returns (next_target, collision_events, events).
    """
    conflict_list = target.conflict_set.conflicts
    if not conflict_list and not use_random_mutations:
        return target, [], [{"skipped": "target has no conflicts"}]
    events = []
    collisions = []
    survivors = []
    for b in range(cfg.collision_batch):
        mutated = cfg.applies(rng.random(), cfg.collision_threshold_m)
        new_genome = None
        if mutated:
            if use_random_mutations:
                new_genome = random_mutation(target.genome, rng, speed_limit)
            else:
                rec = _pick_conflict(conflict_list, rng)
                new_genome = mutate_for_conflict(target.genome, rec, rng,
                                                 speed_limit)
                if new_genome is None and len(conflict_list) > 1:
                    rec = _pick_conflict(conflict_list, rng)  # re-pick once
                    new_genome = mutate_for_conflict(target.genome, rec, rng,
                                                     speed_limit)
        genome_to_run = new_genome if new_genome is not None else target.genome
        genome_to_run = replace(genome_to_run, scenario_id=id_factory(),
                                parent_ids=(target.genome.scenario_id,))
        evaluated = evaluate(genome_to_run)
        events.append({"mutant": b, "mutated": new_genome is not None,
                       "evaluated": evaluated})
        if evaluated.collided:
            collisions.append(evaluated)
        else:
            survivors.append(evaluated)
    if survivors:
        next_target = max(survivors, key=lambda e: e.fitness_collision)
    else:
        next_target = target
    return next_target, collisions, events


# -- diversity / restart -----------------------------------------------------

def genome_distance(a: ScenarioGenome, b: ScenarioGenome,
                    speed_limit: float) -> float:
    """Normalized L1 over SP plus normalized Hamming over AC, NPC-averaged."""
    if len(a.npcs) != len(b.npcs) or a.T != b.T:
        raise SearchError("genomes not aligned")
    total = 0.0
    for ca_, cb in zip(a.npcs, b.npcs):
        sp = sum(abs(x - y) for x, y in zip(ca_.SP, cb.SP)) / (a.T * speed_limit)
        acd = sum(1 for x, y in zip(ca_.AC, cb.AC) if x != y) / a.T
        total += sp + acd
    return total / len(a.npcs)


def restart_check(best_history: list, population: list, cfg: GaConfig,
                  speed_limit: float) -> bool:
    """Trigger a random restart on fitness stagnation or population collapse.

    best_history holds the best Stage-1 fitness at each handoff (most recent
    last); population is the current list of EvaluatedScenario.
    """
    R = cfg.restart_stagnation_R
    if len(best_history) > R:
        recent = best_history[-(R + 1):]
        if all(abs(v - recent[0]) < 1e-12 for v in recent):
            return True
    genomes = [m.genome for m in population]
    if len(genomes) >= 2:
        dists = [genome_distance(genomes[i], genomes[j], speed_limit)
                 for i in range(len(genomes))
                 for j in range(i + 1, len(genomes))]
        if sum(dists) / len(dists) < cfg.restart_similarity_eps:
            return True
    return False
