//! Pre-generated tournaments, the loser check run at block boundaries,
//! winner resolution and efficiency accounting.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::EngineError;
use crate::eval::{EvalState, Status};

/// One generation's tournaments and their member→slot inverted index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TournamentSet {
    tournaments: Vec<Vec<usize>>,
    member_index: Vec<Vec<(usize, usize)>>,
}

impl TournamentSet {
    pub fn from_tournaments(tournaments: Vec<Vec<usize>>, population_size: usize) -> Self {
        let mut member_index = vec![Vec::new(); population_size];
        for (t, members) in tournaments.iter().enumerate() {
            for (slot, &m) in members.iter().enumerate() {
                assert!(m < population_size, "member {m} outside population");
                member_index[m].push((t, slot));
            }
        }
        TournamentSet {
            tournaments,
            member_index,
        }
    }

    pub fn tournaments(&self) -> &[Vec<usize>] {
        &self.tournaments
    }

    pub fn len(&self) -> usize {
        self.tournaments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tournaments.is_empty()
    }

    pub fn population_size(&self) -> usize {
        self.member_index.len()
    }

    /// `(tournament, slot)` pairs occupied by `member`.
    pub fn memberships(&self, member: usize) -> &[(usize, usize)] {
        &self.member_index[member]
    }

    pub fn is_sampled(&self, member: usize) -> bool {
        !self.member_index[member].is_empty()
    }
}

/// Draws `parents_needed` tournaments of `t` members, uniformly with
/// replacement.
pub fn generate_tournaments<R: Rng + ?Sized>(
    rng: &mut R,
    population_size: usize,
    parents_needed: usize,
    t: usize,
) -> TournamentSet {
    assert!(t >= 1, "tournament size must be at least 1");
    assert!(population_size >= 1 || parents_needed == 0);
    let tournaments = (0..parents_needed)
        .map(|_| (0..t).map(|_| rng.gen_range(0..population_size)).collect())
        .collect();
    TournamentSet::from_tournaments(tournaments, population_size)
}

/// True when a member can no longer reach the best accumulated fitness of
/// the tournament even if it classifies every remaining case correctly.
/// Ties stay winnable.
pub fn tournament_lost(
    member_hits: u64,
    member_remaining: u64,
    best_hits_in_tournament: u64,
) -> bool {
    member_hits + member_remaining < best_hits_in_tournament
}

/// The comparison used to flag a lost tournament.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LoserRule {
    #[default]
    Strict,
    /// Also prunes members that can at best tie. Unsound under the
    /// earliest-slot tie-break; kept so the verifier can be shown to catch
    /// it.
    PruneTies,
}

impl LoserRule {
    pub fn lost(self, hits: u64, remaining: u64, best: u64) -> bool {
        match self {
            LoserRule::Strict => tournament_lost(hits, remaining, best),
            LoserRule::PruneTies => hits + remaining <= best,
        }
    }
}

/// Updates lost flags against the current best of every tournament and
/// turns members that have lost all their tournaments into losers.
///
/// Returns the number of members newly marked.
pub fn mark_losers(states: &mut [EvalState], set: &TournamentSet, total_cases: u64) -> usize {
    mark_losers_with(states, set, total_cases, LoserRule::Strict)
}

pub fn mark_losers_with(
    states: &mut [EvalState],
    set: &TournamentSet,
    total_cases: u64,
    rule: LoserRule,
) -> usize {
    let best: Vec<u64> = set
        .tournaments()
        .iter()
        .map(|members| members.iter().map(|&m| states[m].hits).max().unwrap_or(0))
        .collect();

    let mut marked = 0;
    for (member, state) in states.iter_mut().enumerate() {
        let memberships = set.memberships(member);
        if state.status != Status::Active || memberships.is_empty() {
            continue;
        }
        let remaining = state.remaining(total_cases);
        for (flag, &(t, _)) in state.lost_flags.iter_mut().zip(memberships) {
            if !*flag && rule.lost(state.hits, remaining, best[t]) {
                *flag = true;
            }
        }
        if state.lost_flags.iter().all(|&f| f) {
            state.status = Status::Loser;
            marked += 1;
        }
    }
    marked
}

/// Member with the most hits; ties go to the earliest slot.
pub fn select_winner(tournament: &[usize], hits: &[u64]) -> usize {
    let mut winner = tournament[0];
    for &m in &tournament[1..] {
        if hits[m] > hits[winner] {
            winner = m;
        }
    }
    winner
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LedgerEntry {
    pub skipped_cases: u64,
    pub program_size: usize,
    pub would_evaluate: bool,
}

/// Per-member record of evaluation work avoided in one generation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EfficiencyLedger {
    pub total_cases: u64,
    pub entries: Vec<LedgerEntry>,
}

impl EfficiencyLedger {
    pub fn new(total_cases: u64) -> Self {
        EfficiencyLedger {
            total_cases,
            entries: Vec::new(),
        }
    }

    pub fn record(&mut self, skipped_cases: u64, program_size: usize, would_evaluate: bool) {
        assert!(skipped_cases <= self.total_cases);
        self.entries.push(LedgerEntry {
            skipped_cases,
            program_size,
            would_evaluate,
        });
    }

    /// Size-weighted skipped and full work over members that would be
    /// evaluated.
    pub fn work(&self) -> WorkTotals {
        self.entries
            .iter()
            .filter(|e| e.would_evaluate)
            .fold(WorkTotals::default(), |acc, e| WorkTotals {
                skipped: acc.skipped + u128::from(e.skipped_cases) * e.program_size as u128,
                full: acc.full + u128::from(self.total_cases) * e.program_size as u128,
            })
    }
}

/// Node-case products: work avoided and work a full evaluation would do.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WorkTotals {
    pub skipped: u128,
    pub full: u128,
}

impl std::ops::AddAssign for WorkTotals {
    fn add_assign(&mut self, other: Self) {
        self.skipped += other.skipped;
        self.full += other.full;
    }
}

impl WorkTotals {
    pub fn saving_percent(&self) -> Result<f64, EngineError> {
        if self.full == 0 {
            return Err(EngineError::EmptyLedger);
        }
        Ok(100.0 * self.skipped as f64 / self.full as f64)
    }
}

/// Percentage of size-weighted fitness-case evaluations avoided.
pub fn efficiency_saving(ledger: &EfficiencyLedger) -> Result<f64, EngineError> {
    assert!(ledger.total_cases > 0, "ledger has no fitness cases");
    ledger.work().saving_percent()
}

/// One pruned member, force-evaluated after the fact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditRecord {
    pub generation: usize,
    pub member: usize,
    /// Tournament indices joined with `;`.
    pub tournaments: String,
    pub pruned_after_block: usize,
    pub hits_at_pruning: u64,
    pub final_hits: u64,
    /// Tournaments the member would have won under full evaluation.
    pub wins: usize,
}

pub fn write_audit<W: Write>(out: W, records: &[AuditRecord]) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer.serialize(r)?;
    }
    if records.is_empty() {
        writer.write_record([
            "generation",
            "member",
            "tournaments",
            "pruned_after_block",
            "hits_at_pruning",
            "final_hits",
            "wins",
        ])?;
    }
    writer.flush()?;
    Ok(())
}
