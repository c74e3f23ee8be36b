use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, NaiveTime, TimeZone, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    ArchiveEntry, ChatRequest, Collector, CollectorError, ConfigKey, GapRecord, ModelConfig,
    QueryOutcome, Replay,
};

fn default_skew_tolerance() -> u64 {
    900
}

/// Fixed daily query times over a run of consecutive days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulePlan {
    /// Local wall-clock times, e.g. `["08:00", "16:00"]`.
    pub times_of_day: Vec<NaiveTime>,
    pub days: u32,
    pub start_date: NaiveDate,
    /// Offset of the local zone from UTC, in minutes.
    #[serde(default)]
    pub utc_offset_minutes: i32,
    /// How late a tick may start before it is recorded as a gap.
    #[serde(default = "default_skew_tolerance")]
    pub skew_tolerance_secs: u64,
}

impl SchedulePlan {
    pub fn validate(&self) -> Result<(), CollectorError> {
        if self.times_of_day.is_empty() {
            return Err(CollectorError::Schedule("no times of day".into()));
        }
        if self.days == 0 {
            return Err(CollectorError::Schedule("zero days".into()));
        }
        let distinct: BTreeSet<_> = self.times_of_day.iter().collect();
        if distinct.len() != self.times_of_day.len() {
            return Err(CollectorError::Schedule("duplicate time of day".into()));
        }
        FixedOffset::east_opt(self.utc_offset_minutes * 60)
            .ok_or_else(|| CollectorError::Schedule("utc offset out of range".into()))?;
        Ok(())
    }

    /// Scheduled instants in order; the position is the query index.
    pub fn ticks(&self) -> Vec<DateTime<Utc>> {
        let Some(tz) = FixedOffset::east_opt(self.utc_offset_minutes * 60) else {
            return Vec::new();
        };
        let mut times = self.times_of_day.clone();
        times.sort();
        let mut out = Vec::with_capacity(times.len() * self.days as usize);
        for d in 0..self.days {
            let date = self.start_date + Duration::days(d as i64);
            for t in &times {
                if let Some(local) = tz.from_local_datetime(&date.and_time(*t)).single() {
                    out.push(local.with_timezone(&Utc));
                }
            }
        }
        out
    }

    pub fn skew_tolerance(&self) -> Duration {
        Duration::seconds(self.skew_tolerance_secs as i64)
    }
}

/// A configuration ready to execute: its key, endpoint and rendered prompt.
#[derive(Debug, Clone)]
pub struct PlannedConfig {
    pub key: ConfigKey,
    pub model: ModelConfig,
    pub prompt: String,
}

impl PlannedConfig {
    pub fn request(&self) -> ChatRequest {
        ChatRequest {
            prompt: self.prompt.clone(),
            temperature: self.key.intervention.temperature,
            retrieval: self.key.intervention.retrieval_enabled,
        }
    }
}

/// Query indices already handled per configuration, rebuilt from an archive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunnerState {
    done: BTreeMap<String, BTreeSet<u32>>,
    last_timestamp: Option<DateTime<Utc>>,
}

impl RunnerState {
    pub fn from_replay(replay: &Replay) -> Self {
        let mut state = Self::default();
        for rec in &replay.records {
            match &rec.entry {
                ArchiveEntry::Attempt(a) => {
                    state.mark(&a.config, a.query_index);
                    state.last_timestamp = state.last_timestamp.max(Some(a.timestamp));
                }
                ArchiveEntry::Gap(g) => state.mark(&g.config, g.query_index),
                ArchiveEntry::Header(_) => {}
            }
        }
        state
    }

    pub fn mark(&mut self, key: &ConfigKey, query_index: u32) {
        self.done.entry(key.id()).or_default().insert(query_index);
    }

    pub fn is_done(&self, key: &ConfigKey, query_index: u32) -> bool {
        self.done
            .get(&key.id())
            .is_some_and(|s| s.contains(&query_index))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    /// Query index handled by this step, if any tick was due.
    pub tick: Option<u32>,
    pub queries: usize,
    pub attempts: usize,
    pub gaps: usize,
    /// Next tick still to run, if the plan is not exhausted.
    pub next_tick: Option<DateTime<Utc>>,
}

pub type Probe = dyn Fn(&str) -> bool + Send + Sync;

/// Drives a plan: due ticks run, ticks missed beyond tolerance become gaps.
pub struct ScheduleRunner {
    pub plan: SchedulePlan,
    pub configs: Vec<PlannedConfig>,
    pub collector: Collector,
    pub probe: Arc<Probe>,
    ticks: Vec<DateTime<Utc>>,
}

impl ScheduleRunner {
    pub fn new(
        plan: SchedulePlan,
        configs: Vec<PlannedConfig>,
        collector: Collector,
        probe: Arc<Probe>,
    ) -> Result<Self, CollectorError> {
        plan.validate()?;
        let mut seen = BTreeSet::new();
        for c in &configs {
            if !seen.insert(c.key.id()) {
                return Err(CollectorError::Schedule(format!(
                    "duplicate configuration {}",
                    c.key.id()
                )));
            }
        }
        let ticks = plan.ticks();
        Ok(Self {
            plan,
            configs,
            collector,
            probe,
            ticks,
        })
    }

    pub fn ticks(&self) -> &[DateTime<Utc>] {
        &self.ticks
    }

    fn pending(&self, state: &RunnerState, index: usize) -> Vec<&PlannedConfig> {
        self.configs
            .iter()
            .filter(|c| !state.is_done(&c.key, index as u32))
            .collect()
    }

    fn first_pending(&self, state: &RunnerState) -> Option<usize> {
        (0..self.ticks.len()).find(|&i| !self.pending(state, i).is_empty())
    }

    /// Handles every tick that is already due: missed ones become gaps, and
    /// at most one (the most recent within tolerance) is executed.
    pub fn step(&self, state: &mut RunnerState) -> Result<StepReport, CollectorError> {
        let now = self.collector.clock.now();
        if let Some(last) = state.last_timestamp {
            if now + self.plan.skew_tolerance() < last {
                log::warn!("clock is behind the archive's last attempt ({last}); now {now}");
            }
        }
        let mut report = StepReport::default();
        let tolerance = self.plan.skew_tolerance();
        while let Some(i) = self.first_pending(state) {
            let tick = self.ticks[i];
            if tick > now {
                break;
            }
            let pending: Vec<PlannedConfig> = self.pending(state, i).into_iter().cloned().collect();
            if now - tick > tolerance {
                for c in &pending {
                    self.collector.append(&ArchiveEntry::Gap(GapRecord {
                        config: c.key.clone(),
                        query_index: i as u32,
                        scheduled_for: tick,
                        reason: "missed".into(),
                    }))?;
                    state.mark(&c.key, i as u32);
                    report.gaps += 1;
                }
                log::warn!("tick {i} at {tick} missed; recorded {} gaps", pending.len());
                continue;
            }
            let outcomes = self.execute(&pending, i as u32)?;
            for (c, o) in pending.iter().zip(&outcomes) {
                state.mark(&c.key, i as u32);
                report.queries += 1;
                report.attempts += o.attempts.len();
                if let Some(a) = o.attempts.last() {
                    state.last_timestamp = state.last_timestamp.max(Some(a.timestamp));
                }
            }
            report.tick = Some(i as u32);
            break;
        }
        report.next_tick = self.first_pending(state).map(|i| self.ticks[i]);
        Ok(report)
    }

    fn execute(
        &self,
        configs: &[PlannedConfig],
        query_index: u32,
    ) -> Result<Vec<QueryOutcome>, CollectorError> {
        let probe = self.probe.as_ref();
        configs
            .par_iter()
            .map(|c| self.collector.run_query(c, query_index, &|t| probe(t)))
            .collect()
    }

    /// Runs until the plan is exhausted, sleeping between ticks.
    pub fn run(&self, state: &mut RunnerState) -> Result<Vec<StepReport>, CollectorError> {
        let mut reports = Vec::new();
        loop {
            let report = self.step(state)?;
            let next = report.next_tick;
            reports.push(report);
            match next {
                Some(t) => self.collector.clock.sleep_until(t),
                None => break,
            }
        }
        Ok(reports)
    }
}

/// Temperature sweep: `repeats` single-attempt queries per configuration.
/// Retries are skipped so every configuration yields exactly `repeats`
/// archived attempts.
pub fn run_calibration(
    collector: &Collector,
    configs: &[PlannedConfig],
    repeats: u32,
    already: &RunnerState,
) -> Result<usize, CollectorError> {
    let jobs: Vec<(&PlannedConfig, u32)> = configs
        .iter()
        .flat_map(|c| (0..repeats).map(move |q| (c, q)))
        .filter(|(c, q)| !already.is_done(&c.key, *q))
        .collect();
    let counts: Vec<usize> = jobs
        .par_iter()
        .map(|(c, q)| {
            collector
                .run_with_budget(c, *q, 1, &|_| true)
                .map(|o| o.attempts.len())
        })
        .collect::<Result<_, _>>()?;
    Ok(counts.into_iter().sum())
}
