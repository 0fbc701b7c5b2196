//! Event-driven simulation of the layer pipeline with bounded FIFOs.
//!
//! Each stage is a single server. Between stage `k−1` and stage `k` sits a
//! FIFO of `capacity` units. A stage that finishes a unit while its
//! downstream FIFO is full holds the unit and stalls until space frees up.
//! An idle stage pulls units from its FIFO into its line buffer until the
//! next output unit has all the inputs it needs. Stage 0 reads from an
//! unbounded source.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::cost::latency::pipeline_latency;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StageModel {
    pub label: String,
    /// Cycles per output unit.
    pub service_cycles: u64,
    /// Input FIFO depth in units; `None` is unbounded. Ignored for stage 0.
    pub capacity: Option<u64>,
    /// `need[u]`: upstream units of the same frame required before unit `u`
    /// can start. Nondecreasing; the last entry is the upstream frame size.
    pub need: Vec<u64>,
}

impl StageModel {
    /// One unit per frame, consuming one upstream unit.
    pub fn coarse(label: impl Into<String>, frame_cycles: u64) -> Self {
        Self {
            label: label.into(),
            service_cycles: frame_cycles,
            capacity: None,
            need: vec![1],
        }
    }

    pub fn with_capacity(mut self, capacity: Option<u64>) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn units_per_frame(&self) -> u64 {
        self.need.len() as u64
    }

    pub fn frame_cycles(&self) -> u64 {
        self.service_cycles * self.units_per_frame()
    }
}

fn validate(stages: &[StageModel], frames: u64) -> Result<()> {
    if frames == 0 {
        return Err(Error::Degenerate("pipeline needs at least one frame".into()));
    }
    if stages.is_empty() {
        return Err(Error::Degenerate("pipeline needs at least one stage".into()));
    }
    for (k, s) in stages.iter().enumerate() {
        let bad = |reason: &str| Err(Error::Degenerate(format!("stage {k} ({}): {reason}", s.label)));
        if s.service_cycles == 0 {
            return bad("service cycles must be at least 1");
        }
        if s.capacity == Some(0) {
            return bad("FIFO capacity must be at least 1");
        }
        if s.need.is_empty() || s.need[0] == 0 || s.need.windows(2).any(|w| w[0] > w[1]) {
            return bad("need must be positive and nondecreasing");
        }
        if k > 0 && *s.need.last().unwrap() != stages[k - 1].units_per_frame() {
            return bad("last unit must need the whole upstream frame");
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StageSpan {
    /// Start of the first unit of the frame.
    pub start: u64,
    /// End of service of the last unit of the frame.
    pub finish: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PipelineTrace {
    /// `spans[frame][stage]`.
    pub spans: Vec<Vec<StageSpan>>,
    pub makespan: u64,
    /// Peak FIFO occupancy per stage, in units.
    pub max_occupancy: Vec<u64>,
    /// Cycles each stage held a finished unit because its successor was full.
    pub blocked_cycles: Vec<u64>,
}

impl PipelineTrace {
    pub fn frames(&self) -> u64 {
        self.spans.len() as u64
    }

    pub fn average_latency(&self) -> f64 {
        self.makespan as f64 / self.frames() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Idle,
    Busy,
    /// Finished a unit at the given time, waiting for downstream space.
    Blocked(u64),
    Done,
}

struct Stage {
    phase: Phase,
    frame: u64,
    unit: u64,
    /// Upstream units pulled into the line buffer so far.
    pulled: u64,
    /// Units waiting in the input FIFO.
    queued: u64,
}

pub fn simulate(stages: &[StageModel], frames: u64) -> Result<PipelineTrace> {
    validate(stages, frames)?;
    let n = stages.len();
    let mut st: Vec<Stage> = (0..n)
        .map(|_| Stage {
            phase: Phase::Idle,
            frame: 0,
            unit: 0,
            pulled: 0,
            queued: 0,
        })
        .collect();
    let mut spans = vec![vec![StageSpan::default(); n]; frames as usize];
    let mut max_occupancy = vec![0; n];
    let mut blocked_cycles = vec![0; n];
    let mut events: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    let mut now = 0;
    let mut makespan = 0;

    loop {
        // downstream-first until nothing changes at this instant
        let mut changed = true;
        while changed {
            changed = false;
            for k in (0..n).rev() {
                if let Phase::Blocked(since) = st[k].phase {
                    let fits = stages[k + 1]
                        .capacity
                        .is_none_or(|c| st[k + 1].queued < c);
                    if fits {
                        st[k + 1].queued += 1;
                        max_occupancy[k + 1] = max_occupancy[k + 1].max(st[k + 1].queued);
                        blocked_cycles[k] += now - since;
                        advance(&mut st[k], &stages[k]);
                        st[k].phase = if st[k].frame == frames { Phase::Done } else { Phase::Idle };
                        changed = true;
                    }
                }
                if st[k].phase == Phase::Idle {
                    let s = &mut st[k];
                    let ready = if k == 0 {
                        true
                    } else {
                        let upstream = stages[k - 1].units_per_frame();
                        let required = s.frame * upstream + stages[k].need[s.unit as usize];
                        let take = (required - s.pulled.min(required)).min(s.queued);
                        if take > 0 {
                            s.queued -= take;
                            s.pulled += take;
                            changed = true;
                        }
                        s.pulled >= required
                    };
                    if ready {
                        if s.unit == 0 {
                            spans[s.frame as usize][k].start = now;
                        }
                        s.phase = Phase::Busy;
                        events.push(Reverse((now + stages[k].service_cycles, k)));
                        changed = true;
                    }
                }
            }
        }

        let Some(Reverse((t, _))) = events.peek().copied() else {
            break;
        };
        now = t;
        while let Some(&Reverse((t, k))) = events.peek() {
            if t != now {
                break;
            }
            events.pop();
            let s = &mut st[k];
            if s.unit + 1 == stages[k].units_per_frame() {
                spans[s.frame as usize][k].finish = now;
            }
            if k + 1 == n {
                makespan = now;
                advance(s, &stages[k]);
                s.phase = if s.frame == frames { Phase::Done } else { Phase::Idle };
            } else {
                s.phase = Phase::Blocked(now);
            }
        }
    }

    if st.iter().any(|s| s.phase != Phase::Done) {
        return Err(Error::Degenerate("pipeline stalled before draining all frames".into()));
    }
    Ok(PipelineTrace {
        spans,
        makespan,
        max_occupancy,
        blocked_cycles,
    })
}

fn advance(s: &mut Stage, model: &StageModel) {
    s.unit += 1;
    if s.unit == model.units_per_frame() {
        s.unit = 0;
        s.frame += 1;
    }
}

/// Simulated makespan against the closed-form pipeline model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelGap {
    pub simulated: u64,
    pub analytical: u64,
    /// `simulated − analytical`.
    pub absolute: i64,
    /// `absolute / analytical`.
    pub relative: f64,
    /// Some stage stalled on a full FIFO.
    pub backpressure: bool,
}

pub fn compare_to_model(trace: &PipelineTrace, stages: &[StageModel]) -> Result<ModelGap> {
    let cycles: Vec<u64> = stages.iter().map(StageModel::frame_cycles).collect();
    let model = pipeline_latency(&cycles, trace.frames())?;
    let absolute = trace.makespan as i64 - model.makespan as i64;
    Ok(ModelGap {
        simulated: trace.makespan,
        analytical: model.makespan,
        absolute,
        relative: absolute as f64 / model.makespan as f64,
        backpressure: trace.blocked_cycles.iter().any(|&c| c > 0),
    })
}

/// Smallest FIFO depths keeping the makespan within 1% of the unbounded one.
///
/// Stages are sized last to first; while stage `k` is searched, later stages
/// keep their chosen depths and earlier ones stay unbounded. Stage 0 reads
/// from the source and always reports 1.
pub fn size_fifos(stages: &[StageModel], frames: u64) -> Result<Vec<u64>> {
    let mut work: Vec<StageModel> = stages.iter().cloned().map(|s| s.with_capacity(None)).collect();
    let free = simulate(&work, frames)?;
    let limit = free.makespan + free.makespan / 100;
    let mut caps = vec![1; stages.len()];
    for k in (1..stages.len()).rev() {
        let (mut lo, mut hi) = (1, free.max_occupancy[k].max(1));
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            work[k].capacity = Some(mid);
            if simulate(&work, frames)?.makespan <= limit {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        work[k].capacity = Some(lo);
        caps[k] = lo;
    }
    Ok(caps)
}
