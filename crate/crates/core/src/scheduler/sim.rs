use std::io::Write;

use serde::{Deserialize, Serialize};

use super::instance::{Graph, ScheduleInstance};
use super::plan::SwitchPlan;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatencyReport {
    pub prefill_done: u64,
    pub switch_done: u64,
    pub overall: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    /// One pass of `block` over `chunk`. G² runs `subchunk_factor` passes.
    Compute {
        block: usize,
        chunk: usize,
        graph: Graph,
        pass: usize,
    },
    Load {
        block: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    #[serde(flatten)]
    pub kind: EventKind,
    pub start: u64,
    pub end: u64,
}

impl TraceEvent {
    pub fn block(&self) -> usize {
        match self.kind {
            EventKind::Compute { block, .. } | EventKind::Load { block } => block,
        }
    }

    fn label(&self) -> &'static str {
        match self.kind {
            EventKind::Compute {
                graph: Graph::G1, ..
            } => "compute_g1",
            EventKind::Compute {
                graph: Graph::G2, ..
            } => "compute_g2",
            EventKind::Load { .. } => "load",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub events: Vec<TraceEvent>,
}

impl PipelineTrace {
    /// CSV with header `event,block,start,end`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["event", "block", "start", "end"])?;
        for e in &self.events {
            out.write_record([
                e.label().to_string(),
                e.block().to_string(),
                e.start.to_string(),
                e.end.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

struct Playback<'a> {
    inst: &'a ScheduleInstance,
    trace: Option<Vec<TraceEvent>>,
    load_end: Vec<Option<u64>>,
    channel: u64,
    switch_done: u64,
}

impl Playback<'_> {
    fn issue(&mut self, block: usize, at: u64) {
        let start = at.max(self.channel);
        let end = start + self.inst.blocks[block].load_g2;
        self.channel = end;
        self.switch_done = self.switch_done.max(end);
        self.load_end[block] = Some(end);
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent {
                kind: EventKind::Load { block },
                start,
                end,
            });
        }
    }
}

fn run(
    inst: &ScheduleInstance,
    plan: &SwitchPlan,
    want_trace: bool,
) -> Result<(LatencyReport, PipelineTrace)> {
    inst.validate()?;
    plan.check(inst)?;
    let mut pb = Playback {
        inst,
        trace: want_trace.then(Vec::new),
        load_end: vec![None; inst.num_blocks()],
        channel: 0,
        switch_done: 0,
    };
    let mut loads = plan.loads.iter().peekable();
    let mut t = 0u64;
    for s in 0..inst.num_slots() {
        while let Some(l) = loads.next_if(|l| l.point == s) {
            pb.issue(l.block, t);
        }
        let b = inst.slot_block(s);
        let chunk = inst.slot_chunk(s);
        match pb.load_end[b] {
            Some(ready) => {
                let start = t.max(ready);
                let sub = inst.blocks[b].compute_g2_sub;
                if let Some(tr) = pb.trace.as_mut() {
                    for pass in 0..inst.subchunk_factor {
                        let ps = start + pass as u64 * sub;
                        tr.push(TraceEvent {
                            kind: EventKind::Compute {
                                block: b,
                                chunk,
                                graph: Graph::G2,
                                pass,
                            },
                            start: ps,
                            end: ps + sub,
                        });
                    }
                }
                t = start + inst.compute(b, Graph::G2);
            }
            None => {
                let end = t + inst.blocks[b].compute_g1;
                if let Some(tr) = pb.trace.as_mut() {
                    tr.push(TraceEvent {
                        kind: EventKind::Compute {
                            block: b,
                            chunk,
                            graph: Graph::G1,
                            pass: 0,
                        },
                        start: t,
                        end,
                    });
                }
                t = end;
            }
        }
    }
    for l in loads {
        pb.issue(l.block, t);
    }
    let report = LatencyReport {
        prefill_done: t,
        switch_done: pb.switch_done,
        overall: t.max(pb.switch_done),
    };
    Ok((
        report,
        PipelineTrace {
            events: pb.trace.unwrap_or_default(),
        },
    ))
}

/// Plays the plan back: slots run in order, a G² slot waits for its block's
/// load, and loads share a single channel in plan order.
pub fn simulate(inst: &ScheduleInstance, plan: &SwitchPlan) -> Result<LatencyReport> {
    run(inst, plan, false).map(|(r, _)| r)
}

pub fn simulate_trace(
    inst: &ScheduleInstance,
    plan: &SwitchPlan,
) -> Result<(LatencyReport, PipelineTrace)> {
    run(inst, plan, true)
}

fn overlaps(a: &TraceEvent, b: &TraceEvent) -> bool {
    a.start < b.end && b.start < a.end
}

/// Checks a trace against the pipeline rules and the report it came with.
pub fn validate_trace(
    inst: &ScheduleInstance,
    trace: &PipelineTrace,
    report: &LatencyReport,
) -> Result<()> {
    let bad = |m: String| Err(Error::Structure(m));
    let computes: Vec<&TraceEvent> = trace
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Compute { .. }))
        .collect();
    let loads: Vec<&TraceEvent> = trace
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Load { .. }))
        .collect();
    for group in [&computes, &loads] {
        let mut sorted = group.to_vec();
        sorted.sort_by_key(|e| (e.start, e.end));
        for w in sorted.windows(2) {
            if w[0].end > w[1].start {
                return bad(format!(
                    "events overlap on one channel: {:?} / {:?}",
                    w[0], w[1]
                ));
            }
        }
    }
    for l in &loads {
        for c in &computes {
            if c.block() == l.block() && overlaps(c, l) {
                return bad(format!("block {} computes during its own load", l.block()));
            }
        }
    }

    // Coverage: each (chunk, block) once, in order, as one G¹ pass or r G² passes.
    let n = inst.num_blocks();
    let mut idx = 0;
    let mut prev_end = 0;
    for s in 0..inst.num_slots() {
        let (chunk, block) = (inst.slot_chunk(s), inst.slot_block(s));
        let Some(first) = computes.get(idx) else {
            return bad(format!("slot {s} missing"));
        };
        let graph = match first.kind {
            EventKind::Compute {
                block: b,
                chunk: c,
                graph,
                ..
            } if b == block && c == chunk => graph,
            _ => return bad(format!("slot {s} out of order")),
        };
        let passes = if graph == Graph::G2 {
            inst.subchunk_factor
        } else {
            1
        };
        let dur = match graph {
            Graph::G1 => inst.blocks[block].compute_g1,
            Graph::G2 => inst.blocks[block].compute_g2_sub,
        };
        for pass in 0..passes {
            let Some(e) = computes.get(idx + pass) else {
                return bad(format!("slot {s} short of passes"));
            };
            if e.kind
                != (EventKind::Compute {
                    block,
                    chunk,
                    graph,
                    pass,
                })
                || e.end - e.start != dur
            {
                return bad(format!("slot {s} pass {pass} malformed"));
            }
            if e.start < prev_end {
                return bad(format!("slot {s} starts early"));
            }
            prev_end = e.end;
        }
        idx += passes;
    }
    if idx != computes.len() {
        return bad("extra compute events".into());
    }
    let mut switched = vec![0; n];
    for l in &loads {
        switched[l.block()] += 1;
        if l.end - l.start != inst.blocks[l.block()].load_g2 {
            return bad(format!("load of block {} has wrong duration", l.block()));
        }
    }
    if switched.iter().any(|&c| c > 1) {
        return bad("block loaded twice".into());
    }

    let prefill = computes.last().map_or(0, |e| e.end);
    let switch = loads.iter().map(|e| e.end).max().unwrap_or(0);
    if report.prefill_done != prefill
        || report.switch_done != switch
        || report.overall != prefill.max(switch)
    {
        return bad("report disagrees with trace".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::instance::BlockProfile;
    use super::super::plan::{naive_async_plan, synchronous_plan, LoadIssue};
    use super::*;

    fn bp(load_g2: u64, compute_g1: u64, compute_g2_sub: u64) -> BlockProfile {
        BlockProfile {
            load_g2,
            compute_g1,
            compute_g2_sub,
        }
    }

    fn inst() -> ScheduleInstance {
        ScheduleInstance::new(2, 2, vec![bp(4, 3, 1), bp(6, 5, 2), bp(2, 2, 2)]).unwrap()
    }

    #[test]
    fn pure_prefill_without_loads() {
        let i = inst();
        let r = simulate(&i, &SwitchPlan::default()).unwrap();
        assert_eq!(r.prefill_done, 2 * (3 + 5 + 2));
        assert_eq!(r.switch_done, 0);
        assert_eq!(r.overall, r.prefill_done);
    }

    #[test]
    fn synchronous_adds_every_load() {
        let i = inst();
        let r = simulate(&i, &synchronous_plan(&i)).unwrap();
        assert_eq!(r.overall, i.pure_prefill() + i.total_load());
    }

    #[test]
    fn hand_timeline() {
        // Block 2 loads before slot 0; block 0 loads before slot 3 (chunk 1).
        // slot0 b0 G1 [0,3)   load b2 [0,2)
        // slot1 b1 G1 [3,8)
        // slot2 b2 G2 [8,12)  (2 passes of 2)
        // load b0 issued at 12 -> [12,16); slot3 b0 waits: G2 [16,18)
        // slot4 b1 G1 [18,23); slot5 b2 G2 [23,27)
        let i = inst();
        let plan = SwitchPlan::new(vec![
            LoadIssue { block: 2, point: 0 },
            LoadIssue { block: 0, point: 3 },
        ]);
        let (r, tr) = simulate_trace(&i, &plan).unwrap();
        assert_eq!(r.prefill_done, 27);
        assert_eq!(r.switch_done, 16);
        validate_trace(&i, &tr, &r).unwrap();
        assert_eq!(tr.events.len(), 2 + 1 + 1 + 2 + 2 + 1 + 2);
    }

    #[test]
    fn loads_serialize() {
        let i = inst();
        let plan = SwitchPlan::new(vec![
            LoadIssue { block: 0, point: 6 },
            LoadIssue { block: 1, point: 6 },
        ]);
        let r = simulate(&i, &plan).unwrap();
        assert_eq!(r.switch_done, 20 + 4 + 6);
    }

    #[test]
    fn validator_catches_tampering() {
        let i = inst();
        let (r, mut tr) = simulate_trace(&i, &naive_async_plan(&i)).unwrap();
        validate_trace(&i, &tr, &r).unwrap();
        let mut r2 = r;
        r2.overall += 1;
        assert!(validate_trace(&i, &tr, &r2).is_err());
        let li = tr
            .events
            .iter()
            .position(|e| matches!(e.kind, EventKind::Load { .. }))
            .unwrap();
        tr.events[li].start = 0;
        assert!(validate_trace(&i, &tr, &r).is_err());
    }

    #[test]
    fn unknown_block_is_input_error() {
        let plan = SwitchPlan::new(vec![LoadIssue { block: 9, point: 0 }]);
        assert!(matches!(simulate(&inst(), &plan), Err(Error::Input(_))));
    }

    #[test]
    fn csv_export() {
        let i = inst();
        let (_, tr) = simulate_trace(&i, &synchronous_plan(&i)).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("event,block,start,end\ncompute_g1,0,0,3\n"));
        assert!(text.trim_end().ends_with("load,0,28,32"));
    }
}
