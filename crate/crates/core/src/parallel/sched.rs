//! The three ways of running one level: bulk-synchronous rounds, an
//! event-driven asynchronous simulation, and real threads.

use super::comm::{CommLog, CostModel, MessageRecord, Phase};
use super::decomp::NodeClass;
use super::engine::{LevelCtx, Outcome, Payload, Worker};
use crate::error::{Error, Result};
use crate::factor::ClusterOperator;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc;
use std::time::{Duration, Instant};

/// Per-level result of a schedule.
pub(crate) struct LevelRun {
    pub ops: Vec<Option<ClusterOperator>>,
    pub flops: u64,
    pub violations: usize,
}

impl LevelRun {
    fn new(m: usize) -> Self {
        LevelRun { ops: vec![None; m], flops: 0, violations: 0 }
    }

    fn record(&mut self, s: usize, o: &Outcome) {
        self.flops += o.flops;
        self.violations += o.violations;
        self.ops[s] = Some(o.op.clone());
    }
}

/// Shared context of a simulated run.
pub(crate) struct Sim<'a> {
    pub cost: CostModel,
    pub log: &'a mut CommLog,
    pub clock: f64,
    pub level: usize,
}

impl Sim<'_> {
    fn send(&mut self, from: usize, to: usize, phase: Phase, bytes: usize, time: f64) -> f64 {
        self.log.send(MessageRecord { from, to, level: self.level, phase, bytes, time });
        self.log.deliver(to, self.level, bytes);
        time + self.cost.message(bytes)
    }
}

/// Algorithm 3: one round per color, then D2, then D3, each followed by a
/// message exchange and a barrier.
pub(crate) fn run_bsp(workers: &mut [Worker], ctx: &LevelCtx, sim: &mut Sim) -> Result<LevelRun> {
    let p = workers.len();
    let d = ctx.decomp;
    let mut run = LevelRun::new(ctx.order.len());
    let mut rounds: Vec<(String, Option<Phase>, Vec<usize>)> = Vec::new();
    for c in 0..d.num_colors() {
        let nodes = ctx.order.iter().copied().filter(|&s| d.class[s] == NodeClass::D1 && d.color[s] == Some(c)).collect();
        rounds.push((format!("d1-round-{c}"), Some(Phase::D1Round(c)), nodes));
    }
    for (label, class, phase) in [("d2-round", NodeClass::D2, Some(Phase::D2Round)), ("d3-round", NodeClass::D3, None)] {
        let nodes = ctx.order.iter().copied().filter(|&s| d.class[s] == class).collect();
        rounds.push((label.to_string(), phase, nodes));
    }
    for (label, phase, nodes) in rounds {
        let start = sim.clock;
        let mut compute = vec![0.0; p];
        let mut outgoing: BTreeMap<(usize, usize), Payload> = BTreeMap::new();
        for s in nodes {
            let w = ctx.owner(s);
            if !workers[w].ready(ctx, s) {
                return Err(Error::DeadlockDetected(format!(
                    "cluster {s} on worker {w} waits on a cluster of the same round; the coloring is invalid"
                )));
            }
            let mut o = workers[w].eliminate(ctx, s)?;
            run.record(s, &o);
            compute[w] += sim.cost.compute(o.flops);
            workers[w].receive(o.payloads.remove(&w).unwrap_or_default());
            for (dst, pl) in o.payloads {
                outgoing.entry((w, dst)).or_default().merge(pl);
            }
        }
        let mut end = start + compute.iter().cloned().fold(0.0, f64::max);
        for ((src, dst), pl) in outgoing {
            let phase = phase.unwrap_or(Phase::D2Round);
            let arrive = sim.send(src, dst, phase, pl.bytes(), start + compute[src]);
            end = end.max(arrive);
            workers[dst].receive(pl);
        }
        for w in 0..p {
            sim.log.workers[w].busy += compute[w];
            sim.log.workers[w].idle += end - start - compute[w];
        }
        sim.log.add_phase_time(&label, end - start);
        sim.clock = end;
    }
    Ok(run)
}

enum Event {
    Done { w: usize, s: usize, outcome: Outcome },
    Arrive { w: usize, payload: Payload },
}

/// Algorithm 4 on a virtual clock: an idle worker starts its most urgent
/// ready cluster (D1, then D2, then D3) and sends results as soon as it
/// completes.
pub(crate) fn run_async(workers: &mut [Worker], ctx: &LevelCtx, sim: &mut Sim) -> Result<LevelRun> {
    let p = workers.len();
    let mut run = LevelRun::new(ctx.order.len());
    let mut remaining: Vec<BTreeSet<((NodeClass, usize), usize)>> = vec![BTreeSet::new(); p];
    for &s in &ctx.order {
        remaining[ctx.owner(s)].insert((ctx.priority(s), s));
    }
    let start = sim.clock;
    let mut now = start;
    let mut busy = vec![false; p];
    let mut events: BTreeMap<(u64, u64), Event> = BTreeMap::new();
    let mut seq = 0u64;
    let mut push = |events: &mut BTreeMap<(u64, u64), Event>, t: f64, e: Event| {
        events.insert((t.to_bits(), seq), e);
        seq += 1;
    };
    let mut compute = vec![0.0; p];
    loop {
        for w in 0..p {
            if busy[w] {
                continue;
            }
            let next = remaining[w].iter().find(|&&(_, s)| workers[w].ready(ctx, s)).copied();
            if let Some(entry) = next {
                remaining[w].remove(&entry);
                let s = entry.1;
                let outcome = workers[w].eliminate(ctx, s)?;
                let dt = sim.cost.compute(outcome.flops);
                compute[w] += dt;
                busy[w] = true;
                push(&mut events, now + dt, Event::Done { w, s, outcome });
            }
        }
        let Some((&key, _)) = events.iter().next() else {
            if remaining.iter().any(|r| !r.is_empty()) {
                return Err(Error::DeadlockDetected("no worker can make progress".into()));
            }
            break;
        };
        let event = events.remove(&key).unwrap();
        now = f64::from_bits(key.0);
        match event {
            Event::Done { w, s, mut outcome } => {
                busy[w] = false;
                run.record(s, &outcome);
                workers[w].receive(outcome.payloads.remove(&w).unwrap_or_default());
                for (dst, pl) in outcome.payloads {
                    let arrive = sim.send(w, dst, ctx.phase(s), pl.bytes(), now);
                    push(&mut events, arrive, Event::Arrive { w: dst, payload: pl });
                }
            }
            Event::Arrive { w, payload } => workers[w].receive(payload),
        }
    }
    for w in 0..p {
        sim.log.workers[w].busy += compute[w];
        sim.log.workers[w].idle += now - start - compute[w];
    }
    sim.log.add_phase_time("level", now - start);
    sim.clock = now;
    Ok(run)
}

enum Msg {
    Data { payload: Payload },
    Finished,
    Abort,
}

const WATCHDOG: Duration = Duration::from_secs(60);

/// One thread per worker; payloads travel over channels.
pub(crate) fn run_threads(workers: &mut [Worker], ctx: &LevelCtx, log: &mut CommLog, level: usize) -> Result<LevelRun> {
    let p = workers.len();
    let (txs, rxs): (Vec<_>, Vec<_>) = (0..p).map(|_| mpsc::channel::<Msg>()).unzip();
    let t0 = Instant::now();
    let results: Vec<Result<(Vec<(usize, Outcome)>, Vec<MessageRecord>, Vec<(usize, usize)>)>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = workers
                .iter_mut()
                .zip(rxs)
                .map(|(worker, rx)| {
                    let txs = txs.clone();
                    scope.spawn(move || {
                        let out = thread_worker(worker, ctx, &rx, &txs, level, t0);
                        if out.is_err() {
                            for (q, tx) in txs.iter().enumerate() {
                                if q != worker.id {
                                    let _ = tx.send(Msg::Abort);
                                }
                            }
                        }
                        out
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect()
        });
    let mut run = LevelRun::new(ctx.order.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok((outcomes, sent, received)) => {
                for (s, o) in &outcomes {
                    run.record(*s, o);
                }
                for m in sent {
                    log.send(m);
                }
                for (to, bytes) in received {
                    log.deliver(to, level, bytes);
                }
            }
            Err(e) => {
                if first_err.is_none() || !matches!(e, Error::DeadlockDetected(_)) {
                    first_err = Some(e);
                }
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    log.add_phase_time("level", t0.elapsed().as_secs_f64());
    Ok(run)
}

type ThreadOut = (Vec<(usize, Outcome)>, Vec<MessageRecord>, Vec<(usize, usize)>);

fn thread_worker(
    worker: &mut Worker,
    ctx: &LevelCtx,
    rx: &mpsc::Receiver<Msg>,
    txs: &[mpsc::Sender<Msg>],
    level: usize,
    t0: Instant,
) -> Result<ThreadOut> {
    let me = worker.id;
    let p = txs.len();
    let mut remaining: BTreeSet<((NodeClass, usize), usize)> =
        ctx.order.iter().filter(|&&s| ctx.owner(s) == me).map(|&s| (ctx.priority(s), s)).collect();
    let mut outcomes = Vec::new();
    let mut sent = Vec::new();
    let mut received = Vec::new();
    let mut finished = 0;
    let mut handle = |worker: &mut Worker, msg: Msg, finished: &mut usize| -> Result<()> {
        match msg {
            Msg::Data { payload, .. } => {
                received.push((me, payload.bytes()));
                worker.receive(payload);
            }
            Msg::Finished => *finished += 1,
            Msg::Abort => return Err(Error::DeadlockDetected("aborted by another worker".into())),
        }
        Ok(())
    };
    while !remaining.is_empty() {
        let next = remaining.iter().find(|&&(_, s)| worker.ready(ctx, s)).copied();
        match next {
            Some(entry) => {
                remaining.remove(&entry);
                let s = entry.1;
                let mut o = worker.eliminate(ctx, s)?;
                worker.receive(o.payloads.remove(&me).unwrap_or_default());
                for (dst, pl) in std::mem::take(&mut o.payloads) {
                    sent.push(MessageRecord {
                        from: me,
                        to: dst,
                        level,
                        phase: ctx.phase(s),
                        bytes: pl.bytes(),
                        time: t0.elapsed().as_secs_f64(),
                    });
                    let _ = txs[dst].send(Msg::Data { payload: pl });
                }
                outcomes.push((s, o));
            }
            None => {
                let msg = rx
                    .recv_timeout(WATCHDOG)
                    .map_err(|_| Error::DeadlockDetected(format!("worker {me} starved")))?;
                handle(worker, msg, &mut finished)?;
            }
        }
    }
    for (q, tx) in txs.iter().enumerate() {
        if q != me {
            let _ = tx.send(Msg::Finished);
        }
    }
    while finished < p - 1 {
        let msg = rx.recv_timeout(WATCHDOG).map_err(|_| Error::DeadlockDetected(format!("worker {me} starved")))?;
        handle(worker, msg, &mut finished)?;
    }
    Ok((outcomes, sent, received))
}
