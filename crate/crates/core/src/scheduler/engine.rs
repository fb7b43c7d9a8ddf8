//! Non-preemptive dispatch loop shared by the EDF and WFQ disciplines.
//!
//! Each interface kind is one medium carrying at most one burst at a time;
//! each client receives at most one burst at a time and in request order.
//! Whenever a medium is free, the eligible request with the smallest
//! discipline key whose client maps to that medium is started.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::link_model::{select_interface, LinkTrace, SelectionPolicy};
use crate::power_model::InterfaceKind;
use crate::scheduler::{Burst, BurstFailure, BurstRequest, PlayoutBuffer, Schedule, SchedulingContext, SelectionAlarm};
use crate::units::{ClientId, Micros};

pub(crate) trait Discipline {
    type Key: Ord + Clone;

    /// Assigns the ordering key of a newly released request. Called in
    /// non-decreasing release order.
    fn on_release(&mut self, req: &BurstRequest) -> Self::Key;

    /// Notified when a request (or a deferred part of one) starts service.
    fn on_start(&mut self, _req: &BurstRequest) {}
}

struct Entry<K> {
    req: BurstRequest,
    key: Option<K>,
    retry_at: Micros,
    alarmed: bool,
}

struct ClientState {
    queue: VecDeque<usize>,
    busy_until: Micros,
    current: Option<InterfaceKind>,
    last_switch: Micros,
    awake: BTreeSet<InterfaceKind>,
    playout: Option<PlayoutBuffer>,
    policy: SelectionPolicy,
}

enum Outcome {
    Progress,
    Blocked,
}

struct Engine<'c, 'a, K> {
    ctx: &'c SchedulingContext<'a>,
    entries: Vec<Entry<K>>,
    release_order: Vec<usize>,
    next_release: usize,
    clients: BTreeMap<ClientId, ClientState>,
    medium_free: BTreeMap<InterfaceKind, Micros>,
    wakeups: BTreeSet<Micros>,
    schedule: Schedule,
}

pub(crate) fn run<D: Discipline>(
    requests: &[BurstRequest],
    ctx: &SchedulingContext<'_>,
    discipline: &mut D,
) -> Schedule {
    let mut engine = Engine::new(requests, ctx);
    engine.run(discipline);
    engine.schedule
}

impl<'c, 'a, K: Ord + Clone> Engine<'c, 'a, K> {
    fn new(requests: &[BurstRequest], ctx: &'c SchedulingContext<'a>) -> Self {
        let entries: Vec<Entry<K>> = requests
            .iter()
            .map(|req| Entry { req: req.clone(), key: None, retry_at: Micros::ZERO, alarmed: false })
            .collect();
        let mut release_order: Vec<usize> = (0..entries.len()).collect();
        release_order.sort_by_key(|&i| (entries[i].req.release, entries[i].req.client, i));

        let mut clients: BTreeMap<ClientId, ClientState> = BTreeMap::new();
        let mut per_client: Vec<usize> = (0..entries.len()).collect();
        per_client.sort_by_key(|&i| (entries[i].req.client, entries[i].req.release, entries[i].req.deadline, i));
        for i in per_client {
            let client = entries[i].req.client;
            clients
                .entry(client)
                .or_insert_with(|| {
                    let links = ctx.clients.get(&client);
                    ClientState {
                        queue: VecDeque::new(),
                        busy_until: Micros::ZERO,
                        current: None,
                        last_switch: Micros::ZERO,
                        awake: BTreeSet::new(),
                        playout: links.and_then(|l| l.stream).map(PlayoutBuffer::new),
                        policy: match links {
                            Some(l) => ctx.policy.with_default_preference(l.models.values().copied()),
                            None => ctx.policy.clone(),
                        },
                    }
                })
                .queue
                .push_back(i);
        }
        Engine {
            ctx,
            entries,
            release_order,
            next_release: 0,
            clients,
            medium_free: BTreeMap::new(),
            wakeups: BTreeSet::new(),
            schedule: Schedule::default(),
        }
    }

    fn run<D: Discipline<Key = K>>(&mut self, discipline: &mut D) {
        let Some(&first) = self.release_order.first() else {
            return;
        };
        let mut now = self.entries[first].req.release;
        loop {
            while let Some(&i) = self.release_order.get(self.next_release) {
                if self.entries[i].req.release > now {
                    break;
                }
                self.entries[i].key = Some(discipline.on_release(&self.entries[i].req));
                self.next_release += 1;
            }
            self.dispatch(now, discipline);
            match self.next_event(now) {
                Some(t) => now = t,
                None => break,
            }
        }
    }

    fn dispatch<D: Discipline<Key = K>>(&mut self, now: Micros, discipline: &mut D) {
        loop {
            let mut candidates: Vec<(K, usize)> = self
                .clients
                .values()
                .filter(|c| c.busy_until <= now)
                .filter_map(|c| c.queue.front().copied())
                .filter_map(|i| {
                    let e = &self.entries[i];
                    let ready = e.req.release <= now && e.retry_at <= now;
                    e.key.clone().filter(|_| ready).map(|k| (k, i))
                })
                .collect();
            candidates.sort();
            let mut progressed = false;
            for (_, id) in candidates {
                if let Outcome::Progress = self.try_start(id, now, discipline) {
                    progressed = true;
                    break;
                }
            }
            if !progressed {
                return;
            }
        }
    }

    fn try_start<D: Discipline<Key = K>>(&mut self, id: usize, now: Micros, discipline: &mut D) -> Outcome {
        let req = self.entries[id].req.clone();
        let ctx = self.ctx;
        let Some(links) = ctx.clients.get(&req.client) else {
            return self.drop_request(id, now, "client has no links");
        };
        let state = &self.clients[&req.client];
        let picked = select_interface(
            &links.traces,
            now,
            links.required_bps,
            &state.policy,
            state.current.as_ref(),
            state.last_switch,
        );
        let Ok(iface) = picked else {
            return self.no_route(id, now, "no viable interface");
        };
        if self.medium_free.get(&iface).is_some_and(|&free| free > now) {
            return Outcome::Blocked;
        }
        if !state.awake.contains(&iface) {
            let wake = links.models.get(&iface).and_then(|m| m.wake_cost().ok()).map_or(Micros::ZERO, |c| c.latency);
            if now < wake {
                self.wakeups.insert(wake);
                return Outcome::Blocked;
            }
        }
        let trace = links.traces[&iface];
        let mut bytes = req.bytes;
        let Some(mut end) = transfer_end(trace, now, bytes) else {
            return self.no_route(id, now, "link collapses during burst");
        };
        if let Some(buffer) = &state.playout {
            // a burst that will fit whole later and still make its deadline
            // waits rather than splitting into two radio wakes
            if bytes > buffer.room_at(end) {
                if let Some(fits_at) = buffer.time_room_for(now, bytes) {
                    let wait_until = fits_at - (end - now);
                    if wait_until > now && transfer_end(trace, wait_until, bytes).is_some_and(|e| e <= req.deadline) {
                        self.entries[id].retry_at = wait_until;
                        return Outcome::Blocked;
                    }
                }
            }
            loop {
                let room = buffer.room_at(end);
                if bytes <= room {
                    break;
                }
                if room == 0 {
                    match buffer.time_room_for(now, req.bytes) {
                        Some(t) if t > now => {
                            self.entries[id].retry_at = t;
                            return Outcome::Blocked;
                        }
                        // never drains: send anyway and let the replay report it
                        _ => {
                            bytes = req.bytes;
                            end = transfer_end(trace, now, bytes).expect("full burst fit before");
                            break;
                        }
                    }
                }
                bytes = room;
                end = transfer_end(trace, now, bytes).expect("shorter burst fits the same link");
            }
        }

        let state = self.clients.get_mut(&req.client).expect("client state exists");
        if state.current.as_ref() != Some(&iface) {
            if let Some(prev) = state.current.take() {
                self.schedule.switches.push(crate::scheduler::InterfaceSwitch {
                    client: req.client,
                    at: now,
                    from: prev,
                    to: iface.clone(),
                });
            }
            state.current = Some(iface.clone());
            state.last_switch = now;
        }
        state.awake.insert(iface.clone());
        state.busy_until = end;
        state.queue.pop_front();
        if let Some(buffer) = state.playout.as_mut() {
            buffer.deliver(end, bytes);
        }
        self.medium_free.insert(iface.clone(), end);
        discipline.on_start(&req);
        self.schedule.push(Burst {
            client: req.client,
            interface: iface,
            start: now,
            end,
            bytes,
            deadline: req.deadline,
        });
        if bytes < req.bytes {
            let rest =
                BurstRequest { client: req.client, bytes: req.bytes - bytes, release: end, deadline: req.deadline };
            let key = self.entries[id].key.clone();
            self.entries.push(Entry { req: rest, key, retry_at: Micros::ZERO, alarmed: false });
            let child = self.entries.len() - 1;
            self.clients.get_mut(&req.client).expect("client state exists").queue.push_front(child);
        }
        Outcome::Progress
    }

    /// No interface can carry the request now: raise an alarm once and retry
    /// when the client's channel next changes, or give up if it never does.
    fn no_route(&mut self, id: usize, now: Micros, reason: &str) -> Outcome {
        let client = self.entries[id].req.client;
        if !self.entries[id].alarmed {
            self.entries[id].alarmed = true;
            self.schedule.alarms.push(SelectionAlarm { client, at: now, reason: reason.to_string() });
        }
        let next_change = self
            .ctx
            .clients
            .get(&client)
            .and_then(|l| l.traces.values().filter_map(|t| t.next_change_after(now)).min());
        match next_change {
            Some(t) => {
                self.entries[id].retry_at = t;
                Outcome::Blocked
            }
            None => self.drop_request(id, now, reason),
        }
    }

    fn drop_request(&mut self, id: usize, now: Micros, reason: &str) -> Outcome {
        let req = &self.entries[id].req;
        self.schedule.failures.push(BurstFailure {
            client: req.client,
            at: now,
            bytes: req.bytes,
            deadline: req.deadline,
            reason: reason.to_string(),
        });
        let client = req.client;
        if let Some(state) = self.clients.get_mut(&client) {
            state.queue.retain(|&q| q != id);
        }
        Outcome::Progress
    }

    fn next_event(&mut self, now: Micros) -> Option<Micros> {
        let mut next: Option<Micros> = None;
        let mut consider = |t: Micros| {
            if t > now {
                next = Some(next.map_or(t, |n| n.min(t)));
            }
        };
        for &t in self.medium_free.values() {
            consider(t);
        }
        for state in self.clients.values() {
            consider(state.busy_until);
            if let Some(&head) = state.queue.front() {
                let e = &self.entries[head];
                consider(e.req.release);
                consider(e.retry_at);
            }
        }
        if let Some(&i) = self.release_order.get(self.next_release) {
            consider(self.entries[i].req.release);
        }
        for &t in &self.wakeups {
            consider(t);
        }
        self.wakeups.retain(|&t| t > now);
        next
    }
}

/// End time of a transfer of `bytes` starting at `start`, paced at the
/// lowest throughput the link offers over the transfer so the average rate
/// never exceeds the channel. `None` if the link drops to zero first.
pub(crate) fn transfer_end(trace: &LinkTrace, start: Micros, bytes: u64) -> Option<Micros> {
    let bits_x_us = bytes as u128 * 8 * 1_000_000;
    let mut rate = trace.step_at(start).throughput_bps as u128;
    loop {
        if rate == 0 {
            return None;
        }
        let end = start + Micros(bits_x_us.div_ceil(rate) as i64);
        let lowest = trace.min_throughput(start, end) as u128;
        if lowest >= rate {
            return Some(end);
        }
        rate = lowest;
    }
}
