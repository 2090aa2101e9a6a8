//! Time-ordered event queue and the run loop that drains it.
//!
//! Events are ordered by `(fire_time, sequence_number)`; the sequence number
//! is assigned at insertion, so same-instant events dispatch in FIFO order
//! and a run is fully determined by its inputs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::SimTime;

#[derive(Debug)]
pub struct Event<P> {
    pub fire_time: SimTime,
    pub sequence_number: u64,
    pub payload: P,
}

struct Entry<P>(Event<P>);

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.fire_time == other.0.fire_time && self.0.sequence_number == other.0.sequence_number
    }
}

impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    // BinaryHeap is a max-heap; invert so the earliest event is on top.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .fire_time
            .cmp(&self.0.fire_time)
            .then_with(|| other.0.sequence_number.cmp(&self.0.sequence_number))
    }
}

pub struct Engine<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Entry<P>>,
    scheduled: u64,
    dispatched: u64,
    stopped: bool,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            scheduled: 0,
            dispatched: 0,
            stopped: false,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Queues `payload` to fire at `at`.
    ///
    /// Scheduling into the past is a programming error and aborts the run.
    pub fn schedule(&mut self, at: SimTime, payload: P) -> u64 {
        assert!(
            at >= self.now,
            "event scheduled in the past: at={at} now={}",
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.scheduled += 1;
        self.queue.push(Entry(Event {
            fire_time: at,
            sequence_number: seq,
            payload,
        }));
        seq
    }

    pub fn schedule_in(&mut self, delay: SimTime, payload: P) -> u64 {
        self.schedule(self.now + delay, payload)
    }

    /// Requests that `run_until` return after the current dispatch.
    pub fn stop(&mut self) {
        self.stopped = true;
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn scheduled_count(&self) -> u64 {
        self.scheduled
    }

    pub fn dispatched_count(&self) -> u64 {
        self.dispatched
    }

    /// Iterates over events still waiting in the queue, in no particular order.
    pub fn pending_events(&self) -> impl Iterator<Item = &Event<P>> {
        self.queue.iter().map(|e| &e.0)
    }

    /// Dispatches every event with `fire_time <= t_end` in order, then
    /// leaves the clock at `t_end` (unless stopped early).
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F)
    where
        F: FnMut(&mut Engine<P>, Event<P>),
    {
        self.stopped = false;
        while let Some(top) = self.queue.peek() {
            if top.0.fire_time > t_end {
                break;
            }
            let Entry(event) = self.queue.pop().expect("peeked");
            debug_assert!(event.fire_time >= self.now);
            self.now = event.fire_time;
            self.dispatched += 1;
            handler(self, event);
            if self.stopped {
                return;
            }
        }
        if t_end > self.now {
            self.now = t_end;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_instant_is_fifo_and_earlier_first() {
        let mut e = Engine::new();
        e.schedule(SimTime::from_micros(1), "late");
        e.schedule(SimTime::ZERO, "a");
        e.schedule(SimTime::ZERO, "b");
        let mut seen = Vec::new();
        e.run_until(SimTime::from_secs(1), |_, ev| seen.push(ev.payload));
        assert_eq!(seen, vec!["a", "b", "late"]);
    }

    #[test]
    fn empty_queue_advances_clock_to_end() {
        let mut e: Engine<()> = Engine::new();
        let mut n = 0;
        e.run_until(SimTime::from_secs(15), |_, _| n += 1);
        assert_eq!(n, 0);
        assert_eq!(e.now(), SimTime::from_secs(15));
    }

    #[test]
    fn single_event_then_end() {
        let mut e = Engine::new();
        e.schedule(SimTime::from_secs(3), ());
        let mut at = Vec::new();
        e.run_until(SimTime::from_secs(15), |eng, _| at.push(eng.now()));
        assert_eq!(at, vec![SimTime::from_secs(3)]);
        assert_eq!(e.now(), SimTime::from_secs(15));
        assert_eq!(e.dispatched_count(), 1);
    }

    #[test]
    #[should_panic(expected = "in the past")]
    fn scheduling_in_past_aborts() {
        let mut e = Engine::new();
        e.schedule(SimTime::from_micros(10), ());
        e.run_until(SimTime::from_micros(10), |_, _| {});
        e.schedule(SimTime::from_micros(5), ());
    }

    #[test]
    fn handler_can_schedule_and_nothing_leaks() {
        let mut e = Engine::new();
        e.schedule(SimTime::ZERO, 0u32);
        e.run_until(SimTime::from_millis(1), |eng, ev| {
            if ev.payload < 9 {
                eng.schedule_in(SimTime::from_micros(10), ev.payload + 1);
            }
        });
        assert_eq!(e.pending(), 0);
        assert_eq!(e.scheduled_count(), e.dispatched_count());
        assert_eq!(e.scheduled_count(), 10);
    }

    #[test]
    fn events_after_end_stay_queued() {
        let mut e = Engine::new();
        e.schedule(SimTime::from_secs(2), ());
        e.run_until(SimTime::from_secs(1), |_, _| panic!("should not fire"));
        assert_eq!(e.pending(), 1);
        assert_eq!(e.now(), SimTime::from_secs(1));
    }
}
