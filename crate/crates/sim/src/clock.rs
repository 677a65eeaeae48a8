//! Virtual time and the discrete-event queue.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use fedtask_core::VirtualTime;

/// Monotonically nondecreasing simulation clock.
#[derive(Debug, Clone)]
pub struct VirtualClock {
    now: VirtualTime,
}

impl VirtualClock {
    pub fn new() -> Self {
        VirtualClock { now: VirtualTime::ZERO }
    }

    pub fn now(&self) -> VirtualTime {
        self.now
    }

    /// Advances to `t`. Time never decreases.
    pub fn advance_to(&mut self, t: VirtualTime) {
        assert!(t >= self.now, "virtual time cannot go backwards: {} -> {}", self.now, t);
        self.now = t;
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        VirtualClock::new()
    }
}

/// Events ordered by (time, insertion sequence): ties fire in push order.
#[derive(Debug)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<(VirtualTime, u64, EventSlot<E>)>>,
    next_seq: u64,
}

#[derive(Debug)]
struct EventSlot<E>(E);

impl<E> PartialEq for EventSlot<E> {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}
impl<E> Eq for EventSlot<E> {}
impl<E> PartialOrd for EventSlot<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for EventSlot<E> {
    fn cmp(&self, _other: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue { heap: BinaryHeap::new(), next_seq: 0 }
    }

    pub fn push(&mut self, time: VirtualTime, event: E) {
        self.heap.push(Reverse((time, self.next_seq, EventSlot(event))));
        self.next_seq += 1;
    }

    pub fn pop(&mut self) -> Option<(VirtualTime, E)> {
        self.heap.pop().map(|Reverse((time, _, slot))| (time, slot.0))
    }

    pub fn peek_time(&self) -> Option<VirtualTime> {
        self.heap.peek().map(|Reverse((time, _, _))| *time)
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        EventQueue::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_is_monotone() {
        let mut clock = VirtualClock::new();
        clock.advance_to(VirtualTime::from_hours(2));
        assert_eq!(clock.now(), VirtualTime::from_hours(2));
    }

    #[test]
    #[should_panic(expected = "backwards")]
    fn clock_rejects_regression() {
        let mut clock = VirtualClock::new();
        clock.advance_to(VirtualTime::from_hours(2));
        clock.advance_to(VirtualTime::from_hours(1));
    }

    #[test]
    fn events_fire_in_time_then_insertion_order() {
        let mut queue = EventQueue::new();
        queue.push(VirtualTime::from_hours(2), "late");
        queue.push(VirtualTime::from_hours(1), "early-a");
        queue.push(VirtualTime::from_hours(1), "early-b");
        assert_eq!(queue.pop().unwrap().1, "early-a");
        assert_eq!(queue.pop().unwrap().1, "early-b");
        assert_eq!(queue.pop().unwrap().1, "late");
        assert!(queue.pop().is_none());
    }
}
