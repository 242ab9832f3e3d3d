//! Receiving PDCP entity: COUNT-based reordering window with t-Reordering.
//!
//! State variables follow the usual naming: `rx_deliv` is the first COUNT
//! not yet delivered, `rx_next` follows the highest COUNT received, and
//! `rx_reord` is the `rx_next` value that armed the running timer.
//!
//! The receiver does not own a clock. Every call returns a [`TimerCommand`]
//! which the caller applies to its event list, and the caller invokes
//! [`ReorderState::on_t_reordering_expiry`] when the armed deadline fires.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{PdcpPdu, SnLen};
use crate::sim::{SimTime, TimerCommand};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReorderConfig {
    pub sn_len: SnLen,
    pub t_reordering: SimTime,
    /// When false every new PDU is delivered on arrival; window state is
    /// kept only to recognise duplicates and stale copies.
    pub reordering: bool,
}

impl ReorderConfig {
    pub fn enabled(sn_len: SnLen, t_reordering: SimTime) -> Self {
        ReorderConfig {
            sn_len,
            t_reordering,
            reordering: true,
        }
    }

    pub fn disabled(sn_len: SnLen) -> Self {
        ReorderConfig {
            sn_len,
            t_reordering: SimTime::ZERO,
            reordering: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub sdu_id: u64,
    pub count: u64,
    pub size_bytes: u32,
    pub created_at: SimTime,
    pub delivered_at: SimTime,
    /// Delivered directly after its predecessor COUNT.
    pub in_order: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscardKind {
    /// A copy of a COUNT already delivered or buffered.
    Duplicate,
    /// A COUNT the window already gave up on.
    Stale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Discard {
    pub count: u64,
    pub sdu_id: u64,
    pub kind: DiscardKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RxOutcome {
    pub delivered: Vec<Delivery>,
    /// COUNTs skipped without delivery by this step.
    pub declared_lost: Vec<u64>,
    pub discarded: Option<Discard>,
    pub timer: TimerCommand,
}

impl RxOutcome {
    fn empty() -> Self {
        RxOutcome {
            delivered: Vec::new(),
            declared_lost: Vec::new(),
            discarded: None,
            timer: TimerCommand::Keep,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RxStats {
    pub received: u64,
    pub delivered: u64,
    pub ooo_delivered: u64,
    pub duplicate_discarded: u64,
    pub stale_discarded: u64,
    pub declared_lost: u64,
    pub expiries: u64,
    /// Arrivals whose inferred COUNT differs from the transmitted one.
    pub hfn_mismatches: u64,
}

/// Receive window of one PDCP entity.
#[derive(Debug, Clone)]
pub struct ReorderState {
    cfg: ReorderConfig,
    rx_deliv: u64,
    rx_next: u64,
    rx_reord: u64,
    timer_deadline: Option<SimTime>,
    buffer: BTreeMap<u64, PdcpPdu>,
    buffer_bytes: u64,
    // only used when reordering is off: delivered COUNTs at or above rx_deliv
    delivered_ahead: BTreeSet<u64>,
    skipped: BTreeSet<u64>,
    last_delivered: Option<u64>,
    stats: RxStats,
}

impl ReorderState {
    pub fn new(cfg: ReorderConfig) -> Self {
        ReorderState {
            cfg,
            rx_deliv: 0,
            rx_next: 0,
            rx_reord: 0,
            timer_deadline: None,
            buffer: BTreeMap::new(),
            buffer_bytes: 0,
            delivered_ahead: BTreeSet::new(),
            skipped: BTreeSet::new(),
            last_delivered: None,
            stats: RxStats::default(),
        }
    }

    pub fn config(&self) -> &ReorderConfig {
        &self.cfg
    }

    pub fn rx_deliv(&self) -> u64 {
        self.rx_deliv
    }

    pub fn rx_next(&self) -> u64 {
        self.rx_next
    }

    pub fn rx_reord(&self) -> u64 {
        self.rx_reord
    }

    pub fn timer_deadline(&self) -> Option<SimTime> {
        self.timer_deadline
    }

    pub fn timer_running(&self) -> bool {
        self.timer_deadline.is_some()
    }

    pub fn stats(&self) -> &RxStats {
        &self.stats
    }

    /// Buffered bytes and PDU count.
    pub fn occupancy(&self) -> (u64, usize) {
        (self.buffer_bytes, self.buffer.len())
    }

    pub fn buffered_counts(&self) -> impl Iterator<Item = u64> + '_ {
        self.buffer.keys().copied()
    }

    pub fn buffered(&self) -> impl Iterator<Item = &PdcpPdu> + '_ {
        self.buffer.values()
    }

    pub fn receive(&mut self, pdu: &PdcpPdu, now: SimTime) -> RxOutcome {
        self.stats.received += 1;
        let count = self.cfg.sn_len.infer_count(pdu.sn, self.rx_deliv);
        if count != pdu.count {
            self.stats.hfn_mismatches += 1;
        }
        let mut out = RxOutcome::empty();

        let duplicate = count < self.rx_deliv
            || self.buffer.contains_key(&count)
            || self.delivered_ahead.contains(&count);
        if duplicate {
            let kind = if self.skipped.contains(&count) {
                self.stats.stale_discarded += 1;
                DiscardKind::Stale
            } else {
                self.stats.duplicate_discarded += 1;
                DiscardKind::Duplicate
            };
            out.discarded = Some(Discard {
                count,
                sdu_id: pdu.sdu_id,
                kind,
            });
            return out;
        }

        self.rx_next = self.rx_next.max(count + 1);

        if !self.cfg.reordering {
            self.deliver_now(count, pdu, now, &mut out);
            self.delivered_ahead.insert(count);
            while self.delivered_ahead.remove(&self.rx_deliv) {
                self.rx_deliv += 1;
            }
            // Keep rx_next within 3/8 of the SN space of rx_deliv so COUNT
            // inference keeps a margin while holes never close.
            let horizon = self.cfg.sn_len.window() * 3 / 4;
            while self.rx_next - self.rx_deliv > horizon {
                if !self.delivered_ahead.remove(&self.rx_deliv) {
                    self.declare_lost(self.rx_deliv, &mut out);
                }
                self.rx_deliv += 1;
            }
            while self.delivered_ahead.remove(&self.rx_deliv) {
                self.rx_deliv += 1;
            }
            self.prune_skipped();
            return out;
        }

        let mut stored = pdu.clone();
        stored.count = count;
        self.buffer_bytes += u64::from(stored.size_bytes);
        self.buffer.insert(count, stored);

        if count == self.rx_deliv {
            self.deliver_consecutive(now, &mut out);
        }

        if self.timer_running() && self.rx_deliv >= self.rx_reord {
            self.timer_deadline = None;
            out.timer = TimerCommand::Stop;
        }
        if !self.timer_running() && self.rx_deliv < self.rx_next {
            self.rx_reord = self.rx_next;
            if self.cfg.t_reordering == SimTime::ZERO {
                // zero-length timer expires on the spot
                if out.timer == TimerCommand::Stop {
                    out.timer = TimerCommand::Keep;
                }
                self.stats.expiries += 1;
                self.flush_below_reord(now, &mut out);
            } else {
                let at = now + self.cfg.t_reordering;
                self.timer_deadline = Some(at);
                out.timer = TimerCommand::Start(at);
            }
        }
        self.prune_skipped();
        out
    }

    /// Handles expiry of the armed t-Reordering timer.
    pub fn on_t_reordering_expiry(&mut self, now: SimTime) -> RxOutcome {
        let mut out = RxOutcome::empty();
        if self.timer_deadline.take().is_none() {
            debug_assert!(false, "t-Reordering expiry without a running timer");
            return out;
        }
        self.stats.expiries += 1;
        self.flush_below_reord(now, &mut out);
        if self.rx_deliv < self.rx_next {
            self.rx_reord = self.rx_next;
            let at = now + self.cfg.t_reordering;
            self.timer_deadline = Some(at);
            out.timer = TimerCommand::Start(at);
        }
        self.prune_skipped();
        out
    }

    fn flush_below_reord(&mut self, now: SimTime, out: &mut RxOutcome) {
        let reord = self.rx_reord;
        let mut next_expected = self.rx_deliv;
        let keep = self.buffer.split_off(&reord);
        let below = std::mem::replace(&mut self.buffer, keep);
        for (count, pdu) in below {
            for lost in next_expected..count {
                self.declare_lost(lost, out);
            }
            self.buffer_bytes -= u64::from(pdu.size_bytes);
            self.deliver_now(count, &pdu, now, out);
            next_expected = count + 1;
        }
        for lost in next_expected..reord {
            self.declare_lost(lost, out);
        }
        self.rx_deliv = self.rx_deliv.max(reord);
        self.deliver_consecutive(now, out);
    }

    fn deliver_consecutive(&mut self, now: SimTime, out: &mut RxOutcome) {
        while let Some(pdu) = self.buffer.remove(&self.rx_deliv) {
            self.buffer_bytes -= u64::from(pdu.size_bytes);
            let count = self.rx_deliv;
            self.deliver_now(count, &pdu, now, out);
            self.rx_deliv += 1;
        }
    }

    fn deliver_now(&mut self, count: u64, pdu: &PdcpPdu, now: SimTime, out: &mut RxOutcome) {
        let in_order = count == self.last_delivered.map_or(0, |c| c + 1);
        self.last_delivered = Some(count);
        self.stats.delivered += 1;
        if !in_order {
            self.stats.ooo_delivered += 1;
        }
        out.delivered.push(Delivery {
            sdu_id: pdu.sdu_id,
            count,
            size_bytes: pdu.size_bytes,
            created_at: pdu.created_at,
            delivered_at: now,
            in_order,
        });
    }

    fn declare_lost(&mut self, count: u64, out: &mut RxOutcome) {
        self.stats.declared_lost += 1;
        self.skipped.insert(count);
        out.declared_lost.push(count);
    }

    fn prune_skipped(&mut self) {
        // COUNTs further back than the window can no longer be inferred
        let floor = self.rx_deliv.saturating_sub(self.cfg.sn_len.modulus());
        if self.skipped.first().is_some_and(|&c| c < floor) {
            self.skipped = self.skipped.split_off(&floor);
        }
    }
}
