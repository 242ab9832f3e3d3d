//! PDCP anchor layer: sequencing and routing at the transmitter, duplicate
//! discard and reordering at the receiver.

mod rx;
mod tx;

pub use rx::{
    Delivery, Discard, DiscardKind, ReorderConfig, ReorderState, RxOutcome, RxStats,
};
pub use tx::{FlowDecision, FlowPolicy, PathSnapshot, PdcpTx};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimTime;

/// Largest SDU accepted by the transmitter, in bytes.
pub const MAX_SDU_BYTES: u32 = 9000;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unsupported PDCP SN length {0}; expected one of 7, 12, 15, 18")]
pub struct SnLenError(pub u8);

/// On-the-wire sequence number width in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SnLen(u8);

impl SnLen {
    pub const DEFAULT: SnLen = SnLen(12);

    pub fn new(bits: u8) -> Result<Self, SnLenError> {
        match bits {
            7 | 12 | 15 | 18 => Ok(SnLen(bits)),
            other => Err(SnLenError(other)),
        }
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    /// Number of distinct SN values, `2^sn_len`.
    pub fn modulus(self) -> u64 {
        1u64 << self.0
    }

    /// Half the SN space; the receive window size.
    pub fn window(self) -> u64 {
        1u64 << (self.0 - 1)
    }

    pub fn sn_of(self, count: u64) -> u32 {
        (count & (self.modulus() - 1)) as u32
    }

    pub fn hfn_of(self, count: u64) -> u64 {
        count >> self.0
    }

    /// Reconstructs the COUNT of a received SN: the candidate closest to
    /// `reference` (the receiver's RX_DELIV) within half the SN space.
    pub fn infer_count(self, sn: u32, reference: u64) -> u64 {
        let m = self.modulus();
        let w = self.window();
        let ref_sn = reference & (m - 1);
        let ref_hfn = reference >> self.0;
        let sn = u64::from(sn);
        let hfn = if sn + w < ref_sn {
            ref_hfn + 1
        } else if sn >= ref_sn + w && ref_hfn > 0 {
            ref_hfn - 1
        } else {
            ref_hfn
        };
        (hfn << self.0) | sn
    }
}

impl Default for SnLen {
    fn default() -> Self {
        SnLen::DEFAULT
    }
}

impl TryFrom<u8> for SnLen {
    type Error = SnLenError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        SnLen::new(v)
    }
}

impl From<SnLen> for u8 {
    fn from(s: SnLen) -> u8 {
        s.0
    }
}

/// One sequenced PDCP data unit. Duplicated copies share `count` and
/// `sdu_id` and differ only in `path`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PdcpPdu {
    pub count: u64,
    pub sn: u32,
    pub sdu_id: u64,
    pub size_bytes: u32,
    pub created_at: SimTime,
    pub path: Option<usize>,
}

impl PdcpPdu {
    pub fn hfn(&self, sn_len: SnLen) -> u64 {
        sn_len.hfn_of(self.count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sn_len_validation() {
        assert!(SnLen::new(12).is_ok());
        assert_eq!(SnLen::new(10), Err(SnLenError(10)));
    }

    #[test]
    fn count_decomposition() {
        let s = SnLen::new(12).unwrap();
        assert_eq!(s.sn_of(4096), 0);
        assert_eq!(s.hfn_of(4096), 1);
        assert_eq!(s.sn_of(4097), 1);
    }

    #[test]
    fn inference_across_wrap() {
        let s = SnLen::new(7).unwrap();
        // reference just below the wrap, SN already wrapped
        assert_eq!(s.infer_count(3, 126), 131);
        // reference just past the wrap, a straggler from the previous cycle
        assert_eq!(s.infer_count(125, 130), 125);
        assert_eq!(s.infer_count(5, 0), 5);
    }

    proptest! {
        #[test]
        fn inference_recovers_count_within_window(reference in 0u64..1_000_000, offset in -63i64..64, bits in prop::sample::select(vec![7u8, 12, 15, 18])) {
            let s = SnLen::new(bits).unwrap();
            let w = s.window() as i64;
            let offset = offset.clamp(-(w - 1), w - 1);
            let count = reference as i64 + offset;
            prop_assume!(count >= 0);
            let count = count as u64;
            prop_assert_eq!(s.infer_count(s.sn_of(count), reference), count);
        }
    }
}
