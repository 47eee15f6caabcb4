//! Oracle problems and black-box constructions on them.
//!
//! - Simon instances, plain and flagged evaluation, output permutations, and a
//!   flagged oracle simulated from a plain one.
//! - Recursive Fourier sampling (RFS) instances with inner-product dispersal,
//!   their oracle, and the uniform lifting of an unknown instance into one of
//!   twice the label width.

mod handle;
mod lift;
mod rfs;
mod simon;

use serde::{Deserialize, Serialize};

pub use handle::OracleHandle;
pub use lift::{lift_uniform, Deviations, LIFT_COST};
pub use rfs::{
    gen_rfs, path_count, rfs_handle, rfs_query, RfsAnswer, RfsCodec, RfsInstance, RfsOracle, RfsQuery, RfsRecord,
};
pub use simon::{
    flagged_handle, gen_simon, gen_simon_any_shift, permute_outputs, plain_handle, simon_eval,
    simulate_flagged_from_plain, solve_flagged_via_plain, FlaggedAnswer, FlaggedFromPlain, FlaggedOracle,
    PlainOracle, Resolution, ShiftOrigin, SimonInstance, SimonRecord, SIMON_MAX_N,
};

use crate::error::{Error, Result};

/// Either problem family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Problem {
    Simon(SimonInstance),
    Rfs(RfsInstance),
}

/// JSON form of an instance, tagged by `kind`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceRecord {
    Simon(SimonRecord),
    Rfs(RfsRecord),
}

impl Problem {
    #[must_use]
    pub fn to_record(&self) -> InstanceRecord {
        match self {
            Problem::Simon(s) => InstanceRecord::Simon(s.to_record()),
            Problem::Rfs(r) => InstanceRecord::Rfs(r.to_record()),
        }
    }

    pub fn from_record(rec: &InstanceRecord) -> Result<Self> {
        Ok(match rec {
            InstanceRecord::Simon(s) => Problem::Simon(SimonInstance::from_record(s)?),
            InstanceRecord::Rfs(r) => Problem::Rfs(RfsInstance::from_record(r)?),
        })
    }

    #[must_use]
    pub fn n(&self) -> usize {
        match self {
            Problem::Simon(s) => s.n(),
            Problem::Rfs(r) => r.n(),
        }
    }
}

fn hex_digits(width: usize) -> usize {
    width.div_ceil(4)
}

/// Concatenated fixed-width lowercase hex, one entry per table value.
pub(crate) fn encode_table(values: &[u64], width: usize) -> String {
    let d = hex_digits(width);
    values.iter().map(|v| format!("{v:0d$x}")).collect()
}

pub(crate) fn decode_table(s: &str, width: usize, len: usize) -> Result<Vec<u64>> {
    let d = hex_digits(width);
    if s.len() != d * len || !s.is_ascii() {
        return Err(Error::Parse(format!("hex table has length {}, expected {}", s.len(), d * len)));
    }
    (0..len)
        .map(|i| {
            let v = u64::from_str_radix(&s[i * d..(i + 1) * d], 16).map_err(|e| Error::Parse(e.to_string()))?;
            if v >> width != 0 {
                return Err(Error::Parse(format!("table entry {v:#x} exceeds width {width}")));
            }
            Ok(v)
        })
        .collect()
}
