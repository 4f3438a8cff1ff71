//! Support code for the `resinet` binary.

pub mod compare;

use resinet::VerdictKind;

pub const EXIT_SAT: u8 = 10;
pub const EXIT_UNSAT: u8 = 20;
pub const EXIT_TIMEOUT: u8 = 30;
pub const EXIT_ERROR: u8 = 1;
/// Mode disagreement in `compare` or a violation in `validate-trace`.
pub const EXIT_FAILURE: u8 = 2;

pub fn exit_code(verdict: VerdictKind) -> u8 {
    match verdict {
        VerdictKind::Sat => EXIT_SAT,
        VerdictKind::Unsat => EXIT_UNSAT,
        VerdictKind::Timeout => EXIT_TIMEOUT,
    }
}
