//! Process exit codes.

use gridraid_core::Error;

use crate::case::CaseError;

pub const SUCCESS: i32 = 0;
pub const FAILURE: i32 = 1;
pub const INPUT: i32 = 2;
pub const INFEASIBLE: i32 = 3;
pub const BUDGET: i32 = 4;

fn core_code(e: &Error) -> i32 {
    match e {
        Error::Unobservable { .. } | Error::Infeasible(_) => INFEASIBLE,
        Error::SearchBudget { .. } => BUDGET,
        Error::Numerical(_) => FAILURE,
        _ => INPUT,
    }
}

/// Classifies the first recognizable cause in the chain; unknown errors
/// (e.g. failing to write output) map to 1.
pub fn code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return core_code(e);
        }
        if let Some(e) = cause.downcast_ref::<CaseError>() {
            return match e {
                CaseError::Validation(inner) => core_code(inner),
                _ => INPUT,
            };
        }
        if cause.downcast_ref::<InputError>().is_some() {
            return INPUT;
        }
    }
    FAILURE
}

/// Bad user input detected by the front end itself.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct InputError(pub String);
