//! Budget profiles selected by `VINOLAB_BUDGET`, with per-flag overrides.

use serde::Serialize;
use vinolab::counting::CountBudget;
use vinolab::expsum::TorusBudget;

use crate::args::RunArgs;
use crate::error::{CliError, CliResult};

pub const BUDGET_VAR: &str = "VINOLAB_BUDGET";

/// Rough heap cost of one histogram entry: a packed key, its count and the
/// hash table's share of overhead.
pub const BYTES_PER_ENTRY: u128 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Small,
    Default,
    Large,
}

impl Profile {
    pub fn from_env(value: Option<&str>) -> CliResult<Self> {
        match value.map(str::trim) {
            None | Some("") | Some("default") => Ok(Profile::Default),
            Some("small") => Ok(Profile::Small),
            Some("large") => Ok(Profile::Large),
            Some(other) => Err(CliError::Usage(format!(
                "{BUDGET_VAR}={other:?} is not one of small, default, large"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budgets {
    pub profile: Profile,
    pub count: CountBudget,
    pub torus: TorusBudget,
    pub max_panels: u64,
    pub max_points: u64,
}

impl Budgets {
    pub fn for_profile(profile: Profile) -> Self {
        let count = CountBudget::default();
        let torus = TorusBudget::default();
        let (max_panels, max_points) = (10_000_000, 50_000_000);
        match profile {
            Profile::Default => Self {
                profile,
                count,
                torus,
                max_panels,
                max_points,
            },
            Profile::Small => Self {
                profile,
                count: CountBudget {
                    max_tuples: count.max_tuples / 100,
                    max_work: count.max_work / 100,
                    max_entries: count.max_entries / 100,
                },
                torus: TorusBudget {
                    max_terms: torus.max_terms / 100,
                },
                max_panels: max_panels / 100,
                max_points: max_points / 100,
            },
            Profile::Large => Self {
                profile,
                count: CountBudget {
                    max_tuples: count.max_tuples * 20,
                    max_work: count.max_work * 20,
                    max_entries: count.max_entries * 20,
                },
                torus: TorusBudget {
                    max_terms: torus.max_terms * 20,
                },
                max_panels: max_panels * 20,
                max_points: max_points * 20,
            },
        }
    }

    pub fn resolve(env: Option<&str>, run: &RunArgs) -> CliResult<Self> {
        let mut b = Self::for_profile(Profile::from_env(env)?);
        let positive = |name: &str, v: u128| {
            if v == 0 {
                Err(CliError::Validation(format!("--{name} must be positive")))
            } else {
                Ok(v)
            }
        };
        if let Some(v) = run.max_tuples {
            b.count.max_tuples = positive("max-tuples", v)?;
        }
        if let Some(v) = run.max_bytes {
            b.count.max_entries = (positive("max-bytes", v)? / BYTES_PER_ENTRY).max(1);
        }
        if let Some(v) = run.max_panels {
            b.max_panels = positive("max-panels", v as u128)? as u64;
        }
        Ok(b)
    }

    /// Parameter echo; limits are strings because they can exceed 2^64.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "profile": self.profile,
            "max_tuples": self.count.max_tuples.to_string(),
            "max_work": self.count.max_work.to_string(),
            "max_entries": self.count.max_entries.to_string(),
            "max_torus_terms": self.torus.max_terms.to_string(),
            "max_panels": self.max_panels.to_string(),
            "max_points": self.max_points.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::Format;

    fn run_args() -> RunArgs {
        RunArgs {
            out: None,
            format: Format::Json,
            max_tuples: None,
            max_bytes: None,
            max_panels: None,
        }
    }

    #[test]
    fn profiles_are_ordered() {
        let s = Budgets::for_profile(Profile::Small);
        let d = Budgets::for_profile(Profile::Default);
        let l = Budgets::for_profile(Profile::Large);
        assert!(s.count.max_tuples < d.count.max_tuples && d.count.max_tuples < l.count.max_tuples);
        assert!(s.max_panels < d.max_panels && d.max_panels < l.max_panels);
    }

    #[test]
    fn env_and_overrides() {
        assert!(matches!(Profile::from_env(Some("huge")), Err(CliError::Usage(_))));
        assert_eq!(Profile::from_env(None).unwrap(), Profile::Default);
        let mut run = run_args();
        run.max_bytes = Some(6400);
        run.max_tuples = Some(10);
        let b = Budgets::resolve(Some("small"), &run).unwrap();
        assert_eq!(b.count.max_entries, 100);
        assert_eq!(b.count.max_tuples, 10);
        run.max_panels = Some(0);
        assert!(matches!(Budgets::resolve(None, &run), Err(CliError::Validation(_))));
    }
}
