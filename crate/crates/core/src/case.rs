use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Coding settings with rate-limited side-information exchange. `Cc*` are
/// channel coding cases, `Sc*` source coding cases; the suffix `c` marks the
/// causal variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Cc1,
    Cc2,
    Cc2c,
    Sc1,
    Sc1c,
    Sc2,
}

impl Case {
    pub const ALL: [Case; 6] = [Case::Cc1, Case::Cc2, Case::Cc2c, Case::Sc1, Case::Sc1c, Case::Sc2];

    pub fn is_channel(self) -> bool {
        matches!(self, Case::Cc1 | Case::Cc2 | Case::Cc2c)
    }

    pub fn name(self) -> &'static str {
        match self {
            Case::Cc1 => "cc1",
            Case::Cc2 => "cc2",
            Case::Cc2c => "cc2c",
            Case::Sc1 => "sc1",
            Case::Sc1c => "sc1c",
            Case::Sc2 => "sc2",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let key: String = s.chars().filter(|c| !matches!(c, '-' | '_' | ' ')).flat_map(char::to_lowercase).collect();
        Case::ALL.into_iter().find(|c| c.name() == key).ok_or_else(|| Error::Argument(format!("unknown case {s:?}")))
    }
}
