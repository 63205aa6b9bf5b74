//! MUC, B-cubed, CEAF-e, CoNLL F1 and mention detection.
//!
//! Mentions are identified by exact `(doc_id, start, end)`. Mentions present
//! on only one side are kept and scored, so false-positive mentions lower
//! precision and missed mentions lower recall. Zero denominators yield 0 and
//! set [`Prf::zero_denominator`].

pub mod conll;
mod hungarian;
mod metrics;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use hungarian::{brute_force_assignment, max_weight_assignment};
pub use metrics::{
    b_cubed, ceaf_e, conll_f1, filter_singletons, harmonic, mention_detection, muc, phi4_matrix, project_wd, Clusters,
    Prf,
};

use crate::error::Error;

/// `Wd` splits clusters by document before scoring; `Combined` and `Cd`
/// score the cross-document partition as is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    #[default]
    Combined,
    Wd,
    Cd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SingletonMode {
    #[default]
    Include,
    Exclude,
}

macro_rules! str_enum {
    ($ty:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self { $($ty::$variant => $s),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Error> {
                match s.to_ascii_lowercase().as_str() {
                    $($s => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(concat!("unknown ", stringify!($ty), " `{}`"), other))),
                }
            }
        }
    };
}

str_enum!(Scope { Combined => "combined", Wd => "wd", Cd => "cd" });
str_enum!(SingletonMode { Include => "include", Exclude => "exclude" });

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scope: Scope,
    pub singleton_mode: SingletonMode,
    pub muc: Prf,
    pub b_cubed: Prf,
    pub ceaf_e: Prf,
    pub conll_f1: f64,
    pub mention_detection: Prf,
    pub key_mentions: usize,
    pub response_mentions: usize,
}

impl EvalReport {
    pub fn any_zero_denominator(&self) -> bool {
        [self.muc, self.b_cubed, self.ceaf_e, self.mention_detection]
            .iter()
            .any(|p| p.zero_denominator)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scope={} singletons={}", self.scope, self.singleton_mode)?;
        for (name, p) in [
            ("MUC", &self.muc),
            ("B3", &self.b_cubed),
            ("CEAF-e", &self.ceaf_e),
            ("mentions", &self.mention_detection),
        ] {
            writeln!(f, "{name:<9} R={:.4} P={:.4} F1={:.4}", p.recall, p.precision, p.f1)?;
        }
        write!(f, "CoNLL F1  {:.4}", self.conll_f1)
    }
}

pub fn evaluate(key: &Clusters, response: &Clusters, scope: Scope, singletons: SingletonMode) -> EvalReport {
    let (mut key, mut response) = match scope {
        Scope::Wd => (project_wd(key), project_wd(response)),
        Scope::Combined | Scope::Cd => (key.clone(), response.clone()),
    };
    if singletons == SingletonMode::Exclude {
        key = filter_singletons(&key);
        response = filter_singletons(&response);
    }
    let (m, b, c) = (muc(&key, &response), b_cubed(&key, &response), ceaf_e(&key, &response));
    EvalReport {
        scope,
        singleton_mode: singletons,
        muc: m,
        b_cubed: b,
        ceaf_e: c,
        conll_f1: conll_f1(&m, &b, &c),
        mention_detection: mention_detection(&key, &response),
        key_mentions: key.iter().map(Vec::len).sum(),
        response_mentions: response.iter().map(Vec::len).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::MentionKey;

    #[test]
    fn report_flags_and_scopes() {
        let key: Clusters = vec![
            vec![MentionKey::new("a", 0, 0), MentionKey::new("b", 0, 0)],
            vec![MentionKey::new("a", 2, 2)],
        ];
        let response: Clusters = vec![
            vec![MentionKey::new("a", 0, 0)],
            vec![MentionKey::new("b", 0, 0)],
            vec![MentionKey::new("a", 2, 2)],
        ];
        let wd = evaluate(&key, &response, Scope::Wd, SingletonMode::Exclude);
        assert_eq!((wd.scope, wd.singleton_mode), (Scope::Wd, SingletonMode::Exclude));
        assert_eq!(wd.key_mentions, 0);
        assert!(wd.any_zero_denominator());
        let json = serde_json::to_string(&wd).unwrap();
        assert!(json.contains("\"scope\":\"wd\"") && json.contains("\"singleton_mode\":\"exclude\""));

        let wd_incl = evaluate(&key, &response, Scope::Wd, SingletonMode::Include);
        let cd = evaluate(&key, &response, Scope::Cd, SingletonMode::Include);
        assert!(wd_incl.conll_f1 >= cd.conll_f1);
        assert_eq!(
            cd.conll_f1,
            evaluate(&key, &response, Scope::Combined, SingletonMode::Include).conll_f1
        );
        assert_eq!("wd".parse::<Scope>().unwrap(), Scope::Wd);
        assert!("xx".parse::<SingletonMode>().is_err());
    }
}
