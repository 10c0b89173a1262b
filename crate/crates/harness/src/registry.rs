//! The supported methods with the risk measure and error-rate guarantee
//! each one certifies.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ltt,
    Qltt,
    Pt,
    Rgpt,
    Altt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Average,
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuaranteeKind {
    Fwer,
    Fdr,
}

impl GuaranteeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fwer => "fwer",
            Self::Fdr => "fdr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MethodInfo {
    pub method: Method,
    pub name: &'static str,
    pub measure: Measure,
    pub guarantee: GuaranteeKind,
    pub multi_objective: bool,
    pub side_information: bool,
    pub adaptive: bool,
}

pub const REGISTRY: [MethodInfo; 5] = [
    MethodInfo {
        method: Method::Ltt,
        name: "ltt",
        measure: Measure::Average,
        guarantee: GuaranteeKind::Fwer,
        multi_objective: false,
        side_information: false,
        adaptive: false,
    },
    MethodInfo {
        method: Method::Qltt,
        name: "qltt",
        measure: Measure::Quantile,
        guarantee: GuaranteeKind::Fwer,
        multi_objective: false,
        side_information: false,
        adaptive: false,
    },
    MethodInfo {
        method: Method::Pt,
        name: "pt",
        measure: Measure::Average,
        guarantee: GuaranteeKind::Fwer,
        multi_objective: true,
        side_information: false,
        adaptive: false,
    },
    MethodInfo {
        method: Method::Rgpt,
        name: "rgpt",
        measure: Measure::Average,
        guarantee: GuaranteeKind::Fdr,
        multi_objective: true,
        side_information: true,
        adaptive: false,
    },
    MethodInfo {
        method: Method::Altt,
        name: "altt",
        measure: Measure::Average,
        guarantee: GuaranteeKind::Fwer,
        multi_objective: false,
        side_information: false,
        adaptive: true,
    },
];

impl Method {
    pub fn info(self) -> &'static MethodInfo {
        REGISTRY.iter().find(|i| i.method == self).expect("every method is registered")
    }
}
