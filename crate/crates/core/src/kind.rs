//! The twelve elementary module kinds and the parameter names each one accepts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Role a kind plays in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    /// Material point: carries a position along the movement axis.
    Mat,
    /// Interaction: computes a force between exactly two material points.
    Lia,
    /// Recorder attached to a material point or an interaction.
    Observer,
}

/// One of the twelve elementary modules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModuleKind {
    /// Pure inertia.
    MAS,
    /// Damped oscillator anchored at the origin (mass + spring + damper).
    CEL,
    /// Fixed point.
    SOL,
    /// Imposed-position input.
    ENX,
    /// Force-injection input attached to a material point.
    ENF,
    /// Spring.
    RES,
    /// Damper.
    FRO,
    /// Spring and damper in parallel.
    REF,
    /// One-sided buffer contact.
    BUT,
    /// Table-driven nonlinear link.
    LNL,
    /// Position recorder.
    SOX,
    /// Force recorder.
    SOF,
}

impl ModuleKind {
    pub const ALL: [ModuleKind; 12] = [
        ModuleKind::MAS,
        ModuleKind::CEL,
        ModuleKind::SOL,
        ModuleKind::ENX,
        ModuleKind::ENF,
        ModuleKind::RES,
        ModuleKind::FRO,
        ModuleKind::REF,
        ModuleKind::BUT,
        ModuleKind::LNL,
        ModuleKind::SOX,
        ModuleKind::SOF,
    ];

    pub fn family(self) -> Family {
        use ModuleKind::*;
        match self {
            MAS | CEL | SOL | ENX | ENF => Family::Mat,
            RES | FRO | REF | BUT | LNL => Family::Lia,
            SOX | SOF => Family::Observer,
        }
    }

    /// Material kinds that own a position and may therefore be the endpoint of
    /// an interaction or the target of an observer/force input. `ENF` is a
    /// material-family input but has no position of its own.
    pub fn is_positional(self) -> bool {
        matches!(self, ModuleKind::MAS | ModuleKind::CEL | ModuleKind::SOL | ModuleKind::ENX)
    }

    /// Kinds that attach to a single target instead of two endpoints.
    pub fn attaches(self) -> bool {
        matches!(self, ModuleKind::SOX | ModuleKind::SOF | ModuleKind::ENF)
    }

    /// Whether `target` is an acceptable attachment target for this kind.
    pub fn accepts_target(self, target: ModuleKind) -> bool {
        match self {
            ModuleKind::SOX | ModuleKind::ENF => target.is_positional(),
            ModuleKind::SOF => target.family() == Family::Lia,
            _ => false,
        }
    }

    pub fn takes_signal(self) -> bool {
        matches!(self, ModuleKind::ENX | ModuleKind::ENF)
    }

    pub fn has_initial_state(self) -> bool {
        self.family() == Family::Mat
    }

    /// Parameter names legal for this kind, in canonical order.
    pub fn legal_params(self) -> &'static [ParamName] {
        use ModuleKind::*;
        use ParamName::*;
        match self {
            MAS => &[M],
            CEL => &[M, K, Z],
            SOL | ENX | ENF => &[],
            RES => &[K],
            FRO => &[Z],
            REF => &[K, Z],
            BUT => &[K, Z, S],
            LNL => &[FK, FZ],
            SOX | SOF => &[Gain],
        }
    }

    pub fn accepts(self, name: ParamName) -> bool {
        self.legal_params().contains(&name)
    }

    pub fn as_str(self) -> &'static str {
        use ModuleKind::*;
        match self {
            MAS => "MAS",
            CEL => "CEL",
            SOL => "SOL",
            ENX => "ENX",
            ENF => "ENF",
            RES => "RES",
            FRO => "FRO",
            REF => "REF",
            BUT => "BUT",
            LNL => "LNL",
            SOX => "SOX",
            SOF => "SOF",
        }
    }
}

impl fmt::Display for ModuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown module kind `{0}`")]
pub struct UnknownKind(pub String);

impl FromStr for ModuleKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModuleKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

/// Physical parameter names. `Gain` is the observer output gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamName {
    M,
    K,
    Z,
    S,
    #[serde(rename = "fK")]
    FK,
    #[serde(rename = "fZ")]
    FZ,
    #[serde(rename = "gain")]
    Gain,
}

impl ParamName {
    pub const ALL: [ParamName; 7] = [
        ParamName::M,
        ParamName::K,
        ParamName::Z,
        ParamName::S,
        ParamName::FK,
        ParamName::FZ,
        ParamName::Gain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::M => "M",
            ParamName::K => "K",
            ParamName::Z => "Z",
            ParamName::S => "S",
            ParamName::FK => "fK",
            ParamName::FZ => "fZ",
            ParamName::Gain => "gain",
        }
    }

    pub fn is_table(self) -> bool {
        matches!(self, ParamName::FK | ParamName::FZ)
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown parameter `{0}`")]
pub struct UnknownParam(pub String);

impl FromStr for ParamName {
    type Err = UnknownParam;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ParamName::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| UnknownParam(s.to_string()))
    }
}
