use std::collections::BTreeMap;
use std::sync::Arc;

use crate::kind::{ModuleKind, ParamName};
use crate::network::{ModuleId, Network, ValidationReport};
use crate::params::Table;
use crate::picker::{Picker, PickerSyntaxError};

use super::SimConfig;

/// Named input buffers for ENX/ENF modules, at the model sample rate.
pub type SignalBank = BTreeMap<String, Arc<[f64]>>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("network does not validate:\n{0}")]
    NotValidated(ValidationReport),
    #[error("input signal `{0}` has no loaded buffer")]
    MissingSignal(String),
    #[error("invalid trace selection: {0}")]
    TraceSelection(#[from] PickerSyntaxError),
    #[error("invalid simulation config: {0}")]
    Config(String),
}

/// How a material computes its next position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatLaw {
    /// `x' = c1·x + c2·x_prev + F/M`; MAS uses (2, −1).
    Dynamic { c1: f64, c2: f64, mass: f64 },
    /// `x' = X0`.
    Fixed(f64),
    /// `x' = signal(n)`, holding the last sample past the end.
    Input(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LiaLaw {
    Spring { k: f64 },
    Damper { z: f64 },
    SpringDamper { k: f64, z: f64 },
    Buffer { k: f64, z: f64, s: f64 },
    /// Index into [`SimProgram::tables`].
    Table(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Probe {
    Position(u32),
    Force(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observer {
    pub id: ModuleId,
    pub probe: Probe,
    pub gain: f64,
}

impl Observer {
    pub fn kind(&self) -> ModuleKind {
        match self.probe {
            Probe::Position(_) => ModuleKind::SOX,
            Probe::Force(_) => ModuleKind::SOF,
        }
    }
}

/// Flat, immutable form of a validated network.
///
/// Materials and interactions are stored in ascending module id order. Each
/// material lists its incident interactions sorted by interaction index, so a
/// per-material force sum always adds terms in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimProgram {
    pub revision: u64,
    pub sample_rate: u32,
    pub mat_ids: Vec<ModuleId>,
    pub mat_laws: Vec<MatLaw>,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub lia_ids: Vec<ModuleId>,
    pub lia_laws: Vec<LiaLaw>,
    pub lia_a: Vec<u32>,
    pub lia_b: Vec<u32>,
    pub tables: Vec<(Table, Table)>,
    /// CSR offsets into `incident`, one more entry than there are materials.
    pub incident_start: Vec<u32>,
    /// Interaction index; the top bit marks the `b` endpoint (force negated).
    pub incident: Vec<u32>,
    /// CSR offsets into `injections` (ENF signal indices), per material.
    pub injection_start: Vec<u32>,
    pub injections: Vec<u32>,
    pub observers: Vec<Observer>,
    pub signals: Vec<Arc<[f64]>>,
    /// Material indices recorded in the motion trace.
    pub trace: Vec<u32>,
    pub trace_decimation: u32,
}

pub(crate) const B_SIDE: u32 = 1 << 31;

impl SimProgram {
    pub fn mat_count(&self) -> usize {
        self.mat_ids.len()
    }

    pub fn lia_count(&self) -> usize {
        self.lia_ids.len()
    }

    pub fn incident_of(&self, mat: usize) -> &[u32] {
        &self.incident[self.incident_start[mat] as usize..self.incident_start[mat + 1] as usize]
    }

    pub fn injections_of(&self, mat: usize) -> &[u32] {
        &self.injections[self.injection_start[mat] as usize..self.injection_start[mat + 1] as usize]
    }

    pub fn mat_index(&self, id: ModuleId) -> Option<usize> {
        self.mat_ids.binary_search(&id).ok()
    }

    pub fn lia_index(&self, id: ModuleId) -> Option<usize> {
        self.lia_ids.binary_search(&id).ok()
    }

    /// Approximate heap footprint in bytes.
    pub fn heap_bytes(&self) -> usize {
        let n = self.mat_count();
        let l = self.lia_count();
        n * (8 + std::mem::size_of::<MatLaw>() + 16 + 8)
            + l * (8 + std::mem::size_of::<LiaLaw>() + 8)
            + self.incident.len() * 4
            + self.injections.len() * 4
            + self.observers.len() * std::mem::size_of::<Observer>()
    }
}

fn scalar(net: &Network, id: ModuleId, name: ParamName) -> f64 {
    net.get(id).ok().and_then(|m| m.scalar(name)).unwrap_or(0.0)
}

/// Flattens a validated network into a [`SimProgram`].
pub fn compile(net: &Network, config: &SimConfig, signals: &SignalBank) -> Result<SimProgram, CompileError> {
    config.check().map_err(CompileError::Config)?;
    let report = net.validate();
    if !report.is_empty() {
        return Err(CompileError::NotValidated(report));
    }

    let mut signal_slots: BTreeMap<String, u32> = BTreeMap::new();
    let mut signal_bufs: Vec<Arc<[f64]>> = Vec::new();
    let mut signal_index = |name: &str| -> Result<u32, CompileError> {
        if let Some(&i) = signal_slots.get(name) {
            return Ok(i);
        }
        let buf = signals.get(name).ok_or_else(|| CompileError::MissingSignal(name.to_string()))?;
        let i = signal_bufs.len() as u32;
        signal_bufs.push(buf.clone());
        signal_slots.insert(name.to_string(), i);
        Ok(i)
    };

    let mut p = SimProgram {
        revision: net.revision(),
        sample_rate: config.sample_rate,
        mat_ids: Vec::new(),
        mat_laws: Vec::new(),
        x0: Vec::new(),
        v0: Vec::new(),
        lia_ids: Vec::new(),
        lia_laws: Vec::new(),
        lia_a: Vec::new(),
        lia_b: Vec::new(),
        tables: Vec::new(),
        incident_start: Vec::new(),
        incident: Vec::new(),
        injection_start: Vec::new(),
        injections: Vec::new(),
        observers: Vec::new(),
        signals: Vec::new(),
        trace: Vec::new(),
        trace_decimation: config.trace_decimation,
    };

    for m in net.modules() {
        if m.kind.is_positional() {
            let law = match m.kind {
                ModuleKind::MAS => MatLaw::Dynamic { c1: 2.0, c2: -1.0, mass: scalar(net, m.id, ParamName::M) },
                ModuleKind::CEL => {
                    let mass = scalar(net, m.id, ParamName::M);
                    let k = scalar(net, m.id, ParamName::K);
                    let z = scalar(net, m.id, ParamName::Z);
                    MatLaw::Dynamic { c1: 2.0 - k / mass - z / mass, c2: z / mass - 1.0, mass }
                }
                ModuleKind::SOL => MatLaw::Fixed(m.init.unwrap_or_default().x0),
                ModuleKind::ENX => MatLaw::Input(signal_index(m.signal.as_deref().unwrap_or_default())?),
                _ => unreachable!("positional kinds"),
            };
            let init = m.init.unwrap_or_default();
            p.mat_ids.push(m.id);
            p.mat_laws.push(law);
            p.x0.push(init.x0);
            p.v0.push(init.v0);
        }
    }
    let mat_ix = |p: &SimProgram, id: ModuleId| p.mat_index(id).expect("validated endpoint") as u32;

    let mut incident: Vec<Vec<u32>> = vec![Vec::new(); p.mat_count()];
    let mut injections: Vec<Vec<u32>> = vec![Vec::new(); p.mat_count()];
    for m in net.modules() {
        match m.kind {
            ModuleKind::RES | ModuleKind::FRO | ModuleKind::REF | ModuleKind::BUT | ModuleKind::LNL => {
                let [Some(a), Some(b)] = m.endpoints().expect("interaction") else {
                    unreachable!("validated network has no dangling links")
                };
                let k = scalar(net, m.id, ParamName::K);
                let z = scalar(net, m.id, ParamName::Z);
                let law = match m.kind {
                    ModuleKind::RES => LiaLaw::Spring { k },
                    ModuleKind::FRO => LiaLaw::Damper { z },
                    ModuleKind::REF => LiaLaw::SpringDamper { k, z },
                    ModuleKind::BUT => LiaLaw::Buffer { k, z, s: scalar(net, m.id, ParamName::S) },
                    _ => {
                        let fk = m.param(ParamName::FK).and_then(|v| v.as_table()).cloned().unwrap_or_else(Table::zero);
                        let fz = m.param(ParamName::FZ).and_then(|v| v.as_table()).cloned().unwrap_or_else(Table::zero);
                        p.tables.push((fk, fz));
                        LiaLaw::Table(p.tables.len() as u32 - 1)
                    }
                };
                let li = p.lia_ids.len() as u32;
                let (ai, bi) = (mat_ix(&p, a), mat_ix(&p, b));
                p.lia_ids.push(m.id);
                p.lia_laws.push(law);
                p.lia_a.push(ai);
                p.lia_b.push(bi);
                incident[ai as usize].push(li);
                incident[bi as usize].push(li | B_SIDE);
            }
            ModuleKind::ENF => {
                let target = m.target().expect("validated attachment");
                let sig = signal_index(m.signal.as_deref().unwrap_or_default())?;
                injections[mat_ix(&p, target) as usize].push(sig);
            }
            _ => {}
        }
    }
    // Interactions were visited in ascending index order, so each list is already sorted.
    p.incident_start.push(0);
    for list in incident {
        p.incident.extend(list);
        p.incident_start.push(p.incident.len() as u32);
    }
    p.injection_start.push(0);
    for list in injections {
        p.injections.extend(list);
        p.injection_start.push(p.injections.len() as u32);
    }

    for m in net.modules() {
        let probe = match (m.kind, m.target()) {
            (ModuleKind::SOX, Some(t)) => Probe::Position(mat_ix(&p, t)),
            (ModuleKind::SOF, Some(t)) => Probe::Force(p.lia_index(t).expect("validated target") as u32),
            _ => continue,
        };
        p.observers.push(Observer { id: m.id, probe, gain: m.scalar(ParamName::Gain).unwrap_or(1.0) });
    }

    p.trace = match &config.trace {
        super::TraceSelection::None => Vec::new(),
        super::TraceSelection::All => (0..p.mat_count() as u32).collect(),
        super::TraceSelection::Picker(expr) => {
            let picked = Picker::parse(expr)?.eval(net.labels());
            picked.iter().filter_map(|&id| p.mat_index(id)).map(|i| i as u32).collect()
        }
    };
    p.signals = signal_bufs;
    Ok(p)
}
