#![allow(dead_code)]

use pnet_core::{BenchPos, ModuleId, ModuleKind, Network, ParamName, StateVar, Strictness, Table};
use rand::seq::SliceRandom;
use rand::Rng;

pub const SEGMENTS: [&str; 6] = ["a", "b", "ab", "A", "x1", "bb"];

pub fn random_label<R: Rng>(rng: &mut R) -> String {
    let depth = rng.gen_range(1..=4);
    (0..depth).map(|_| format!("/{}", SEGMENTS.choose(rng).unwrap())).collect()
}

/// An arbitrary editing session: modules of every kind, partly wired, some
/// removed, with labels, parameters and signals.
pub fn random_network<R: Rng>(rng: &mut R, size: usize) -> Network {
    let mut net = Network::new();
    let mut ids: Vec<ModuleId> = Vec::new();
    for _ in 0..size {
        let kind = *ModuleKind::ALL.choose(rng).unwrap();
        let pos = BenchPos::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
        let id = net.add_module(kind, pos).unwrap();
        ids.push(id);
        let mats: Vec<ModuleId> = ids.iter().copied().filter(|&i| net.get(i).unwrap().kind.is_positional()).collect();
        let lias: Vec<ModuleId> =
            ids.iter().copied().filter(|&i| net.get(i).unwrap().kind.family() == pnet_core::Family::Lia).collect();
        match kind.family() {
            pnet_core::Family::Lia if mats.len() >= 2 && rng.gen_bool(0.9) => {
                let pair: Vec<_> = mats.choose_multiple(rng, 2).copied().collect();
                net.connect(id, pair[0], pair[1]).unwrap();
            }
            _ if kind == ModuleKind::SOF && !lias.is_empty() && rng.gen_bool(0.9) => {
                net.attach(id, *lias.choose(rng).unwrap()).unwrap();
            }
            _ if kind.attaches() && kind != ModuleKind::SOF && !mats.is_empty() && rng.gen_bool(0.9) => {
                net.attach(id, *mats.choose(rng).unwrap()).unwrap();
            }
            _ => {}
        }
        for &name in kind.legal_params() {
            if rng.gen_bool(0.5) {
                let value = if name.is_table() {
                    let n = rng.gen_range(2..6);
                    Table::sample(-1.0, 1.0, n, |x| -rng_free_slope(x)).unwrap().into()
                } else if name == ParamName::M {
                    rng.gen_range(0.1..10.0).into()
                } else {
                    rng.gen_range(0.0..1.0).into()
                };
                net.set_param(&[id], name, value, Strictness::Strict).unwrap();
            }
        }
        if kind.has_initial_state() && rng.gen_bool(0.5) {
            net.set_state(&[id], StateVar::X0, rng.gen_range(-1.0..1.0), Strictness::Strict).unwrap();
            net.set_state(&[id], StateVar::V0, rng.gen_range(-0.01..0.01), Strictness::Strict).unwrap();
        }
        if kind.takes_signal() {
            let name = format!("sig{}", rng.gen_range(0..3));
            net.set_signal(id, Some(name.clone())).unwrap();
            net.declare_signal(&name, pnet_core::network::SignalDecl { path: format!("{name}.wav") });
        }
        for _ in 0..rng.gen_range(0..3) {
            let _ = net.add_label(id, &random_label(rng));
        }
        if rng.gen_bool(0.05) {
            let victim = *ids.choose(rng).unwrap();
            net.remove_module(victim).unwrap();
            ids.retain(|&i| i != victim);
        }
    }
    net
}

fn rng_free_slope(x: f64) -> f64 {
    0.1 * x + 0.05 * x * x * x
}
