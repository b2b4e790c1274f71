use std::collections::BTreeSet;

use pnet_core::network::Wiring;
use pnet_core::{
    BenchPos, Family, Issue, ModuleId, ModuleKind, Network, NetworkError, ParamName, ParamValue, StateVar, Strictness,
    Table,
};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Add(usize, f64, f64),
    Connect(usize, usize, usize),
    Attach(usize, usize),
    Remove(usize),
    SetParam(Vec<usize>, usize, f64, bool),
    SetTable(usize, Vec<(f64, f64)>),
    SetState(usize, bool, f64),
    Label(usize, u8),
    Unlabel(u8),
    Move(usize, f64, f64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0..12usize, -50.0..50.0f64, -50.0..50.0f64).prop_map(|(k, x, y)| Op::Add(k, x, y)),
        2 => (any::<usize>(), any::<usize>(), any::<usize>()).prop_map(|(l, a, b)| Op::Connect(l, a, b)),
        1 => (any::<usize>(), any::<usize>()).prop_map(|(m, t)| Op::Attach(m, t)),
        1 => any::<usize>().prop_map(Op::Remove),
        2 => (proptest::collection::vec(any::<usize>(), 1..4), 0..7usize, -1.0..2.0f64, any::<bool>())
            .prop_map(|(t, n, v, s)| Op::SetParam(t, n, v, s)),
        1 => (any::<usize>(), proptest::collection::vec((-2.0..2.0f64, -1.0..1.0f64), 0..4))
            .prop_map(|(i, p)| Op::SetTable(i, p)),
        1 => (any::<usize>(), any::<bool>(), -1.0..1.0f64).prop_map(|(i, x, v)| Op::SetState(i, x, v)),
        1 => (any::<usize>(), 0..8u8).prop_map(|(i, l)| Op::Label(i, l)),
        1 => (0..8u8).prop_map(Op::Unlabel),
        1 => (any::<usize>(), -5.0..5.0f64, -5.0..5.0f64).prop_map(|(i, x, y)| Op::Move(i, x, y)),
    ]
}

fn pick(net: &Network, i: usize) -> ModuleId {
    // include one id that never exists
    let ids: Vec<ModuleId> = net.ids().into_iter().collect();
    if ids.is_empty() || i % 17 == 0 {
        ModuleId(net.next_id() + 5)
    } else {
        ids[i % ids.len()]
    }
}

fn label(l: u8) -> String {
    ["/s/a", "/s/b", "/s/a/x", "/t", "/t/1", "/u/v/w", "/sys/MAS/99", "bad//"][l as usize].to_string()
}

fn apply(net: &mut Network, op: &Op) -> Result<(), NetworkError> {
    match op {
        Op::Add(k, x, y) => net.add_module(ModuleKind::ALL[*k], BenchPos::new(*x, *y)).map(|_| ()),
        Op::Connect(l, a, b) => net.connect(pick(net, *l), pick(net, *a), pick(net, *b)),
        Op::Attach(m, t) => net.attach(pick(net, *m), pick(net, *t)),
        Op::Remove(i) => net.remove_module(pick(net, *i)),
        Op::SetParam(t, n, v, strict) => {
            let targets: Vec<ModuleId> = t.iter().map(|&i| pick(net, i)).collect();
            let s = if *strict { Strictness::Strict } else { Strictness::Lenient };
            let name = ParamName::ALL[*n];
            let value = if name.is_table() { Table::new_unchecked(vec![(0.0, *v)]).into() } else { (*v).into() };
            net.set_param(&targets, name, value, s).map(|_| ())
        }
        Op::SetTable(i, pts) => {
            net.set_param(&[pick(net, *i)], ParamName::FK, Table::new_unchecked(pts.clone()).into(), Strictness::Strict)
                .map(|_| ())
        }
        Op::SetState(i, x, v) => {
            let var = if *x { StateVar::X0 } else { StateVar::V0 };
            net.set_state(&[pick(net, *i)], var, *v, Strictness::Strict).map(|_| ())
        }
        Op::Label(i, l) => net.add_label(pick(net, *i), &label(*l)),
        Op::Unlabel(l) => net.remove_label(&label(*l)).map(|_| ()),
        Op::Move(i, x, y) => net.move_to(pick(net, *i), BenchPos::new(*x, *y)),
    }
}

fn check_invariants(net: &Network) -> Result<(), TestCaseError> {
    for m in net.modules() {
        let refs: Vec<ModuleId> = match m.wiring {
            Wiring::None => {
                prop_assert!(m.kind.family() == Family::Mat && !m.kind.attaches());
                vec![]
            }
            Wiring::Endpoints(e) => {
                prop_assert_eq!(m.kind.family(), Family::Lia);
                if let [Some(a), Some(b)] = e {
                    prop_assert_ne!(a, b);
                }
                e.into_iter().flatten().collect()
            }
            Wiring::Target(t) => {
                prop_assert!(m.kind.attaches());
                t.into_iter().collect()
            }
        };
        for r in refs {
            let target = net.get(r);
            prop_assert!(target.is_ok(), "module {} refers to missing {}", m.id, r);
            let tk = target.unwrap().kind;
            match m.kind.family() {
                Family::Lia => prop_assert!(tk.is_positional()),
                _ => prop_assert!(m.kind.accepts_target(tk)),
            }
        }
        let names: BTreeSet<ParamName> = m.params.keys().copied().collect();
        let legal: BTreeSet<ParamName> = m.kind.legal_params().iter().copied().collect();
        prop_assert_eq!(names, legal);
        prop_assert_eq!(m.init.is_some(), m.kind.has_initial_state());
        prop_assert!(m.bench.is_finite());
        let labels = net.labels_of(m.id).unwrap();
        prop_assert_eq!(&labels[0], &format!("/sys/{}/{}", m.kind, m.id));
        for l in &labels {
            prop_assert_eq!(net.labels().target(l), Some(m.id));
        }
    }
    prop_assert_eq!(net.labels().module_count(), net.len());
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn edits_keep_invariants(ops in proptest::collection::vec(op(), 0..80)) {
        let mut net = Network::new();
        let mut replay = Network::new();
        for op in &ops {
            let before = net.clone();
            let rev = net.revision();
            match apply(&mut net, op) {
                Ok(()) => {
                    let changed = net != before;
                    prop_assert!(net.revision() > rev || !changed, "{:?} changed the model without a revision", op);
                }
                Err(_) => {
                    prop_assert!(net == before, "{:?} failed but mutated the network", op);
                    prop_assert_eq!(net.revision(), rev);
                }
            }
            let _ = apply(&mut replay, op);
            check_invariants(&net)?;
        }
        prop_assert!(net == replay, "same edits, different networks");
    }
}

#[test]
fn module_system_conformance() {
    assert_eq!(ModuleKind::ALL.len(), 12);
    let distinct: BTreeSet<_> = ModuleKind::ALL.iter().collect();
    assert_eq!(distinct.len(), 12);
    use ModuleKind::*;
    use ParamName::*;
    let table: [(ModuleKind, Family, &[ParamName]); 12] = [
        (MAS, Family::Mat, &[M]),
        (CEL, Family::Mat, &[M, K, Z]),
        (SOL, Family::Mat, &[]),
        (ENX, Family::Mat, &[]),
        (ENF, Family::Mat, &[]),
        (RES, Family::Lia, &[K]),
        (FRO, Family::Lia, &[Z]),
        (REF, Family::Lia, &[K, Z]),
        (BUT, Family::Lia, &[K, Z, S]),
        (LNL, Family::Lia, &[FK, FZ]),
        (SOX, Family::Observer, &[Gain]),
        (SOF, Family::Observer, &[Gain]),
    ];
    let mut net = Network::new();
    for (kind, family, legal) in table {
        assert_eq!(kind.family(), family);
        let id = net.add_module(kind, BenchPos::default()).unwrap();
        for name in ParamName::ALL {
            let v: ParamValue = if name.is_table() { Table::zero().into() } else { 1.0.into() };
            let r = net.set_param(&[id], name, v, Strictness::Strict);
            assert_eq!(r.is_ok(), legal.contains(&name), "{kind} {name}");
        }
        let has_state = family == Family::Mat;
        assert_eq!(net.set_state(&[id], StateVar::X0, 0.5, Strictness::Strict).is_ok(), has_state);
        assert_eq!(net.set_state(&[id], StateVar::V0, 0.5, Strictness::Strict).is_ok(), has_state);
    }
}

#[test]
fn named_cases() {
    let mut net = Network::new();
    let mas = net.add_module(ModuleKind::MAS, BenchPos::default()).unwrap();
    assert_eq!(mas, ModuleId(1));
    let sol = net.add_module(ModuleKind::SOL, BenchPos::default()).unwrap();
    let res = net.add_module(ModuleKind::RES, BenchPos::new(1.0, 0.0)).unwrap();
    assert_eq!(net.validate().issues, vec![Issue::DanglingLink(res)]);
    net.connect(res, mas, sol).unwrap();
    assert!(net.validate().is_empty());
    let res2 = net.add_module(ModuleKind::RES, BenchPos::default()).unwrap();
    assert!(matches!(net.connect(res, res2, mas), Err(NetworkError::KindMismatch(_))));
    assert!(matches!(net.connect(res, mas, mas), Err(NetworkError::SelfLink { .. })));
    assert_eq!(net.set_param(&[res], ParamName::K, 0.1.into(), Strictness::Strict).unwrap(), 1);
    assert_eq!(net.param(res, ParamName::K).unwrap(), &ParamValue::Scalar(0.1));
    assert!(matches!(
        net.set_param(&[mas], ParamName::M, 0.0.into(), Strictness::Strict),
        Err(NetworkError::NonPositiveInertia(_))
    ));
    assert!(matches!(
        net.set_param(&[mas], ParamName::S, 0.5.into(), Strictness::Strict),
        Err(NetworkError::NoSuchParamForKind { .. })
    ));
    assert_eq!(net.set_param(&[mas, res], ParamName::K, 0.2.into(), Strictness::Lenient).unwrap(), 1);
    net.remove_module(mas).unwrap();
    assert_eq!(net.get(res).unwrap().endpoints(), Some([None, Some(sol)]));
    assert!(net.validate().issues.contains(&Issue::DanglingLink(res)));
    assert!(matches!(net.remove_module(ModuleId(99)), Err(NetworkError::UnknownId(_))));

    let lnl = net.add_module(ModuleKind::LNL, BenchPos::default()).unwrap();
    net.set_param_unchecked(lnl, ParamName::FK, Table::new_unchecked(vec![(0.0, 1.0)]).into()).unwrap();
    assert!(net.validate().issues.iter().any(|i| matches!(i, Issue::MalformedTable { id, .. } if *id == lnl)));

    let mut small = Network::new();
    let ids: Vec<_> = (0..3).map(|_| small.add_module(ModuleKind::MAS, BenchPos::default()).unwrap()).collect();
    for id in ids {
        small.remove_module(id).unwrap();
    }
    assert_eq!(small.len(), 0);
    assert_eq!(small.labels().label_count(), 0);
}

#[test]
fn hundred_thousand_modules() {
    let mut net = Network::new();
    for i in 0..100_000 {
        net.add_module(ModuleKind::MAS, BenchPos::new(i as f64, 0.0)).unwrap();
    }
    assert_eq!(net.len(), 100_000);
    assert_eq!(net.ids().len(), 100_000);
}
