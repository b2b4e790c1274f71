use std::collections::BTreeMap;

use pnet_core::network::Wiring;
use pnet_core::{BenchPos, ModuleId, ModuleKind, Network, ParamName, ParamValue, Picker, StateVar, Strictness};
use pnsl::interp::{CommandSpec, Interp, Package};
use pnsl::parse::{parse, print, WordForm};
use pnsl::{session, ScriptError, Workspace};
use proptest::prelude::*;

fn fresh() -> Interp<Workspace> {
    session(Workspace::default())
}

/// Network shape keyed by system label, independent of bench layout.
#[derive(Debug, PartialEq)]
struct Shape {
    kind: ModuleKind,
    params: BTreeMap<ParamName, ParamValue>,
    wiring: Vec<Option<String>>,
    labels: Vec<String>,
    init: Option<(u64, u64)>,
}

fn shape(net: &Network) -> BTreeMap<String, Shape> {
    let sys = |id: ModuleId| net.labels().system_label(id).unwrap().to_string();
    net.modules()
        .map(|m| {
            let wiring = match m.wiring {
                Wiring::None => vec![],
                Wiring::Endpoints(e) => e.iter().map(|x| x.map(sys)).collect(),
                Wiring::Target(t) => vec![t.map(sys)],
            };
            let mut labels: Vec<String> = net.labels().user_labels(m.id).map(str::to_string).collect();
            labels.sort();
            (
                sys(m.id),
                Shape {
                    kind: m.kind,
                    params: m.params.clone(),
                    wiring,
                    labels,
                    init: m.init.map(|s| (s.x0.to_bits(), s.v0.to_bits())),
                },
            )
        })
        .collect()
}

#[test]
fn create_ten_masses_matches_direct_calls() {
    let mut s = fresh();
    let out = s.eval("module create MAS 10").unwrap();
    assert_eq!(out.split(' ').count(), 10);
    assert_eq!(out, "1 2 3 4 5 6 7 8 9 10");
    let mut direct = Network::new();
    for k in 0..10 {
        direct.add_module(ModuleKind::MAS, BenchPos::new(k as f64, 0.0)).unwrap();
    }
    assert_eq!(shape(&s.ctx.doc.network), shape(&direct));
    assert!(s.ctx.doc.network == direct);
}

#[test]
fn unknown_command_reports_position() {
    let e = fresh().eval("module create MAS\n\tfrobnicate x").unwrap_err();
    match e {
        ScriptError::UnknownCommand { name, pos } => {
            assert_eq!(name, "frobnicate");
            assert_eq!((pos.line, pos.column), (2, 2));
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(fresh().eval("module frob"), Err(ScriptError::UnknownCommand { .. })));
    assert!(matches!(fresh().eval("module create"), Err(ScriptError::WrongArity { .. })));
}

#[test]
fn param_set_through_picker() {
    let mut s = fresh();
    s.eval(
        "set a [module create MAS]; set b [module create MAS 1 2 0]; set c [module create SOL]
         set r1 [link create RES $a $b]; set r2 [link create REF $b $c]
         label add $r1 /myString/springs/1; label add $r2 /myString/springs/2; label add $a /myString/m",
    )
    .unwrap();
    assert_eq!(s.eval("param set /myString/springs/** K 0.05").unwrap(), "2");
    let picked = Picker::parse("/myString/springs/**").unwrap().eval(s.ctx.doc.network.labels());
    assert_eq!(picked.len(), 2);
    for id in picked {
        assert_eq!(s.ctx.doc.network.param(id, ParamName::K).unwrap(), &ParamValue::Scalar(0.05));
        assert_eq!(s.eval(&format!("param get {id} K")).unwrap(), "0.05");
    }
    // the mass does not take K: strict fails untouched, lenient skips it
    let before = s.ctx.doc.network.clone();
    assert!(s.eval("param set /myString/** K 0.07").is_err());
    assert!(s.ctx.doc.network == before);
    assert_eq!(s.eval("param set /myString/** K 0.07 -lenient").unwrap(), "2");
    assert_eq!(s.eval("param set {4 5} K [expr 0.1/2]").unwrap(), "2");
    assert_eq!(s.eval("param get 4 K").unwrap(), "0.05");
}

#[test]
fn for_loop_builds_modules() {
    let mut s = fresh();
    s.eval("for {set i 0} {$i < 3} {incr i} {module create MAS 1}").unwrap();
    assert_eq!(s.ctx.doc.network.len(), 3);
    assert!(matches!(s.eval("expr 1/0"), Err(ScriptError::Runtime { .. })));
    assert_eq!(s.eval("set x 3; expr $x*2+1").unwrap(), "7");
}

#[test]
fn registry_has_thirteen_packages() {
    let mut s = fresh();
    assert_eq!(s.package_names().len(), 13);
    assert_eq!(s.eval("llength [info packages]").unwrap(), "13");
    let total: usize = s.package_names().iter().map(|p| s.package_commands(p).unwrap().len()).sum();
    assert!((40..=67).contains(&total), "{total} commands");
    let dup = pnsl::standard_packages().into_iter().next().unwrap();
    assert!(matches!(s.register_package(dup), Err(ScriptError::DuplicatePackage(_))));
    assert!(matches!(s.eval("create MAS"), Err(ScriptError::AmbiguousCommand { .. })));
    assert_eq!(s.eval("module create MAS").unwrap(), "1");
    // unique bare names resolve to their package
    assert_eq!(s.eval("radical /sys/MAS").unwrap(), "1");
    assert_eq!(s.eval("kinds OBS").unwrap(), "SOX SOF");
}

#[test]
fn nested_bracket_parses_to_one_command() {
    let script = parse("param set {/myString/**} K [expr 0.1/2]").unwrap();
    let WordForm::Bracket(inner) = &script.commands[0].words[4].form else { panic!() };
    assert_eq!(inner.commands.len(), 1);
    let again = parse(&print(&script)).unwrap();
    assert_eq!(again.without_positions(), script.without_positions());
}

#[test]
fn simulation_from_a_script() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = fresh();
    s.base_dir = dir.path().to_path_buf();
    let src = "
        set m [module create MAS]; set g [module create SOL]
        set r [link create RES $m $g]
        param set $r K [util stiffness 441 1]
        state set $m X0 0.5
        set o [module create SOX]; link attach $o $m
        sim config rate 44100 steps 4410 threads 2
        sim run
        out wav tone.wav -pcm16 -normalize
        out trace tone.csv
        out peak $o";
    let peak: f64 = s.eval(src).unwrap().parse().unwrap();
    assert!((peak - 0.5).abs() < 1e-9, "{peak}");
    let wav = hound::WavReader::open(dir.path().join("tone.wav")).unwrap();
    assert_eq!(wav.spec().sample_rate, 44100);
    assert_eq!(wav.len(), 4410);
    assert!(dir.path().join("tone.csv").exists());
    assert_eq!(s.eval("lindex [sim stability] 1").unwrap(), "1");
    let f: f64 = s.eval("util frequency [param get 3 K] 1").unwrap().parse().unwrap();
    assert!((f - 441.0).abs() < 1e-9);
}

#[test]
fn model_save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = fresh();
    s.base_dir = dir.path().to_path_buf();
    s.eval("module create CEL 4; label add 2 /x/y; note add 1 2 {<p>hi</p>}; model save m.json").unwrap();
    let saved = s.ctx.doc.clone();
    s.eval("model new").unwrap();
    assert_eq!(s.ctx.doc.network.len(), 0);
    assert_eq!(s.eval("model load m.json").unwrap(), "4");
    assert!(s.ctx.doc.network == saved.network);
    assert_eq!(s.eval("note html 1").unwrap(), "<p>hi</p>");
    assert_eq!(s.eval("label target /x/y").unwrap(), "2");
}

#[test]
fn library_directory_is_sourced_in_order() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.pnsl"), "proc chain {n} {for {set i 0} {$i < $n} {incr i} {module create MAS}}\n").unwrap();
    std::fs::write(dir.path().join("b.pnsl"), "proc twice {n} {chain [expr 2*$n]}\n").unwrap();
    let mut s = fresh();
    let files = s.load_library(dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    s.eval("twice 3").unwrap();
    assert_eq!(s.ctx.doc.network.len(), 6);
}

#[test]
fn determinism_of_results_and_models() {
    let src = "
        set ids [module create MAS 20]
        foreach id $ids {state set $id X0 [expr $id*0.01]}
        set prev [module create SOL]
        foreach id $ids {link create REF $prev $id; set prev $id}
        param set /sys/REF/** K 0.05; param set /sys/REF/** Z 0.001
        set o [module create SOX]; link attach $o [lindex $ids end]
        sim config steps 2000
        list [sim run] [model stats] [out peak $o]";
    let (mut a, mut b) = (fresh(), fresh());
    let ra = a.eval(src).unwrap();
    let rb = b.eval(src).unwrap();
    assert_eq!(ra, rb);
    assert!(a.ctx.doc.network == b.ctx.doc.network);
    assert_eq!(a.ctx.doc.save(), b.ctx.doc.save());
    assert_eq!(a.ctx.last_run.as_ref().unwrap().sound, b.ctx.last_run.as_ref().unwrap().sound);
}

// ---- properties ----

fn word() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        "[a-z0-9_./*]{1,6}",
        "[a-z]{1,4}".prop_map(|v| format!("${v}")),
        "[a-z ]{0,6}".prop_map(|t| format!("{{{t}}}")),
        "[a-z $]{0,6}".prop_map(|t| format!("\"{}\"", t.replace('$', "\\$"))),
        Just("\\ ".to_string()),
        Just("\\{x".to_string()),
    ];
    leaf.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 1..4).prop_map(|ws| format!("[{}]", ws.join(" "))),
            proptest::collection::vec(inner.clone(), 1..3).prop_map(|ws| format!("{{{}}}", ws.join(" "))),
            (inner.clone(), "[a-z]{1,3}").prop_map(|(w, t)| if w.starts_with(['{', '"']) { w } else { format!("{t}{w}") }),
            proptest::collection::vec(inner, 1..3).prop_map(|ws| format!("\"{}\"", ws.join(" ").replace('"', "'"))),
        ]
    })
}

fn script_text() -> impl Strategy<Value = String> {
    let command = proptest::collection::vec(word(), 1..5).prop_map(|ws| ws.join(" "));
    let sep = prop_oneof![Just("\n"), Just("; "), Just("\n# note\n"), Just(" \\\n ")];
    proptest::collection::vec((command, sep), 1..5)
        .prop_map(|cs| cs.into_iter().map(|(c, s)| format!("{c}{s}")).collect())
}

/// Balanced brace bodies, including escaped braces.
fn brace_body() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        "[a-z $\\[\\]\";\n#]{0,5}",
        Just("\\{".to_string()),
        Just("\\}".to_string()),
        Just("\\\\".to_string()),
        Just("\\n".to_string()),
    ];
    leaf.prop_recursive(3, 16, 4, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 1..4).prop_map(|v| v.concat()),
            inner.prop_map(|t| format!("{{{t}}}")),
        ]
    })
}

fn echo(_: &mut Interp<()>, a: &[String]) -> Result<String, ScriptError> {
    Ok(a[0].clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parse_print_fixed_point(src in script_text()) {
        if let Ok(once) = parse(&src) {
            let printed = print(&once);
            let again = parse(&printed);
            prop_assert!(again.is_ok(), "printed form does not parse: {printed}");
            prop_assert_eq!(again.unwrap().without_positions(), once.without_positions());
        }
    }

    #[test]
    fn parse_print_fixed_point_on_noise(src in "[a-c $\\[\\]{}\"\\\\;\n#]{0,24}") {
        if let Ok(once) = parse(&src) {
            let again = parse(&print(&once)).expect("printed form parses");
            prop_assert_eq!(again.without_positions(), once.without_positions());
        }
    }

    #[test]
    fn brace_opacity(body in brace_body()) {
        let mut i = Interp::new(());
        i.register_package(Package { name: "t", commands: vec![CommandSpec::new("echo", "TEXT", 1, Some(1), echo)] }).unwrap();
        let got = i.eval(&format!("echo {{{body}}}")).unwrap();
        prop_assert_eq!(got.as_bytes(), body.as_bytes());
    }
}

// ---- script vs direct API on random edit sequences ----

#[derive(Debug, Clone)]
enum Edit {
    Create(usize, u8),
    Link(usize, usize, usize),
    Param(usize, usize, f64),
    Label(usize, u8),
    State(usize, bool, f64),
    Delete(usize),
}

fn edit() -> impl Strategy<Value = Edit> {
    prop_oneof![
        3 => (0..12usize, 1..4u8).prop_map(|(k, n)| Edit::Create(k, n)),
        3 => (0..5usize, any::<usize>(), any::<usize>()).prop_map(|(k, a, b)| Edit::Link(k, a, b)),
        2 => (any::<usize>(), 0..7usize, 0.0..2.0f64).prop_map(|(t, p, v)| Edit::Param(t, p, v)),
        1 => (any::<usize>(), 0..6u8).prop_map(|(t, l)| Edit::Label(t, l)),
        1 => (any::<usize>(), any::<bool>(), -1.0..1.0f64).prop_map(|(t, x, v)| Edit::State(t, x, v)),
        1 => any::<usize>().prop_map(Edit::Delete),
    ]
}

const LINKS: [ModuleKind; 5] = [ModuleKind::RES, ModuleKind::FRO, ModuleKind::REF, ModuleKind::BUT, ModuleKind::LNL];

fn nth(net: &Network, i: usize) -> ModuleId {
    let ids: Vec<ModuleId> = net.ids().into_iter().collect();
    if ids.is_empty() {
        ModuleId(999)
    } else {
        ids[i % ids.len()]
    }
}

fn label_text(l: u8) -> String {
    ["/a", "/a/b", "/c/1", "/c/2", "/d/e/f", "/a/b/c"][l as usize].to_string()
}

/// Applies one edit through the API; the script text for the same edit.
fn apply(net: &mut Network, e: &Edit) -> String {
    match *e {
        Edit::Create(k, n) => {
            let kind = ModuleKind::ALL[k];
            for j in 0..n {
                net.add_module(kind, BenchPos::new(j as f64, 0.0)).unwrap();
            }
            format!("module create {kind} {n}")
        }
        Edit::Link(k, a, b) => {
            let (x, y) = (nth(net, a), nth(net, b));
            let kind = LINKS[k];
            let ok = x != y
                && [x, y].iter().all(|&id| net.get(id).is_ok_and(|m| m.kind.is_positional()));
            if ok {
                let id = net.add_module(kind, BenchPos::default()).unwrap();
                net.connect(id, x, y).unwrap();
            }
            format!("catch {{link create {kind} {x} {y}}}")
        }
        Edit::Param(t, p, v) => {
            let id = nth(net, t);
            let name = ParamName::ALL[p];
            let text = if name.is_table() { format!("{{-1.0 {} 1.0 {v:?}}}", -v) } else { format!("{v:?}") };
            let value: ParamValue = if name.is_table() {
                pnet_core::Table::new(vec![(-1.0, -v), (1.0, v)]).unwrap().into()
            } else {
                v.into()
            };
            let _ = net.set_param(&[id], name, value, Strictness::Strict);
            format!("catch {{param set {id} {name} {text}}}")
        }
        Edit::Label(t, l) => {
            let id = nth(net, t);
            let _ = net.add_label(id, &label_text(l));
            format!("catch {{label add {id} {}}}", label_text(l))
        }
        Edit::State(t, x, v) => {
            let id = nth(net, t);
            let var = if x { StateVar::X0 } else { StateVar::V0 };
            let _ = net.set_state(&[id], var, v, Strictness::Strict);
            format!("catch {{state set {id} {} {v:?}}}", if x { "X0" } else { "V0" })
        }
        Edit::Delete(t) => {
            let id = nth(net, t);
            let _ = net.remove_module(id);
            format!("catch {{module delete {id}}}")
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn script_and_api_build_the_same_network(edits in proptest::collection::vec(edit(), 0..40)) {
        let mut direct = Network::new();
        let lines: Vec<String> = edits.iter().map(|e| apply(&mut direct, e)).collect();
        let mut s = fresh();
        s.eval(&lines.join("\n")).unwrap();
        prop_assert_eq!(shape(&s.ctx.doc.network), shape(&direct));
    }

    #[test]
    fn failed_commands_leave_the_model_untouched(
        edits in proptest::collection::vec(edit(), 0..20),
        probe in 0..COMMANDS.len(),
        a in any::<usize>(),
        b in any::<usize>(),
    ) {
        let mut direct = Network::new();
        for e in &edits {
            apply(&mut direct, e);
        }
        let mut s = session(Workspace::new(pnet_core::io::ModelDocument::new(direct)));
        let x = nth(&s.ctx.doc.network, a);
        let y = nth(&s.ctx.doc.network, b);
        let src = COMMANDS[probe].replace("$x", &x.to_string()).replace("$y", &y.to_string());
        let before = s.ctx.doc.clone();
        if s.eval(&src).is_err() {
            prop_assert!(s.ctx.doc == before, "`{}` failed but changed the model", src);
        }
    }
}

const COMMANDS: [&str; 16] = [
    "link create RES $x $y",
    "link create SOX $x $y",
    "link connect $x $x $y",
    "link attach $x $y",
    "module delete {$x $y 999}",
    "module create MAS -1",
    "module create NOPE",
    "param set {$x $y} K 0.5",
    "param set {$x $y} M 0",
    "param set {$x $y} fK {0 1 0 2}",
    "state set {$x $y} X0 0.25",
    "label add $x /sys/MAS/1",
    "label add $y /a",
    "label remove /a/b",
    "bench translate {$x 999} 1 1",
    "note remove 7",
];

#[test]
fn string_builder_scale() {
    let mut s = fresh();
    let started = std::time::Instant::now();
    s.eval(
        "set prev [module create SOL]
         for {set i 1} {$i <= 20000} {incr i} {
             set m [module create MAS 1 $i 0]
             link create RES $prev $m
             set prev $m
         }",
    )
    .unwrap();
    assert_eq!(s.ctx.doc.network.len(), 40001);
    assert!(started.elapsed().as_secs() < 30);
}
