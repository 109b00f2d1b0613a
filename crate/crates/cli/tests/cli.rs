use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use commoninfo::csbs::{a1_of_a0, bsc_mixture_joint, c_closed_form, csbs3_joint, dsbs_joint};
use commoninfo::dist::binary_entropy;
use commoninfo::wyner::{AuxModel, Witness};
use commoninfo::JointPmf;
use commoninfo_cli::distfile;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_commoninfo"))
}

fn write_dist(dir: &TempDir, name: &str, pmf: &JointPmf) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, distfile::render(pmf)).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn record(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--format", "records"]);
    let out = run(&all);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `(X', V)` and `(Y', V)` with fair independent bits.
fn shared_pair() -> JointPmf {
    let mut probs = vec![0.0; 16];
    for xp in 0..2 {
        for yp in 0..2 {
            for v in 0..2 {
                probs[(xp * 2 + v) * 4 + yp * 2 + v] = 0.125;
            }
        }
    }
    JointPmf::from_sizes(vec![4, 4], probs).unwrap()
}

/// `(X', U, V)`, `(Y', V, W)`, `(Z', W, U)` with fair independent bits.
fn shared_triple() -> JointPmf {
    let mut probs = vec![0.0; 512];
    for bits in 0u32..64 {
        let b = |i: u32| ((bits >> i) & 1) as usize;
        let (xp, yp, zp, u, v, w) = (b(0), b(1), b(2), b(3), b(4), b(5));
        let x = xp * 4 + u * 2 + v;
        let y = yp * 4 + v * 2 + w;
        let z = zp * 4 + w * 2 + u;
        probs[(x * 8 + y) * 8 + z] = 1.0 / 64.0;
    }
    JointPmf::from_sizes(vec![8, 8, 8], probs).unwrap()
}

fn h(p: f64) -> f64 {
    binary_entropy(p).unwrap()
}

#[test]
fn measures_on_dsbs() {
    let dir = TempDir::new().unwrap();
    let f = write_dist(&dir, "dsbs.txt", &dsbs_joint(0.25).unwrap());
    let r = record(&["measures", s(&f)]);
    assert_eq!(num(&r["result"]["k"]), 0.0);
    let i = num(&r["result"]["pairwise"][0]["mutual_information"]);
    assert!((i - (1.0 - h(0.25))).abs() < 1e-12);
}

#[test]
fn measures_on_independent_pair() {
    let dir = TempDir::new().unwrap();
    let p = JointPmf::product(&[vec![0.3, 0.7], vec![0.5, 0.5]]).unwrap();
    let f = write_dist(&dir, "ind.txt", &p);
    let r = record(&[
        "measures",
        s(&f),
        "--wyner",
        "--w-size",
        "2",
        "--restarts",
        "4",
    ]);
    let res = &r["result"];
    assert_eq!(num(&res["k"]), 0.0);
    assert!(num(&res["pairwise"][0]["mutual_information"]).abs() < 1e-12);
    assert!(num(&res["wyner"]["value"]).abs() < 1e-4);
    assert!((num(&res["entropies"][0]["bits"]) - h(0.3)).abs() < 1e-12);
}

#[test]
fn shared_part_is_every_measure() {
    let dir = TempDir::new().unwrap();
    let f = write_dist(&dir, "shared.txt", &shared_pair());
    let r = record(&["measures", s(&f), "--wyner", "--restarts", "4"]);
    let res = &r["result"];
    assert!((num(&res["k"]) - 1.0).abs() < 1e-9);
    assert!((num(&res["pairwise"][0]["mutual_information"]) - 1.0).abs() < 1e-9);
    assert!((num(&res["wyner"]["value"]) - 1.0).abs() < 1e-3);
    assert_eq!(res["wyner"]["ordering"]["i_exceeds_c"], Value::Bool(false));
}

#[test]
fn wyner_on_csbs3_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let f = write_dist(&dir, "csbs3.txt", &csbs3_joint(0.25).unwrap());
    let r = record(&["wyner", s(&f), "--restarts", "8"]);
    let want = c_closed_form(3, a1_of_a0(0.25).unwrap()).unwrap();
    assert!((num(&r["result"]["value"]) - want).abs() < 1e-3);
}

#[test]
fn wyner_on_copy_pair_and_shared_triple() {
    let dir = TempDir::new().unwrap();
    let copy = JointPmf::from_sizes(vec![2, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
    let f = write_dist(&dir, "copy.txt", &copy);
    let r = record(&["wyner", s(&f)]);
    assert!((num(&r["result"]["value"]) - 1.0).abs() < 1e-4);

    let f = write_dist(&dir, "triple.txt", &shared_triple());
    let r = record(&["wyner", s(&f), "--w-size", "16", "--restarts", "4"]);
    assert!((num(&r["result"]["value"]) - 3.0).abs() < 5e-3);
}

#[test]
fn region_verdicts() {
    let dir = TempDir::new().unwrap();
    let f = write_dist(&dir, "dsbs.txt", &dsbs_joint(0.25).unwrap());
    let w = dir.path().join("w.json");

    // Constant W needs nothing common and the marginal entropies privately.
    let r = record(&["region", s(&f), "--r0", "0", "--rates", "1,1"]);
    assert_eq!(r["result"]["membership"]["status"], "certified");

    let r = record(&["region", s(&f), "--r0", "0", "--rates", "0,0"]);
    assert_eq!(r["result"]["membership"]["status"], "unknown");

    record(&[
        "wyner",
        s(&f),
        "--w-size",
        "2",
        "--restarts",
        "4",
        "--witness-out",
        s(&w),
    ]);
    let r = record(&[
        "region",
        s(&f),
        "--r0",
        "1",
        "--rates",
        "1,1",
        "--witness",
        s(&w),
    ]);
    let corner = &r["result"]["corners"][2]["corner"];
    let sum = num(&corner["r0"]) + num(&corner["r"][0]) + num(&corner["r"][1]);
    let joint = dsbs_joint(0.25).unwrap().total_entropy();
    assert!((sum - joint).abs() < 1e-6, "{sum} vs {joint}");
}

#[test]
fn csbs_sweep_tables() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("sweep.csv");
    let r = record(&[
        "csbs-sweep",
        "--n",
        "2,3",
        "--a0-grid",
        "0:0.5:51",
        "--table",
        s(&csv),
    ]);
    let rows = r["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 102);
    for (two, three) in rows[..51].iter().zip(&rows[51..]) {
        let a0 = num(&two["a0"]);
        let (c2, c3) = (num(&two["c"]), num(&three["c"]));
        if a0 == 0.0 || a0 == 0.5 {
            assert!((c3 - c2).abs() < 1e-12, "a0={a0}");
        } else {
            assert!(c3 > c2, "a0={a0}: {c3} <= {c2}");
        }
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "N,a0,a1,C_N,I_pair,K,asymptote_gap"
    );
    assert_eq!(text.lines().count(), 103);

    let r = record(&["csbs-sweep", "--n", "2,5,9", "--a1-grid", "0.5:0.5:1"]);
    for row in r["result"]["rows"].as_array().unwrap() {
        assert_eq!(num(&row["c"]), 0.0);
    }

    let ns: Vec<String> = (2..=20).map(|n| n.to_string()).collect();
    let r = record(&["csbs-sweep", "--n", &ns.join(","), "--a1-grid", "0.1:0.1:1"]);
    let last = r["result"]["rows"]
        .as_array()
        .unwrap()
        .last()
        .unwrap()
        .clone();
    assert_eq!(last["n"], 20);
    assert!(num(&last["asymptote_gap"]) < 0.05);
}

fn aux_file(dir: &TempDir, name: &str, aux: AuxModel) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, serde_json::to_string(&Witness::Aux(aux)).unwrap()).unwrap();
    p
}

#[test]
fn sim_gen_product_source_is_exact() {
    let dir = TempDir::new().unwrap();
    let p = JointPmf::product(&[vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
    let f = write_dist(&dir, "prod.txt", &p);
    let aux = AuxModel::new(vec![1.0], vec![vec![vec![0.3, 0.7]], vec![vec![0.6, 0.4]]]).unwrap();
    let w = aux_file(&dir, "const.json", aux);
    let r = record(&[
        "sim-gen",
        s(&f),
        "--witness",
        s(&w),
        "--n",
        "4",
        "--rate",
        "0",
    ]);
    assert!(num(&r["result"]["max"]).abs() < 1e-12);
}

#[test]
fn sim_codec_generous_rates_decode() {
    let dir = TempDir::new().unwrap();
    let (p, aux) = bsc_mixture_joint(2, a1_of_a0(0.25).unwrap()).unwrap();
    let f = write_dist(&dir, "dsbs.txt", &p);
    let w = aux_file(&dir, "aux.json", aux);
    let r = record(&[
        "sim-codec",
        s(&f),
        "--witness",
        s(&w),
        "--n",
        "8",
        "--r0",
        "1.4",
        "--rates",
        "2,2",
        "--eps",
        "0.3",
        "--trials",
        "200",
        "--seed",
        "3",
    ]);
    let res = &r["result"];
    assert!(num(&res["error_rate"]) < 0.2, "{}", res["error_rate"]);
    let e = |k: &str| res[k].as_u64().unwrap();
    assert!(e("errors") <= e("e1_count") + e("e2_count") + e("e3_count"));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "dims: 2 2\n0.25 0.25\n0.25 oops\n").unwrap();
    let out = run(&["measures", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let f = write_dist(&dir, "dsbs.txt", &dsbs_joint(0.25).unwrap());
    let out = run(&[
        "wyner",
        s(&f),
        "--w-size",
        "2",
        "--restarts",
        "2",
        "--tol",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(
        msg.contains("test channel") && msg.contains("Gamma"),
        "{msg}"
    );

    let (_, aux) = bsc_mixture_joint(2, 0.1).unwrap();
    let w = aux_file(&dir, "aux.json", aux);
    let out = run(&[
        "sim-gen",
        s(&f),
        "--witness",
        s(&w),
        "--n",
        "40",
        "--rate",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let f = write_dist(&dir, "dsbs.txt", &dsbs_joint(0.4).unwrap());
    let args = [
        "wyner",
        s(&f),
        "--w-size",
        "2",
        "--restarts",
        "3",
        "--seed",
        "9",
        "--format",
        "records",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}
