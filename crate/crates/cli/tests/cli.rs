use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hycop::checkpoint::Checkpoint;
use hycop::dataset::{Dataset, Split};

fn hycop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hycop")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = hycop(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_ES: &str = "[es]\npopulation = 6\ngenerations = 3\nbatch = 4\n[policy]\ninit_candidates = 2\ninit_trials = 2\ninit_generations = 1\n[training]\nholdout = 4\n";

#[test]
fn gen_data_writes_requested_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ad.toml",
        "seed = 1\n[[benchmark]]\nsystem = \"ad1d\"\npath = \"data/ad.ds\"\ntrain = 20\ntest_id = 5\ntest_ood = 4\n",
    );
    ok(&["gen-data", "--config", p(&cfg)]);
    let ds = Dataset::load(dir.path().join("data/ad.ds")).unwrap();
    assert_eq!((ds.count(Split::Train), ds.count(Split::Id), ds.count(Split::Ood)), (20, 5, 4));

    let empty = write_config(dir.path(), "empty.toml", "seed = 1\n");
    ok(&["gen-data", "--config", p(&empty)]);
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(
        dir.path(),
        "bad.toml",
        "[[benchmark]]\nsystem = \"ad1d\"\npath = \"x.ds\"\nid_ranges = [[[3.0, 0.5]], [[0.01, 0.5]]]\n",
    );
    let out = hycop(&["gen-data", "--config", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("benchmark[0].id_ranges"));

    let typo = write_config(dir.path(), "typo.toml", "seed = 1\n\n[es]\npopulaton = 3\n");
    let out = hycop(&["gen-data", "--config", p(&typo)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn train_resume_eval_and_diagnose_on_ad() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ad.toml",
        &format!("seed = 4\n[[benchmark]]\nsystem = \"ad1d\"\npath = \"ad.ds\"\ntrain = 12\ntest_id = 4\ntest_ood = 4\n{SMALL_ES}"),
    );
    ok(&["gen-data", "--config", p(&cfg)]);
    let data = dir.path().join("ad.ds");
    let c0 = dir.path().join("c0.ckpt");
    ok(&["train", "--config", p(&cfg), "--out", p(&c0), "--generations", "0"]);
    let zero = Checkpoint::load(&c0).unwrap();
    assert_eq!(zero.generations, 0);
    assert_eq!(Checkpoint::parse(&zero.to_text()).unwrap(), zero);

    let c1 = dir.path().join("c1.ckpt");
    ok(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&c1), "--warm-start", p(&c0)]);
    let c2 = dir.path().join("c2.ckpt");
    ok(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&c2), "--warm-start", p(&c1), "--generations", "2"]);
    assert_eq!(Checkpoint::load(&c1).unwrap().generations, 3);
    assert_eq!(Checkpoint::load(&c2).unwrap().generations, 5);
    let log = std::fs::read_to_string(dir.path().join("c2.ckpt.log")).unwrap();
    assert!(log.lines().next().unwrap().starts_with("generation=3 "));
    assert_eq!(log.lines().count(), 2);
    assert!(dir.path().join("c2.ckpt.curve.dat").exists());

    let a = ok(&["eval", "--checkpoint", p(&c2), "--data", p(&data)]);
    let b = ok(&["eval", "--checkpoint", p(&c2), "--data", p(&data)]);
    assert_eq!(a, b);
    assert!(a.starts_with("model,split,RelL2,fRMSE_low"));
    assert!(a.lines().any(|l| l.starts_with("constant,id,")));
    assert!(a.lines().any(|l| l.starts_with("hycop,ood,")));

    let diag = ok(&["diagnose", "--checkpoint", p(&c2), "--data", p(&data), "--check"]);
    for line in diag.lines().skip(1).filter(|l| !l.contains(",mean,")) {
        let cols: Vec<&str> = line.split(',').collect();
        let primitive: f64 = cols[5].parse().unwrap();
        assert!(primitive < 1e-10, "{line}");
    }

    let cmp = ok(&["compare-strang", "--checkpoint", p(&c2), "--data", p(&data)]);
    for line in cmp.lines().filter(|l| l.starts_with("strang")) {
        let err: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(err < 1e-9, "{line}");
    }
}

#[test]
fn burgers_strang_substeps_and_idempotent_extension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "b.toml",
        &format!(
            "seed = 2\n[[benchmark]]\nsystem = \"burgers1d\"\npath = \"b.ds\"\ntrain = 8\ntest_id = 6\ntest_ood = 2\nid_families = [\"sine\", \"fourier\"]\n{SMALL_ES}[adaptation]\npopulation = 4\ngenerations = 2\nbatch = 4\n"
        ),
    );
    ok(&["gen-data", "--config", p(&cfg)]);
    let data = dir.path().join("b.ds");
    let ck = dir.path().join("b.ckpt");
    ok(&["train", "--config", p(&cfg), "--out", p(&ck)]);
    let cmp = ok(&["compare-strang", "--checkpoint", p(&ck), "--data", p(&data), "--substeps", "1,2"]);
    let err = |n: &str| -> f64 {
        let line = cmp.lines().find(|l| l.contains(",id,") && l.split(',').nth(2) == Some(n)).unwrap();
        line.rsplit(',').next().unwrap().parse().unwrap()
    };
    let ratio = err("1") / err("2");
    assert!((2.5..=6.0).contains(&ratio), "Strang 1 -> 2 substeps ratio {ratio}\n{cmp}");

    let saved = dir.path().join("same.ckpt");
    ok(&[
        "transfer",
        "--checkpoint",
        p(&ck),
        "--data",
        p(&data),
        "--add-primitive",
        "nonlinear-advection",
        "--config",
        p(&cfg),
        "--save",
        p(&saved),
    ]);
    let before = Checkpoint::load(&ck).unwrap();
    let after = Checkpoint::load(&saved).unwrap();
    assert_eq!(after.model.dictionary.len(), before.model.dictionary.len());
}

#[test]
fn adr_tables_mark_crmse_not_applicable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "adr.toml",
        &format!("seed = 5\n[[benchmark]]\nsystem = \"adr2d\"\npath = \"adr.ds\"\ntrain = 4\ntest_id = 2\ntest_ood = 1\n{SMALL_ES}"),
    );
    ok(&["gen-data", "--config", p(&cfg)]);
    let data = dir.path().join("adr.ds");
    let ck = dir.path().join("adr.ckpt");
    ok(&["train", "--config", p(&cfg), "--out", p(&ck), "--generations", "1"]);
    let table = ok(&["eval", "--checkpoint", p(&ck), "--data", p(&data), "--horizons", "1,5,10,20"]);
    let rows: Vec<&str> = table.lines().filter(|l| l.starts_with("hycop,") || l.starts_with("constant,")).collect();
    assert!(rows.iter().filter(|l| l.split(',').count() == 10).all(|l| l.ends_with(",N/A")), "{table}");
    assert!(table.contains("model,split,horizon,time"));
    assert!(table.lines().any(|l| l.starts_with("hycop,id,20,")), "{table}");
}

#[test]
fn ablations_on_a_small_ad_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ad.toml",
        &format!("seed = 8\n[[benchmark]]\nsystem = \"ad1d\"\npath = \"ad.ds\"\ntrain = 12\ntest_id = 4\ntest_ood = 4\n{SMALL_ES}"),
    );
    ok(&["gen-data", "--config", p(&cfg)]);
    let data = dir.path().join("ad.ds");

    let sweep = ok(&[
        "ablate", "es-sweep", "--config", p(&cfg), "--data", p(&data), "--populations", "4", "--sigmas", "0.02",
        "--generations", "2",
    ]);
    assert_eq!(sweep.lines().count(), 2, "{sweep}");
    assert!(sweep.lines().nth(1).unwrap().starts_with("4,0.02,"));

    let ck = dir.path().join("ad.ckpt");
    ok(&["train", "--config", p(&cfg), "--out", p(&ck)]);
    let res = ok(&["ablate", "resolution-transfer", "--checkpoint", p(&ck), "--data", p(&data), "--points", "64"]);
    let rows: Vec<Vec<&str>> = res.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for (a, b) in rows[..2].iter().zip(&rows[2..]) {
        assert_eq!(a[..5], b[..5]);
    }

    let feats = ok(&["ablate", "feature-ablation", "--config", p(&cfg), "--data", p(&data)]);
    assert!(feats.lines().nth(1).unwrap().starts_with("dimensionless,"));
    assert!(feats.lines().nth(2).unwrap().starts_with("raw-ic,"));
}
