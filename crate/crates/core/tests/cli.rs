use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use promptcap::cli::{run, Checkpoint};
use tempfile::TempDir;

const TINY: &str = "\
model.d_model=16
model.n_layers=1
model.n_heads=2
model.d_ff=32
model.prompt_len=4
model.d_proj=8
pretrain.epochs=1
pretrain.batch_size=8
finetune.epochs=1
finetune.batch_size=8
corpus.coco=12
corpus.textcap=8
corpus.short=4
corpus.medium=4
corpus.long=4
corpus.positive=2
corpus.negative=2
corpus.eval_scenes=4
corpus.eval_refs=2
";

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Out {
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let code = run(std::iter::once("promptcap").chain(args.iter().copied()), &mut o, &mut e);
    Out {
        code,
        stdout: String::from_utf8(o).unwrap(),
        stderr: String::from_utf8(e).unwrap(),
    }
}

fn ok(args: &[&str]) -> String {
    let o = cli(args);
    assert_eq!(o.code, 0, "{args:?}: {}", o.stderr);
    o.stdout
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("run.cfg"), TINY).unwrap();
        let f = Fixture { dir };
        ok(&["gen-corpus", "--config", &f.s("run.cfg"), "--out", &f.s("corpus")]);
        f
    }

    fn p(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.p(name).display().to_string()
    }

    fn pretrain(&self, out: &str) -> String {
        ok(&[
            "pretrain",
            "--config",
            &self.s("run.cfg"),
            "--corpus",
            &self.s("corpus"),
            "--out",
            &self.s(out),
            "--trace",
            &self.s(&format!("{out}.trace")),
        ])
    }

    fn finetune(&self, init: &str, out: &str, extra: &[&str]) -> Out {
        let mut args = vec![
            "finetune".to_string(),
            "--config".into(),
            self.s("run.cfg"),
            "--corpus".into(),
            self.s("corpus"),
            "--init".into(),
            self.s(init),
            "--out".into(),
            self.s(out),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        cli(&args.iter().map(String::as_str).collect::<Vec<_>>())
    }
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn gen_corpus_is_deterministic_and_matches_its_manifest() {
    let f = Fixture::new();
    ok(&["gen-corpus", "--config", &f.s("run.cfg"), "--out", &f.s("again")]);
    for file in ["train.jsonl", "eval.jsonl", "manifest.txt"] {
        assert_eq!(read(&f.p("corpus").join(file)), read(&f.p("again").join(file)), "{file}");
    }
    let manifest = fs::read_to_string(f.p("corpus/manifest.txt")).unwrap();
    let lines = fs::read_to_string(f.p("corpus/train.jsonl")).unwrap().lines().count();
    assert!(manifest.contains(&format!("total={lines}\n")));
    assert_eq!(lines, 12 + 8 + 4 * 3 + 2 * 2);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let f = Fixture::new();
    fs::write(f.p("bad.cfg"), "model.d_model=16\nepochz=3\n").unwrap();
    let o = cli(&["gen-corpus", "--config", &f.s("bad.cfg"), "--out", &f.s("x")]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("epochz"), "{}", o.stderr);
}

#[test]
fn training_commands() {
    let f = Fixture::new();
    let report = f.pretrain("pre.ckpt");
    assert!(report.contains("phase=pretrain"));
    assert!(report.contains("epoch.0.contrastive="));

    // determinism of the whole command
    f.pretrain("pre2.ckpt");
    assert_eq!(read(&f.p("pre.ckpt.trace")), read(&f.p("pre2.ckpt.trace")));
    assert_eq!(read(&f.p("pre.ckpt")), read(&f.p("pre2.ckpt")));

    // zero epochs reproduce the input checkpoint
    let o = f.finetune("pre.ckpt", "same.ckpt", &["--epochs", "0", "--prompt-mode", "none"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(read(&f.p("same.ckpt")), read(&f.p("pre.ckpt")));

    // prompts-only needs learned prompts
    let o = f.finetune("pre.ckpt", "bad.ckpt", &["--trainable", "prompts-only", "--prompt-mode", "none"]);
    assert_eq!(o.code, 2, "{}", o.stderr);
    assert!(!f.p("bad.ckpt").exists());

    let o = f.finetune("pre.ckpt", "ft.ckpt", &["--prompt-mode", "multi-auto", "--prompt-len", "3"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.contains("prompt_mode=multi-auto"));
    let ck = Checkpoint::load(&f.p("ft.ckpt")).unwrap();
    assert_eq!(ck.model.config().prompt_len, 3);

    // inspect-prompts
    let a = ok(&["inspect-prompts", "--checkpoint", &f.s("ft.ckpt")]);
    assert_eq!(a, ok(&["inspect-prompts", "--checkpoint", &f.s("ft.ckpt")]));
    assert_eq!(a.lines().count(), 7);
    for line in a.lines() {
        let (_, words) = line.split_once('\t').unwrap();
        let words: Vec<&str> = words.split(' ').collect();
        assert_eq!(words.len(), 3);
        assert!(words.iter().all(|w| ck.vocab.contains(w)));
    }
    let o = cli(&["inspect-prompts", "--checkpoint", &f.s("pre.ckpt")]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("no learned prompts"));

    // caption
    let scenes = f.s("corpus/eval.jsonl");
    let ckpt = f.s("ft.ckpt");
    let greedy = ok(&["caption", "--checkpoint", &ckpt, "--scenes", &scenes, "--style", "short,long", "--greedy"]);
    let beam1 = ok(&["caption", "--checkpoint", &ckpt, "--scenes", &scenes, "--style", "short,long", "--beam", "1"]);
    assert_eq!(greedy, beam1);
    assert_eq!(greedy.lines().count(), 2 * 4);
    assert!(greedy.lines().all(|l| l.starts_with("short\t") || l.starts_with("long\t")));
    let o = cli(&["caption", "--checkpoint", &ckpt, "--scenes", &scenes, "--style", "poetic"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("coco, textcap, short"), "{}", o.stderr);

    // eval
    let rep = ok(&["eval", "--checkpoint", &ckpt, "--corpus", &f.s("corpus"), "--greedy", "--items", &f.s("items.csv")]);
    for line in rep.lines() {
        let (k, v) = line.split_once('=').unwrap();
        if k.starts_with("compliance.") || k.starts_with("contamination.") {
            let v: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&v), "{line}");
        }
    }
    assert!(rep.contains("loss="));
    assert!(fs::read_to_string(f.p("items.csv")).unwrap().starts_with("scene_id,style,cider"));

    // ablate: one table line per requested row
    let table = ok(&[
        "ablate",
        "--config",
        &f.s("run.cfg"),
        "--corpus",
        &f.s("corpus"),
        "--pretrained",
        &f.s("pre.ckpt"),
        "--settings",
        "1,3,9",
        "--greedy",
        "--max-len",
        "6",
    ]);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 1 + 3);
    assert!(rows[1].starts_with("1,frozen-none,"));
    assert!(rows[3].starts_with("9,joint-shared-manual,"));
}

#[test]
fn ground_truth_scores_full_bleu() {
    let f = Fixture::new();
    let rep = ok(&["eval", "--ground-truth", "--corpus", &f.s("corpus")]);
    assert!(rep.contains("bleu4=1.000000"), "{rep}");
    let o = cli(&["eval", "--ground-truth", "--corpus", &f.s("corpus"), "--style", "coco", "--split", "nope"]);
    assert_eq!(o.code, 2);
}

#[test]
fn mismatched_vocabulary_is_refused() {
    let f = Fixture::new();
    f.pretrain("pre.ckpt");
    fs::write(f.p("other.cfg"), format!("{TINY}corpus.seed=99\ncorpus.coco=60\n").replace("corpus.coco=12\n", ""))
        .unwrap();
    ok(&["gen-corpus", "--config", &f.s("other.cfg"), "--out", &f.s("other")]);
    let o = cli(&[
        "finetune",
        "--config",
        &f.s("run.cfg"),
        "--corpus",
        &f.s("other"),
        "--init",
        &f.s("pre.ckpt"),
        "--out",
        &f.s("ft.ckpt"),
    ]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("vocabulary"), "{}", o.stderr);
    assert!(!f.p("ft.ckpt").exists());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_promptcap");
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.ckpt");
    let o = Command::new(bin)
        .args(["caption", "--checkpoint"])
        .arg(&missing)
        .args(["--scenes", "x.jsonl"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(bin).args(["pretrain", "--bogus"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let help = String::from_utf8(o.stdout).unwrap();
    for sub in ["gen-corpus", "pretrain", "finetune", "caption", "eval", "ablate", "inspect-prompts"] {
        assert!(help.contains(sub), "{sub}");
    }
}
