use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = "\
# small enough to finish in a blink
per_class_train = 10
per_class_test = 5
feature_dim = 16
wake_epochs = 1
batch_size = 8
gan_epochs = 1
gan_batch_size = 8
latent_dim = 8
generator_hidden = 16
discriminator_hidden = 16
sleep_batches_per_task = 1
sleep_batch_size = 8
";

fn mygo(args: &[&str], data: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mygo")).args(args).env("MYGO_DATA_DIR", data).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn idx(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    dims.iter().for_each(|d| out.extend_from_slice(&d.to_be_bytes()));
    out.extend_from_slice(payload);
    out
}

/// Digit `c` is a bright band at rows 2c..2c+3 with a little pixel noise.
fn write_fake_mnist(dir: &Path, per_class: usize, prefix: &str, seed: &mut u32) {
    let (mut pixels, mut labels) = (Vec::new(), Vec::new());
    for i in 0..per_class * 10 {
        let c = i % 10;
        for p in 0..784 {
            *seed = seed.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
            let row = p / 28;
            let band = row >= 2 * c && row < 2 * c + 3;
            pixels.push(if band { 200 + (*seed >> 28) as u8 } else { (*seed >> 27) as u8 });
        }
        labels.push(c as u8);
    }
    let n = labels.len() as u32;
    fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), idx(0x803, &[n, 28, 28], &pixels)).unwrap();
    fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), idx(0x801, &[n], &labels)).unwrap();
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mnist = dir.path().join("data/mnist");
        fs::create_dir_all(&mnist).unwrap();
        let mut seed = 17;
        write_fake_mnist(&mnist, 12, "train", &mut seed);
        write_fake_mnist(&mnist, 6, "t10k", &mut seed);
        fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
        Self { dir }
    }

    fn data(&self) -> PathBuf {
        self.dir.path().join("data")
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, out: &str, extra: &[&str]) -> Output {
        let cfg = self.path("tiny.cfg");
        let out_set = format!("out_dir={}", self.path(out).display());
        let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--set", &out_set];
        for e in extra {
            args.extend(["--set", e]);
        }
        mygo(&args, &self.data())
    }
}

fn without_timings(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let obj = v.as_object_mut().unwrap();
    obj.remove("timings_ms");
    // Output locations differ between the two runs on purpose.
    obj["config"].as_object_mut().unwrap().remove("out_dir");
    v
}

#[test]
fn run_both_writes_every_artifact() {
    let fx = Fixture::new();
    let o = fx.run("out", &["strategy=both"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("MyGO: final average accuracy"), "{text}");
    assert!(text.contains("Fine-tuning: final average accuracy"), "{text}");
    for rel in [
        "out/mygo/report.json",
        "out/mygo/matrix.csv",
        "out/mygo/final_table.txt",
        "out/mygo/model.mygo",
        "out/finetune/report.json",
        "out/finetune/model.mygo",
        "out/comparison.txt",
        "out/accuracy.svg",
    ] {
        assert!(fx.path(rel).is_file(), "missing {rel}");
    }
    for t in 1..=5 {
        assert!(fx.path(&format!("out/mygo/memories/task_{t}.mygo")).is_file());
    }
    assert!(!fx.path("out/finetune/memories").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fx.path("out/mygo/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["per_class_train"], "10");
    assert_eq!(report["seed"], 42);
}

#[test]
fn identical_invocations_give_identical_reports() {
    let fx = Fixture::new();
    assert!(fx.run("a", &["strategy=mygo"]).status.success());
    assert!(fx.run("b", &["strategy=mygo"]).status.success());
    assert_eq!(without_timings(&fx.path("a/mygo/report.json")), without_timings(&fx.path("b/mygo/report.json")));
    assert_eq!(fs::read(fx.path("a/mygo/model.mygo")).unwrap(), fs::read(fx.path("b/mygo/model.mygo")).unwrap());
}

#[test]
fn missing_data_is_an_io_error_naming_the_path() {
    let fx = Fixture::new();
    let o = mygo(&["run", "--set", "data_dir=/nonexistent/mygo-data"], &fx.data());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/mygo-data/mnist"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_with_the_line() {
    let fx = Fixture::new();
    let cfg = fx.path("bad.cfg");
    fs::write(&cfg, "seed = 1\nlr_fast = 0.001\nlr_slow = 0.01\n").unwrap();
    let o = mygo(&["run", "--config", cfg.to_str().unwrap()], &fx.data());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = mygo(&["run", "--set", "colour=blue"], &fx.data());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));
}

#[test]
fn eval_reproduces_the_final_row() {
    let fx = Fixture::new();
    assert!(fx.run("out", &["strategy=mygo"]).status.success());
    let model = fx.path("out/mygo/model.mygo");
    let cfg = fx.path("tiny.cfg");
    let eval_out = fx.path("eval");
    let o = mygo(
        &[
            "eval",
            "--model",
            model.to_str().unwrap(),
            "--benchmark",
            "split_mnist",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            eval_out.to_str().unwrap(),
        ],
        &fx.data(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 5);
    let csv = fs::read_to_string(fx.path("out/mygo/matrix.csv")).unwrap();
    let last: Vec<&str> = csv.lines().last().unwrap().split(',').collect();
    for (t, line) in lines.iter().enumerate() {
        assert_eq!(line, &format!("task {}: {}%", t + 1, last[t + 1]));
    }
    let eval_csv = fs::read_to_string(eval_out.join("eval.csv")).unwrap();
    assert_eq!(eval_csv.lines().last().unwrap(), csv.lines().last().unwrap());
}

#[test]
fn dream_writes_a_pgm_grid() {
    let fx = Fixture::new();
    assert!(fx.run("out", &["strategy=mygo"]).status.success());
    let mem = fx.path("out/mygo/memories/task_2.mygo");
    let pgm = fx.path("grid.pgm");
    let o = mygo(&["dream", "--memory", mem.to_str().unwrap(), "--out", pgm.to_str().unwrap(), "--grid", "4x4"], &fx.data());
    assert!(o.status.success(), "{}", stderr(&o));
    let bytes = fs::read(&pgm).unwrap();
    let header = b"P5\n112 112\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 112 * 112);

    let o = mygo(&["dream", "--memory", mem.to_str().unwrap(), "--out", pgm.to_str().unwrap(), "--grid", "4by4"], &fx.data());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn dream_on_text_memory_is_a_domain_error() {
    let fx = Fixture::new();
    let o = fx.run("text", &["strategy=mygo", "benchmark=split_text", "text_source=synthetic", "min_freq=1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mem = fx.path("text/mygo/memories/task_1.mygo");
    let pgm = fx.path("text.pgm");
    let o = mygo(&["dream", "--memory", mem.to_str().unwrap(), "--out", pgm.to_str().unwrap()], &fx.data());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("not visualizable"), "{}", stderr(&o));
    assert!(!pgm.exists());
}

#[test]
fn report_combines_saved_runs() {
    let fx = Fixture::new();
    assert!(fx.run("out", &["strategy=both"]).status.success());
    let combined = fx.path("combined");
    let o = mygo(&["report", fx.path("out").to_str().unwrap(), "--out", combined.to_str().unwrap()], &fx.data());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(combined.join("comparison.txt")).unwrap(),
        fs::read_to_string(fx.path("out/comparison.txt")).unwrap()
    );
    assert_eq!(fs::read(combined.join("accuracy.svg")).unwrap(), fs::read(fx.path("out/accuracy.svg")).unwrap());

    let o = mygo(&["report", fx.path("nowhere").to_str().unwrap(), "--out", combined.to_str().unwrap()], &fx.data());
    assert_eq!(o.status.code(), Some(2));
}
