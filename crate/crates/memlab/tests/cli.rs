use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn memlab(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_memlab"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("MEMLAB_THREADS", t),
        None => cmd.env_remove("MEMLAB_THREADS"),
    };
    cmd.output().expect("spawn memlab")
}

fn write_config(dir: &Path, out: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.ini");
    fs::write(
        &path,
        format!("output_dir = {}\nseed = 11\n\n{body}", out.display()),
    )
    .unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SPARSE: &str = "[tiny]
experiment = sparse
n = 8
d = 24
K = 1
eta = 0.2
reps = 400
sigma2 = 0.1, 1
";

const ISOTROPIC: &str = "[small]
experiment = isotropic
n = 30
d = 90
seeds = 2
sigma2 = 0.01, 1, 100
estimators = bayes, ridge:1
cost_sigma2 = 1
reps = 200
";

#[test]
fn list_experiments_names_every_kind() {
    let o = memlab(&["list-experiments"], None);
    assert!(o.status.success());
    let text = stdout(&o);
    for kind in [
        "isotropic",
        "lowrank",
        "lowrank-exact",
        "sparse",
        "scalar",
        "rmt-convergence",
        "bounds-audit",
    ] {
        assert!(
            text.lines().any(|l| l.starts_with(kind)),
            "{kind} missing from:\n{text}"
        );
    }
}

#[test]
fn config_errors_name_the_field() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        (
            "[a]\nexperiment = isotropic\nn = 10\nd = 30\nsigma2 = banana\n",
            "sigma2",
        ),
        ("[a]\nexperiment = isotropic\nn = 10\nsigma2 = 1\n", "d"),
        (
            "[a]\nexperiment = sparse\nn = 10\nd = 30\nK = 1\neta = 0.1\nsigma2 = 1\nwidth = 3\n",
            "width",
        ),
        (
            "[a]\nexperiment = scalar\neta = 0.1\nextremum = maybe\n",
            "extremum",
        ),
    ];
    for (body, field) in cases {
        let cfg = write_config(tmp.path(), &tmp.path().join("out"), body);
        let o = memlab(&["run", cfg.to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(2), "{body}");
        assert!(
            stderr(&o).contains(&format!("`{field}`")),
            "expected `{field}` in: {}",
            stderr(&o)
        );
    }
    let o = memlab(
        &["run", tmp.path().join("absent.ini").to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn outputs_are_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let mut contents = Vec::new();
    for threads in ["1", "2"] {
        let out = tmp.path().join(format!("out{threads}"));
        let cfg = write_config(tmp.path(), &out, SPARSE);
        let o = memlab(&["run", cfg.to_str().unwrap()], Some(threads));
        assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
        let dir = out.join("sparse");
        let mut files: Vec<_> = fs::read_dir(&dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        contents.push(
            files
                .iter()
                .map(|p| (p.file_name().unwrap().to_owned(), fs::read(p).unwrap()))
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(contents[0].len(), 2);
    assert_eq!(contents[0], contents[1]);
}

#[test]
fn manifest_records_hashes_and_seeds() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &out, ISOTROPIC);
    let o = memlab(&["run", cfg.to_str().unwrap()], Some("1"));
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));

    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["passed"], true);
    assert_eq!(m["threads"], 1);
    let config_hash = memlab::output::blob_hash(&fs::read(&cfg).unwrap());
    assert_eq!(m["config_hash"], config_hash.as_str());

    let run = &m["runs"][0];
    assert_eq!(run["name"], "small");
    assert_eq!(run["config"]["d"], "90");
    let outputs = run["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 3);
    for f in outputs {
        let path = PathBuf::from(f["path"].as_str().unwrap());
        assert!(path.starts_with(out.join("isotropic")));
        assert_eq!(
            f["sha256"],
            memlab::output::blob_hash(&fs::read(&path).unwrap()).as_str()
        );
    }
    let ledger = m["seed_ledger"].as_array().unwrap();
    assert!(!ledger.is_empty());
    assert!(ledger
        .iter()
        .all(|e| e["run"] == "small" && e["seed"].is_u64()));
}

#[test]
fn failed_checks_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    // n = 30 is far from the limit, so a 1e-9 tolerance cannot hold
    let body = format!("{ISOTROPIC}tolerance = 1e-9\n");
    let cfg = write_config(tmp.path(), &out, &body);
    let o = memlab(&["run", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAILED"));
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["passed"], false);
    assert!(!m["runs"][0]["failures"].as_array().unwrap().is_empty());
}
