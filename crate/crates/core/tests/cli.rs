use flexseg::grid::{generate_radial, network_to_json};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn flexseg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flexseg"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn files(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    v.sort();
    v
}

fn small_network(dir: &Path) -> String {
    let net = generate_radial(8, 2, 3).unwrap();
    let path = dir.join("small.json");
    std::fs::write(&path, network_to_json(&net)).unwrap();
    path.to_string_lossy().into_owned()
}

fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).expect("machine-parsable error")
}

#[test]
fn opf_writes_a_tagged_record_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = flexseg(
        tmp.path(),
        &[
            "opf",
            "--network",
            "case33",
            "--direction",
            "-p",
            "--out-dir",
            "o",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = files(&tmp.path().join("o"), ".csv");
    assert_eq!(csv.len(), 1);
    let name = csv[0].file_name().unwrap().to_string_lossy().into_owned();
    assert!(name.starts_with("case33_opf_"), "{name}");
    let text = std::fs::read_to_string(&csv[0]).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(
        lines.next().unwrap(),
        "record,id,p_kW,q_kVAr,v_pu,l_pu,activation"
    );
    assert!(lines.next().unwrap().starts_with("interface,1,"));
    assert_eq!(text.lines().filter(|l| l.starts_with("bus,")).count(), 33);
    assert_eq!(
        text.lines().filter(|l| l.starts_with("branch,")).count(),
        32
    );
    assert_eq!(text.lines().filter(|l| l.starts_with("unit,")).count(), 5);
    // -p lowers consumption below the +p optimum.
    let p = |dir: &str| {
        let out = flexseg(
            tmp.path(),
            &[
                "opf",
                "--network",
                "case33",
                "--direction",
                dir,
                "--out-dir",
                "o",
            ],
        );
        let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
        stdout
            .lines()
            .find_map(|l| l.strip_prefix("interface_p_kW "))
            .unwrap()
            .parse::<f64>()
            .unwrap()
    };
    assert!(p("-p") < p("+p"));
}

#[test]
fn debug_dumps_are_written() {
    let tmp = tempfile::tempdir().unwrap();
    let out = flexseg(
        tmp.path(),
        &[
            "opf",
            "--network",
            "case33",
            "--cardinality",
            "2",
            "--dump-program",
            "prog.txt",
            "--node-log",
            "nodes.txt",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let prog = std::fs::read_to_string(tmp.path().join("prog.txt")).unwrap();
    assert!(prog.lines().count() > 50);
    let nodes = std::fs::read_to_string(tmp.path().join("nodes.txt")).unwrap();
    assert!(nodes.lines().count() >= 3);
}

#[test]
fn exit_codes_are_distinct() {
    let tmp = tempfile::tempdir().unwrap();
    let parse = flexseg(tmp.path(), &["area", "--network", "case33", "--bogus"]);
    assert_eq!(parse.status.code(), Some(2));
    assert_eq!(error_line(&parse)["error"], "parse");

    std::fs::write(tmp.path().join("bad.toml"), "k = [").unwrap();
    let parse = flexseg(tmp.path(), &["area", "--config", "bad.toml"]);
    assert_eq!(parse.status.code(), Some(2));

    let validation = flexseg(tmp.path(), &["area", "--network", "case33", "--k", "0"]);
    assert_eq!(validation.status.code(), Some(3));
    assert_eq!(error_line(&validation)["error"], "validation");

    // A load larger than the line rating admits no operating point.
    let mut net: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(small_network(tmp.path())).unwrap()).unwrap();
    for b in net["branches"].as_array_mut().unwrap() {
        b["s_max"] = serde_json::json!(1.0);
    }
    std::fs::write(tmp.path().join("tight.json"), net.to_string()).unwrap();
    let infeasible = flexseg(tmp.path(), &["opf", "--network", "tight.json"]);
    assert_eq!(
        infeasible.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&infeasible.stderr)
    );
    assert_eq!(error_line(&infeasible)["error"], "infeasible");
    assert_eq!(
        String::from_utf8_lossy(&infeasible.stderr).lines().count(),
        1
    );
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let net = small_network(tmp.path());
    std::fs::write(
        tmp.path().join("run.toml"),
        format!("network = {net:?}\nk = 4\nseed = 9\nout_dir = \"from-file\"\n"),
    )
    .unwrap();
    let out = flexseg(tmp.path(), &["area", "--config", "run.toml", "--k", "2"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let echoed = files(&tmp.path().join("from-file"), ".config.toml");
    assert_eq!(echoed.len(), 1);
    let cfg: toml::Table = std::fs::read_to_string(&echoed[0])
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(cfg["k"].as_integer(), Some(2));
    assert_eq!(cfg["seed"].as_integer(), Some(9));
    assert_eq!(cfg["max_segments"].as_integer(), Some(256));
}

#[test]
fn reruns_reproduce_result_files() {
    let tmp = tempfile::tempdir().unwrap();
    let net = small_network(tmp.path());
    for dir in ["a", "b"] {
        let out = flexseg(
            tmp.path(),
            &[
                "area",
                "--network",
                &net,
                "--k",
                "3",
                "--samples",
                "50",
                "--out-dir",
                dir,
            ],
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    // The echoed configs differ only in out_dir; every result file matches.
    let results = |d: &str| -> Vec<PathBuf> {
        files(&tmp.path().join(d), "")
            .into_iter()
            .filter(|p| !p.to_string_lossy().ends_with(".config.toml"))
            .collect()
    };
    let (a, b) = (results("a"), results("b"));
    assert_eq!(a.len(), 3);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(
            std::fs::read(x).unwrap(),
            std::fs::read(y).unwrap(),
            "{}",
            x.display()
        );
    }
}

#[test]
fn segmentation_commands_write_document_chart_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let net = small_network(tmp.path());
    let out = flexseg(
        tmp.path(),
        &[
            "segment-count",
            "--network",
            &net,
            "--k",
            "2",
            "--out-dir",
            "c",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dir = tmp.path().join("c");
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&files(&dir, ".json")[0]).unwrap()).unwrap();
    assert_eq!(doc["segmentation"]["segments"].as_array().unwrap().len(), 3);
    assert_eq!(doc["config_hash"].as_str().unwrap().len(), 64);
    let summary = std::fs::read_to_string(&files(&dir, ".summary.csv")[0]).unwrap();
    assert_eq!(summary.lines().count(), 2 + 3);
    assert!(std::fs::read_to_string(&files(&dir, ".svg")[0])
        .unwrap()
        .starts_with("<!-- config_hash="));

    let out = flexseg(
        tmp.path(),
        &[
            "segment-prob",
            "--network",
            &net,
            "--k",
            "2",
            "--threshold",
            "0.5",
            "--out-dir",
            "p",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("envelope_area"), "{stdout}");

    let json = files(&dir, ".json")[0].to_string_lossy().into_owned();
    let out = flexseg(
        tmp.path(),
        &[
            "render",
            "--network",
            &net,
            "--segmentation",
            &json,
            "--out-dir",
            "r",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(files(&tmp.path().join("r"), ".svg").len(), 1);
}

#[test]
fn bench_defaults_to_five_repeats() {
    let tmp = tempfile::tempdir().unwrap();
    let net = small_network(tmp.path());
    let out = flexseg(
        tmp.path(),
        &["bench", "--network", &net, "--k", "1", "--out-dir", "b"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&files(&tmp.path().join("b"), ".csv")[0]).unwrap();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap(), vec!["segment", "repeat", "ms"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    // Two units give three levels.
    assert_eq!(rows.len(), 3 * 5);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn network_diagram_renders() {
    let tmp = tempfile::tempdir().unwrap();
    let out = flexseg(
        tmp.path(),
        &["render", "--network", "case33", "--out-dir", "n"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let svg = std::fs::read_to_string(&files(&tmp.path().join("n"), ".svg")[0]).unwrap();
    assert_eq!(svg.matches("<circle").count(), 33);
}
