use std::io::BufReader;

use disjunct::analysis::{distance_stats, StatsMode};
use disjunct::cli;
use disjunct::concat::TestMatrix;

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (vec![], vec![]);
    let code = cli::run(std::iter::once("disjunct").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(s: &str) -> serde_json::Value {
    serde_json::from_str(s.lines().last().unwrap()).unwrap()
}

#[test]
fn construct_then_stats_matches_in_memory() {
    let dir = tempfile::tempdir().unwrap();
    for binary in [false, true] {
        let path = dir.path().join(if binary { "rs.gtmb" } else { "rs.gtm" });
        let p = path.to_str().unwrap();
        let mut args = vec!["construct", "--kind", "rs", "--q", "5", "--k", "2", "--m", "4", "--out", p];
        if binary {
            args.push("--binary");
        }
        let (code, _, err) = run(&args);
        assert_eq!(code, 0, "{err}");

        let m = TestMatrix::read(BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
        assert_eq!((m.rows(), m.cols()), (20, 25));
        let s = distance_stats(&m, StatsMode::Exact).unwrap();

        let (code, out, _) = run(&["--format", "json", "stats", p]);
        assert_eq!(code, 0);
        let rec = json(&out);
        assert_eq!(rec["D"], s.d_avg.to_string());
        assert_eq!(rec["d_min"], s.d_min.unwrap());
        assert_eq!(rec["D"], "32/5");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rs.gtm");
    let p = path.to_str().unwrap();
    assert_eq!(run(&["construct", "--kind", "rs", "--q", "4", "--k", "2", "--m", "3", "--out", p]).0, 0);
    assert_eq!(run(&["verify", p, "--t", "2"]).0, 0);
    let (code, out, _) = run(&["--format", "json", "verify", p, "--t", "3"]);
    assert_eq!(code, 1);
    assert_eq!(json(&out)["exit_code"], 1);
    assert_eq!(run(&["plan", "--n", "10", "--t", "20", "--eps", "0.1"]).0, 2);
    assert_eq!(run(&["plan", "--n", "1024", "--t", "8", "--eps", "1.5"]).0, 2);
    assert_eq!(run(&["stats", "/nonexistent/matrix.gtm"]).0, 3);
    let junk = dir.path().join("junk.gtm");
    std::fs::write(&junk, "not a matrix\n").unwrap();
    assert_eq!(run(&["stats", junk.to_str().unwrap()]).0, 3);
}

#[test]
fn plan_record_is_certified() {
    let (code, out, _) = run(&["--format", "json", "plan", "--n", "1024", "--t", "8", "--eps", "0.1", "--model", "2"]);
    assert_eq!(code, 0);
    let rec = json(&out);
    assert_eq!(rec["q"], 41);
    assert_eq!(rec["M"], 410);
    let (code, out, _) = run(&["plan", "--n", "1024", "--t", "8", "--eps", "0.1", "--model", "2"]);
    assert_eq!(code, 0);
    assert!(out.contains("q: 41"), "{out}");
}
