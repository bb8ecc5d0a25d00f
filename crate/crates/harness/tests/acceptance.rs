//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use eqdiff_harness::config::{BatchSection, ConfigFile, IntegratorSection};
use eqdiff_harness::scenario::registry;
use eqdiff_harness::{run_suite, CheckRecord, Group, Report, RunConfig};

struct Run {
    report: Report,
    elapsed: Duration,
}

fn file(scenario: &str, tolerances: &[(&str, f64)]) -> ConfigFile {
    ConfigFile {
        scenario: Some(scenario.to_string()),
        tolerances: tolerances.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
        ..Default::default()
    }
}

fn run(file: ConfigFile, groups: &[Group]) -> Run {
    let cfg = RunConfig::resolve(file, "s2-frames").expect("acceptance configuration resolves");
    let start = Instant::now();
    let report = run_suite(&cfg, "acceptance", groups);
    Run { report, elapsed: start.elapsed() }
}

/// Every record of the listed ids, failing if an id produced none.
fn gather<'a>(runs: &'a [&Run], ids: &[&str]) -> (Vec<&'a CheckRecord>, Vec<String>) {
    let mut out = Vec::new();
    let mut missing = Vec::new();
    for id in ids {
        let found: Vec<_> = runs.iter().flat_map(|r| r.report.records.iter()).filter(|r| r.check_id == *id).collect();
        if found.is_empty() {
            missing.push(format!("no record for {id}"));
        }
        out.extend(found);
    }
    (out, missing)
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(runs: &[&Run], ids: &[&str], budget: Duration) -> Verdict {
    let (records, mut problems) = gather(runs, ids);
    for r in records.iter().filter(|r| !r.pass) {
        problems.push(r.line());
    }
    let slowest = runs.iter().map(|r| r.elapsed).max().unwrap_or_default();
    if slowest > budget {
        problems.push(format!("took {:.1} s, budget {:.0} s", slowest.as_secs_f64(), budget.as_secs_f64()));
    }
    let detail = if problems.is_empty() {
        let ranges = ids
            .iter()
            .map(|id| {
                let vs: Vec<f64> = records.iter().filter(|r| r.check_id == *id).filter_map(|r| r.value).collect();
                if vs.is_empty() {
                    return format!("{id} at rounding level");
                }
                let lo = vs.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                format!("{id} [{lo:.2e}, {hi:.2e}]")
            })
            .collect::<Vec<_>>();
        format!("{} in {:.2} s", ranges.join(", "), slowest.as_secs_f64())
    } else {
        problems.join(" | ")
    };
    Verdict { pass: problems.is_empty(), detail }
}

fn main() -> ExitCode {
    let mut verdicts: Vec<(&str, Verdict)> = Vec::new();
    let minute = Duration::from_secs(60);

    let geometry_tols = [
        ("geometry.symbol-diagram", 1e-8),
        ("geometry.lift-preimage", 1e-8),
        ("geometry.delta-generator", 1e-6),
        ("geometry.delta-leibniz", 1e-6),
    ];
    let frames_geo = run(file("s2-frames", &geometry_tols), &[Group::Geometry]);
    let so2_geo = run(file("trivial-bundle-so2", &geometry_tols), &[Group::Geometry]);
    verdicts.push((
        "symbol diagram of lifted operators",
        verdict(&[&frames_geo, &so2_geo], &["geometry.symbol-diagram"], Duration::from_secs(5)),
    ));
    verdicts.push((
        "horizontal lift independent of covector preimage",
        verdict(&[&frames_geo, &so2_geo], &["geometry.lift-preimage"], Duration::from_secs(5)),
    ));

    let others: Vec<Run> = registry()
        .iter()
        .filter(|s| s.name != "s2-frames" && s.name != "trivial-bundle-so2")
        .map(|s| run(file(s.name, &geometry_tols), &[Group::Geometry]))
        .collect();
    let mut all_geo: Vec<&Run> = vec![&frames_geo, &so2_geo];
    all_geo.extend(others.iter());
    verdicts.push((
        "delta operator axioms",
        verdict(&all_geo, &["geometry.delta-generator", "geometry.delta-leibniz"], minute),
    ));

    let decompose_tols = [
        ("decompose.verticality", 1e-5),
        ("decompose.verticality-control", 1e-3),
        ("decompose.ad-equivariance", 1e-5),
        ("decompose.completion-invariance", 1e-6),
        ("decompose.horizontal-redecomposition", 1e-8),
        ("decompose.weitzenbock-two-way", 1e-4),
        ("decompose.weitzenbock-ricci", 1e-4),
    ];
    let frames_dec = run(file("s2-frames", &decompose_tols), &[Group::Decompose]);
    let so2_dec = run(file("trivial-bundle-so2", &decompose_tols), &[Group::Decompose]);
    verdicts.push((
        "horizontal and vertical decomposition",
        verdict(
            &[&frames_dec, &so2_dec],
            &[
                "decompose.verticality",
                "decompose.verticality-control",
                "decompose.ad-equivariance",
                "decompose.completion-invariance",
                "decompose.horizontal-redecomposition",
            ],
            minute,
        ),
    ));
    verdicts.push((
        "Weitzenbock term on the sphere frame bundle",
        verdict(&[&frames_dec], &["decompose.weitzenbock-two-way", "decompose.weitzenbock-ricci"], Duration::from_secs(30)),
    ));

    let mut skew_file = file("s2-frames", &[("skew.reconstruction-order", 0.8), ("skew.concatenation-order", 0.8)]);
    skew_file.integrator = IntegratorSection { dt: Some(1e-3), t_end: None, levels: Some(4) };
    skew_file.batch = BatchSection { paths: Some(16), split: Some(0.5), ..Default::default() };
    let skew = run(skew_file, &[Group::Skew]);
    verdicts.push((
        "pathwise skew product refinement",
        verdict(&[&skew], &["skew.reconstruction-order", "skew.concatenation-order"], 2 * minute),
    ));

    let mut small_file = file("s2-frames", &[("skew.small-time", 3.0)]);
    small_file.batch = BatchSection { mc_paths: Some(100_000), small_time: Some(0.01), ..Default::default() };
    let small = run(small_file, &[Group::SmallTime]);
    verdicts.push(("small-time action on lifted one-forms", verdict(&[&small], &["skew.small-time"], 5 * minute)));

    let mut diffeo_file = file(
        "s1-rank1",
        &[
            ("diffeo.lift-order", 0.8),
            ("diffeo.glm-order", 0.8),
            ("diffeo.split-correlation", 3.0),
            ("diffeo.composite-fixed-point", 1.0),
        ],
    );
    diffeo_file.batch = BatchSection { cloud: Some(256), correlation_paths: Some(10_000), ..Default::default() };
    let diffeo = run(diffeo_file, &[Group::Diffeo]);
    verdicts.push((
        "flows of diffeomorphisms on the circle",
        verdict(
            &[&diffeo],
            &[
                "diffeo.lift-order",
                "diffeo.noise-reconstruction",
                "diffeo.split-correlation",
                "diffeo.glm-order",
                "diffeo.composite-fixed-point",
            ],
            5 * minute,
        ),
    ));

    let replay = || {
        let mut f = file("trivial-bundle-so2", &[]);
        f.batch = BatchSection { paths: Some(4), mc_paths: Some(2_000), correlation_paths: Some(500), ..Default::default() };
        let a = run(f, &Group::ALL).report;
        let mut f = file("s1-rank1", &[]);
        f.batch = BatchSection { paths: Some(4), mc_paths: Some(2_000), correlation_paths: Some(500), ..Default::default() };
        let b = run(f, &[Group::Diffeo, Group::Skew]).report;
        (a.digest().expect("report serializes"), b.digest().expect("report serializes"))
    };
    let (first, second) = (replay(), replay());
    verdicts.push((
        "same seed gives a bit-identical report",
        Verdict {
            pass: first == second,
            detail: format!("sha256 {} / {} vs {} / {}", &first.0[..12], &first.1[..12], &second.0[..12], &second.1[..12]),
        },
    ));

    let mut failed = 0;
    for (k, (name, v)) in verdicts.iter().enumerate() {
        println!("{} criterion {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, k + 1, v.detail);
        failed += usize::from(!v.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} criteria failed", verdicts.len());
        ExitCode::FAILURE
    }
}
