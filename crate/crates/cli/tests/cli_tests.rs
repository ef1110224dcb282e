use std::fs;
use std::path::{Path, PathBuf};

use fsal::acquisition::AcquisitionFn;
use fsal::engine::{per_class_gap_report, ExperimentResult};
use fsal_cli::{
    cmd_gap_chart, cmd_plot, cmd_run, config_hash, curve, gap_chart_svg, learning_curve_svg,
    parse_config, parse_config_str, parse_shared_letters, read_result, resolved_toml, CliError,
    RunManifest, RunOptions, MANIFEST_FILE, RESOLVED_CONFIG, RESULT_CSV, RESULT_JSON,
};
use sha2::{Digest, Sha256};

const TINY: &str = r#"
name = "tiny"
seeds = [1, 2]
query_size = 10
rounds = 2

[corpus.source]
kind = "synthetic"
per_class = 8
resolution = 8
max_shift = 1

[train]
epochs = 2
batch_size = 16

[acquisition]
passes = 2

[arch]
input_resolution = 8
conv_blocks = [{ filters = 2, kernel_size = 3, dropout = 0.25 }]
fc_layers = [{ width = 8, dropout = 0.5 }]
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(format!("{name}.toml"));
    fs::write(&path, text).unwrap();
    path
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn minimal_config_fills_defaults() {
    let c = parse_config_str(
        "seeds = [5]\n[corpus.source]\nkind = \"synthetic\"\nper_class = 4\n",
        Path::new("."),
    )
    .unwrap();
    assert_eq!(c.train.epochs, 50);
    assert_eq!(c.train.batch_size, 128);
    assert_eq!(c.train.learning_rate, 1e-3);
    assert_eq!(c.acquisition.passes, 20);
    assert_eq!(c.acquisition.function, AcquisitionFn::VariationRatio);
    assert_eq!(c.split.initial_per_class, 2);
    assert_eq!(c.arch.class_count, 24);
    assert_eq!(c.arch.input_resolution, 28);
}

#[test]
fn unknown_and_invalid_keys_are_named() {
    let err = parse_config_str(
        "seeds = [1]\nqueery_size = 3\n[corpus.source]\nkind = \"synthetic\"\nper_class = 4\n",
        Path::new("."),
    )
    .unwrap_err()
    .to_string();
    assert!(err.contains("queery_size"), "{err}");
    assert!(err.contains("line 2"), "{err}");

    let err = parse_config_str(
        "seeds = [1]\n[train]\nepochs = \"many\"\n[corpus.source]\nkind = \"synthetic\"\nper_class = 4\n",
        Path::new("."),
    )
    .unwrap_err()
    .to_string();
    assert!(err.contains("train.epochs"), "{err}");

    let err = parse_config_str(
        "seeds = [1]\nquery_size = 0\n[corpus.source]\nkind = \"synthetic\"\nper_class = 4\n",
        Path::new("."),
    )
    .unwrap_err()
    .to_string();
    assert!(err.contains("query_size"), "{err}");
}

#[test]
fn resolved_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let c = parse_config(write_config(dir.path(), "tiny", TINY)).unwrap();
    let text = resolved_toml(&c).unwrap();
    let again = parse_config_str(&text, Path::new("/elsewhere")).unwrap();
    assert_eq!(c, again);
    assert_eq!(config_hash(&c).unwrap(), config_hash(&again).unwrap());
}

#[test]
fn relative_paths_resolve_against_the_config() {
    let c = parse_config(configs_dir().join("csl.toml")).unwrap();
    match &c.corpus.source {
        fsal::engine::CorpusSource::ImageDir { path } => {
            assert!(path.is_absolute() || path.starts_with(configs_dir()));
            assert!(path.ends_with("../data/csl"));
        }
        other => panic!("unexpected source {other:?}"),
    }
}

#[test]
fn shipped_configs_carry_the_published_batch_sizes() {
    let expect = [
        ("asl.toml", 10, 0.1),
        ("asl-random.toml", 10, 0.1),
        ("csl.toml", 5, 0.3),
        ("gsl.toml", 50, 0.1),
        ("isl.toml", 50, 0.1),
        ("isl-pretrain-gsl.toml", 50, 0.1),
    ];
    for (file, b, test) in expect {
        let c = parse_config(configs_dir().join(file)).unwrap();
        assert_eq!(c.query_size, b, "{file}");
        assert_eq!(c.split.test_fraction, test, "{file}");
        assert_eq!(c.split.initial_per_class, 2, "{file}");
    }
    let pre = parse_config(configs_dir().join("isl-pretrain-gsl.toml")).unwrap();
    assert!(pre.pretrain.is_some());
    assert_eq!(pre.seeds, vec![1, 2, 3, 4, 5]);
    let rnd = parse_config(configs_dir().join("asl-random.toml")).unwrap();
    assert_eq!(rnd.acquisition.function, AcquisitionFn::Random);
    parse_config(configs_dir().join("synthetic-smoke.toml")).unwrap();
}

fn run_tiny(root: &Path, text: &str, opts: &RunOptions) -> PathBuf {
    let cfg = write_config(root, "tiny", text);
    cmd_run(&cfg, &root.join("runs"), opts).unwrap()
}

fn csv_rows(dir: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join(RESULT_CSV))
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn run_writes_parseable_artifacts_and_refuses_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_tiny(tmp.path(), TINY, &RunOptions::default());
    for f in [MANIFEST_FILE, RESOLVED_CONFIG, RESULT_JSON, RESULT_CSV] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert!(manifest.finished_at.is_some());
    assert_eq!(manifest.round_seconds.len(), 2 * 3);
    let result = read_result(&dir).unwrap();
    assert_eq!(result.planned_rounds, 2);
    let resolved = parse_config(dir.join(RESOLVED_CONFIG)).unwrap();
    assert_eq!(resolved, result.config);
    assert_eq!(manifest.config_hash, config_hash(&resolved).unwrap());

    let rows = csv_rows(&dir);
    assert_eq!(
        rows[0][..4],
        ["seed", "round", "labeled_count", "test_accuracy"]
    );
    assert_eq!(rows[0].len(), 4 + 24);
    assert_eq!(rows.len() - 1, 2 * (2 + 1));
    for (row, (replica, rec)) in rows[1..].iter().zip(
        result
            .replicas
            .iter()
            .flat_map(|r| r.rounds.iter().map(move |rec| (r, rec))),
    ) {
        assert_eq!(row[0].parse::<u64>().unwrap(), replica.seed);
        assert_eq!(row[2].parse::<usize>().unwrap(), rec.labeled_count);
        assert_eq!(row[3].parse::<f64>().unwrap(), rec.test_accuracy);
    }

    let cfg = tmp.path().join("tiny.toml");
    let again = cmd_run(&cfg, &tmp.path().join("runs"), &RunOptions::default());
    assert!(matches!(again, Err(CliError::Exists(_))));
    let forced = cmd_run(
        &cfg,
        &tmp.path().join("runs"),
        &RunOptions {
            force: true,
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert_eq!(forced, dir);
    assert_eq!(read_result(&forced).unwrap(), result);
}

#[test]
fn seed_override_changes_the_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_tiny(tmp.path(), TINY, &RunOptions::default());
    let b = run_tiny(
        tmp.path(),
        TINY,
        &RunOptions {
            seed_override: Some(vec![7]),
            ..RunOptions::default()
        },
    );
    assert_ne!(a, b);
    let r = read_result(&b).unwrap();
    assert_eq!(r.replicas.len(), 1);
    assert_eq!(r.replicas[0].seed, 7);
}

fn attr_values(svg: &str, element: &str, attr: &str) -> Vec<String> {
    svg.lines()
        .filter(|l| l.contains(element))
        .filter_map(|l| {
            let key = format!("{attr}=\"");
            let start = l.find(&key)? + key.len();
            let end = start + l[start..].find('"')?;
            Some(l[start..end].to_string())
        })
        .collect()
}

#[test]
fn plot_vertices_equal_csv_accuracies() {
    let tmp = tempfile::tempdir().unwrap();
    let single = TINY.replace("seeds = [1, 2]", "seeds = [4]");
    let dir = run_tiny(tmp.path(), &single, &RunOptions::default());
    let out = tmp.path().join("curve.svg");
    cmd_plot(&[&dir], &out).unwrap();
    let svg = fs::read_to_string(&out).unwrap();
    let acc: Vec<f64> = attr_values(&svg, "<circle", "data-accuracy")
        .iter()
        .map(|v| v.parse().unwrap())
        .collect();
    let csv: Vec<f64> = csv_rows(&dir)[1..]
        .iter()
        .map(|r| r[3].parse().unwrap())
        .collect();
    assert_eq!(acc, csv);
    let labeled: Vec<f64> = attr_values(&svg, "<circle", "data-labeled")
        .iter()
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(labeled, vec![48.0, 58.0, 68.0]);
    assert!(svg.contains("labels acquired"));
    assert!(svg.contains("test accuracy"));
}

#[test]
fn plot_is_deterministic_and_has_one_legend_entry_per_result() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_tiny(tmp.path(), TINY, &RunOptions::default());
    let rnd = TINY.replace("passes = 2", "passes = 2\nfunction = \"random\"");
    let b = run_tiny(
        tmp.path(),
        &rnd.replace("\"tiny\"", "\"tiny-random\""),
        &RunOptions::default(),
    );
    let results = [read_result(&a).unwrap(), read_result(&b).unwrap()];
    let svg = learning_curve_svg(&results).unwrap();
    assert_eq!(svg.matches("class=\"legend-entry\"").count(), 2);
    assert!(svg.contains("tiny-random"));

    let digest = |s: &str| Sha256::digest(s.as_bytes());
    let p1 = tmp.path().join("1.svg");
    let p2 = tmp.path().join("2.svg");
    cmd_plot(&[&a, &b], &p1).unwrap();
    cmd_plot(&[&a, &b], &p2).unwrap();
    assert_eq!(
        digest(&fs::read_to_string(&p1).unwrap()),
        digest(&fs::read_to_string(&p2).unwrap())
    );
    assert_eq!(fs::read_to_string(&p1).unwrap(), svg);

    // Band spans the per-round min and max across seeds.
    for p in curve(&results[0]) {
        assert!(p.min <= p.mean && p.mean <= p.max);
    }

    let mut other = results[1].clone();
    other.corpus.name = "elsewhere".into();
    assert!(learning_curve_svg(&[results[0].clone(), other]).is_err());
}

#[test]
fn gap_chart_reports_per_letter_values() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_tiny(tmp.path(), TINY, &RunOptions::default());
    let result: ExperimentResult = read_result(&a).unwrap();
    let shared_file = tmp.path().join("shared.txt");
    fs::write(&shared_file, "# letters seen in pre-training\nA, B\nY\n").unwrap();
    assert_eq!(
        parse_shared_letters(&fs::read_to_string(&shared_file).unwrap()),
        vec!["A", "B", "Y"]
    );
    let out = tmp.path().join("gap.svg");
    cmd_gap_chart(&[&a, &a], 2, Some(&shared_file), &out).unwrap();
    let svg = fs::read_to_string(&out).unwrap();

    let report = per_class_gap_report(&[result.clone(), result.clone()], 2, &[]).unwrap();
    let bars: Vec<f64> = attr_values(&svg, "class=\"bar\"", "data-accuracy")
        .iter()
        .map(|v| v.parse().unwrap())
        .collect();
    let want: Vec<f64> = (0..24)
        .flat_map(|l| (0..2).map(move |c| (c, l)))
        .filter_map(|(c, l)| report.accuracy[c][l])
        .collect();
    assert_eq!(bars, want);
    let gaps = attr_values(&svg, "class=\"gap\"", "data-gap");
    assert!(!gaps.is_empty());
    assert!(gaps.iter().all(|g| g.parse::<f64>().unwrap() == 0.0));

    let letters: Vec<String> = svg
        .lines()
        .filter(|l| l.contains("class=\"letter\""))
        .map(|l| {
            let end = l.rfind("</text>").unwrap();
            l[l[..end].rfind('>').unwrap() + 1..end].to_string()
        })
        .collect();
    assert_eq!(letters, result.corpus.alphabet);
    let shared_flags = attr_values(&svg, "class=\"letter\"", "data-shared");
    for (letter, flag) in letters.iter().zip(&shared_flags) {
        assert_eq!(flag == "true", ["A", "B", "Y"].contains(&letter.as_str()));
    }

    let direct = gap_chart_svg(
        &per_class_gap_report(
            &[result.clone(), result],
            2,
            &["A".into(), "B".into(), "Y".into()],
        )
        .unwrap(),
    );
    assert_eq!(direct, svg);
}
