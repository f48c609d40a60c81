use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use castopt::geometry::VoxelGeometry;
use castopt::pipeline::{read_table, EvolveSettings, Pipeline, Preset, RunConfig, Stage, StageOutcome, MANIFEST_FILE};
use castopt::surrogate::SplitSizes;

/// A 3-sample run on a 4x4x4 cube with small optimizers.
fn small_config(dir: &Path) -> RunConfig {
    let cube = dir.join("cube.txt");
    std::fs::write(&cube, VoxelGeometry::filled_box([4, 4, 4], 0.01).to_text()).unwrap();
    let mut cfg = RunConfig::preset(Preset::Desk);
    cfg.seed = 11;
    cfg.geometry.path = Some(cube);
    cfg.samples = SplitSizes {
        train: 1,
        validation: 1,
        test: 1,
    };
    cfg.max_failure_fraction = 0.0;
    for t in [
        &mut cfg.train.solidification_time,
        &mut cfg.train.max_grain,
        &mut cfg.train.min_yield,
    ] {
        t.epochs = 20;
    }
    cfg.ga = EvolveSettings::sized(10, 5);
    cfg.verify = EvolveSettings::sized(20, 5);
    cfg.bi = EvolveSettings::sized(20, 5);
    cfg.tri = EvolveSettings::sized(20, 5);
    cfg
}

fn run_dir(root: &Path) -> (Pipeline, PathBuf) {
    let out = root.join("run");
    let mut p = Pipeline::new(small_config(root), &out).unwrap();
    let outcomes = p.run_all().unwrap();
    assert!(outcomes.iter().all(|(_, o)| *o == StageOutcome::Ran));
    (p, out)
}

/// Content of every file under `dir` except the manifest, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.file_name().unwrap() != MANIFEST_FILE {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn small_run_produces_sane_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (p, out) = run_dir(tmp.path());
    let bounds = p.config().design_bounds();

    let mut rows = 0;
    for split in ["train", "validation", "test"] {
        let t = read_table(&out.join(format!("dataset/dataset_{split}.csv"))).unwrap();
        for r in 0..t.rows.len() {
            let [f1, f2, f3] = ["f1", "f2", "f3"].map(|c| t.column(c).unwrap()[r]);
            assert!(f1 > 0.0 && f1.is_finite());
            assert!(f2 > 0.0 && f2.is_finite());
            assert!(f3 < 0.0 && f3.is_finite());
        }
        rows += t.rows.len();
    }
    assert_eq!(rows, 3);

    let errors = read_table(&out.join("train/errors.csv")).unwrap();
    let nine: Vec<f64> = ["train_pct", "validation_pct", "test_pct"]
        .iter()
        .flat_map(|c| errors.column(c).unwrap())
        .collect();
    assert_eq!(nine.len(), 9);
    assert!(nine.iter().all(|e| e.is_finite() && *e > 0.0), "{nine:?}");

    for front in ["front_bi_f1_f3", "front_bi_f2_f3", "front_tri"] {
        let t = read_table(&out.join(format!("optimize/{front}.csv"))).unwrap();
        assert!(!t.rows.is_empty());
        for x in t.block(0..bounds.dim()).unwrap() {
            assert!(bounds.contains(&x), "{front}: {x:?} out of bounds");
        }
    }

    let report = std::fs::read_to_string(out.join("sensitivity/stable_optimum_tri.txt")).unwrap();
    let walls = report.lines().find(|l| l.contains("T_wall")).unwrap();
    assert_eq!(walls.matches(',').count() + 1, 10, "{report}");
    assert!(report.contains("T_init = "));
    for output in ["Solidification Time", "Max Grain Size", "Min Yield Strength"] {
        assert!(report.contains(output), "{report}");
    }
}

#[test]
fn plot_files_have_expected_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, out) = run_dir(tmp.path());
    for red in ["uniform", "split"] {
        let text = std::fs::read_to_string(out.join(format!("plots/surface_{red}_solidification_time.dat"))).unwrap();
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).collect();
        assert_eq!(data.len(), 200 * 200);
        assert_eq!(text.lines().filter(|l| l.is_empty()).count(), 199);
    }
    let pareto = std::fs::read_to_string(out.join("plots/pareto_tri.dat")).unwrap();
    assert!(pareto
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("# solidification_time max_grain min_yield l1_norm"));
    let norms: Vec<f64> = pareto
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().nth(3).unwrap().parse().unwrap())
        .collect();
    let hist = read_table(&out.join("sensitivity/histogram_tri.csv")).unwrap();
    let (lo, hi) = (hist.column("lo").unwrap(), hist.column("hi").unwrap());
    let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let max = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(lo[0], min);
    assert_eq!(*hi.last().unwrap(), max);
    assert_eq!(hist.column("count").unwrap().iter().sum::<f64>() as usize, norms.len());
}

#[test]
fn rerun_skips_and_downstream_deletion_touches_nothing_upstream() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, out) = run_dir(tmp.path());
    let before = snapshot(&out);

    let mut p = Pipeline::new(small_config(tmp.path()), &out).unwrap();
    assert!(p.run_all().unwrap().iter().all(|(_, o)| *o == StageOutcome::Skipped));
    assert_eq!(snapshot(&out), before);

    std::fs::remove_dir_all(out.join("plots")).unwrap();
    std::fs::remove_file(out.join("sensitivity/summary.csv")).unwrap();
    let outcomes: BTreeMap<Stage, StageOutcome> = p.run_all().unwrap().into_iter().collect();
    for s in [Stage::Geometry, Stage::Dataset, Stage::Train, Stage::Optimize] {
        assert_eq!(outcomes[&s], StageOutcome::Skipped, "{s}");
    }
    assert_eq!(outcomes[&Stage::Sensitivity], StageOutcome::Ran);
    assert_eq!(outcomes[&Stage::Plots], StageOutcome::Ran);
    assert_eq!(snapshot(&out), before);
}

#[test]
fn changed_training_reruns_only_from_training() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, out) = run_dir(tmp.path());
    let dataset = std::fs::read(out.join("dataset/dataset_train.csv")).unwrap();
    let mut cfg = small_config(tmp.path());
    cfg.train.max_grain.epochs = 21;
    let mut p = Pipeline::new(cfg, &out).unwrap();
    let outcomes: BTreeMap<Stage, StageOutcome> = p.run_all().unwrap().into_iter().collect();
    assert_eq!(outcomes[&Stage::Geometry], StageOutcome::Skipped);
    assert_eq!(outcomes[&Stage::Dataset], StageOutcome::Skipped);
    assert_eq!(outcomes[&Stage::Train], StageOutcome::Ran);
    assert_eq!(outcomes[&Stage::Optimize], StageOutcome::Ran);
    // the dataset file keeps its old stamp and content
    assert_eq!(std::fs::read(out.join("dataset/dataset_train.csv")).unwrap(), dataset);
}

#[test]
fn identical_configs_give_identical_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (_, out_a) = run_dir(a.path());
    // same geometry file content, different location
    let cfg = {
        let mut c = small_config(b.path());
        c.geometry.path = small_config(a.path()).geometry.path;
        c
    };
    let out_b = b.path().join("run");
    Pipeline::new(cfg, &out_b).unwrap().run_all().unwrap();
    assert_eq!(snapshot(&out_a), snapshot(&out_b));
}

#[test]
fn stage_needs_its_upstream() {
    let tmp = tempfile::tempdir().unwrap();
    let mut p = Pipeline::new(small_config(tmp.path()), tmp.path().join("run")).unwrap();
    let err = p.run(Stage::Train).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let mut bad = small_config(tmp.path());
    bad.bounds.t_wall = [700.0, 500.0];
    assert_eq!(Pipeline::new(bad, tmp.path().join("bad")).unwrap_err().exit_code(), 1);
}
