use std::fmt::Write as _;

use rayon::prelude::*;

use super::{read_table, stage_seed, OptimizeMode, Pipeline, PipelineError, Stage};
use crate::design::{Bounds, DesignPoint};
use crate::evolve::{ga_minimize, nsga2, Front};
use crate::geometry::{decompose_wall, extract_boundary_faces, l_bracket, load_geometry, VoxelGeometry};
use crate::microstructure::simulate;
use crate::oracle::{brute_pareto, compare_front_in, sweep, sweep_min, Reduction, SweepGrid};
use crate::sensitivity::{
    is_left_skewed, median, rank_front, ranking_csv, stable_optimum, Histogram, SensitivityRecord,
};
use crate::solver::{ThermalBc, ThermalModel};
use crate::surrogate::{fit_objective, input_header, Dataset, Samples, SurrogateSet, OBJECTIVE_NAMES};

/// Objective pairs of the bi-objective runs: each of solidification time
/// and maximum grain size against minimum yield strength.
pub const OBJECTIVE_PAIRS: [[usize; 2]; 2] = [[0, 2], [1, 2]];

const REDUCTIONS: [Reduction; 2] = [
    Reduction::Uniform,
    Reduction::Split {
        t_init: crate::oracle::SPLIT_T_INIT,
    },
];

const SPLITS: [&str; 3] = ["train", "validation", "test"];

fn pair_name(p: [usize; 2]) -> String {
    format!("f{}_f{}", p[0] + 1, p[1] + 1)
}

fn names(cols: &[usize]) -> Vec<&'static str> {
    cols.iter().map(|&k| OBJECTIVE_NAMES[k]).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Pipeline {
    fn geometry_seed(&self) -> u64 {
        stage_seed(self.cfg.seed, Stage::Geometry.name())
    }

    fn source_geometry(&self) -> Result<VoxelGeometry, PipelineError> {
        Ok(match &self.cfg.geometry.path {
            Some(p) => load_geometry(p)?,
            None => l_bracket(self.cfg.geometry.spacing),
        })
    }

    /// Solver model of the staged geometry.
    pub fn thermal_model(&self) -> Result<ThermalModel<f64>, PipelineError> {
        let geom = load_geometry(self.dir.join("geometry/geometry.txt"))?;
        let faces = extract_boundary_faces(&geom);
        let decomp = decompose_wall(&faces, self.cfg.geometry.domains, self.geometry_seed())?;
        Ok(ThermalModel::new(&geom, &faces, &decomp, &self.cfg.material)?)
    }

    /// The trained networks of this run.
    pub fn surrogates(&self) -> Result<SurrogateSet, PipelineError> {
        Ok(SurrogateSet::load(&self.dir.join("train/models.json"))?)
    }

    pub(super) fn geometry_stage(&self) -> Result<Vec<String>, PipelineError> {
        let geom = self.source_geometry()?;
        let faces = extract_boundary_faces(&geom);
        let decomp = decompose_wall(&faces, self.cfg.geometry.domains, self.geometry_seed())?;
        let mut summary = String::new();
        let _ = writeln!(summary, "dims = {:?}", geom.dims());
        let _ = writeln!(summary, "spacing_m = {}", geom.spacing());
        let _ = writeln!(summary, "cells = {}", geom.filled_count());
        let _ = writeln!(summary, "wall_faces = {}", faces.len());
        let _ = writeln!(summary, "domains = {}", decomp.n_domains);
        let _ = writeln!(summary, "domain_sizes = {:?}", decomp.domain_sizes());
        let _ = writeln!(summary, "inertia = {}", decomp.inertia);
        Ok(vec![
            self.write("geometry/geometry.txt", &geom.to_text())?,
            self.write_stamped("geometry/decomposition.csv", &decomp.to_csv(&faces))?,
            self.write("geometry/summary.txt", &summary)?,
        ])
    }

    pub(super) fn dataset_stage(&self) -> Result<Vec<String>, PipelineError> {
        let model = self.thermal_model()?;
        let bounds = self.cfg.design_bounds();
        let seed = stage_seed(self.cfg.seed, Stage::Dataset.name());
        let design = Dataset::design(&bounds, self.cfg.samples, seed);
        let rows: Vec<(usize, &Vec<f64>)> = design
            .iter()
            .enumerate()
            .flat_map(|(s, xs)| xs.iter().map(move |x| (s, x)))
            .collect();
        let total = rows.len();
        log::info!("dataset: {total} solver runs");
        let results: Vec<Result<[f64; 3], String>> = rows
            .par_iter()
            .map(|(_, x)| {
                let bc = ThermalBc::new(x[0], x[1..].to_vec());
                let r = simulate(&model, &bc, &self.cfg.solver, &self.cfg.micro).map_err(|e| e.to_string())?;
                let o = r.objectives.to_array();
                if o.iter().all(|v| v.is_finite()) {
                    Ok(o)
                } else {
                    Err(format!("non-finite objectives {o:?}"))
                }
            })
            .collect();

        let mut splits = [Samples::default(), Samples::default(), Samples::default()];
        let mut failures = String::from("index,split,error\n");
        let mut failed = 0;
        for (n, ((s, x), r)) in rows.iter().zip(results).enumerate() {
            match r {
                Ok(o) => {
                    splits[*s].inputs.push((*x).clone());
                    splits[*s].outputs.push(o);
                }
                Err(e) => {
                    failed += 1;
                    let _ = writeln!(failures, "{n},{},\"{}\"", SPLITS[*s], e.replace(['"', ','], " "));
                }
            }
        }
        if failed as f64 > self.cfg.max_failure_fraction * total as f64 {
            return Err(PipelineError::Stage(format!("{failed} of {total} solver runs failed")));
        }
        if splits.iter().any(Samples::is_empty) {
            return Err(PipelineError::Stage("a dataset split has no successful runs".into()));
        }
        let mut out = Vec::new();
        for (name, s) in SPLITS.iter().zip(&splits) {
            out.push(self.write_stamped(&format!("dataset/dataset_{name}.csv"), &s.to_csv())?);
        }
        out.push(self.write_stamped("dataset/failures.csv", &failures)?);
        Ok(out)
    }

    /// The staged dataset.
    pub fn dataset(&self) -> Result<Dataset, PipelineError> {
        let read = |name: &str| -> Result<Samples, PipelineError> {
            let path = self.dir.join(format!("dataset/dataset_{name}.csv"));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| PipelineError::Stage(format!("cannot read {}: {e}", path.display())))?;
            Ok(Samples::from_csv(&text)?)
        };
        Ok(Dataset {
            bounds: self.cfg.design_bounds(),
            train: read("train")?,
            validation: read("validation")?,
            test: read("test")?,
        })
    }

    pub(super) fn train_stage(&self) -> Result<Vec<String>, PipelineError> {
        let ds = self.dataset()?;
        let seed = stage_seed(self.cfg.seed, Stage::Train.name());
        let fits = (0..3)
            .into_par_iter()
            .map(|k| {
                fit_objective(&ds, k, self.cfg.train.for_objective(k), seed.wrapping_add(k as u64))
                    .map_err(|e| PipelineError::Stage(format!("{} network: {e}", OBJECTIVE_NAMES[k])))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut errors = String::from("objective,train_pct,validation_pct,test_pct\n");
        let mut history = String::from("objective,epoch,train_loss,validation_loss\n");
        for (k, (model, report)) in fits.iter().enumerate() {
            let e = [
                model.percent_error(&ds.train, k)?,
                model.percent_error(&ds.validation, k)?,
                model.percent_error(&ds.test, k)?,
            ];
            let _ = writeln!(errors, "{},{}", OBJECTIVE_NAMES[k], join(&e));
            for (epoch, (t, v)) in report.train_loss.iter().zip(&report.val_loss).enumerate() {
                let _ = writeln!(history, "{},{},{t},{v}", OBJECTIVE_NAMES[k], epoch + 1);
            }
            log::info!(
                "train: {} error train {:.3}% validation {:.3}% test {:.3}% after {} epochs",
                OBJECTIVE_NAMES[k],
                e[0],
                e[1],
                e[2],
                report.epochs_run()
            );
        }
        let set = SurrogateSet::new(fits.into_iter().map(|(m, _)| m).collect());
        Ok(vec![
            self.write("train/models.json", &(set.to_json()? + "\n"))?,
            self.write_stamped("train/errors.csv", &errors)?,
            self.write_stamped("train/loss_history.csv", &history)?,
        ])
    }

    pub(super) fn optimize_stage(&self) -> Result<Vec<String>, PipelineError> {
        let set = self.surrogates()?;
        let bounds = self.cfg.design_bounds();
        let domains = self.cfg.geometry.domains;
        let seed = stage_seed(self.cfg.seed, Stage::Optimize.name());
        let sub = |label: &str| stage_seed(seed, label);
        let predict = |x: &[f64]| {
            set.predict_vec(x)
                .map(|a| a.to_vec())
                .unwrap_or_else(|_| vec![f64::NAN; 3])
        };
        let mut out = Vec::new();

        let needs_sweep = self.modes.contains(&OptimizeMode::Single) || self.modes.contains(&OptimizeMode::Bi);
        let mut grids = Vec::new();
        if needs_sweep {
            for red in REDUCTIONS {
                let grid = sweep(
                    |x| Ok::<_, PipelineError>(predict(x)),
                    red,
                    &bounds,
                    self.cfg.sweep_points,
                )?;
                out.push(self.write_stamped(
                    &format!("optimize/sweep_{}.csv", red.name()),
                    &grid.to_csv(&OBJECTIVE_NAMES),
                )?);
                grids.push(grid);
            }
        }

        if self.modes.contains(&OptimizeMode::Single) {
            let mut table = String::from(
                "reduction,objective,sweep_x1,sweep_x2,sweep_value,ga_x1,ga_x2,ga_value,input_gap,value_gap_pct\n",
            );
            for grid in &grids {
                let red = grid.reduction;
                let rb = red.bounds(&bounds);
                for (k, obj) in OBJECTIVE_NAMES.iter().enumerate() {
                    let (_, sp, sv) = sweep_min(grid, k);
                    let label = format!("ga/{}/{obj}", red.name());
                    let f = |z: &[f64]| predict(&red.expand([z[0], z[1]], domains))[k];
                    let res = ga_minimize(f, &rb, &self.cfg.ga.ga_config(sub(&label)))?;
                    let g = &res.best.genes;
                    let gap = (g[0] - sp[0]).abs().max((g[1] - sp[1]).abs());
                    let pct = (res.best.fitness[0] - sv).abs() / sv.abs() * 100.0;
                    let _ = writeln!(
                        table,
                        "{},{obj},{},{},{sv},{},{},{},{gap},{pct}",
                        red.name(),
                        sp[0],
                        sp[1],
                        g[0],
                        g[1],
                        res.best.fitness[0]
                    );
                    out.push(self.write_stamped(
                        &format!("optimize/history/ga_{}_{obj}.csv", red.name()),
                        &res.history_csv(),
                    )?);
                }
            }
            out.push(self.write_stamped("optimize/single.csv", &table)?);
        }

        if self.modes.contains(&OptimizeMode::Bi) {
            for grid in &grids {
                let red = grid.reduction;
                let rb = red.bounds(&bounds);
                for pair in OBJECTIVE_PAIRS {
                    let name = format!("{}_{}", red.name(), pair_name(pair));
                    let (front, report) = verify_pair(
                        grid,
                        pair,
                        &rb,
                        |z| {
                            let y = predict(&red.expand([z[0], z[1]], domains));
                            vec![y[pair[0]], y[pair[1]]]
                        },
                        &self.cfg.verify.ga_config(sub(&format!("verify/{name}"))),
                    )?;
                    let header = red.axis_names().join(",");
                    out.push(self.write_stamped(
                        &format!("optimize/verify_{name}_front.csv"),
                        &front.to_csv(&header, &names(&pair)),
                    )?);
                    out.push(self.write(&format!("optimize/verify_{name}.txt"), &report)?);
                }
            }
            for pair in OBJECTIVE_PAIRS {
                let name = pair_name(pair);
                let f = |x: &[f64]| {
                    let y = predict(x);
                    vec![y[pair[0]], y[pair[1]]]
                };
                let res = nsga2(f, &bounds, &self.cfg.bi.ga_config(sub(&format!("bi/{name}"))))?;
                out.push(self.write_stamped(
                    &format!("optimize/front_bi_{name}.csv"),
                    &res.front.to_csv(&input_header(bounds.dim()), &names(&pair)),
                )?);
                out.push(self.write_stamped(&format!("optimize/history/nsga_bi_{name}.csv"), &res.history_csv())?);
            }
        }

        if self.modes.contains(&OptimizeMode::Tri) {
            let res = nsga2(predict, &bounds, &self.cfg.tri.ga_config(sub("tri")))?;
            out.push(self.write_stamped(
                "optimize/front_tri.csv",
                &res.front.to_csv(&input_header(bounds.dim()), &OBJECTIVE_NAMES),
            )?);
            out.push(self.write_stamped("optimize/history/nsga_tri.csv", &res.history_csv())?);
        }
        Ok(out)
    }

    /// Front files written by the optimize stage, as `(name, path, objective columns)`.
    fn front_files(&self) -> Vec<(String, String, Vec<usize>)> {
        let outputs = self.outputs_of(Stage::Optimize);
        let mut fronts = Vec::new();
        for pair in OBJECTIVE_PAIRS {
            let name = format!("bi_{}", pair_name(pair));
            let path = format!("optimize/front_{name}.csv");
            if outputs.contains(&path) {
                fronts.push((name, path, pair.to_vec()));
            }
        }
        if outputs.iter().any(|p| p == "optimize/front_tri.csv") {
            fronts.push(("tri".into(), "optimize/front_tri.csv".into(), vec![0, 1, 2]));
        }
        fronts
    }

    pub(super) fn sensitivity_stage(&self) -> Result<Vec<String>, PipelineError> {
        let set = self.surrogates()?;
        let dim = self.cfg.design_bounds().dim();
        let mut out = Vec::new();
        let mut summary = String::from("front,designs,min_norm,median_norm,max_norm,left_skewed\n");
        for (name, path, cols) in self.front_files() {
            let t = read_table(&self.dir.join(&path))?;
            let designs = t.block(0..dim)?;
            let objectives = t.block(dim..dim + cols.len())?;
            let records = rank_front(&designs, &objectives, &set, &cols, self.cfg.sensitivity.step)?;
            let norms: Vec<f64> = records.iter().map(|r| r.l1_norm).collect();
            let hist = Histogram::new(&norms, self.cfg.sensitivity.bins);
            let lo = norms.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(
                summary,
                "{name},{},{lo},{},{hi},{}",
                norms.len(),
                median(&norms).unwrap_or(f64::NAN),
                is_left_skewed(&norms)
            );
            out.push(self.write_stamped(
                &format!("sensitivity/ranking_{name}.csv"),
                &ranking_csv(&records, &input_header(dim), &names(&cols)),
            )?);
            out.push(self.write_stamped(&format!("sensitivity/histogram_{name}.csv"), &hist.to_csv())?);
            if let Some(best) = stable_optimum(&records) {
                let all = set.predict_vec(&best.design)?;
                out.push(self.write(
                    &format!("sensitivity/stable_optimum_{name}.txt"),
                    &stable_optimum_report(best, all),
                )?);
            }
        }
        out.push(self.write_stamped("sensitivity/summary.csv", &summary)?);
        Ok(out)
    }

    pub(super) fn plots_stage(&self) -> Result<Vec<String>, PipelineError> {
        let mut out = Vec::new();
        let mut script =
            String::from("# gnuplot script for the plot data in this directory\nset datafile separator whitespace\n");
        let optimize = self.outputs_of(Stage::Optimize);
        for red in REDUCTIONS {
            let path = format!("optimize/sweep_{}.csv", red.name());
            if !optimize.contains(&path) {
                continue;
            }
            let t = read_table(&self.dir.join(&path))?;
            let [a, b] = red.axis_names();
            let (x1, x2) = (t.column(a)?, t.column(b)?);
            for obj in OBJECTIVE_NAMES {
                let v = t.column(obj)?;
                let mut body = format!("# {a} {b} {obj}\n");
                for i in 0..v.len() {
                    if i > 0 && x1[i] != x1[i - 1] {
                        body.push('\n');
                    }
                    let _ = writeln!(body, "{} {} {}", x1[i], x2[i], v[i]);
                }
                let file = format!("surface_{}_{obj}.dat", red.name());
                out.push(self.write_stamped(&format!("plots/{file}"), &body)?);
                let _ = writeln!(
                    script,
                    "set title '{obj} ({} walls)'; set xlabel '{a}'; set ylabel '{b}'; set view map; splot '{file}' using 1:2:3 with pm3d notitle; pause -1",
                    red.name()
                );
            }
        }
        for (name, _, cols) in self.front_files() {
            let t = read_table(&self.dir.join(format!("sensitivity/ranking_{name}.csv")))?;
            let objs: Vec<Vec<f64>> = names(&cols).iter().map(|n| t.column(n)).collect::<Result<_, _>>()?;
            let norm = t.column("l1_norm")?;
            let mut body = format!("# {} l1_norm\n", names(&cols).join(" "));
            for (i, n) in norm.iter().enumerate() {
                let vals: Vec<String> = objs.iter().map(|c| c[i].to_string()).collect();
                let _ = writeln!(body, "{} {n}", vals.join(" "));
            }
            out.push(self.write_stamped(&format!("plots/pareto_{name}.dat"), &body)?);
            let norm_col = cols.len() + 1;
            let plot = if cols.len() == 2 {
                "plot '{f}' using 1:2:3 with points palette pt 7 notitle"
            } else {
                "splot '{f}' using 1:2:3:4 with points palette pt 7 notitle"
            };
            let _ = writeln!(
                script,
                "set title 'Pareto front {name} coloured by l1_norm (column {norm_col})'; {}; pause -1",
                plot.replace("{f}", &format!("pareto_{name}.dat"))
            );

            let h = read_table(&self.dir.join(format!("sensitivity/histogram_{name}.csv")))?;
            let (lo, hi, count) = (h.column("lo")?, h.column("hi")?, h.column("count")?);
            let mut body = String::from("# lo hi count\n");
            for i in 0..lo.len() {
                let _ = writeln!(body, "{} {} {}", lo[i], hi[i], count[i]);
            }
            out.push(self.write_stamped(&format!("plots/histogram_{name}.dat"), &body)?);
            let _ = writeln!(script, "set title 'Jacobian norm histogram {name}'; plot 'histogram_{name}.dat' using (($1+$2)/2):3 with boxes notitle; pause -1");
        }
        out.push(self.write("plots/plots.gp", &script)?);
        Ok(out)
    }
}

/// NSGA-II on a two-input reduction compared with the sweep's Pareto set.
fn verify_pair(
    grid: &SweepGrid,
    pair: [usize; 2],
    rb: &Bounds,
    f: impl Fn(&[f64]) -> Vec<f64> + Sync,
    cfg: &crate::evolve::GaConfig,
) -> Result<(Front, String), PipelineError> {
    let objs = grid.project(&pair);
    let brute: Vec<Vec<f64>> = brute_pareto(&objs).into_iter().map(|i| objs[i].clone()).collect();
    let res = nsga2(f, rb, cfg)?;
    let lo: Vec<f64> = (0..2)
        .map(|k| objs.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min))
        .collect();
    let hi: Vec<f64> = (0..2)
        .map(|k| objs.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let cmp = compare_front_in(&res.front.objectives, &brute, &lo, &hi)
        .ok_or_else(|| PipelineError::Stage("cannot compare empty fronts".into()))?;
    Ok((res.front, cmp.to_report()))
}

/// Human-readable stable optimum: the design, all three predicted
/// objectives and its Jacobian norm.
pub fn stable_optimum_report(best: &SensitivityRecord, objectives: [f64; 3]) -> String {
    let d = DesignPoint::from_slice(&best.design);
    let walls: Vec<String> = d.t_wall.iter().map(|t| format!("{t:.1}")).collect();
    let mut s = String::new();
    let _ = writeln!(s, "Inputs:  T_init = {:.1} K", d.t_init);
    let _ = writeln!(s, "         T_wall = {{{}}} K", walls.join(", "));
    let _ = writeln!(s, "Outputs: Solidification Time = {:.2} s", objectives[0]);
    let _ = writeln!(s, "         Max Grain Size = {:.2} um", objectives[1]);
    let _ = writeln!(s, "         Min Yield Strength = {:.2} MPa", -objectives[2]);
    let _ = writeln!(s, "Jacobian L1 norm = {}", best.l1_norm);
    let _ = writeln!(s, "Front index = {}", best.index);
    s
}
